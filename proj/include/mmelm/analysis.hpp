#pragma once

// Closed-form noise, speed and energy models of the chip.

#include <functional>

#include <nlohmann/json_fwd.hpp>

#include "mmelm/chip.hpp"

namespace mmelm {

inline constexpr double kElectronCharge = 1.602e-19;  // C
inline constexpr double kActiveMirrorBoost = 5.84;
inline constexpr double kReferenceTemperature = 300.0;  // K
inline constexpr double kSaturationRatio = 0.75;

struct EnergyConstants {
    double alpha1 = 0.2e-12;      // F, switched capacitance per spike
    double alpha2_isc = 0.03e-6;  // A, short-circuit current coefficient
    double p_avdd = 3.4e-6;       // W, analog supply, constant
    double e_mult = 7.1e-12;      // J per second-stage multiply

    /// Fit at the measured operating point (1 V, 31.6 kHz).
    static EnergyConstants measured() { return {0.3e-12, 0.076e-6, 3.4e-6, 7.1e-12}; }
};

/// Frequency inside the energy integral.
enum class FrequencyModel {
    linear,  // f = K_neu * I, the law T_neu is sized with
    chip,    // neuron_frequency(I, cfg)
};

/// 2 C U_T w0 / (q kappa (w0 + 1)).
double snr_mirror(double c, double w0, const ChipConfig& cfg);

/// 4 C U_T / (kappa I), divided by 5.84 with the active mirror.
double settling_time(double i_in, double c, bool active, const ChipConfig& cfg);

/// 2^b / (0.75 K_neu d I_max).
double neuron_counting_time(int b, double k_neu, int d, double i_max);
/// Same with the counter capacity 2^b given as a real number (contour points need not be integral b).
double counting_time_for_capacity(double capacity, double k_neu, int d, double i_max);

/// 2^b on the T_cm,avg = T_neu contour: 6 d C U_T K_neu / kappa.
double contour_counter_capacity(int d, double c, double k_neu, double kappa, double u_t = 0.025);

enum class SpeedDominant { mirror, neuron };

struct SpeedReport {
    double t_cm_min = 0.0;
    double t_cm_max = 0.0;
    double t_cm_avg = 0.0;
    double t_neu = 0.0;
    double t_c = 0.0;
    SpeedDominant dominant = SpeedDominant::mirror;
};

/// Uses cfg.c_mirror, cfg.i_max, cfg.d, cfg.b and K_neu of cfg.
SpeedReport speed_report(const ChipConfig& cfg);

/// alpha1 VDD^2 + alpha2 I_sc VDD / f + C_b I VDD^2 / (I_rst - I + I_lk).
double energy_per_spike(double i_z, const ChipConfig& cfg, const EnergyConstants& k,
                        FrequencyModel model = FrequencyModel::chip);

/// L (alpha1 VDD^2 f + alpha2 I_sc VDD).
double power_vdd(int l, double f_sp, const ChipConfig& cfg, const EnergyConstants& k);

/// Adaptive Simpson on [a, b] to relative tolerance `rel_tol`.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol = 1e-6, int max_depth = 50);

/// 2^b / (0.75 K_neu M^2) * integral_0^M E_sp(I) f(I) dI with M = i_z_max.
double energy_per_conversion(double i_z_max, int b, const ChipConfig& cfg, const EnergyConstants& k,
                             FrequencyModel model = FrequencyModel::linear);

/// The integrand E_sp(I) f(I), finite on [0, I_rst + I_lk).
double energy_integrand(double i_z, const ChipConfig& cfg, const EnergyConstants& k,
                        FrequencyModel model = FrequencyModel::linear);

/// p_total / (rate d l).
double energy_per_mac(double p_total, double rate, int d, int l);

/// Adds `multiplies` second-stage multiplies of e_mult per classification.
double energy_per_mac_system(double p_total, double rate, int d, int l, int multiplies,
                             double e_mult = 7.1e-12);

/// Same mismatch draws re-evaluated at T0 + delta_t: U_T scales with absolute temperature.
WeightMatrix temperature_weights(const WeightMatrix& w, double delta_t);

struct EnergyReport {
    double e_sp = 0.0;
    double e_c = 0.0;
    double p_vdd = 0.0;
    double p_avdd = 0.0;
    double pj_per_mac = 0.0;
};

/// Operating point: input current i_z per neuron, l active neurons, classification `rate`.
EnergyReport energy_report(double i_z, double i_z_max, int l, double rate, const ChipConfig& cfg,
                           const EnergyConstants& k);

nlohmann::json to_json(const SpeedReport& r);
nlohmann::json to_json(const EnergyReport& r);

}  // namespace mmelm
