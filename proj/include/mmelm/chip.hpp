#pragma once

// Behavioral model of the mismatch-based ELM front end:
// 10-bit code -> DAC current -> log-normal mirror array -> current-controlled
// oscillator -> saturating counter.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace mmelm {

/// Current-to-frequency characteristic used by the neuron.
enum class NeuronModel {
    quadratic,  // f = I(I_rst - I) / (I_rst C_b VDD), zero at and beyond I_rst
    linear,     // f = K_neu I, no fold-back
};

/// Physical and behavioral parameters of one simulated chip. All SI units.
struct ChipConfig {
    double sigma_vt = 0.016;      // V, std-dev of threshold mismatch
    double u_t = 0.025;           // V, thermal voltage at T0
    double vdd = 1.0;             // V
    double c_b = 1.0 / 26e12;     // F, gives K_neu = 26 kHz/nA at 1 V
    double i_rst = 4 * 128 * 1e-9;  // A, default 4 * d * i_max
    double i_lk = 0.0;            // A
    double i_ref = 1e-9 * 1024.0 / 1023.0;  // A, code 1023 maps to i_max
    double i_max = 1e-9;          // A, max per-row input current
    double t_neu = 56e-6;         // s, counting window
    int b = 14;                   // counter bits
    int b_in = 10;                // input bits
    int d = 128;                  // input rows
    int l = 128;                  // hidden neurons
    double kappa = 0.7;
    double c_mirror = 0.4e-12;    // F, gate capacitor per row
    std::uint64_t seed = 1;

    NeuronModel neuron_model = NeuronModel::quadratic;
    /// Below this frequency the oscillator is reported as not oscillating (Hz).
    double min_frequency = 0.0;
    /// Std-dev of ln(per-neuron gain). 0 disables neuron-to-neuron K_neu mismatch.
    double neuron_gain_sigma = 0.0;
    /// Extra always-on input row realizing the ELM bias term.
    bool bias_row = false;
    int bias_code = 512;
    /// I_rst scales as (vdd / vdd_nominal)^i_rst_vdd_exponent in at_supply().
    double i_rst_vdd_exponent = 0.0;
    double vdd_nominal = 1.0;

    double k_neu() const { return 1.0 / (c_b * vdd); }
    double i_flx() const { return 0.5 * i_rst; }
    double i_z_max() const { return d * i_max; }
    std::int64_t count_limit() const { return std::int64_t{1} << b; }
    int code_max() const { return (1 << b_in) - 1; }
    /// Physical rows of the weight array (d plus the bias row when enabled).
    int rows() const { return d + (bias_row ? 1 : 0); }

    /// Throws ConfigError naming the first violated invariant.
    void validate() const;

    /// Defaults for a d x l array: i_ref tracks i_max, i_rst = 4 * d * i_max.
    static ChipConfig nominal(int d, int l, double i_max = 1e-9);

    /// Copy evaluated at a different supply; I_rst follows i_rst_vdd_exponent.
    ChipConfig at_supply(double new_vdd) const;

    /// Copy with t_neu chosen so that I^z_sat / I^z_max equals `ratio`
    /// on the linear branch: t_neu = 2^b / (ratio * K_neu * d * i_max).
    ChipConfig with_saturation_ratio(double ratio) const;
};

nlohmann::json to_json(const ChipConfig& cfg);
ChipConfig chip_config_from_json(const nlohmann::json& j);
ChipConfig load_chip_config(const std::filesystem::path& path);

/// Mismatch gains of one chip instance. Immutable after construction.
class WeightMatrix {
public:
    WeightMatrix() = default;

    /// From threshold offsets (V): entries = exp(delta_vt / u_t).
    WeightMatrix(Eigen::MatrixXd delta_vt, double u_t, double sigma_vt_used,
                 std::uint64_t seed_used, Eigen::VectorXd neuron_gain = {});

    /// Wraps explicit positive gains; delta_vt is back-computed as u_t * ln(w).
    static WeightMatrix from_entries(const Eigen::MatrixXd& entries, double u_t = 0.025);

    int rows() const { return static_cast<int>(entries_.rows()); }
    int cols() const { return static_cast<int>(entries_.cols()); }
    double operator()(int i, int j) const { return entries_(i, j); }

    const Eigen::MatrixXd& entries() const { return entries_; }
    const Eigen::MatrixXd& delta_vt() const { return delta_vt_; }
    /// Per-neuron oscillator gain (all ones unless neuron mismatch is enabled).
    const Eigen::VectorXd& neuron_gain() const { return neuron_gain_; }
    double u_t() const { return u_t_; }
    double sigma_vt_used() const { return sigma_vt_used_; }
    std::uint64_t seed_used() const { return seed_used_; }

    /// Same draws, new thermal voltage.
    WeightMatrix with_thermal_voltage(double u_t) const;

    /// Rows permuted/duplicated by an index map (used by the expansion module).
    WeightMatrix remapped(std::span<const int> row_map, std::span<const int> col_map) const;

private:
    Eigen::MatrixXd entries_;
    Eigen::MatrixXd delta_vt_;
    Eigen::VectorXd neuron_gain_;
    double u_t_ = 0.025;
    double sigma_vt_used_ = 0.0;
    std::uint64_t seed_used_ = 0;
};

/// Full-precision CSV, one array row per line.
void write_weights_csv(const WeightMatrix& w, const std::filesystem::path& path);
std::string weights_csv(const WeightMatrix& w);

struct NeuronState {
    double i_z = 0.0;
    double f_sp = 0.0;
    std::int64_t count = 0;
};

struct SwitchState {
    bool s1 = false;  // active mirror engaged
    bool s2 = false;  // row shut off
    bool operator==(const SwitchState&) const = default;
};

/// I_ref * sum_k D_k 2^(k-10).
double dac_current(int data_in, double i_ref);
SwitchState mirror_switch_state(int data_in);

double neuron_frequency(double i_z, const ChipConfig& cfg);
double neuron_period(double i_z, const ChipConfig& cfg);
/// min(floor(f_sp * t_neu * gain), 2^b).
std::int64_t hidden_count(double i_z, const ChipConfig& cfg, double gain = 1.0);
NeuronState neuron_state(double i_z, const ChipConfig& cfg, double gain = 1.0);

WeightMatrix sample_mismatch(const ChipConfig& cfg);

struct MappedInput {
    std::vector<int> codes;
    bool clamped = false;  // some |x_i| > 1 was clipped
};

/// x in [-1, 1] -> floor((x + 1) / 2 * (2^b_in - 1) + 0.5).
MappedInput map_input(std::span<const double> x, const ChipConfig& cfg);
int map_value(double x, const ChipConfig& cfg);

/// Summed column currents I^z_j for a vector of codes over cfg.rows() rows.
Eigen::VectorXd column_currents(std::span<const int> codes, const WeightMatrix& w,
                                const ChipConfig& cfg);

/// Counts for a code vector of length w.rows().
std::vector<std::int64_t> forward_codes(std::span<const int> codes, const WeightMatrix& w,
                                        const ChipConfig& cfg);

/// Counts for a real input of length cfg.d (bias code appended when enabled).
std::vector<std::int64_t> forward(std::span<const double> x, const WeightMatrix& w,
                                  const ChipConfig& cfg);

/// Codes for a real input, with the bias row appended when enabled.
std::vector<int> input_codes(std::span<const double> x, const ChipConfig& cfg);

}  // namespace mmelm
