#include "mmelm/analysis.hpp"

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmelm/error.hpp"

namespace mmelm {

double snr_mirror(double c, double w0, const ChipConfig& cfg) {
    if (!(c > 0.0) || !(w0 > 0.0)) throw DomainError("snr_mirror: C and w0 must be positive");
    return 2.0 * c * cfg.u_t * w0 / (kElectronCharge * cfg.kappa * (w0 + 1.0));
}

double settling_time(double i_in, double c, bool active, const ChipConfig& cfg) {
    if (!(i_in > 0.0)) throw DomainError("settling_time: input current must be positive");
    if (!(c > 0.0)) throw DomainError("settling_time: capacitance must be positive");
    const double t = 4.0 * c * cfg.u_t / (cfg.kappa * i_in);
    return active ? t / kActiveMirrorBoost : t;
}

double counting_time_for_capacity(double capacity, double k_neu, int d, double i_max) {
    if (!(capacity > 0.0) || !(k_neu > 0.0) || d < 1 || !(i_max > 0.0))
        throw DomainError("neuron_counting_time: arguments must be positive");
    return capacity / (kSaturationRatio * k_neu * d * i_max);
}

double neuron_counting_time(int b, double k_neu, int d, double i_max) {
    if (b < 1) throw DomainError("neuron_counting_time: b must be >= 1");
    return counting_time_for_capacity(std::ldexp(1.0, b), k_neu, d, i_max);
}

double contour_counter_capacity(int d, double c, double k_neu, double kappa, double u_t) {
    if (d < 1 || !(c > 0.0) || !(k_neu > 0.0) || !(kappa > 0.0) || !(u_t > 0.0))
        throw DomainError("contour_counter_capacity: arguments must be positive");
    return 6.0 * d * c * u_t * k_neu / kappa;
}

SpeedReport speed_report(const ChipConfig& cfg) {
    SpeedReport r;
    const double c = cfg.c_mirror;
    r.t_cm_avg = settling_time(cfg.i_max / 2.0, c, false, cfg);
    r.t_cm_min = settling_time(cfg.i_max, c, false, cfg);
    r.t_cm_max = settling_time(cfg.i_max / std::ldexp(1.0, cfg.b_in), c, true, cfg);
    r.t_neu = neuron_counting_time(cfg.b, cfg.k_neu(), cfg.d, cfg.i_max);
    r.t_c = std::max(r.t_cm_avg, r.t_neu);
    r.dominant = r.t_neu > r.t_cm_avg ? SpeedDominant::neuron : SpeedDominant::mirror;
    return r;
}

namespace {

double model_frequency(double i_z, const ChipConfig& cfg, FrequencyModel model) {
    return model == FrequencyModel::linear ? cfg.k_neu() * i_z : neuron_frequency(i_z, cfg);
}

void check_spike_domain(double i_z, const ChipConfig& cfg, const char* who) {
    if (!(i_z >= 0.0)) throw DomainError(std::string(who) + ": current must be non-negative");
    if (i_z >= cfg.i_rst + cfg.i_lk)
        throw DomainError(std::string(who) + ": current at or beyond I_rst, short-circuit term diverges");
}

double simpson(const std::function<double(double)>& f, double a, double fa, double m, double fm,
               double b, double fb, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return simpson(f, a, fa, lm, flm, m, fm, left, tol / 2.0, depth - 1) +
           simpson(f, m, fm, rm, frm, b, fb, right, tol / 2.0, depth - 1);
}

double simpson_piece(const std::function<double(double)>& f, double a, double b, double tol,
                     int depth) {
    const double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson(f, a, fa, m, fm, b, fb, whole, tol, depth);
}

}  // namespace

double energy_per_spike(double i_z, const ChipConfig& cfg, const EnergyConstants& k,
                        FrequencyModel model) {
    if (!(i_z > 0.0)) throw DomainError("energy_per_spike: current must be positive");
    check_spike_domain(i_z, cfg, "energy_per_spike");
    const double f = model_frequency(i_z, cfg, model);
    if (!(f > 0.0)) throw DomainError("energy_per_spike: neuron does not oscillate at this current");
    const double v = cfg.vdd;
    return k.alpha1 * v * v + k.alpha2_isc * v / f + cfg.c_b * i_z * v * v / (cfg.i_rst - i_z + cfg.i_lk);
}

double energy_integrand(double i_z, const ChipConfig& cfg, const EnergyConstants& k,
                        FrequencyModel model) {
    check_spike_domain(i_z, cfg, "energy_integrand");
    const double f = model_frequency(i_z, cfg, model);
    const double v = cfg.vdd;
    // E_sp * f expanded term by term so f = 0 stays finite
    return k.alpha1 * v * v * f + k.alpha2_isc * v +
           cfg.c_b * i_z * v * v * f / (cfg.i_rst - i_z + cfg.i_lk);
}

double power_vdd(int l, double f_sp, const ChipConfig& cfg, const EnergyConstants& k) {
    if (l < 1 || !(f_sp >= 0.0)) throw DomainError("power_vdd: l must be >= 1 and f_sp >= 0");
    const double v = cfg.vdd;
    return l * (k.alpha1 * v * v * f_sp + k.alpha2_isc * v);
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol, int max_depth) {
    if (!(b > a)) return 0.0;
    // coarse estimate sets the absolute budget
    constexpr int kCoarse = 64;
    double coarse = 0.0;
    const double h = (b - a) / kCoarse;
    for (int i = 0; i < kCoarse; ++i) {
        const double x0 = a + i * h;
        coarse += h / 6.0 * (f(x0) + 4.0 * f(x0 + h / 2.0) + f(x0 + h));
    }
    const double budget = rel_tol * std::max(std::abs(coarse), 1e-300);
    double total = 0.0;
    for (int i = 0; i < kCoarse; ++i) {
        const double x0 = a + i * h;
        total += simpson_piece(f, x0, x0 + h, budget / kCoarse, max_depth);
    }
    return total;
}

double energy_per_conversion(double i_z_max, int b, const ChipConfig& cfg, const EnergyConstants& k,
                             FrequencyModel model) {
    if (!(i_z_max > 0.0)) throw DomainError("energy_per_conversion: i_z_max must be positive");
    if (i_z_max >= cfg.i_rst)
        throw DomainError("energy_per_conversion: i_z_max at or beyond I_rst puts the integrand pole in range");
    if (b < 1) throw DomainError("energy_per_conversion: b must be >= 1");
    auto g = [&](double i) { return energy_integrand(i, cfg, k, model); };
    // split geometrically toward the pole so no piece straddles the steep region
    const double pole = cfg.i_rst + cfg.i_lk;
    std::vector<double> cuts{0.0};
    while (cuts.back() < i_z_max) {
        const double next = cuts.back() + 0.5 * (pole - cuts.back());
        cuts.push_back(std::min(next, i_z_max));
        if (cuts.size() > 60) {
            cuts.back() = i_z_max;
            break;
        }
    }
    double integral = 0.0;
    for (std::size_t i = 1; i < cuts.size(); ++i) integral += integrate_adaptive(g, cuts[i - 1], cuts[i]);
    return std::ldexp(1.0, b) / (kSaturationRatio * cfg.k_neu() * i_z_max * i_z_max) * integral;
}

double energy_per_mac(double p_total, double rate, int d, int l) {
    if (!(p_total > 0.0) || !(rate > 0.0) || d < 1 || l < 1)
        throw DomainError("energy_per_mac: arguments must be positive");
    return p_total / (rate * d * l);
}

double energy_per_mac_system(double p_total, double rate, int d, int l, int multiplies,
                             double e_mult) {
    if (multiplies < 0 || !(e_mult >= 0.0)) throw DomainError("energy_per_mac: bad second-stage terms");
    return energy_per_mac(p_total + rate * multiplies * e_mult, rate, d, l);
}

WeightMatrix temperature_weights(const WeightMatrix& w, double delta_t) {
    if (!(std::abs(delta_t) <= 60.0))
        throw DomainError("temperature_weights: |delta_t| above 60 K is outside the model");
    const double u_t = w.u_t() * (kReferenceTemperature + delta_t) / kReferenceTemperature;
    return w.with_thermal_voltage(u_t);
}

EnergyReport energy_report(double i_z, double i_z_max, int l, double rate, const ChipConfig& cfg,
                           const EnergyConstants& k) {
    EnergyReport r;
    const double f = neuron_frequency(i_z, cfg);
    r.e_sp = energy_per_spike(i_z, cfg, k);
    r.e_c = energy_per_conversion(i_z_max, cfg.b, cfg, k);
    r.p_vdd = power_vdd(l, f, cfg, k);
    r.p_avdd = k.p_avdd;
    r.pj_per_mac = energy_per_mac(r.p_vdd + r.p_avdd, rate, cfg.d, l) * 1e12;
    return r;
}

nlohmann::json to_json(const SpeedReport& r) {
    return nlohmann::json{{"t_cm_min", r.t_cm_min}, {"t_cm_max", r.t_cm_max},
                          {"t_cm_avg", r.t_cm_avg}, {"t_neu", r.t_neu},
                          {"t_c", r.t_c},
                          {"dominant", r.dominant == SpeedDominant::neuron ? "neuron" : "mirror"}};
}

nlohmann::json to_json(const EnergyReport& r) {
    return nlohmann::json{{"e_sp", r.e_sp},   {"e_c", r.e_c},       {"p_vdd", r.p_vdd},
                          {"p_avdd", r.p_avdd}, {"pj_per_mac", r.pj_per_mac}};
}

}  // namespace mmelm
