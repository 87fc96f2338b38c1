#include <doctest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmelm/analysis.hpp"
#include "mmelm/error.hpp"
#include "mmelm/rng.hpp"

using namespace mmelm;

namespace {

// Closed form of the linear-f integral: K V^2 [a1 M^2/2 + C_b (-M^2/2 - R M - R^2 ln((R - M)/R))] + a2 V M.
double analytic_integral(double m, const ChipConfig& cfg, const EnergyConstants& k) {
    const double v = cfg.vdd, kn = cfg.k_neu(), r = cfg.i_rst;
    const double pole = -m * m / 2 - r * m - r * r * std::log1p(-m / r);
    return kn * v * v * (k.alpha1 * m * m / 2 + cfg.c_b * pole) + k.alpha2_isc * v * m;
}

double ec_scale(double m, int b, const ChipConfig& cfg) { return std::ldexp(1.0, b) / (0.75 * cfg.k_neu() * m * m); }

ChipConfig energy_chip(double vdd = 1.0) {
    ChipConfig cfg;
    cfg.vdd = vdd;
    cfg.c_b = 40e-15;
    cfg.i_rst = 512e-9;
    return cfg;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("mirror SNR") {
    ChipConfig cfg;
    const double snr = snr_mirror(0.4e-12, 1.0, cfg);
    CHECK(snr == doctest::Approx(2 * 0.4e-12 * 0.025 / (1.602e-19 * 0.7 * 2)).epsilon(1e-14));
    CHECK(snr == doctest::Approx(8.9e4).epsilon(0.01));
    CHECK(snr >= std::ldexp(1.0, 16));
    CHECK(snr_mirror(0.4e-12, 1e12, cfg) == doctest::Approx(2 * snr).epsilon(1e-9));
    CHECK(snr_mirror(0.8e-12, 1.0, cfg) == doctest::Approx(2 * snr).epsilon(1e-14));
    CHECK_THROWS_AS(snr_mirror(0.0, 1.0, cfg), DomainError);
}

TEST_CASE("settling times") {
    ChipConfig cfg;
    const double c = 0.4e-12, imax = 1e-9;
    CHECK(settling_time(imax / 2, c, false, cfg) ==
          doctest::Approx(8 * c * cfg.u_t / (cfg.kappa * imax)).epsilon(1e-14));
    CHECK(settling_time(imax / 1024, c, true, cfg) ==
          doctest::Approx(4 * c * cfg.u_t * 1024 / (cfg.kappa * imax * 5.84)).epsilon(1e-14));
    CHECK(settling_time(3e-9, c, false, cfg) / settling_time(3e-9, c, true, cfg) == doctest::Approx(5.84).epsilon(1e-14));
    CHECK_THROWS_AS(settling_time(0.0, c, false, cfg), DomainError);
}

TEST_CASE("neuron counting time") {
    const double k = 26e12;
    const double t = neuron_counting_time(7, k, 128, 1e-9);
    CHECK(t == doctest::Approx(128 / (0.75 * k * 128 * 1e-9)).epsilon(1e-14));
    CHECK(neuron_counting_time(7, k, 256, 1e-9) == doctest::Approx(t / 2).epsilon(1e-14));
    CHECK(neuron_counting_time(8, k, 128, 1e-9) == doctest::Approx(2 * t).epsilon(1e-14));
    // operating point with T_neu = 68.5 us at 2^b = 128
    const double dimax = 128 / (0.75 * k * 68.5e-6);
    CHECK(neuron_counting_time(7, k, 128, dimax / 128) == doctest::Approx(68.5e-6).epsilon(1e-12));
}

TEST_CASE("contour value") {
    const double v = contour_counter_capacity(10, 0.4e-12, 26e12, 0.7);
    CHECK(v == doctest::Approx(22.3).epsilon(0.002));
    CHECK(std::log2(v) == doctest::Approx(4.48).epsilon(0.01));
    CHECK(contour_counter_capacity(20, 0.4e-12, 26e12, 0.7) == doctest::Approx(2 * v).epsilon(1e-14));
}

TEST_CASE("speed dominance flips across the contour") {
    for (int d : {4, 16, 64, 128})
        for (double c : {0.1e-12, 0.4e-12, 1.6e-12}) {
            ChipConfig cfg;
            cfg.d = d;
            cfg.c_mirror = c;
            const double two_b = contour_counter_capacity(d, c, cfg.k_neu(), cfg.kappa, cfg.u_t);
            for (double f : {0.5, 0.8, 1.25, 2.0}) {
                const double tn = two_b * f / (0.75 * cfg.k_neu() * d * cfg.i_max);
                const double tcm = settling_time(cfg.i_max / 2, c, false, cfg);
                CHECK((f > 1.0) == (tn > tcm));
            }
        }
}

TEST_CASE("speed report") {
    ChipConfig cfg;
    cfg.b = 7;
    const auto r = speed_report(cfg);
    CHECK(r.t_cm_min <= r.t_cm_avg);
    CHECK(r.t_cm_avg <= r.t_cm_max);
    CHECK(r.t_c == std::max(r.t_cm_avg, r.t_neu));
    CHECK(r.t_cm_min == doctest::Approx(settling_time(cfg.i_max, cfg.c_mirror, false, cfg)));
    CHECK(to_json(r).contains("dominant"));
}

TEST_CASE("closed forms are unit-consistent") {
    // SI versus nA / fF / us: C in fF, I in nA gives time in us, K in 1/(fF V)
    ChipConfig si;
    si.c_mirror = 400e-15;
    si.i_max = 2e-9;
    si.d = 32;
    si.c_b = 1.0 / 26e12;
    ChipConfig scaled = si;
    scaled.c_mirror = 400.0;
    scaled.i_max = 2.0;
    scaled.c_b = si.c_b * 1e15;
    const double r_si = settling_time(si.i_max / 2, si.c_mirror, false, si) /
                        neuron_counting_time(9, si.k_neu(), si.d, si.i_max);
    const double r_sc = settling_time(scaled.i_max / 2, scaled.c_mirror, false, scaled) /
                        neuron_counting_time(9, scaled.k_neu(), scaled.d, scaled.i_max);
    CHECK(r_si == doctest::Approx(r_sc).epsilon(1e-12));
    CHECK(contour_counter_capacity(si.d, si.c_mirror, si.k_neu(), si.kappa) ==
          doctest::Approx(contour_counter_capacity(scaled.d, scaled.c_mirror, scaled.k_neu(), scaled.kappa))
              .epsilon(1e-12));
}

TEST_CASE("energy per spike") {
    ChipConfig cfg = energy_chip();
    EnergyConstants k;
    k.alpha2_isc = 0.0;
    cfg.i_rst = 1.0;
    CHECK(energy_per_spike(1e-9, cfg, k) == doctest::Approx(k.alpha1).epsilon(1e-6));
    cfg = energy_chip();
    const double near = energy_per_spike(cfg.i_rst * (1 - 1e-6), cfg, EnergyConstants{}, FrequencyModel::linear);
    const double far = energy_per_spike(cfg.i_rst * 0.5, cfg, EnergyConstants{}, FrequencyModel::linear);
    CHECK(near > 1e4 * far);
    CHECK_THROWS_AS(energy_per_spike(cfg.i_rst, cfg, EnergyConstants{}), DomainError);
    CHECK_THROWS_AS(energy_per_spike(0.0, cfg, EnergyConstants{}), DomainError);
    const EnergyConstants sim;
    CHECK(sim.alpha1 == 0.2e-12);
    CHECK(sim.alpha2_isc == 0.03e-6);
}

TEST_CASE("power_vdd") {
    ChipConfig cfg;
    const EnergyConstants k;
    const double p = power_vdd(50, 1e6, cfg, k);
    CHECK(power_vdd(100, 1e6, cfg, k) == doctest::Approx(2 * p).epsilon(1e-14));
    CHECK(power_vdd(50, 0.0, cfg, k) == doctest::Approx(50 * k.alpha2_isc * cfg.vdd).epsilon(1e-14));
}

TEST_CASE("measured constants reproduce the operating-point power") {
    // 128 x 100 array at 31.6 kHz, 2^b = 128 counts reached at 0.75 of the window, code 1000 inputs
    ChipConfig cfg;
    const auto k = EnergyConstants::measured();
    const double f = 128 * 31.6e3 / 0.75;
    const double p = power_vdd(100, f, cfg, k) + k.p_avdd;
    CHECK(std::abs(p - 188.8e-6) / 188.8e-6 < 0.15);
}

TEST_CASE("adaptive quadrature against closed forms") {
    const double poly = integrate_adaptive([](double x) { return 3 * x * x + 1; }, 0.0, 2.0);
    CHECK(poly == doctest::Approx(10.0).epsilon(1e-12));
    const double e = integrate_adaptive([](double x) { return std::exp(x); }, 0.0, 1.0, 1e-9);
    CHECK(e == doctest::Approx(std::exp(1.0) - 1).epsilon(1e-9));
    CHECK(integrate_adaptive([](double) { return 1.0; }, 1.0, 1.0) == 0.0);
}

TEST_CASE("energy per conversion: constant E_sp with linear f") {
    ChipConfig cfg = energy_chip();
    cfg.i_rst = 1e6;  // third term vanishes
    EnergyConstants k;
    k.alpha2_isc = 0.0;
    const double e0 = k.alpha1 * cfg.vdd * cfg.vdd;
    for (double m : {10e-9, 100e-9, 300e-9}) {
        const double ec = energy_per_conversion(m, 10, cfg, k);
        const double closed = e0 * 1024 * cfg.k_neu() * m / (1.5 * cfg.k_neu() * m);
        CHECK(std::abs(ec - closed) / closed < 1e-6);
    }
}

TEST_CASE("energy per conversion against the analytic integral near the pole") {
    const EnergyConstants k;
    for (double vdd : {0.8, 1.0, 1.2}) {
        const ChipConfig cfg = energy_chip(vdd);
        for (double frac : {0.05, 0.3, 0.5, 0.9, 0.999}) {
            const double m = frac * cfg.i_rst;
            const double ec = energy_per_conversion(m, 10, cfg, k);
            const double ref = ec_scale(m, 10, cfg) * analytic_integral(m, cfg, k);
            CAPTURE(frac);
            CHECK(std::abs(ec - ref) / ref < 1e-6);
        }
    }
    const ChipConfig cfg = energy_chip();
    CHECK_THROWS_AS(energy_per_conversion(cfg.i_rst, 10, cfg, k), DomainError);
    CHECK_THROWS_AS(energy_per_conversion(2 * cfg.i_rst, 10, cfg, k), DomainError);
}

TEST_CASE("energy per conversion against a 1e6-sample Monte Carlo") {
    const EnergyConstants k;
    for (auto model : {FrequencyModel::linear, FrequencyModel::chip}) {
        const ChipConfig cfg = energy_chip();
        const double m = 0.4 * cfg.i_rst;
        const double ec = energy_per_conversion(m, 10, cfg, k, model);
        Rng rng(4242);
        constexpr int kSamples = 1000000;
        double sum = 0.0;
        for (int s = 0; s < kSamples; ++s) sum += energy_integrand(rng.uniform(0.0, m), cfg, k, model);
        const double mc = ec_scale(m, 10, cfg) * m * sum / kSamples;
        CHECK(std::abs(ec - mc) / ec < 0.005);
    }
}

TEST_CASE("E_c minimum lies below I_flx and rises with VDD") {
    const EnergyConstants k;
    double prev_min = 0.0;
    for (double vdd : {0.8, 1.0, 1.2}) {
        const ChipConfig cfg = energy_chip(vdd);
        double best = INFINITY, arg = 0.0;
        for (int g = 1; g < 400; ++g) {
            const double m = cfg.i_rst * g / 400.0;
            const double e = energy_per_conversion(m, 10, cfg, k);
            if (e < best) best = e, arg = m;
        }
        CHECK(arg < cfg.i_flx());
        CHECK(best > prev_min);
        prev_min = best;
    }
}

TEST_CASE("larger alpha1 never moves the optimum away from I_flx") {
    // The alpha1 term integrates to a constant under linear f, so the argmin should stay put.
    for (double a2 : {0.0, 0.03e-6}) {
        const ChipConfig cfg = energy_chip();
        EnergyConstants k;
        k.alpha2_isc = a2;
        auto argmin = [&](const EnergyConstants& kk) {
            double best = INFINITY, arg = 0.0;
            for (int g = 1; g < 200; ++g) {
                const double m = cfg.i_rst * g / 200.0;
                const double e = energy_per_conversion(m, 10, cfg, kk);
                if (e < best) best = e, arg = m;
            }
            return arg;
        };
        const double a = argmin(k);
        EnergyConstants k2 = k;
        k2.alpha1 *= 2;
        const double b = argmin(k2);
        CHECK(std::abs(b - cfg.i_flx()) <= std::abs(a - cfg.i_flx()) + cfg.i_rst / 200.0);
    }
}

TEST_CASE("energy per MAC") {
    CHECK(energy_per_mac(188.8e-6, 31.6e3, 128, 100) == doctest::Approx(0.467e-12).epsilon(0.001));
    const double e = energy_per_mac(1e-4, 1e4, 10, 10);
    CHECK(energy_per_mac(1e-4, 2e4, 10, 10) == doctest::Approx(e / 2).epsilon(1e-15));
    const double sys = energy_per_mac_system(188.8e-6, 31.6e3, 128, 100, 128, 7.1e-12);
    CHECK(sys == doctest::Approx(0.54e-12).epsilon(0.02));
    CHECK_THROWS_AS(energy_per_mac(0.0, 1.0, 1, 1), DomainError);
}

TEST_CASE("temperature weights") {
    ChipConfig cfg = ChipConfig::nominal(8, 8);
    const auto w = sample_mismatch(cfg);
    CHECK(temperature_weights(w, 0.0).entries() == w.entries());
    const auto hot = temperature_weights(w, 30.0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(std::log(hot(i, j)) == doctest::Approx(std::log(w(i, j)) * 300.0 / 330.0).epsilon(1e-12));
    CHECK_THROWS_AS(temperature_weights(w, 61.0), DomainError);
}

TEST_CASE("energy report is non-negative") {
    ChipConfig cfg = energy_chip();
    cfg.d = 128;
    cfg.b = 7;
    const auto r = energy_report(100e-9, 200e-9, 100, 31.6e3, cfg, EnergyConstants::measured());
    CHECK(r.e_sp > 0);
    CHECK(r.e_c > 0);
    CHECK(r.p_vdd > 0);
    CHECK(r.p_avdd == 3.4e-6);
    CHECK(r.pj_per_mac > 0);
    CHECK(to_json(r).size() == 5);
}

}  // TEST_SUITE
