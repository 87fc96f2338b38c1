#pragma once

// Experiment harness: sweeps, benchmarks, regression, robustness and
// expansion studies, with plot-ready tabular reports.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mmelm/analysis.hpp"
#include "mmelm/chip.hpp"
#include "mmelm/dataset.hpp"
#include "mmelm/elm.hpp"
#include "mmelm/expansion.hpp"

namespace mmelm {

/// Table with one row per grid point plus summary and provenance blocks.
/// Cells are numbers, strings or null (e.g. an L_min that was not reached).
struct Report {
    std::string kind;
    std::vector<std::string> columns;
    std::vector<std::vector<nlohmann::json>> rows;
    nlohmann::json summary = nlohmann::json::object();
    nlohmann::json provenance = nlohmann::json::object();

    nlohmann::json to_json() const;
    static Report from_json(const nlohmann::json& j);
    std::string to_csv() const;
};

enum class OutputFormat { csv, json };
OutputFormat parse_format(const std::string& s);
std::string render(const Report& r, OutputFormat format);
void emit(const Report& r, const std::filesystem::path& path, OutputFormat format);

/// 16 hex digits of FNV-1a over the compact JSON dump.
std::string config_hash(const nlohmann::json& j);
nlohmann::json make_provenance(const nlohmann::json& config, std::uint64_t seed, int trials);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
/// Results must be written by index; the first exception is rethrown.
void parallel_for(int n, const std::function<void(int)>& fn, int threads = 0);

/// Fields present in `overrides` replace those of `base`.
ChipConfig apply_overrides(ChipConfig base, const nlohmann::json& overrides);

/// Benchmark chip for a d x l array: I_rst = 4 d I_max and T_neu set by `ratio`.
ChipConfig default_chip(int d, int l, double sigma_vt = 0.016, double ratio = kSaturationRatio);

double miss_rate(const Eigen::VectorXd& outputs, const Eigen::VectorXd& targets);
double rms_error(const Eigen::VectorXd& outputs, const Eigen::VectorXd& targets);

// ---------------------------------------------------------------------------
// Classification

struct BenchOptions {
    RidgeSpec ridge = RidgeSpec::defaults();
    bool cross_validate = true;  // false: use ridge.c directly
    CvMetric metric = CvMetric::mse;
    std::optional<int> beta_bits;
    /// Virtual hidden count; 0 keeps the physical cfg.l.
    int virtual_l = 0;
    AccumulatorPolicy accumulator = AccumulatorPolicy::guarded;
    int threads = 0;
};

struct TrialFit {
    std::uint64_t chip_seed = 0;
    std::uint64_t split_seed = 0;
    double c = 0.0;
    double train_error = 0.0;
    double test_error = 0.0;
    OutputWeights weights;
    Eigen::MatrixXd h_test;
    Eigen::VectorXd t_test;
};

/// One trial: split (unless the dataset has a fixed test split), fresh mismatch,
/// hidden matrices (virtual when d > cfg.d or virtual_l > cfg.l), ridge fit.
TrialFit fit_classifier_trial(const Dataset& base, int train_n, const ChipConfig& cfg,
                              std::uint64_t trial_seed, const BenchOptions& options);

/// Test miss rate mean and std over trials (fresh mismatch seed and split per trial).
Report run_benchmark(const Dataset& ds, int train_n, const ChipConfig& cfg, int trials,
                     std::uint64_t seed, const BenchOptions& options = {});

// ---------------------------------------------------------------------------
// Regression

struct SincSpec {
    int train_n = 5000;
    int test_n = 1000;
    double noise = 0.2;
    double a = 3.14159265358979323846 * 3.0;
    std::vector<double> c_grid;  // empty: RidgeSpec::defaults().grid
    int folds = 5;
};

struct SincFit {
    double rms = 0.0;  // against the clean function
    double c = 0.0;
    Dataset test;
    Eigen::VectorXd prediction;
};

SincFit fit_sinc_trial(const SincSpec& spec, const ChipConfig& cfg, std::uint64_t trial_seed);

/// RMS error vs the clean function; table rows (x, prediction, clean, noisy) of trial 0.
Report run_regression(const SincSpec& spec, const ChipConfig& cfg, int trials, std::uint64_t seed,
                      int threads = 0);

/// Sinc chip used by regression: d = 1, I_rst = 4 I_max, T_neu from the 0.75 ratio.
ChipConfig default_sinc_chip(int l = 128, double sigma_vt = 0.016);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
    std::string parameter;  // ratio | beta_bits | counter_bits | i_z_max
    std::vector<double> grid;
    int trials = 50;
    std::uint64_t seed = 1;
    nlohmann::json overrides = nlohmann::json::object();
    std::string task = "sinc";  // dataset name for the bit sweeps
    int threads = 0;

    // ratio sweep
    std::vector<double> sigma_list{0.005, 0.015, 0.025, 0.045};
    double threshold = 0.08;
    int l_floor = 4;
    int l_cap = 1024;
    SincSpec sinc{2000, 500, 0.2, 3.14159265358979323846 * 3.0, {16.0, 256.0, 4096.0, 65536.0}, 5};

    // bit sweeps
    double plateau_pp = 0.5;
    int hidden = 128;
    int beta_bits_for_counter = 10;
    double ratio = kSaturationRatio;

    // energy sweep
    std::vector<double> vdd_list{0.8, 1.0, 1.2};
    EnergyConstants energy;
    int energy_b = 10;
    double i_rst_vdd_exponent = 0.0;

    void validate() const;
};

/// Mean sinc RMS over trials at one (L, sigma, ratio) point.
double sinc_sweep_error(const SweepSpec& spec, int l, double sigma_vt, double ratio, std::uint64_t point_seed);

/// Smallest L with error <= threshold: doubling from l_floor then exact bisection.
/// nullopt when l_cap is reached without meeting the threshold.
std::optional<int> find_l_min(const std::function<double(int)>& error_at, double threshold, int l_floor,
                              int l_cap);

Report sweep_ratio(const SweepSpec& spec);
Report sweep_beta_bits(const SweepSpec& spec, const Dataset& ds, int train_n);
Report sweep_counter_bits(const SweepSpec& spec, const Dataset& ds, int train_n);
Report sweep_energy(const SweepSpec& spec);

/// First grid value whose error is within plateau_pp percentage points of `asymptote`.
std::optional<double> plateau_onset(const std::vector<double>& grid, const std::vector<double>& errors,
                                    double asymptote, double plateau_pp);

// ---------------------------------------------------------------------------
// Robustness

enum class RobustMode { vdd, temperature };

struct RobustSpec {
    RobustMode mode = RobustMode::vdd;
    std::vector<double> grid;  // empty: {0.8, 1, 1.2} V or {-20, 0, 20} K
    int trials = 3;
    std::uint64_t seed = 1;
    bool normalized = true;  // headline column of the summary
    SincSpec sinc;
    /// Sinc chip: I_rst as a multiple of I^z_max; 1 keeps the oscillator off its saturated branch.
    double sinc_i_rst_multiple = 1.0;
    int probe_d = 128;
    int probe_l = 128;
    std::vector<double> probe_levels{-0.8, -0.6, -0.4, -0.2, 0.0};
    int threads = 0;
};

struct DeviationResult {
    double raw = 0.0;
    double normalized = 0.0;
};

/// Max relative change of hidden outputs versus the nominal condition over the probe set.
DeviationResult hidden_deviation(const RobustSpec& spec, const ChipConfig& probe_cfg);

Report run_robustness(const RobustSpec& spec, const nlohmann::json& overrides = nlohmann::json::object());

// ---------------------------------------------------------------------------
// Expansion

struct ExpandSpec {
    int trials = 20;
    std::uint64_t seed = 1;
    int physical_l = 16;
    int virtual_l = 128;
    int chunk_rows = 128;  // physical k for input expansion
    std::vector<std::string> datasets{"diabetes", "leukemia"};
    int threads = 0;
};

Report run_expansion_demo(const ExpandSpec& spec, const std::filesystem::path& root = data_root());

}  // namespace mmelm
