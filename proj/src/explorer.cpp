#include "mmelm/explorer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "mmelm/error.hpp"
#include "mmelm/rng.hpp"

#ifndef MMELM_VERSION
#define MMELM_VERSION "0.0.0"
#endif

namespace mmelm {

namespace {

// Seed sub-streams of one trial.
constexpr std::uint64_t kSplitSalt = 11;
constexpr std::uint64_t kChipSalt = 12;
constexpr std::uint64_t kSincTrainSalt = 21;
constexpr std::uint64_t kSincTestSalt = 22;
constexpr std::uint64_t kSincChipSalt = 23;

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string csv_cell(const nlohmann::json& cell) {
    if (cell.is_null()) return "";
    if (cell.is_string()) {
        const auto s = cell.get<std::string>();
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string quoted = "\"";
        for (char ch : s) {
            if (ch == '"') quoted += '"';
            quoted += ch;
        }
        return quoted + "\"";
    }
    return cell.dump();
}

/// nominal(d, l) with overrides applied; fields not overridden keep tracking d and I_max.
ChipConfig shaped_chip(int d, int l, double sigma_vt, double ratio, const nlohmann::json& overrides) {
    ChipConfig c = apply_overrides(ChipConfig::nominal(d, l), overrides);
    c.d = d;
    c.l = l;
    if (!overrides.contains("i_rst")) c.i_rst = 4.0 * d * c.i_max;
    if (!overrides.contains("i_ref")) c.i_ref = c.i_max * 1024.0 / 1023.0;
    if (!overrides.contains("sigma_vt")) c.sigma_vt = sigma_vt;
    if (!overrides.contains("t_neu")) c = c.with_saturation_ratio(ratio);
    c.validate();
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Reports

nlohmann::json Report::to_json() const {
    nlohmann::json j;
    j["kind"] = kind;
    j["columns"] = columns;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : rows) j["rows"].push_back(row);
    j["summary"] = summary;
    j["provenance"] = provenance;
    return j;
}

Report Report::from_json(const nlohmann::json& j) {
    Report r;
    try {
        r.kind = j.at("kind").get<std::string>();
        r.columns = j.at("columns").get<std::vector<std::string>>();
        for (const auto& row : j.at("rows")) r.rows.push_back(row.get<std::vector<nlohmann::json>>());
        r.summary = j.value("summary", nlohmann::json::object());
        r.provenance = j.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report: ") + e.what(), 0);
    }
    return r;
}

std::string Report::to_csv() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
        out << '\n';
    }
    return out.str();
}

OutputFormat parse_format(const std::string& s) {
    if (s == "csv") return OutputFormat::csv;
    if (s == "json") return OutputFormat::json;
    throw ConfigError("unknown output format '" + s + "' (csv or json)");
}

std::string render(const Report& r, OutputFormat format) {
    return format == OutputFormat::csv ? r.to_csv() : r.to_json().dump(2) + "\n";
}

void emit(const Report& r, const std::filesystem::path& path, OutputFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report to " + path.string());
    out << render(r, format);
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

std::string config_hash(const nlohmann::json& j) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json make_provenance(const nlohmann::json& config, std::uint64_t seed, int trials) {
    return nlohmann::json{
        {"config", config},
        {"config_hash", config_hash(config)},
        {"master_seed", seed},
        {"trials", trials},
        {"seed_derivation", "derive_seed({master, point, trial}) via SplitMix64 folding"},
        {"rng", "mt19937_64 + polar normal"},
        {"mmelm_version", MMELM_VERSION},
        {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                              "." + std::to_string(EIGEN_MINOR_VERSION)},
    };
}

void parallel_for(int n, const std::function<void(int)>& fn, int threads) {
    if (n <= 0) return;
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

ChipConfig apply_overrides(ChipConfig base, const nlohmann::json& overrides) {
    if (overrides.is_null() || overrides.empty()) return base;
    if (!overrides.is_object()) throw ConfigError("config overrides must be a JSON object");
    nlohmann::json j = to_json(base);
    j.update(overrides);
    return chip_config_from_json(j);
}

ChipConfig default_chip(int d, int l, double sigma_vt, double ratio) {
    return shaped_chip(d, l, sigma_vt, ratio, nlohmann::json::object());
}

double miss_rate(const Eigen::VectorXd& outputs, const Eigen::VectorXd& targets) {
    if (outputs.size() != targets.size()) throw ShapeError("miss_rate: length mismatch");
    if (targets.size() == 0) throw EvaluationError("miss_rate: empty test set");
    int wrong = 0;
    for (Eigen::Index i = 0; i < outputs.size(); ++i)
        if (classify(outputs(i)) != (targets(i) >= 0.0 ? 1 : -1)) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(targets.size());
}

double rms_error(const Eigen::VectorXd& outputs, const Eigen::VectorXd& targets) {
    if (outputs.size() != targets.size()) throw ShapeError("rms_error: length mismatch");
    return std::sqrt((outputs - targets).squaredNorm() / static_cast<double>(targets.size()));
}

// ---------------------------------------------------------------------------
// Classification

TrialFit fit_classifier_trial(const Dataset& base, int train_n, const ChipConfig& cfg,
                              std::uint64_t trial_seed, const BenchOptions& options) {
    if (!base.classification) throw ConfigError("benchmark: dataset '" + base.name + "' is not binary");
    TrialFit fit;
    fit.split_seed = derive_seed({trial_seed, kSplitSalt});
    fit.chip_seed = derive_seed({trial_seed, kChipSalt});
    const Dataset ds =
        base.metadata.value("fixed_test_split", false) ? base : split(base, train_n, fit.split_seed);
    ChipConfig chip = cfg;
    chip.seed = fit.chip_seed;
    const WeightMatrix w = sample_mismatch(chip);

    const bool virtual_array = ds.dim() > chip.d || options.virtual_l > chip.l;
    Eigen::MatrixXd h_train, h_test;
    double scale = 1.0 / static_cast<double>(chip.count_limit());
    if (virtual_array) {
        VirtualShape shape{chip.d, chip.l, static_cast<int>(ds.dim()),
                           options.virtual_l > 0 ? options.virtual_l : chip.l};
        h_train = build_virtual_hidden(ds.train_features(), w, chip, shape, options.accumulator);
        h_test = build_virtual_hidden(ds.test_features(), w, chip, shape, options.accumulator);
        scale /= shape.chunks();
    } else {
        h_train = build_hidden_matrix(ds.train_features(), w, chip).values;
        h_test = build_hidden_matrix(ds.test_features(), w, chip).values;
    }
    const Eigen::VectorXd t_train = ds.train_targets();
    fit.t_test = ds.test_targets();

    TrainOptions train_opts;
    train_opts.feature_scale = scale;
    fit.c = options.cross_validate
                ? cross_validate_ridge(h_train, t_train, options.ridge, train_opts, options.metric).c
                : options.ridge.c;
    fit.weights = train_output_weights(h_train, t_train, fit.c, train_opts);
    if (options.beta_bits) fit.weights = quantize_weights(fit.weights, *options.beta_bits);
    fit.train_error = miss_rate(predict_all(h_train, fit.weights), t_train);
    fit.test_error = miss_rate(predict_all(h_test, fit.weights), fit.t_test);
    fit.h_test = std::move(h_test);
    return fit;
}

Report run_benchmark(const Dataset& ds, int train_n, const ChipConfig& cfg, int trials,
                     std::uint64_t seed, const BenchOptions& options) {
    if (trials < 1) throw ConfigError("benchmark: trials must be >= 1");
    std::vector<TrialFit> fits(static_cast<std::size_t>(trials));
    parallel_for(
        trials,
        [&](int t) {
            fits[t] = fit_classifier_trial(ds, train_n, cfg, derive_seed({seed, 0, static_cast<std::uint64_t>(t)}),
                                           options);
            fits[t].h_test.resize(0, 0);
        },
        options.threads);
    Report r;
    r.kind = "benchmark";
    r.columns = {"trial", "chip_seed", "split_seed", "c", "train_error", "test_error"};
    std::vector<double> test, train, cs;
    for (int t = 0; t < trials; ++t) {
        const auto& f = fits[t];
        r.rows.push_back({t, f.chip_seed, f.split_seed, f.c, f.train_error, f.test_error});
        test.push_back(f.test_error);
        train.push_back(f.train_error);
        cs.push_back(std::log2(f.c));
    }
    r.summary = {{"dataset", ds.name},
                 {"train_n", ds.metadata.value("fixed_test_split", false) ? static_cast<int>(ds.train.size()) : train_n},
                 {"test_error_mean", mean_of(test)},
                 {"test_error_std", std_of(test)},
                 {"train_error_mean", mean_of(train)},
                 {"log2_c_mean", mean_of(cs)},
                 {"virtual_l", options.virtual_l},
                 {"beta_bits", options.beta_bits ? nlohmann::json(*options.beta_bits) : nlohmann::json(nullptr)}};
    r.provenance = make_provenance(to_json(cfg), seed, trials);
    return r;
}

// ---------------------------------------------------------------------------
// Regression

ChipConfig default_sinc_chip(int l, double sigma_vt) { return default_chip(1, l, sigma_vt); }

SincFit fit_sinc_trial(const SincSpec& spec, const ChipConfig& cfg, std::uint64_t trial_seed) {
    if (cfg.d != 1) throw ShapeError("sinc task needs a chip with d = 1");
    const Dataset train = generate_sinc(spec.train_n, spec.noise, derive_seed({trial_seed, kSincTrainSalt}), spec.a);
    SincFit fit;
    fit.test = generate_sinc(spec.test_n, spec.noise, derive_seed({trial_seed, kSincTestSalt}), spec.a);
    ChipConfig chip = cfg;
    chip.seed = derive_seed({trial_seed, kSincChipSalt});
    const WeightMatrix w = sample_mismatch(chip);
    const Eigen::MatrixXd h = build_hidden_matrix(train.features, w, chip).values;
    const Eigen::MatrixXd h_test = build_hidden_matrix(fit.test.features, w, chip).values;
    RidgeSpec ridge = RidgeSpec::defaults();
    if (!spec.c_grid.empty()) ridge.grid = spec.c_grid;
    ridge.folds = spec.folds;
    TrainOptions opts;
    opts.feature_scale = 1.0 / static_cast<double>(chip.count_limit());
    fit.c = ridge.grid.size() == 1 ? ridge.grid.front() : cross_validate_ridge(h, train.targets, ridge, opts).c;
    const OutputWeights beta = train_output_weights(h, train.targets, fit.c, opts);
    fit.prediction = predict_all(h_test, beta);
    fit.rms = rms_error(fit.prediction, fit.test.clean);
    return fit;
}

Report run_regression(const SincSpec& spec, const ChipConfig& cfg, int trials, std::uint64_t seed,
                      int threads) {
    if (trials < 1) throw ConfigError("regression: trials must be >= 1");
    std::vector<SincFit> fits(static_cast<std::size_t>(trials));
    parallel_for(
        trials, [&](int t) { fits[t] = fit_sinc_trial(spec, cfg, derive_seed({seed, 0, static_cast<std::uint64_t>(t)})); },
        threads);
    Report r;
    r.kind = "regression";
    r.columns = {"x", "prediction", "clean", "noisy"};
    const auto& first = fits.front();
    for (Eigen::Index i = 0; i < first.test.size(); ++i)
        r.rows.push_back({first.test.raw(i, 0), first.prediction(i), first.test.clean(i), first.test.targets(i)});
    std::vector<double> rms, cs;
    for (const auto& f : fits) {
        rms.push_back(f.rms);
        cs.push_back(f.c);
    }
    r.summary = {{"task", "sinc"},   {"rms_mean", mean_of(rms)}, {"rms_std", std_of(rms)},
                 {"rms_per_trial", rms}, {"c_per_trial", cs},     {"train_n", spec.train_n},
                 {"test_n", spec.test_n}, {"noise", spec.noise},  {"sinc_a", spec.a}};
    r.provenance = make_provenance(to_json(cfg), seed, trials);
    return r;
}

// ---------------------------------------------------------------------------
// Sweeps

void SweepSpec::validate() const {
    if (trials < 1) throw ConfigError("sweep: trials must be >= 1");
    if (grid.empty()) throw ConfigError("sweep: grid must be non-empty");
    if (l_floor < 1 || l_cap < l_floor) throw ConfigError("sweep: need 1 <= l_floor <= l_cap");
    if (!(plateau_pp >= 0.0)) throw ConfigError("sweep: plateau_pp must be >= 0");
}

double sinc_sweep_error(const SweepSpec& spec, int l, double sigma_vt, double ratio, std::uint64_t point_seed) {
    nlohmann::json overrides = spec.overrides;
    if (!overrides.contains("neuron_model")) overrides["neuron_model"] = "linear";
    const ChipConfig cfg = shaped_chip(1, l, sigma_vt, ratio, overrides);
    double total = 0.0;
    for (int t = 0; t < spec.trials; ++t)
        total += fit_sinc_trial(spec.sinc, cfg,
                                derive_seed({point_seed, static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(t)}))
                     .rms;
    return total / spec.trials;
}

std::optional<int> find_l_min(const std::function<double(int)>& error_at, double threshold, int l_floor,
                              int l_cap) {
    std::map<int, double> memo;
    auto ok = [&](int l) {
        auto it = memo.find(l);
        if (it == memo.end()) it = memo.emplace(l, error_at(l)).first;
        return it->second <= threshold;
    };
    int lo = 0;  // largest L known to miss the threshold
    int l = l_floor;
    while (true) {
        if (ok(l)) break;
        lo = l;
        if (l >= l_cap) return std::nullopt;
        l = std::min(2 * l, l_cap);
    }
    if (lo == 0) return l;
    int hi = l;
    while (hi - lo > 1) {
        const int mid = lo + (hi - lo) / 2;
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

Report sweep_ratio(const SweepSpec& spec) {
    spec.validate();
    if (spec.sigma_list.empty()) throw ConfigError("ratio sweep: sigma list must be non-empty");
    for (double r : spec.grid)
        if (!(r > 0.0)) throw ConfigError("ratio sweep: ratios must be positive");
    const int n_ratio = static_cast<int>(spec.grid.size());
    const int points = static_cast<int>(spec.sigma_list.size()) * n_ratio;
    std::vector<std::optional<int>> l_min(points);
    std::vector<double> err_at(points, std::nan(""));
    parallel_for(
        points,
        [&](int p) {
            const double sigma = spec.sigma_list[p / n_ratio];
            const double ratio = spec.grid[p % n_ratio];
            const std::uint64_t point_seed = derive_seed({spec.seed, static_cast<std::uint64_t>(p)});
            std::map<int, double> errors;
            auto error_at = [&](int l) {
                const double e = sinc_sweep_error(spec, l, sigma, ratio, point_seed);
                errors[l] = e;
                return e;
            };
            l_min[p] = find_l_min(error_at, spec.threshold, spec.l_floor, spec.l_cap);
            if (l_min[p]) err_at[p] = errors[*l_min[p]];
        },
        spec.threads);

    Report r;
    r.kind = "sweep_ratio";
    r.columns = {"sigma_vt", "ratio", "l_min", "error_at_l_min"};
    nlohmann::json per_sigma = nlohmann::json::array();
    for (std::size_t s = 0; s < spec.sigma_list.size(); ++s) {
        std::optional<int> best;
        for (int i = 0; i < n_ratio; ++i) {
            const int p = static_cast<int>(s) * n_ratio + i;
            r.rows.push_back({spec.sigma_list[s], spec.grid[i],
                              l_min[p] ? nlohmann::json(*l_min[p]) : nlohmann::json(nullptr),
                              l_min[p] ? nlohmann::json(err_at[p]) : nlohmann::json(nullptr)});
            if (l_min[p] && (!best || *l_min[p] < *best)) best = l_min[p];
        }
        nlohmann::json argmins = nlohmann::json::array();
        for (int i = 0; i < n_ratio && best; ++i)
            if (l_min[s * n_ratio + i] == best) argmins.push_back(spec.grid[i]);
        per_sigma.push_back({{"sigma_vt", spec.sigma_list[s]},
                             {"min_l_min", best ? nlohmann::json(*best) : nlohmann::json(nullptr)},
                             {"argmin_ratios", argmins}});
    }
    r.summary = {{"threshold", spec.threshold}, {"l_cap", spec.l_cap}, {"per_sigma", per_sigma},
                 {"not_reached_sentinel", nullptr}};
    nlohmann::json cfg = spec.overrides;
    cfg["sinc_train_n"] = spec.sinc.train_n;
    cfg["sinc_test_n"] = spec.sinc.test_n;
    cfg["sinc_noise"] = spec.sinc.noise;
    cfg["c_grid"] = spec.sinc.c_grid;
    r.provenance = make_provenance(cfg, spec.seed, spec.trials);
    return r;
}

std::optional<double> plateau_onset(const std::vector<double>& grid, const std::vector<double>& errors,
                                    double asymptote, double plateau_pp) {
    for (std::size_t i = 0; i < grid.size() && i < errors.size(); ++i)
        if (std::abs(errors[i] - asymptote) * 100.0 <= plateau_pp) return grid[i];
    return std::nullopt;
}

namespace {

Report bit_sweep_report(const std::string& kind, const std::string& column, const SweepSpec& spec,
                        const std::vector<std::vector<double>>& errors, const Dataset& ds,
                        const ChipConfig& cfg, nlohmann::json extra) {
    Report r;
    r.kind = kind;
    r.columns = {column, "mean_error", "std_error"};
    std::vector<double> means;
    for (std::size_t g = 0; g < spec.grid.size(); ++g) {
        means.push_back(mean_of(errors[g]));
        r.rows.push_back({spec.grid[g], means.back(), std_of(errors[g])});
    }
    const double asymptote = means.back();
    const auto onset = plateau_onset(spec.grid, means, asymptote, spec.plateau_pp);
    extra["dataset"] = ds.name;
    extra["asymptote_error"] = asymptote;
    extra["plateau_pp"] = spec.plateau_pp;
    extra["plateau_onset"] = onset ? nlohmann::json(*onset) : nlohmann::json(nullptr);
    r.summary = extra;
    r.provenance = make_provenance(to_json(cfg), spec.seed, spec.trials);
    return r;
}

}  // namespace

Report sweep_beta_bits(const SweepSpec& spec, const Dataset& ds, int train_n) {
    spec.validate();
    for (double b : spec.grid)
        if (b < 1 || b > 16 || b != std::floor(b)) throw ConfigError("beta-bits sweep: bits must be integers in 1..16");
    const int d = static_cast<int>(std::min<Eigen::Index>(ds.dim(), 128));
    const ChipConfig cfg = shaped_chip(d, spec.hidden, 0.016, spec.ratio, spec.overrides);
    std::vector<std::vector<double>> errors(spec.grid.size(), std::vector<double>(spec.trials));
    std::vector<double> unquantized(spec.trials);
    BenchOptions opts;
    opts.threads = 1;
    parallel_for(
        spec.trials,
        [&](int t) {
            const TrialFit fit = fit_classifier_trial(ds, train_n, cfg, derive_seed({spec.seed, 0, static_cast<std::uint64_t>(t)}), opts);
            unquantized[t] = fit.test_error;
            for (std::size_t g = 0; g < spec.grid.size(); ++g) {
                const auto q = quantize_weights(fit.weights, static_cast<int>(spec.grid[g]));
                errors[g][t] = miss_rate(predict_all(fit.h_test, q), fit.t_test);
            }
        },
        spec.threads);
    return bit_sweep_report("sweep_beta_bits", "beta_bits", spec, errors, ds, cfg,
                            {{"unquantized_error", mean_of(unquantized)}, {"hidden", spec.hidden}});
}

Report sweep_counter_bits(const SweepSpec& spec, const Dataset& ds, int train_n) {
    spec.validate();
    for (double b : spec.grid)
        if (b < 1 || b > 14 || b != std::floor(b)) throw ConfigError("counter-bits sweep: b must be integers in 1..14");
    const int d = static_cast<int>(std::min<Eigen::Index>(ds.dim(), 128));
    const ChipConfig base = shaped_chip(d, spec.hidden, 0.016, spec.ratio, spec.overrides);
    std::vector<std::vector<double>> errors(spec.grid.size(), std::vector<double>(spec.trials));
    BenchOptions opts;
    opts.threads = 1;
    opts.beta_bits = spec.beta_bits_for_counter;
    const int n_grid = static_cast<int>(spec.grid.size());
    parallel_for(
        n_grid * spec.trials,
        [&](int job) {
            const int g = job / spec.trials, t = job % spec.trials;
            ChipConfig cfg = base;
            cfg.b = static_cast<int>(spec.grid[g]);
            if (!spec.overrides.contains("t_neu")) cfg = cfg.with_saturation_ratio(spec.ratio);
            // same split and mismatch for every b within a trial
            errors[g][t] = fit_classifier_trial(ds, train_n, cfg, derive_seed({spec.seed, 0, static_cast<std::uint64_t>(t)}), opts)
                               .test_error;
        },
        spec.threads);
    return bit_sweep_report("sweep_counter_bits", "counter_bits", spec, errors, ds, base,
                            {{"beta_bits", spec.beta_bits_for_counter}, {"ratio", spec.ratio}, {"hidden", spec.hidden}});
}

Report sweep_energy(const SweepSpec& spec) {
    spec.validate();
    if (spec.vdd_list.empty()) throw ConfigError("energy sweep: VDD list must be non-empty");
    for (double f : spec.grid)
        if (!(f > 0.0 && f < 1.0)) throw ConfigError("energy sweep: grid holds fractions of I_rst in (0, 1)");
    ChipConfig base = shaped_chip(128, 128, 0.016, kSaturationRatio, spec.overrides);
    base.i_rst_vdd_exponent = spec.overrides.value("i_rst_vdd_exponent", spec.i_rst_vdd_exponent);
    Report r;
    r.kind = "sweep_energy";
    r.columns = {"vdd", "i_rst_fraction", "i_z_max", "e_c", "t_neu"};
    nlohmann::json per_vdd = nlohmann::json::array();
    std::vector<double> minima;
    for (double vdd : spec.vdd_list) {
        const ChipConfig cfg = base.at_supply(vdd);
        auto ec = [&](double m) { return energy_per_conversion(m, spec.energy_b, cfg, spec.energy); };
        std::size_t best = 0;
        std::vector<double> values;
        for (std::size_t g = 0; g < spec.grid.size(); ++g) {
            const double m = spec.grid[g] * cfg.i_rst;
            values.push_back(ec(m));
            const double t_neu = std::ldexp(1.0, spec.energy_b) / (kSaturationRatio * cfg.k_neu() * m);
            r.rows.push_back({vdd, spec.grid[g], m, values.back(), t_neu});
            if (values.back() < values[best]) best = g;
        }
        // golden-section refinement inside the bracketing grid cells
        double a = spec.grid[best > 0 ? best - 1 : 0] * cfg.i_rst;
        double b = spec.grid[std::min(best + 1, spec.grid.size() - 1)] * cfg.i_rst;
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        double f1 = ec(x1), f2 = ec(x2);
        for (int it = 0; it < 80 && (b - a) > 1e-9 * cfg.i_rst; ++it) {
            if (f1 < f2) {
                b = x2; x2 = x1; f2 = f1;
                x1 = b - phi * (b - a); f1 = ec(x1);
            } else {
                a = x1; x1 = x2; f1 = f2;
                x2 = a + phi * (b - a); f2 = ec(x2);
            }
        }
        double arg = 0.5 * (a + b);
        double e_min = ec(arg);
        if (values[best] < e_min) {
            arg = spec.grid[best] * cfg.i_rst;
            e_min = values[best];
        }
        minima.push_back(e_min);
        per_vdd.push_back({{"vdd", vdd},
                           {"i_rst", cfg.i_rst},
                           {"i_flx", cfg.i_flx()},
                           {"argmin_i_z_max", arg},
                           {"e_c_min", e_min},
                           {"argmin_below_i_flx", arg < cfg.i_flx()},
                           {"t_neu_at_min", std::ldexp(1.0, spec.energy_b) / (kSaturationRatio * cfg.k_neu() * arg)}});
    }
    bool increasing = true;
    for (std::size_t i = 1; i < minima.size(); ++i)
        if (!(minima[i] > minima[i - 1])) increasing = false;
    r.summary = {{"b", spec.energy_b},
                 {"alpha1", spec.energy.alpha1},
                 {"alpha2_isc", spec.energy.alpha2_isc},
                 {"per_vdd", per_vdd},
                 {"minimum_increasing_in_vdd", increasing}};
    r.provenance = make_provenance(to_json(base), spec.seed, 1);
    return r;
}

// ---------------------------------------------------------------------------
// Robustness

namespace {

std::vector<double> robust_grid(const RobustSpec& spec) {
    if (!spec.grid.empty()) return spec.grid;
    return spec.mode == RobustMode::vdd ? std::vector<double>{0.8, 1.0, 1.2} : std::vector<double>{-20.0, 0.0, 20.0};
}

struct Condition {
    ChipConfig cfg;
    WeightMatrix w;
};

Condition at_condition(const RobustSpec& spec, const ChipConfig& cfg, const WeightMatrix& w, double value) {
    if (spec.mode == RobustMode::vdd) return {cfg.at_supply(value), w};
    return {cfg, temperature_weights(w, value)};
}

double nominal_value(const RobustSpec& spec, const ChipConfig& cfg) {
    return spec.mode == RobustMode::vdd ? cfg.vdd : 0.0;
}

double max_relative_change(const Eigen::MatrixXd& h, const Eigen::MatrixXd& ref) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < ref.rows(); ++i)
        for (Eigen::Index j = 0; j < ref.cols(); ++j)
            if (ref(i, j) > 0.0) worst = std::max(worst, std::abs(h(i, j) - ref(i, j)) / ref(i, j));
    return worst;
}

Eigen::MatrixXd probe_inputs(const RobustSpec& spec) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(spec.probe_levels.size()), spec.probe_d);
    for (std::size_t i = 0; i < spec.probe_levels.size(); ++i) x.row(i).setConstant(spec.probe_levels[i]);
    return x;
}

}  // namespace

DeviationResult hidden_deviation(const RobustSpec& spec, const ChipConfig& probe_cfg) {
    const WeightMatrix w = sample_mismatch(probe_cfg);
    const Eigen::MatrixXd x = probe_inputs(spec);
    const auto nominal = at_condition(spec, probe_cfg, w, nominal_value(spec, probe_cfg));
    const HiddenMatrix h0 = build_hidden_matrix(x, nominal.w, nominal.cfg);
    const HiddenMatrix n0 = normalize_hidden(h0);
    DeviationResult out;
    for (double v : robust_grid(spec)) {
        const auto cond = at_condition(spec, probe_cfg, w, v);
        const HiddenMatrix h = build_hidden_matrix(x, cond.w, cond.cfg);
        out.raw = std::max(out.raw, max_relative_change(h.values, h0.values));
        out.normalized = std::max(out.normalized, max_relative_change(normalize_hidden(h).values, n0.values));
    }
    return out;
}

Report run_robustness(const RobustSpec& spec, const nlohmann::json& overrides) {
    if (spec.trials < 1) throw ConfigError("robustness: trials must be >= 1");
    const auto grid = robust_grid(spec);
    if (spec.mode == RobustMode::vdd)
        for (double v : grid)
            if (!(v > 0.0)) throw ConfigError("robustness: VDD values must be positive");

    const ChipConfig probe_cfg = shaped_chip(spec.probe_d, spec.probe_l, 0.016, kSaturationRatio, overrides);
    ChipConfig sinc_cfg = shaped_chip(1, 128, 0.016, kSaturationRatio, overrides);
    if (!overrides.contains("i_rst")) sinc_cfg.i_rst = spec.sinc_i_rst_multiple * sinc_cfg.i_z_max();
    sinc_cfg.validate();

    // per-variation deviation of probe outputs, one chip
    const WeightMatrix w_probe = sample_mismatch(probe_cfg);
    const Eigen::MatrixXd x_probe = probe_inputs(spec);
    const auto nominal_probe = at_condition(spec, probe_cfg, w_probe, nominal_value(spec, probe_cfg));
    const HiddenMatrix h0 = build_hidden_matrix(x_probe, nominal_probe.w, nominal_probe.cfg);
    const HiddenMatrix hn0 = normalize_hidden(h0);

    const std::size_t ng = grid.size();
    std::vector<std::vector<double>> rms_raw(ng, std::vector<double>(spec.trials));
    std::vector<std::vector<double>> rms_norm(ng, std::vector<double>(spec.trials));
    parallel_for(
        spec.trials,
        [&](int t) {
            const std::uint64_t ts = derive_seed({spec.seed, 0, static_cast<std::uint64_t>(t)});
            const Dataset train = generate_sinc(spec.sinc.train_n, spec.sinc.noise, derive_seed({ts, kSincTrainSalt}), spec.sinc.a);
            const Dataset test = generate_sinc(spec.sinc.test_n, spec.sinc.noise, derive_seed({ts, kSincTestSalt}), spec.sinc.a);
            ChipConfig cfg = sinc_cfg;
            cfg.seed = derive_seed({ts, kSincChipSalt});
            const WeightMatrix w = sample_mismatch(cfg);
            const auto nominal = at_condition(spec, cfg, w, nominal_value(spec, cfg));
            const HiddenMatrix h = build_hidden_matrix(train.features, nominal.w, nominal.cfg);
            const HiddenMatrix hn = normalize_hidden(h);
            RidgeSpec ridge = RidgeSpec::defaults();
            if (!spec.sinc.c_grid.empty()) ridge.grid = spec.sinc.c_grid;
            ridge.folds = spec.sinc.folds;
            auto fit = [&](const Eigen::MatrixXd& m) {
                TrainOptions opts;
                const double peak = m.maxCoeff();
                opts.feature_scale = peak > 0.0 ? 1.0 / peak : 1.0;
                const double c = cross_validate_ridge(m, train.targets, ridge, opts).c;
                return train_output_weights(m, train.targets, c, opts);
            };
            const OutputWeights beta_raw = fit(h.values);
            const OutputWeights beta_norm = fit(hn.values);
            for (std::size_t g = 0; g < ng; ++g) {
                const auto cond = at_condition(spec, cfg, w, grid[g]);
                const HiddenMatrix ht = build_hidden_matrix(test.features, cond.w, cond.cfg);
                rms_raw[g][t] = rms_error(predict_all(ht.values, beta_raw), test.clean);
                rms_norm[g][t] = rms_error(predict_all(normalize_hidden(ht).values, beta_norm), test.clean);
            }
        },
        spec.threads);

    Report r;
    r.kind = spec.mode == RobustMode::vdd ? "robust_vdd" : "robust_temperature";
    r.columns = {spec.mode == RobustMode::vdd ? "vdd" : "delta_t", "deviation_raw", "deviation_normalized",
                 "rms_raw", "rms_normalized"};
    double dev_raw = 0.0, dev_norm = 0.0, worst_raw = 0.0, worst_norm = 0.0;
    for (std::size_t g = 0; g < ng; ++g) {
        const auto cond = at_condition(spec, probe_cfg, w_probe, grid[g]);
        const HiddenMatrix h = build_hidden_matrix(x_probe, cond.w, cond.cfg);
        const double dr = max_relative_change(h.values, h0.values);
        const double dn = max_relative_change(normalize_hidden(h).values, hn0.values);
        dev_raw = std::max(dev_raw, dr);
        dev_norm = std::max(dev_norm, dn);
        const double er = mean_of(rms_raw[g]), en = mean_of(rms_norm[g]);
        worst_raw = std::max(worst_raw, er);
        worst_norm = std::max(worst_norm, en);
        r.rows.push_back({grid[g], dr, dn, er, en});
    }
    r.summary = {{"max_deviation_raw", dev_raw},
                 {"max_deviation_normalized", dev_norm},
                 {"worst_rms_raw", worst_raw},
                 {"worst_rms_normalized", worst_norm},
                 {"headline", spec.normalized ? "normalized" : "raw"},
                 {"headline_worst_rms", spec.normalized ? worst_norm : worst_raw},
                 {"sinc_i_rst_multiple", spec.sinc_i_rst_multiple},
                 {"probe_levels", spec.probe_levels}};
    nlohmann::json cfg = {{"probe_chip", to_json(probe_cfg)}, {"sinc_chip", to_json(sinc_cfg)}};
    r.provenance = make_provenance(cfg, spec.seed, spec.trials);
    return r;
}

// ---------------------------------------------------------------------------
// Expansion

Report run_expansion_demo(const ExpandSpec& spec, const std::filesystem::path& root) {
    if (spec.trials < 1) throw ConfigError("expansion demo: trials must be >= 1");
    Report r;
    r.kind = "expand_demo";
    r.columns = {"dataset", "mode", "physical_k", "physical_l", "virtual_l", "chunks", "mean_error", "std_error", "status"};
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& name : spec.datasets) {
        const auto info = find_dataset(name);
        if (!info) throw ConfigError("expansion demo: unknown dataset '" + name + "'");
        if (!dataset_available(name, root)) {
            r.rows.push_back({name, "all", nullptr, nullptr, nullptr, nullptr, nullptr, nullptr, "unavailable"});
            summary[name] = {{"status", "unavailable"}};
            continue;
        }
        const Dataset ds = load_named(name, root);
        const int k = static_cast<int>(std::min<Eigen::Index>(ds.dim(), spec.chunk_rows));
        const int chunks = static_cast<int>((ds.dim() + k - 1) / k);
        struct Mode {
            std::string label;
            int physical_l;
            int virtual_l;
        };
        std::vector<Mode> modes;
        if (ds.dim() > k) {
            modes.push_back({"input_expansion", spec.virtual_l, 0});
        } else {
            modes.push_back({"physical", spec.physical_l, 0});
            modes.push_back({"hidden_expansion", spec.physical_l, spec.virtual_l});
            modes.push_back({"physical_reference", spec.virtual_l, 0});
        }
        nlohmann::json ds_summary = nlohmann::json::object();
        for (const auto& mode : modes) {
            const ChipConfig cfg = default_chip(k, mode.physical_l);
            BenchOptions opts;
            opts.virtual_l = mode.virtual_l;
            opts.threads = spec.threads;
            const Report b = run_benchmark(ds, info->train_n, cfg, spec.trials, spec.seed, opts);
            const double m = b.summary["test_error_mean"], s = b.summary["test_error_std"];
            r.rows.push_back({name, mode.label, k, mode.physical_l, mode.virtual_l > 0 ? mode.virtual_l : mode.physical_l,
                              chunks, m, s, "ok"});
            ds_summary[mode.label] = {{"mean_error", m}, {"std_error", s}};
        }
        summary[name] = ds_summary;
    }
    r.summary = summary;
    r.provenance = make_provenance({{"physical_l", spec.physical_l},
                                    {"virtual_l", spec.virtual_l},
                                    {"chunk_rows", spec.chunk_rows},
                                    {"datasets", spec.datasets}},
                                   spec.seed, spec.trials);
    return r;
}

}  // namespace mmelm
