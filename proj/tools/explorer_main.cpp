// mmelm-explore: design-space sweeps, benchmarks and robustness studies.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmelm/error.hpp"
#include "mmelm/explorer.hpp"
#include "mmelm/rng.hpp"

using namespace mmelm;

namespace {

constexpr const char* kColumnsHelp = R"(CSV columns by report kind:
  sweep ratio         sigma_vt, ratio, l_min (empty = not reached), error_at_l_min
  sweep beta-bits     beta_bits, mean_error, std_error
  sweep counter-bits  counter_bits, mean_error, std_error
  sweep energy        vdd, i_rst_fraction, i_z_max (A), e_c (J), t_neu (s)
  bench <dataset>     trial, chip_seed, split_seed, c, train_error, test_error
  regress sinc        x, prediction, clean, noisy
  robust vdd|temp     vdd|delta_t, deviation_raw, deviation_normalized, rms_raw, rms_normalized
  expand demo         dataset, mode, physical_k, physical_l, virtual_l, chunks, mean_error, std_error, status
JSON output carries the same table plus summary and provenance blocks.
Datasets are read from $MMELM_DATA_DIR (default: the repository data/ directory).
Exit codes: 0 ok, 2 configuration, 3 data, 4 model domain, 5 I/O, 1 other.)";

struct Globals {
    std::string config_path;
    std::uint64_t seed = 1;
    int trials = 0;  // 0: per-command default
    std::string out;
    std::string format = "csv";
    int threads = 0;
    int virtual_d = 0;
    int virtual_l = 0;
};

nlohmann::json load_overrides(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config " + path + ": expected a JSON object");
    apply_overrides(ChipConfig{}, j);  // validates field types and ranges
    return j;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("bad list value '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

std::vector<double> integer_range(int lo, int hi) {
    std::vector<double> v;
    for (int i = lo; i <= hi; ++i) v.push_back(i);
    return v;
}

void finish(const Report& r, const Globals& g) {
    const auto format = parse_format(g.format);
    if (g.out.empty() || g.out == "-") {
        std::cout << render(r, format);
    } else {
        emit(r, g.out, format);
        std::cerr << "wrote " << g.out << "\n";
    }
    if (!r.summary.empty()) std::cerr << r.summary.dump(2) << "\n";
}

int trials_or(const Globals& g, int fallback) { return g.trials > 0 ? g.trials : fallback; }

Dataset require_dataset(const std::string& name) {
    if (!find_dataset(name)) throw ConfigError("unknown dataset '" + name + "'");
    return load_named(name);
}

int exit_code(const Error& e) {
    switch (e.category()) {
        case Error::Category::config: return 2;
        case Error::Category::data: return 3;
        case Error::Category::model_domain: return 4;
        case Error::Category::io: return 5;
        default: return 1;
    }
}

// Random inputs through the rotation pipeline vs the explicit virtual matrix.
Report virtual_oracle_demo(const Globals& g, const nlohmann::json& overrides) {
    const ChipConfig cfg = apply_overrides(ChipConfig::nominal(8, 8), overrides);
    VirtualShape shape{cfg.d, cfg.l, g.virtual_d > 0 ? g.virtual_d : cfg.d, g.virtual_l > 0 ? g.virtual_l : cfg.l};
    shape.validate();
    const WeightMatrix w = sample_mismatch(cfg);
    const Eigen::MatrixXd v = build_virtual_matrix(w, shape);
    Rng rng(derive_seed({g.seed, 99}));
    Report r;
    r.kind = "expand_oracle";
    r.columns = {"sample", "max_abs_diff", "max_current"};
    double worst = 0.0;
    for (int s = 0; s < trials_or(g, 10); ++s) {
        std::vector<int> codes(shape.d);
        Eigen::VectorXd currents(shape.d);
        for (int i = 0; i < shape.d; ++i) {
            codes[i] = static_cast<int>(rng.below(1024));
            currents(i) = dac_current(codes[i], cfg.i_ref);
        }
        const Eigen::VectorXd pipe = virtual_forward_codes(codes, w, cfg, shape, Response::currents);
        const Eigen::VectorXd ref = v.transpose() * currents;
        const double diff = (pipe - ref).cwiseAbs().maxCoeff();
        worst = std::max(worst, diff / std::max(ref.cwiseAbs().maxCoeff(), 1e-300));
        r.rows.push_back({s, diff, ref.cwiseAbs().maxCoeff()});
    }
    r.summary = {{"k", shape.k}, {"n", shape.n}, {"d", shape.d}, {"l", shape.l}, {"max_relative_diff", worst}};
    r.provenance = make_provenance(to_json(cfg), g.seed, trials_or(g, 10));
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mismatch-based analog ELM simulator: sweeps, benchmarks and robustness studies"};
    app.footer(kColumnsHelp);
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON file of ChipConfig overrides (SI units)");
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--trials", g.trials, "Trials per point (default: 50 sweeps, 20 bench, 1 regress, 3 robust)")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output file (default stdout)");
    app.add_option("--format", g.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
    app.add_option("--virtual-d", g.virtual_d, "Virtual input dimension for expansion");
    app.add_option("--virtual-l", g.virtual_l, "Virtual hidden count for expansion");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Design-space sweeps");
    std::string sweep_kind, grid_text, sigma_text, dataset = "brightdata";
    double threshold = 0.08, plateau_pp = 0.5;
    int l_cap = 1024, energy_b = 10;
    double irst_exponent = 0.0;
    sweep->add_option("kind", sweep_kind, "ratio | beta-bits | counter-bits | energy")
        ->required()
        ->check(CLI::IsMember({"ratio", "beta-bits", "counter-bits", "energy"}));
    sweep->add_option("--grid", grid_text, "Comma-separated grid (ratio, bits, or I_z_max/I_rst fractions)");
    sweep->add_option("--sigma", sigma_text, "Comma-separated sigma_VT list in volts (ratio sweep)");
    sweep->add_option("--dataset", dataset, "Dataset for bit sweeps");
    sweep->add_option("--threshold", threshold, "L_min error threshold (ratio sweep)");
    sweep->add_option("--l-cap", l_cap, "Largest L searched (ratio sweep)");
    sweep->add_option("--plateau-pp", plateau_pp, "Plateau tolerance in percentage points");
    sweep->add_option("--energy-b", energy_b, "Counter bits for the energy sweep");
    sweep->add_option("--irst-vdd-exponent", irst_exponent, "I_rst ~ VDD^exponent in the energy sweep");

    // bench
    auto* bench = app.add_subcommand("bench", "Benchmark classification on a dataset");
    std::string bench_name;
    int hidden = 128, beta_bits = 0, physical_k = 128;
    double sigma_vt = 0.016, ratio = kSaturationRatio;
    bench->add_option("dataset", bench_name, "diabetes | australian | brightdata | adult | leukemia")->required();
    bench->add_option("--hidden", hidden, "Physical hidden neurons");
    bench->add_option("--sigma-vt", sigma_vt, "Threshold mismatch std-dev (V)");
    bench->add_option("--ratio", ratio, "I^z_sat / I^z_max");
    bench->add_option("--beta-bits", beta_bits, "Quantize beta to this many bits (0 = off)");
    bench->add_option("--physical-k", physical_k, "Physical input rows; larger inputs are chunked");

    // regress
    auto* regress = app.add_subcommand("regress", "Regression task");
    std::string regress_task;
    SincSpec sinc;
    regress->add_option("task", regress_task, "sinc")->required()->check(CLI::IsMember({"sinc"}));
    regress->add_option("--hidden", hidden, "Hidden neurons");
    regress->add_option("--sigma-vt", sigma_vt, "Threshold mismatch std-dev (V)");
    regress->add_option("--noise", sinc.noise, "Target noise std-dev");
    regress->add_option("--train-n", sinc.train_n, "Training samples");
    regress->add_option("--test-n", sinc.test_n, "Test samples");

    // robust
    auto* robust = app.add_subcommand("robust", "Supply / temperature robustness");
    std::string robust_kind;
    bool raw_headline = false;
    robust->add_option("mode", robust_kind, "vdd | temp")->required()->check(CLI::IsMember({"vdd", "temp"}));
    robust->add_option("--grid", grid_text, "Comma-separated VDD (V) or delta-T (K) values");
    robust->add_flag("--raw", raw_headline, "Headline the unnormalized error");

    // expand
    auto* expand = app.add_subcommand("expand", "Weight-reuse expansion");
    std::string expand_kind;
    expand->add_option("kind", expand_kind, "demo")->required()->check(CLI::IsMember({"demo"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const nlohmann::json overrides = load_overrides(g.config_path);
        if (sweep->parsed()) {
            SweepSpec spec;
            spec.seed = g.seed;
            spec.trials = trials_or(g, 50);
            spec.overrides = overrides;
            spec.threads = g.threads;
            spec.threshold = threshold;
            spec.l_cap = l_cap;
            spec.plateau_pp = plateau_pp;
            spec.energy_b = energy_b;
            spec.i_rst_vdd_exponent = irst_exponent;
            if (!sigma_text.empty()) spec.sigma_list = parse_list(sigma_text);
            if (sweep_kind == "ratio") {
                spec.parameter = "ratio";
                spec.grid = grid_text.empty() ? std::vector<double>{0.25, 0.5, 0.75, 1.0, 1.5, 2.0} : parse_list(grid_text);
                finish(sweep_ratio(spec), g);
            } else if (sweep_kind == "energy") {
                spec.parameter = "i_z_max";
                if (grid_text.empty())
                    for (int i = 1; i < 100; ++i) spec.grid.push_back(i / 100.0);
                else
                    spec.grid = parse_list(grid_text);
                finish(sweep_energy(spec), g);
            } else {
                const Dataset ds = require_dataset(dataset);
                const int train_n = find_dataset(dataset)->train_n;
                spec.task = dataset;
                if (sweep_kind == "beta-bits") {
                    spec.parameter = "beta_bits";
                    spec.grid = grid_text.empty() ? integer_range(1, 16) : parse_list(grid_text);
                    finish(sweep_beta_bits(spec, ds, train_n), g);
                } else {
                    spec.parameter = "counter_bits";
                    spec.grid = grid_text.empty() ? integer_range(1, 10) : parse_list(grid_text);
                    finish(sweep_counter_bits(spec, ds, train_n), g);
                }
            }
        } else if (bench->parsed()) {
            const Dataset ds = require_dataset(bench_name);
            const auto info = *find_dataset(bench_name);
            const int k = static_cast<int>(std::min<Eigen::Index>(ds.dim(), physical_k));
            nlohmann::json o = overrides;
            ChipConfig cfg = apply_overrides(default_chip(k, hidden, sigma_vt, ratio), o);
            BenchOptions opts;
            opts.threads = g.threads;
            opts.virtual_l = g.virtual_l;
            if (beta_bits > 0) opts.beta_bits = beta_bits;
            finish(run_benchmark(ds, info.train_n, cfg, trials_or(g, 20), g.seed, opts), g);
        } else if (regress->parsed()) {
            const ChipConfig cfg = apply_overrides(default_sinc_chip(hidden, sigma_vt), overrides);
            finish(run_regression(sinc, cfg, trials_or(g, 1), g.seed, g.threads), g);
        } else if (robust->parsed()) {
            RobustSpec spec;
            spec.mode = robust_kind == "vdd" ? RobustMode::vdd : RobustMode::temperature;
            if (!grid_text.empty()) spec.grid = parse_list(grid_text);
            spec.trials = trials_or(g, 3);
            spec.seed = g.seed;
            spec.normalized = !raw_headline;
            spec.threads = g.threads;
            finish(run_robustness(spec, overrides), g);
        } else if (expand->parsed()) {
            if (g.virtual_d > 0 || g.virtual_l > 0) {
                finish(virtual_oracle_demo(g, overrides), g);
            } else {
                ExpandSpec spec;
                spec.trials = trials_or(g, 20);
                spec.seed = g.seed;
                spec.threads = g.threads;
                finish(run_expansion_demo(spec), g);
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
