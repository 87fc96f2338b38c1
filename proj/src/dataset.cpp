#include "mmelm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mmelm/error.hpp"
#include "mmelm/rng.hpp"

#ifndef MMELM_DEFAULT_DATA_DIR
#define MMELM_DEFAULT_DATA_DIR "data"
#endif

namespace mmelm {

namespace {

constexpr std::uint64_t kSplitStream = 3;
constexpr std::uint64_t kSincStream = 4;

struct RawTable {
    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

double parse_cell(std::string_view s, std::size_t line, const std::string& file) {
    double v = 0.0;
    if (!parse_double(s, v))
        throw ParseError(file + ": non-numeric cell '" + std::string(trim(s)) + "'", line);
    if (!std::isfinite(v)) throw ParseError(file + ": non-finite value", line);
    return v;
}

RawTable read_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string file = path.filename().string();
    RawTable table;
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    bool header_pending = options.header;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        std::vector<double> cells;
        std::string_view rest(line);
        while (true) {
            const auto pos = rest.find(options.delimiter);
            cells.push_back(parse_cell(rest.substr(0, pos), lineno, file));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (cells.size() < 2) throw ParseError(file + ": need at least one feature and a label", lineno);
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw ParseError(file + ": ragged row with " + std::to_string(cells.size()) +
                                 " cells, expected " + std::to_string(width),
                             lineno);
        table.labels.push_back(cells.back());
        cells.pop_back();
        table.rows.push_back(std::move(cells));
    }
    if (table.rows.empty()) throw ParseError(file + ": no data rows", lineno);
    return table;
}

RawTable read_sparse(const std::filesystem::path& path, int& dim) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string file = path.filename().string();
    const int declared = dim;
    RawTable table;
    std::vector<std::vector<std::pair<int, double>>> entries;
    std::string line;
    std::size_t lineno = 0;
    int max_index = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::istringstream tokens(line);
        std::string tok;
        tokens >> tok;
        table.labels.push_back(parse_cell(tok, lineno, file));
        std::vector<std::pair<int, double>> row;
        while (tokens >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw ParseError(file + ": expected index:value, got '" + tok + "'", lineno);
            int idx = 0;
            const std::string_view is(tok.data(), colon);
            const auto r = std::from_chars(is.data(), is.data() + is.size(), idx);
            if (r.ec != std::errc() || r.ptr != is.data() + is.size() || idx < 1)
                throw ParseError(file + ": bad feature index '" + std::string(is) + "'", lineno);
            if (declared > 0 && idx > declared)
                throw ParseError(file + ": index " + std::to_string(idx) + " exceeds declared dimension " +
                                     std::to_string(declared),
                                 lineno);
            max_index = std::max(max_index, idx);
            row.emplace_back(idx, parse_cell(std::string_view(tok).substr(colon + 1), lineno, file));
        }
        entries.push_back(std::move(row));
    }
    if (entries.empty()) throw ParseError(file + ": no data rows", lineno);
    dim = declared > 0 ? declared : max_index;
    if (dim < 1) throw ParseError(file + ": no features present and no dimension declared", lineno);
    for (const auto& row : entries) {
        std::vector<double> dense(static_cast<std::size_t>(dim), 0.0);
        for (const auto& [idx, v] : row) dense[idx - 1] = v;
        table.rows.push_back(std::move(dense));
    }
    return table;
}

Dataset finalize(std::string name, const RawTable& table) {
    Dataset ds;
    ds.name = std::move(name);
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    const auto d = static_cast<Eigen::Index>(table.rows.front().size());
    ds.raw.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) ds.raw(i, j) = table.rows[i][j];
    const std::set<double> distinct(table.labels.begin(), table.labels.end());
    ds.classification = distinct.size() == 2;
    ds.targets.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        ds.targets(i) = ds.classification ? (table.labels[i] == *distinct.rbegin() ? 1.0 : -1.0)
                                          : table.labels[i];
    if (ds.classification) {
        ds.metadata["label_negative"] = *distinct.begin();
        ds.metadata["label_positive"] = *distinct.rbegin();
    }
    ds.train.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) ds.train[i] = i;
    refit_scaler(ds);
    return ds;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

MinMaxScaler MinMaxScaler::fit(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) throw SplitError("scaler: no rows to fit");
    return MinMaxScaler{x.colwise().minCoeff().transpose(), x.colwise().maxCoeff().transpose()};
}

MinMaxScaler MinMaxScaler::identity(Eigen::Index d) {
    return MinMaxScaler{Eigen::VectorXd::Constant(d, -1.0), Eigen::VectorXd::Constant(d, 1.0)};
}

Eigen::MatrixXd MinMaxScaler::transform(const Eigen::MatrixXd& x) const {
    if (x.cols() != lo.size()) throw ShapeError("scaler: column count mismatch");
    Eigen::MatrixXd z(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double span = hi(j) - lo(j);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double v = span > 0.0 ? 2.0 * (x(i, j) - lo(j)) / span - 1.0 : 0.0;
            z(i, j) = std::clamp(v, -1.0, 1.0);
        }
    }
    return z;
}

Eigen::MatrixXd MinMaxScaler::inverse(const Eigen::MatrixXd& z) const {
    if (z.cols() != lo.size()) throw ShapeError("scaler: column count mismatch");
    Eigen::MatrixXd x(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j)
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            x(i, j) = hi(j) > lo(j) ? lo(j) + (z(i, j) + 1.0) / 2.0 * (hi(j) - lo(j)) : lo(j);
    return x;
}

void refit_scaler(Dataset& ds) {
    if (ds.metadata.value("fixed_scaling", false)) {
        ds.scaler = MinMaxScaler::identity(ds.dim());
    } else {
        ds.scaler = MinMaxScaler::fit(ds.raw(ds.train, Eigen::all));
    }
    ds.features = ds.scaler.transform(ds.raw);
}

Dataset load_dense_csv(const std::filesystem::path& path, const CsvOptions& options) {
    return finalize(path.stem().string(), read_csv(path, options));
}

Dataset load_sparse(const std::filesystem::path& path, int dim) {
    Dataset ds = finalize(path.stem().string(), read_sparse(path, dim));
    ds.metadata["declared_dim"] = dim;
    return ds;
}

double sinc(double v) { return v == 0.0 ? 1.0 : std::sin(v) / v; }

Dataset generate_sinc(int n, double noise_sigma, std::uint64_t seed, double a) {
    if (n < 1) throw ConfigError("generate_sinc: n must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("generate_sinc: noise_sigma must be >= 0");
    Rng rng(derive_seed({seed, kSincStream}));
    Dataset ds;
    ds.name = "sinc";
    ds.classification = false;
    ds.raw.resize(n, 1);
    ds.targets.resize(n);
    ds.clean.resize(n);
    for (int i = 0; i < n; ++i) ds.raw(i, 0) = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < n; ++i) {
        ds.clean(i) = sinc(a * ds.raw(i, 0));
        ds.targets(i) = ds.clean(i) + noise_sigma * rng.normal();
    }
    ds.metadata = {{"fixed_scaling", true}, {"sinc_a", a}, {"noise_sigma", noise_sigma},
                   {"generator_seed", seed}};
    ds.train.resize(n);
    for (int i = 0; i < n; ++i) ds.train[i] = i;
    refit_scaler(ds);
    return ds;
}

Dataset split(const Dataset& ds, Eigen::Index train_n, std::uint64_t seed) {
    const Eigen::Index n = ds.size();
    if (train_n < 1 || train_n >= n)
        throw SplitError("split: train_n = " + std::to_string(train_n) + " must be in 1.." +
                         std::to_string(n - 1));
    Rng rng(derive_seed({seed, kSplitStream}));
    Dataset out = ds;
    out.train.clear();
    out.test.clear();
    out.split_seed = seed;
    if (!ds.classification) {
        std::vector<Eigen::Index> idx(n);
        for (Eigen::Index i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(idx.begin(), idx.end());
        out.train.assign(idx.begin(), idx.begin() + train_n);
        out.test.assign(idx.begin() + train_n, idx.end());
    } else {
        std::map<double, std::vector<Eigen::Index>> classes;
        for (Eigen::Index i = 0; i < n; ++i) classes[ds.targets(i)].push_back(i);
        const Eigen::Index test_n = n - train_n;
        // largest-remainder allocation of train slots per class
        std::vector<std::pair<double, Eigen::Index>> quota;
        Eigen::Index assigned = 0;
        std::vector<Eigen::Index> take;
        for (auto& [label, members] : classes) {
            const double exact = static_cast<double>(train_n) * members.size() / n;
            take.push_back(static_cast<Eigen::Index>(std::floor(exact)));
            quota.emplace_back(exact - std::floor(exact), static_cast<Eigen::Index>(take.size() - 1));
            assigned += take.back();
        }
        std::stable_sort(quota.begin(), quota.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t q = 0; assigned < train_n; ++q, ++assigned) ++take[quota[q % quota.size()].second];
        std::size_t c = 0;
        const bool test_can_hold_all = test_n >= static_cast<Eigen::Index>(classes.size());
        for (auto& [label, members] : classes) {
            auto shuffled = members;
            rng.shuffle(shuffled.begin(), shuffled.end());
            const Eigen::Index k = take[c++];
            if (k < 1)
                throw SplitError("split: class " + std::to_string(label) + " absent from the train split");
            if (k >= static_cast<Eigen::Index>(shuffled.size()) && test_can_hold_all)
                throw SplitError("split: class " + std::to_string(label) + " absent from the test split");
            out.train.insert(out.train.end(), shuffled.begin(), shuffled.begin() + k);
            out.test.insert(out.test.end(), shuffled.begin() + k, shuffled.end());
        }
        rng.shuffle(out.train.begin(), out.train.end());
        rng.shuffle(out.test.begin(), out.test.end());
    }
    refit_scaler(out);
    return out;
}

Dataset combine_fixed_split(const Dataset& train, const Dataset& test) {
    if (train.dim() != test.dim()) throw ShapeError("fixed split: train and test dimensions differ");
    Dataset out = train;
    out.raw.resize(train.size() + test.size(), train.dim());
    out.raw << train.raw, test.raw;
    out.targets.resize(out.raw.rows());
    out.targets << train.targets, test.targets;
    out.train.clear();
    out.test.clear();
    for (Eigen::Index i = 0; i < train.size(); ++i) out.train.push_back(i);
    for (Eigen::Index i = 0; i < test.size(); ++i) out.test.push_back(train.size() + i);
    out.metadata["fixed_test_split"] = true;
    refit_scaler(out);
    return out;
}

nlohmann::json metadata_json(const Dataset& ds) {
    nlohmann::json j = ds.metadata;
    j["name"] = ds.name;
    j["samples"] = ds.size();
    j["dim"] = ds.dim();
    j["classification"] = ds.classification;
    j["split_seed"] = ds.split_seed;
    j["scaler"] = {{"lo", to_vector(ds.scaler.lo)}, {"hi", to_vector(ds.scaler.hi)}};
    j["train"] = ds.train;
    j["test"] = ds.test;
    return j;
}

void write_metadata(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << metadata_json(ds).dump(2) << '\n';
}

const std::vector<DatasetInfo>& dataset_registry() {
    static const std::vector<DatasetInfo> registry{
        {"diabetes", 8, 512, 256},    {"australian", 14, 460, 230}, {"brightdata", 14, 1000, 1462},
        {"adult", 123, 4781, 27780},  {"leukemia", 7129, 38, 34},
    };
    return registry;
}

std::optional<DatasetInfo> find_dataset(const std::string& name) {
    for (const auto& info : dataset_registry())
        if (info.name == name) return info;
    return std::nullopt;
}

std::filesystem::path data_root() {
    if (const char* env = std::getenv("MMELM_DATA_DIR"); env && *env) return env;
    return MMELM_DEFAULT_DATA_DIR;
}

namespace {

std::optional<std::filesystem::path> locate(const std::filesystem::path& root, const std::string& stem) {
    for (const char* ext : {".csv", ".svm", ".libsvm"}) {
        auto p = root / (stem + ext);
        if (std::filesystem::exists(p)) return p;
    }
    return std::nullopt;
}

bool first_line_is_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line) && trim(line).empty()) {
    }
    const auto cut = line.find(',');
    double v = 0.0;
    return !parse_double(std::string_view(line).substr(0, cut), v);
}

Dataset load_any(const std::filesystem::path& path, int dim) {
    if (path.extension() == ".csv") {
        CsvOptions opts;
        opts.header = first_line_is_header(path);
        return load_dense_csv(path, opts);
    }
    return load_sparse(path, dim);
}

}  // namespace

bool dataset_available(const std::string& name, const std::filesystem::path& root) {
    return locate(root, name).has_value();
}

Dataset load_named(const std::string& name, const std::filesystem::path& root) {
    const auto path = locate(root, name);
    if (!path)
        throw IoError("dataset '" + name + "' not found under " + root.string() +
                      " (expected " + name + ".csv or " + name + ".svm)");
    const auto info = find_dataset(name);
    const int dim = info ? info->d : 0;
    Dataset ds = load_any(*path, dim);
    if (const auto test_path = locate(root, name + ".t")) {
        Dataset test = load_any(*test_path, ds.dim());
        ds = combine_fixed_split(ds, test);
    }
    ds.name = name;
    if (info && ds.dim() != info->d)
        throw ShapeError("dataset '" + name + "' has " + std::to_string(ds.dim()) + " features, expected " +
                         std::to_string(info->d));
    return ds;
}

}  // namespace mmelm
