#include "mmelm/elm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "mmelm/error.hpp"

namespace mmelm {

namespace {

// Diagonal ratio of the Cholesky factor below which the Gram matrix is treated
// as numerically singular (condition number beyond ~1e14).
constexpr double kCholeskyPivotFloor = 1e-7;

double inverse_c(double c) { return std::isinf(c) ? 0.0 : 1.0 / c; }

bool cholesky_solve(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& rhs, Eigen::MatrixXd& out) {
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
    if (diag.size() > 0 && diag.minCoeff() < kCholeskyPivotFloor * diag.maxCoeff()) return false;
    out = llt.solve(rhs);
    return out.allFinite();
}

// Ridge solution through the SVD of H; handles rank deficiency with C = inf.
Eigen::VectorXd svd_ridge(const Eigen::MatrixXd& h, const Eigen::VectorXd& t, double lambda) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double tol = s.size() ? s(0) * std::max(h.rows(), h.cols()) *
                                      std::numeric_limits<double>::epsilon()
                                : 0.0;
    Eigen::VectorXd gain(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (lambda > 0.0)
            gain(i) = s(i) / (s(i) * s(i) + lambda);
        else
            gain(i) = s(i) > tol ? 1.0 / s(i) : 0.0;
    }
    return svd.matrixV() * (gain.asDiagonal() * (svd.matrixU().transpose() * t));
}

Eigen::VectorXd solve_ridge(const Eigen::MatrixXd& h, const Eigen::VectorXd& t, double c) {
    const double lambda = inverse_c(c);
    const auto n = h.rows();
    const auto l = h.cols();
    Eigen::MatrixXd sol;
    if (n >= l) {
        Eigen::MatrixXd gram = h.transpose() * h;
        gram.diagonal().array() += lambda;
        if (cholesky_solve(gram, h.transpose() * t, sol)) return sol.col(0);
    } else {
        Eigen::MatrixXd gram = h * h.transpose();
        gram.diagonal().array() += lambda;
        if (cholesky_solve(gram, t, sol)) return h.transpose() * sol.col(0);
    }
    return svd_ridge(h, t, lambda);
}

struct Prepared {
    Eigen::MatrixXd h;
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
};

Prepared prepare(const Eigen::MatrixXd& h, const TrainOptions& options) {
    Prepared p;
    if (options.standardize) {
        p.mean = h.colwise().mean().transpose();
        p.scale.resize(h.cols());
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            const double var = (h.col(j).array() - p.mean(j)).square().mean();
            p.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        p.h = (h.rowwise() - p.mean.transpose()).array().rowwise() / p.scale.transpose().array();
    } else {
        p.h = h * options.feature_scale;
    }
    return p;
}

void check_training_inputs(const Eigen::MatrixXd& h, const Eigen::VectorXd& t, double c) {
    if (h.rows() != t.size())
        throw ShapeError("train: H has " + std::to_string(h.rows()) + " rows but T has " +
                         std::to_string(t.size()) + " entries");
    if (h.rows() == 0 || h.cols() == 0) throw ShapeError("train: empty hidden matrix");
    if (!(c > 0.0)) throw ConfigError("train: ridge constant C must be positive");
    if (!h.allFinite() || !t.allFinite()) throw DomainError("train: non-finite H or T");
    if ((h.array() == 0.0).all())
        throw SingularityError("train: hidden matrix H is all zero, H^T H + I/C carries no signal");
}

}  // namespace

RidgeSpec RidgeSpec::defaults() {
    RidgeSpec spec;
    for (int k = -10; k <= 10; ++k) spec.grid.push_back(std::ldexp(1.0, k));
    return spec;
}

void RidgeSpec::validate() const {
    if (!(c > 0.0)) throw ConfigError("ridge: c must be positive");
    if (folds < 2) throw ConfigError("ridge: folds must be >= 2");
    for (double g : grid)
        if (!(g > 0.0)) throw ConfigError("ridge: grid values must be positive");
}

HiddenMatrix build_hidden_matrix(const Eigen::MatrixXd& features, const WeightMatrix& w,
                                 const ChipConfig& cfg) {
    if (features.cols() != cfg.d)
        throw ShapeError("hidden matrix: dataset has " + std::to_string(features.cols()) +
                         " features, chip expects d = " + std::to_string(cfg.d));
    if (w.rows() != cfg.rows())
        throw ShapeError("hidden matrix: weight matrix rows do not match chip config");
    HiddenMatrix h;
    h.count_bits = cfg.b;
    h.values.resize(features.rows(), w.cols());
    h.input_sums.resize(features.rows());
    std::vector<double> row(static_cast<std::size_t>(features.cols()));
    for (Eigen::Index k = 0; k < features.rows(); ++k) {
        for (Eigen::Index i = 0; i < features.cols(); ++i) row[i] = features(k, i);
        const auto codes = input_codes(row, cfg);
        double sum = 0.0;
        for (int c : codes) sum += c;
        h.input_sums(k) = sum;
        const auto counts = forward_codes(codes, w, cfg);
        for (int j = 0; j < w.cols(); ++j) h.values(k, j) = static_cast<double>(counts[j]);
    }
    return h;
}

OutputWeights train_output_weights(const Eigen::MatrixXd& h, const Eigen::VectorXd& t, double c,
                                   const TrainOptions& options) {
    check_training_inputs(h, t, c);
    const Prepared p = prepare(h, options);
    OutputWeights w;
    const Eigen::VectorXd beta = solve_ridge(p.h, t, c);
    if (options.standardize) {
        w.beta = beta;
        w.column_mean = p.mean;
        w.column_scale = p.scale;
    } else {
        w.beta = beta * options.feature_scale;
    }
    return w;
}

OutputWeights train_output_weights(const HiddenMatrix& h, const Eigen::VectorXd& t,
                                   const RidgeSpec& spec, const TrainOptions& options) {
    spec.validate();
    return train_output_weights(h.values, t, spec.c, options);
}

CvResult cross_validate_ridge(const Eigen::MatrixXd& h, const Eigen::VectorXd& t,
                              const RidgeSpec& spec, const TrainOptions& options, CvMetric metric) {
    spec.validate();
    if (spec.grid.empty()) throw ConfigError("cross-validation: empty ridge grid");
    if (h.rows() != t.size()) throw ShapeError("cross-validation: H and T row counts differ");
    if (h.rows() < spec.folds)
        throw ConfigError("cross-validation: " + std::to_string(h.rows()) +
                          " samples cannot fill " + std::to_string(spec.folds) + " folds");

    const auto n = h.rows();
    const auto l = h.cols();
    const int folds = spec.folds;
    std::vector<double> total(spec.grid.size(), 0.0);

    auto score = [&](const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
        if (metric == CvMetric::mse) return (pred - truth).squaredNorm() / truth.size();
        int wrong = 0;
        for (Eigen::Index i = 0; i < truth.size(); ++i)
            if (classify(pred(i)) != (truth(i) >= 0 ? 1 : -1)) ++wrong;
        return static_cast<double>(wrong) / truth.size();
    };

    const Eigen::MatrixXd hs = options.standardize ? h : (h * options.feature_scale).eval();
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train_idx, val_idx;
        for (Eigen::Index i = 0; i < n; ++i) (i % folds == f ? val_idx : train_idx).push_back(i);
        const Eigen::MatrixXd h_tr = hs(train_idx, Eigen::all);
        const Eigen::VectorXd t_tr = t(train_idx);
        const Eigen::MatrixXd h_val = hs(val_idx, Eigen::all);
        const Eigen::VectorXd t_val = t(val_idx);
        const bool fast = !options.standardize && h_tr.rows() >= l && !(h_tr.array() == 0.0).all();
        Eigen::MatrixXd gram;
        Eigen::VectorXd rhs;
        if (fast) {
            gram = h_tr.transpose() * h_tr;
            rhs = h_tr.transpose() * t_tr;
        }
        for (std::size_t g = 0; g < spec.grid.size(); ++g) {
            Eigen::VectorXd pred;
            Eigen::MatrixXd sol;
            if (fast) {
                Eigen::MatrixXd reg = gram;
                reg.diagonal().array() += inverse_c(spec.grid[g]);
                if (cholesky_solve(reg, rhs, sol)) {
                    pred = h_val * sol.col(0);
                } else {
                    pred = h_val * solve_ridge(h_tr, t_tr, spec.grid[g]);
                }
            } else {
                TrainOptions inner = options;
                inner.feature_scale = 1.0;
                try {
                    pred = predict_all(h_val, train_output_weights(h_tr, t_tr, spec.grid[g], inner));
                } catch (const SingularityError&) {
                    pred = Eigen::VectorXd::Zero(h_val.rows());
                }
            }
            total[g] += score(pred, t_val);
        }
    }

    CvResult result;
    result.mean_errors.resize(spec.grid.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < spec.grid.size(); ++g) {
        result.mean_errors[g] = total[g] / folds;
        best = std::min(best, result.mean_errors[g]);
    }
    result.c = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < spec.grid.size(); ++g)
        if (result.mean_errors[g] <= best + 1e-9) result.c = std::max(result.c, spec.grid[g]);
    return result;
}

OutputWeights quantize_weights(const OutputWeights& w, int bits) {
    if (bits < 1 || bits > 16) throw ConfigError("quantize: bits must be in 1..16");
    OutputWeights out = w;
    out.quant_bits = bits;
    const double peak = w.beta.size() ? w.beta.cwiseAbs().maxCoeff() : 0.0;
    if (peak == 0.0) {
        out.quant_scale = 0.0;
        return out;
    }
    const double qmax = std::ldexp(1.0, bits - 1) - 1.0;
    const double qmin = -std::ldexp(1.0, bits - 1);
    const double scale = peak / std::max(qmax, 1.0);
    out.quant_scale = scale;
    for (Eigen::Index j = 0; j < w.beta.size(); ++j) {
        double q = std::round(w.beta(j) / scale);
        q = std::clamp(q, qmin, std::max(qmax, 0.0));
        out.beta(j) = q * scale;
    }
    return out;
}

double predict(const Eigen::Ref<const Eigen::VectorXd>& h_row, const OutputWeights& w) {
    if (h_row.size() != w.beta.size())
        throw ShapeError("predict: hidden row has length " + std::to_string(h_row.size()) +
                         ", model expects " + std::to_string(w.beta.size()));
    if (w.column_mean.size() == 0) return w.beta.dot(h_row);
    return w.beta.dot(((h_row - w.column_mean).array() / w.column_scale.array()).matrix());
}

double predict(std::span<const double> h_row, const OutputWeights& w) {
    return predict(Eigen::Map<const Eigen::VectorXd>(h_row.data(),
                                                     static_cast<Eigen::Index>(h_row.size())),
                   w);
}

Eigen::VectorXd predict_all(const Eigen::MatrixXd& h, const OutputWeights& w) {
    if (h.cols() != w.beta.size()) throw ShapeError("predict: column count does not match model");
    if (w.column_mean.size() == 0) return h * w.beta;
    const Eigen::MatrixXd z =
        (h.rowwise() - w.column_mean.transpose()).array().rowwise() / w.column_scale.transpose().array();
    return z * w.beta;
}

int classify(double o) {
    if (std::isnan(o)) throw EvaluationError("classify: NaN network output");
    return o >= 0.0 ? 1 : -1;
}

NormalizedRow normalize_hidden(std::span<const double> h_row, double input_sum) {
    NormalizedRow out;
    out.values = Eigen::Map<const Eigen::VectorXd>(h_row.data(), static_cast<Eigen::Index>(h_row.size()));
    const double h_sum = out.values.sum();
    if (!(h_sum > 0.0) || !(input_sum > 0.0)) return out;
    // h_j / sum(h) first: for counts scaled by c the quotient is the same real number
    for (Eigen::Index j = 0; j < out.values.size(); ++j) out.values(j) = out.values(j) / h_sum * input_sum;
    out.normalized = true;
    return out;
}

NormalizedRow normalize_hidden(std::span<const double> h_row, std::span<const double> x) {
    double sum = 0.0;
    for (double v : x) {
        if (v < 0.0) throw DomainError("normalize_hidden: mapped input must be non-negative");
        sum += v;
    }
    return normalize_hidden(h_row, sum);
}

HiddenMatrix normalize_hidden(const HiddenMatrix& h) {
    if (h.input_sums.size() != h.rows())
        throw ShapeError("normalize_hidden: missing per-row input sums");
    HiddenMatrix out = h;
    std::vector<double> row(static_cast<std::size_t>(h.cols()));
    for (Eigen::Index k = 0; k < h.rows(); ++k) {
        for (Eigen::Index j = 0; j < h.cols(); ++j) row[j] = h.values(k, j);
        out.values.row(k) = normalize_hidden(row, h.input_sums(k)).values.transpose();
    }
    out.normalized = true;
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const OutputWeights& w) {
    nlohmann::json j{{"beta", to_vector(w.beta)}};
    j["quant_bits"] = w.quant_bits ? nlohmann::json(*w.quant_bits) : nlohmann::json(nullptr);
    j["quant_scale"] = w.quant_scale ? nlohmann::json(*w.quant_scale) : nlohmann::json(nullptr);
    if (w.column_mean.size()) {
        j["column_mean"] = to_vector(w.column_mean);
        j["column_scale"] = to_vector(w.column_scale);
    }
    return j;
}

OutputWeights output_weights_from_json(const nlohmann::json& j) {
    OutputWeights w;
    try {
        w.beta = from_vector(j.at("beta").get<std::vector<double>>());
        if (j.contains("quant_bits") && !j["quant_bits"].is_null()) w.quant_bits = j["quant_bits"].get<int>();
        if (j.contains("quant_scale") && !j["quant_scale"].is_null())
            w.quant_scale = j["quant_scale"].get<double>();
        if (j.contains("column_mean")) {
            w.column_mean = from_vector(j["column_mean"].get<std::vector<double>>());
            w.column_scale = from_vector(j.at("column_scale").get<std::vector<double>>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    if (w.column_mean.size() && (w.column_mean.size() != w.beta.size() ||
                                 w.column_scale.size() != w.beta.size()))
        throw ConfigError("model: column transform length does not match beta");
    return w;
}

nlohmann::json to_json(const ElmModel& m) {
    return nlohmann::json{
        {"format", "mmelm-model/1"},
        {"chip_seed", m.chip.seed},
        {"sigma_vt", m.chip.sigma_vt},
        {"chip", to_json(m.chip)},
        {"output_weights", to_json(m.weights)},
        {"normalized_hidden", m.normalized_hidden},
    };
}

ElmModel elm_model_from_json(const nlohmann::json& j) {
    ElmModel m;
    try {
        m.chip = chip_config_from_json(j.at("chip"));
        m.weights = output_weights_from_json(j.at("output_weights"));
        m.normalized_hidden = j.value("normalized_hidden", false);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    if (m.weights.beta.size() != m.chip.l)
        throw ConfigError("model: beta length does not match chip hidden count");
    return m;
}

void save_model(const ElmModel& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write model " + path.string());
    out << to_json(m).dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

ElmModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("model " + path.string() + ": " + e.what());
    }
    return elm_model_from_json(j);
}

}  // namespace mmelm
