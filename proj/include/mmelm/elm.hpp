#pragma once

// Second-stage ELM: hidden-matrix assembly, ridge training, weight
// quantization, prediction and hidden-layer normalization.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "mmelm/chip.hpp"

namespace mmelm {

/// N x L matrix of hidden outputs. Raw entries are counts in [0, 2^b].
struct HiddenMatrix {
    Eigen::MatrixXd values;
    /// Sum of input codes per sample; the denominator source for normalization.
    Eigen::VectorXd input_sums;
    int count_bits = 14;
    bool normalized = false;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

struct OutputWeights {
    Eigen::VectorXd beta;
    std::optional<int> quant_bits;
    std::optional<double> quant_scale;
    /// Optional per-column affine transform applied before the dot product.
    Eigen::VectorXd column_mean;
    Eigen::VectorXd column_scale;
};

struct RidgeSpec {
    double c = 1.0;
    std::vector<double> grid;
    int folds = 5;

    /// c = 1, grid 2^-10 .. 2^10, 5 folds.
    static RidgeSpec defaults();
    void validate() const;
};

struct TrainOptions {
    /// H is multiplied by this before solving; beta is rescaled so predict()
    /// still takes raw rows. Equivalent to solving with C * scale^2.
    double feature_scale = 1.0;
    /// Center and scale columns with train-set statistics.
    bool standardize = false;
};

/// Row k = forward(features.row(k)).
HiddenMatrix build_hidden_matrix(const Eigen::MatrixXd& features, const WeightMatrix& w,
                                 const ChipConfig& cfg);

/// beta minimizing ||H beta - T||^2 + ||beta||^2 / C. C may be +inf.
OutputWeights train_output_weights(const Eigen::MatrixXd& h, const Eigen::VectorXd& t, double c,
                                   const TrainOptions& options = {});
OutputWeights train_output_weights(const HiddenMatrix& h, const Eigen::VectorXd& t,
                                   const RidgeSpec& spec, const TrainOptions& options = {});

enum class CvMetric { mse, misclassification };

struct CvResult {
    double c = 1.0;
    std::vector<double> mean_errors;  // aligned with the grid
};

/// k-fold selection over spec.grid. Ties go to the larger c.
CvResult cross_validate_ridge(const Eigen::MatrixXd& h, const Eigen::VectorXd& t,
                              const RidgeSpec& spec, const TrainOptions& options = {},
                              CvMetric metric = CvMetric::mse);

/// Symmetric uniform quantization: scale = max|beta| / (2^(bits-1) - 1).
OutputWeights quantize_weights(const OutputWeights& w, int bits);

double predict(std::span<const double> h_row, const OutputWeights& w);
double predict(const Eigen::Ref<const Eigen::VectorXd>& h_row, const OutputWeights& w);
Eigen::VectorXd predict_all(const Eigen::MatrixXd& h, const OutputWeights& w);

/// sign(o) with 0 -> +1.
int classify(double o);

struct NormalizedRow {
    Eigen::VectorXd values;
    bool normalized = false;  // false when a denominator was zero; values pass through
};

/// h_j / (sum_j h_j / sum_i x_i) with x the non-negative mapped input.
NormalizedRow normalize_hidden(std::span<const double> h_row, std::span<const double> x);
NormalizedRow normalize_hidden(std::span<const double> h_row, double input_sum);
/// Row-wise normalization using the stored input sums.
HiddenMatrix normalize_hidden(const HiddenMatrix& h);

/// Everything needed to rebuild a chip instance and its trained readout.
struct ElmModel {
    ChipConfig chip;
    OutputWeights weights;
    bool normalized_hidden = false;
};

nlohmann::json to_json(const OutputWeights& w);
OutputWeights output_weights_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ElmModel& m);
ElmModel elm_model_from_json(const nlohmann::json& j);
void save_model(const ElmModel& m, const std::filesystem::path& path);
ElmModel load_model(const std::filesystem::path& path);

}  // namespace mmelm
