#pragma once

// Dataset ingestion, min-max scaling, train/test splits and the sinc task.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mmelm {

/// Per-column affine map [lo, hi] -> [-1, 1]; constant columns map to 0.
struct MinMaxScaler {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    static MinMaxScaler fit(const Eigen::MatrixXd& x);
    static MinMaxScaler identity(Eigen::Index d);  // lo = -1, hi = 1
    /// Values outside the fitted range are clamped to [-1, 1].
    Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd inverse(const Eigen::MatrixXd& z) const;
};

struct Dataset {
    std::string name;
    Eigen::MatrixXd raw;       // as loaded
    Eigen::MatrixXd features;  // scaled to [-1, 1] with `scaler`
    Eigen::VectorXd targets;   // +-1 for classification
    Eigen::VectorXd clean;     // noiseless targets (synthetic tasks only)
    bool classification = true;
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
    MinMaxScaler scaler;
    std::uint64_t split_seed = 0;
    nlohmann::json metadata = nlohmann::json::object();

    Eigen::Index size() const { return raw.rows(); }
    Eigen::Index dim() const { return raw.cols(); }

    Eigen::MatrixXd train_features() const { return features(train, Eigen::all); }
    Eigen::MatrixXd test_features() const { return features(test, Eigen::all); }
    Eigen::VectorXd train_targets() const { return targets(train); }
    Eigen::VectorXd test_targets() const { return targets(test); }
};

struct CsvOptions {
    bool header = false;
    char delimiter = ',';
};

/// Last column is the label. Two distinct labels are remapped low -> -1, high -> +1;
/// otherwise the task is regression. All rows start in the train split.
Dataset load_dense_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// "label idx:value ..." with 1-based indices. A label-only line is an all-zero row;
/// blank lines are skipped. `dim` = 0 infers the dimension from the largest index.
Dataset load_sparse(const std::filesystem::path& path, int dim = 0);

/// x ~ U[-1, 1], target sinc(a x) + N(0, noise_sigma^2); sinc(0) = 1.
Dataset generate_sinc(int n, double noise_sigma, std::uint64_t seed, double a = 3.14159265358979323846 * 3.0);
double sinc(double v);

/// Shuffled split with train_n samples in train; stratified by class for
/// classification. The scaler is refit on the train rows.
Dataset split(const Dataset& ds, Eigen::Index train_n, std::uint64_t seed);

/// Train rows of `train` and test rows of `test` combined; scaler fit on train.
Dataset combine_fixed_split(const Dataset& train, const Dataset& test);

/// Rescale with a scaler fitted on the current train indices.
void refit_scaler(Dataset& ds);

nlohmann::json metadata_json(const Dataset& ds);
void write_metadata(const Dataset& ds, const std::filesystem::path& path);

struct DatasetInfo {
    std::string name;
    int d = 0;
    int train_n = 0;
    int test_n = 0;
};

/// Known benchmark shapes: diabetes, australian, brightdata, adult, leukemia.
const std::vector<DatasetInfo>& dataset_registry();
std::optional<DatasetInfo> find_dataset(const std::string& name);

/// Root from $MMELM_DATA_DIR, else the build-time default.
std::filesystem::path data_root();

/// Locates <root>/<name>.{csv,svm}; a sibling <name>.t.{csv,svm} is used as the
/// fixed test set when present. Throws IoError when no file exists.
Dataset load_named(const std::string& name, const std::filesystem::path& root = data_root());
bool dataset_available(const std::string& name, const std::filesystem::path& root = data_root());

}  // namespace mmelm
