#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <vector>

#include "mmelm/dataset.hpp"
#include "mmelm/elm.hpp"
#include "mmelm/error.hpp"
#include "mmelm/explorer.hpp"
#include "mmelm/rng.hpp"
#include "oracles.hpp"

using namespace mmelm;

namespace {

double objective(const Eigen::MatrixXd& h, const Eigen::VectorXd& t, const Eigen::VectorXd& beta, double c) {
    return (h * beta - t).squaredNorm() + beta.squaredNorm() / c;
}

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double lo = 0.0, double hi = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

std::vector<double> as_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_SUITE("elmcore") {

TEST_CASE("build_hidden_matrix rows equal forward") {
    ChipConfig cfg = ChipConfig::nominal(3, 5);
    const auto w = sample_mismatch(cfg);
    Eigen::MatrixXd x(1, 3);
    x << 0.1, -0.5, 0.8;
    const auto h = build_hidden_matrix(x, w, cfg);
    REQUIRE(h.rows() == 1);
    REQUIRE(h.cols() == 5);
    std::vector<double> row{0.1, -0.5, 0.8};
    const auto counts = forward(row, w, cfg);
    for (int j = 0; j < 5; ++j) CHECK(h.values(0, j) == static_cast<double>(counts[j]));
    CHECK(h.input_sums(0) == map_value(0.1, cfg) + map_value(-0.5, cfg) + map_value(0.8, cfg));

    Eigen::MatrixXd twice(2, 3);
    twice << 0.1, -0.5, 0.8, 0.1, -0.5, 0.8;
    const auto h2 = build_hidden_matrix(twice, w, cfg);
    CHECK(h2.values.row(0) == h2.values.row(1));

    CHECK_THROWS_AS(build_hidden_matrix(Eigen::MatrixXd::Zero(2, 4), w, cfg), ShapeError);
}

TEST_CASE("sinc hidden columns saturate at distinct inputs") {
    const ChipConfig cfg = default_sinc_chip(128);
    const auto w = sample_mismatch(cfg);
    Eigen::MatrixXd x(2001, 1);
    for (int k = 0; k <= 2000; ++k) x(k, 0) = -1.0 + k / 1000.0;
    const auto h = build_hidden_matrix(x, w, cfg);
    std::set<int> onsets;
    for (int j = 0; j < h.cols(); ++j) {
        int first = static_cast<int>(h.rows());
        for (int k = 0; k < h.rows(); ++k)
            if (h.values(k, j) == static_cast<double>(cfg.count_limit())) {
                first = k;
                break;
            }
        onsets.insert(first);
    }
    CHECK(onsets.size() >= 64);
}

TEST_CASE("train examples") {
    {
        const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
        const Eigen::Vector2d t(1.0, 0.0);
        const auto w = train_output_weights(h, t, std::numeric_limits<double>::infinity());
        CHECK(w.beta(0) == doctest::Approx(1.0));
        CHECK(w.beta(1) == doctest::Approx(0.0));
    }
    {
        const Eigen::MatrixXd h = Eigen::MatrixXd::Ones(2, 1);
        const Eigen::Vector2d t(1.0, 3.0);
        const auto w = train_output_weights(h, t, std::numeric_limits<double>::infinity());
        CHECK(w.beta(0) == doctest::Approx(2.0));
    }
    {
        const int n = 5;
        const double c = 3.0;
        const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd t(n);
        t << 1, -2, 0.5, 4, 0;
        const auto w = train_output_weights(h, t, c);
        for (int i = 0; i < n; ++i) CHECK(w.beta(i) == doctest::Approx(t(i) / (1.0 + 1.0 / c)).epsilon(1e-13));
    }
}

TEST_CASE("training errors") {
    CHECK_THROWS_AS(train_output_weights(Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Ones(4), 1.0),
                    SingularityError);
    CHECK_THROWS_AS(train_output_weights(Eigen::MatrixXd::Ones(4, 3), Eigen::VectorXd::Ones(5), 1.0), ShapeError);
}

TEST_CASE("least-squares oracle on small random systems") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(8));
        const int l = 1 + static_cast<int>(rng.below(8));
        const Eigen::MatrixXd h = random_matrix(rng, n, l);
        const Eigen::VectorXd t = random_matrix(rng, n, 1, -1.0, 1.0);
        oracle::Mat hm(n, std::vector<double>(l));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < l; ++j) hm[i][j] = h(i, j);
        const auto ref = oracle::normal_equations(hm, as_vector(t));
        const auto w = train_output_weights(h, t, 1e12);
        double scale = 0.0, diff = 0.0;
        for (int j = 0; j < l; ++j) {
            scale = std::max(scale, std::abs(ref[j]));
            diff = std::max(diff, std::abs(ref[j] - w.beta(j)));
        }
        CAPTURE(n);
        CAPTURE(l);
        CHECK(diff < 1e-6 * scale);
    }
}

TEST_CASE("both Gram forms agree with the ridge closed form") {
    Rng rng(5);
    for (auto [n, l] : {std::pair{12, 5}, std::pair{5, 12}, std::pair{7, 7}}) {
        const Eigen::MatrixXd h = random_matrix(rng, n, l);
        const Eigen::VectorXd t = random_matrix(rng, n, 1, -1.0, 1.0);
        const double c = 10.0;
        // (H'H + I/C)^-1 H'T, evaluated with an LU factorization
        const Eigen::MatrixXd g = h.transpose() * h + Eigen::MatrixXd::Identity(l, l) / c;
        const Eigen::VectorXd ref = g.fullPivLu().solve(h.transpose() * t);
        const auto w = train_output_weights(h, t, c);
        CHECK((w.beta - ref).cwiseAbs().maxCoeff() < 1e-10 * ref.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("ridge monotonicity") {
    Rng rng(11);
    const Eigen::MatrixXd h = random_matrix(rng, 30, 10);
    const Eigen::VectorXd t = random_matrix(rng, 30, 1, -1.0, 1.0);
    double prev = 0.0;
    for (int e = -10; e <= 10; ++e) {
        const double norm = train_output_weights(h, t, std::ldexp(1.0, e)).beta.norm();
        CHECK(norm >= prev * (1.0 - 1e-12));
        prev = norm;
    }
}

TEST_CASE("residual optimality") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd h = random_matrix(rng, 9, 6);
        const Eigen::VectorXd t = random_matrix(rng, 9, 1, -1.0, 1.0);
        const double c = std::ldexp(1.0, static_cast<int>(rng.below(12)) - 4);
        const auto beta = train_output_weights(h, t, c).beta;
        const double j0 = objective(h, t, beta, c);
        const double eps = 1e-4 * beta.norm();
        for (int j = 0; j < beta.size(); ++j)
            for (double s : {-1.0, 1.0}) {
                Eigen::VectorXd p = beta;
                p(j) += s * eps;
                CHECK(objective(h, t, p, c) >= j0 * (1.0 - 1e-13));
            }
    }
}

TEST_CASE("feature_scale is equivalent to solving with C * scale^2") {
    Rng rng(13);
    const Eigen::MatrixXd h = random_matrix(rng, 20, 6, 0.0, 1000.0);
    const Eigen::VectorXd t = random_matrix(rng, 20, 1, -1.0, 1.0);
    TrainOptions opts;
    opts.feature_scale = 1.0 / 1024.0;
    const auto scaled = train_output_weights(h, t, 4.0, opts);
    const auto plain = train_output_weights(h, t, 4.0 / (1024.0 * 1024.0));
    CHECK((predict_all(h, scaled) - predict_all(h, plain)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("standardized training stores its transform") {
    Rng rng(14);
    const Eigen::MatrixXd h = random_matrix(rng, 40, 4, 100.0, 200.0);
    const Eigen::Vector4d b(0.5, -1.0, 2.0, 0.25);
    const Eigen::VectorXd t = h * b;
    TrainOptions opts;
    opts.standardize = true;
    const auto w = train_output_weights(h, t, 1e12, opts);
    CHECK(w.column_mean.size() == 4);
    CHECK(w.column_scale.size() == 4);
    // centering removes the intercept, so only the slope part is reproduced
    const Eigen::VectorXd centered = t.array() - t.mean();
    CHECK((predict_all(h, w) - centered).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("cross-validation examples") {
    Rng rng(15);
    const Eigen::MatrixXd h = random_matrix(rng, 50, 3);
    const Eigen::Vector3d b(1.0, -2.0, 0.5);
    const Eigen::VectorXd t = h * b;

    RidgeSpec one;
    one.grid = {0.37};
    CHECK(cross_validate_ridge(h, t, one).c == 0.37);

    const RidgeSpec spec = RidgeSpec::defaults();
    const auto cv = cross_validate_ridge(h, t, spec);
    const double best = *std::min_element(cv.mean_errors.begin(), cv.mean_errors.end());
    double expected = 0.0;
    for (std::size_t i = 0; i < spec.grid.size(); ++i)
        if (cv.mean_errors[i] <= best + 1e-9) expected = std::max(expected, spec.grid[i]);
    CHECK(cv.c == expected);
    CHECK(cv.c == spec.grid.back());

    // all-zero targets: every grid point ties
    const auto flat = cross_validate_ridge(h, Eigen::VectorXd::Zero(50), spec);
    CHECK(flat.c == spec.grid.back());

    RidgeSpec many = spec;
    many.folds = 6;
    CHECK_THROWS_AS(cross_validate_ridge(h.topRows(5), t.head(5), many), ConfigError);
    RidgeSpec bad = spec;
    bad.folds = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = spec;
    bad.c = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("cross-validated c on sinc is near the oracle best") {
    const ChipConfig base = default_sinc_chip(128);
    ChipConfig cfg = base;
    cfg.seed = 77;
    const auto w = sample_mismatch(cfg);
    const Dataset train = generate_sinc(5000, 0.2, 101);
    const Dataset test = generate_sinc(1000, 0.2, 102);
    const auto h = build_hidden_matrix(train.features, w, cfg).values;
    const auto h_test = build_hidden_matrix(test.features, w, cfg).values;
    TrainOptions opts;
    opts.feature_scale = 1.0 / cfg.count_limit();
    const RidgeSpec spec = RidgeSpec::defaults();
    const double chosen = cross_validate_ridge(h, train.targets, spec, opts).c;
    double best = std::numeric_limits<double>::infinity(), at_chosen = 0.0;
    for (double c : spec.grid) {
        const double e = rms_error(predict_all(h_test, train_output_weights(h, train.targets, c, opts)), test.clean);
        best = std::min(best, e);
        if (c == chosen) at_chosen = e;
    }
    // validation MSE carries noise^2 = 0.04 per sample, so CV resolves excess MSE only to ~1e-3
    CAPTURE(chosen);
    CAPTURE(best);
    CHECK(at_chosen * at_chosen - best * best <= 1e-3);
    CHECK(at_chosen <= 1.25 * best);
}

TEST_CASE("quantization") {
    OutputWeights w;
    w.beta = Eigen::Vector2d(1.0, -1.0);
    const auto q2 = quantize_weights(w, 2);
    CHECK(q2.beta == w.beta);
    CHECK(*q2.quant_bits == 2);

    OutputWeights zero;
    zero.beta = Eigen::VectorXd::Zero(3);
    const auto qz = quantize_weights(zero, 8);
    CHECK(qz.beta == zero.beta);
    CHECK(*qz.quant_scale == 0.0);

    CHECK_THROWS_AS(quantize_weights(w, 0), ConfigError);
    CHECK_THROWS_AS(quantize_weights(w, 17), ConfigError);

    Rng rng(16);
    for (int bits = 1; bits <= 16; ++bits) {
        OutputWeights r;
        r.beta = random_matrix(rng, 50, 1, -3.0, 3.0);
        r.beta(7) = 0.0;
        const auto q = quantize_weights(r, bits);
        const double scale = *q.quant_scale;
        const double lo = -std::ldexp(1.0, bits - 1), hi = std::max(std::ldexp(1.0, bits - 1) - 1.0, 0.0);
        CHECK(q.beta(7) == 0.0);
        for (int j = 0; j < 50; ++j) {
            const double k = q.beta(j) / scale;
            CHECK(std::abs(k - std::round(k)) < 1e-9);
            CHECK(k >= lo);
            CHECK(k <= hi);
            if (bits >= 2) CHECK(std::abs(q.beta(j) - r.beta(j)) <= scale / 2 * (1 + 1e-12));
        }
    }
}

TEST_CASE("16-bit quantization keeps decisions outside the error margin") {
    const ChipConfig cfg = default_chip(8, 128);
    const auto w = sample_mismatch(cfg);
    Rng rng(17);
    const Eigen::MatrixXd x = random_matrix(rng, 300, 8, -1.0, 1.0);
    Eigen::VectorXd t(300);
    for (int k = 0; k < 300; ++k) t(k) = x(k, 0) + 0.5 * x(k, 3) > 0 ? 1.0 : -1.0;
    const auto h = build_hidden_matrix(x, w, cfg).values;
    TrainOptions opts;
    opts.feature_scale = 1.0 / cfg.count_limit();
    const auto beta = train_output_weights(h.topRows(200), t.head(200), 16.0, opts);
    const auto q = quantize_weights(beta, 16);
    const double bound = cfg.l * (*q.quant_scale / 2) * cfg.count_limit();
    int kept = 0;
    for (int k = 200; k < 300; ++k) {
        const double o = predict(Eigen::VectorXd(h.row(k).transpose()), beta);
        const double oq = predict(Eigen::VectorXd(h.row(k).transpose()), q);
        CHECK(std::abs(o - oq) <= bound);
        if (std::abs(o) > 2 * bound) CHECK(classify(o) == classify(oq));
        kept += classify(o) == classify(oq);
    }
    CHECK(kept == 100);
}

TEST_CASE("predict and classify") {
    OutputWeights w;
    w.beta = Eigen::VectorXd::Zero(4);
    const Eigen::Vector4d h(3.0, 1.0, 4.0, 1.5);
    CHECK(predict(h, w) == 0.0);
    w.beta(2) = 1.0;
    CHECK(predict(h, w) == 4.0);
    CHECK_THROWS_AS(predict(Eigen::Vector3d(1, 2, 3), w), ShapeError);

    Rng rng(18);
    w.beta = random_matrix(rng, 4, 1, -1.0, 1.0);
    const Eigen::Vector4d a = random_matrix(rng, 4, 1), b = random_matrix(rng, 4, 1);
    CHECK(predict(Eigen::Vector4d(a + b), w) == doctest::Approx(predict(a, w) + predict(b, w)).epsilon(1e-14));

    CHECK(classify(0.3) == 1);
    CHECK(classify(-0.3) == -1);
    CHECK(classify(0.0) == 1);
    CHECK_THROWS_AS(classify(std::nan("")), EvaluationError);
}

TEST_CASE("trained sinc model predicts about 1 at x = 0") {
    SincSpec spec;
    spec.train_n = 2000;
    spec.test_n = 200;
    const auto fit = fit_sinc_trial(spec, default_sinc_chip(128), 5);
    Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(1, 1);
    // rebuild the same chip instance the trial used via its prediction at the sample nearest 0
    Eigen::Index nearest = 0;
    for (Eigen::Index i = 0; i < fit.test.size(); ++i)
        if (std::abs(fit.test.raw(i, 0)) < std::abs(fit.test.raw(nearest, 0))) nearest = i;
    CHECK(std::abs(fit.test.raw(nearest, 0)) < 0.02);
    CHECK(fit.prediction(nearest) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("normalization examples") {
    std::vector<double> h{5.0};
    std::vector<double> x{100.0, 23.0, 7.0};
    const auto n1 = normalize_hidden(h, x);
    CHECK(n1.normalized);
    CHECK(n1.values(0) == doctest::Approx(130.0).epsilon(1e-15));

    std::vector<double> zero_h{0.0, 0.0};
    const auto pass = normalize_hidden(zero_h, x);
    CHECK_FALSE(pass.normalized);
    CHECK(pass.values(0) == 0.0);
    std::vector<double> h2{1.0, 2.0};
    std::vector<double> zero_x{0.0, 0.0};
    const auto pass2 = normalize_hidden(h2, zero_x);
    CHECK_FALSE(pass2.normalized);
    CHECK(pass2.values(1) == 2.0);
}

TEST_CASE("normalization is scale invariant") {
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> h(128), x(16);
        for (auto& v : h) v = static_cast<double>(rng.below(16385));
        for (auto& v : x) v = static_cast<double>(rng.below(1024));
        x[0] += 1;
        const auto ref = normalize_hidden(h, x);
        // exact whenever c * h is exact: integer and power-of-two factors on counts
        for (double c : {2.0, 3.0, 7.0, 1000.0, 0.5, 0.25, 1.0 / 1024}) {
            std::vector<double> ch(h);
            for (auto& v : ch) v *= c;
            const auto scaled = normalize_hidden(ch, x);
            CHECK(scaled.values == ref.values);
        }
        // a factor that rounds every product: values within a few ulp, argmax identical
        for (double c : {0.1, 1.7, 3.3e-5}) {
            std::vector<double> ch(h);
            for (auto& v : ch) v *= c;
            const auto scaled = normalize_hidden(ch, x);
            Eigen::Index a1, a2;
            ref.values.maxCoeff(&a1);
            scaled.values.maxCoeff(&a2);
            CHECK(a1 == a2);
            for (Eigen::Index j = 0; j < 128; ++j)
                CHECK(std::abs(scaled.values(j) - ref.values(j)) <=
                      8 * std::numeric_limits<double>::epsilon() * std::abs(ref.values(j)));
        }
    }
}

TEST_CASE("matrix normalization uses stored input sums") {
    ChipConfig cfg = ChipConfig::nominal(4, 6);
    const auto w = sample_mismatch(cfg);
    Rng rng(20);
    const Eigen::MatrixXd x = random_matrix(rng, 5, 4, -1.0, 1.0);
    const auto h = build_hidden_matrix(x, w, cfg);
    const auto n = normalize_hidden(h);
    CHECK(n.normalized);
    for (int k = 0; k < 5; ++k)
        CHECK(n.values.row(k).sum() == doctest::Approx(h.input_sums(k)).epsilon(1e-12));
}

TEST_CASE("model file round trip reproduces predictions bit-exactly") {
    ElmModel m;
    m.chip = default_chip(8, 16);
    m.chip.seed = 1234;
    Rng rng(21);
    m.weights.beta = random_matrix(rng, 16, 1, -1.0, 1.0);
    m.weights = quantize_weights(m.weights, 10);
    m.normalized_hidden = true;
    const auto path = std::filesystem::temp_directory_path() / "mmelm_model_test.json";
    save_model(m, path);
    const auto back = load_model(path);
    std::filesystem::remove(path);
    CHECK(back.normalized_hidden);
    CHECK(back.chip.seed == 1234);
    CHECK(*back.weights.quant_bits == 10);
    CHECK(back.weights.beta == m.weights.beta);
    const auto w1 = sample_mismatch(m.chip), w2 = sample_mismatch(back.chip);
    const Eigen::MatrixXd x = random_matrix(rng, 10, 8, -1.0, 1.0);
    const auto p1 = predict_all(build_hidden_matrix(x, w1, m.chip).values, m.weights);
    const auto p2 = predict_all(build_hidden_matrix(x, w2, back.chip).values, back.weights);
    CHECK(p1 == p2);
    CHECK_THROWS_AS(load_model(path), IoError);
}

}  // TEST_SUITE
