#include <doctest.h>

#include <vector>

#include "mmelm/chip.hpp"
#include "mmelm/error.hpp"
#include "mmelm/expansion.hpp"
#include "mmelm/rng.hpp"

using namespace mmelm;

namespace {

// Integer gains so current sums are exact; I_ref = 1024 makes dac_current(code) == code.
WeightMatrix integer_weights(int k, int n, Rng& rng) {
    Eigen::MatrixXd e(k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) e(i, j) = 1.0 + static_cast<double>(rng.below(9));
    return WeightMatrix::from_entries(e);
}

ChipConfig exact_chip(int k, int n) {
    ChipConfig cfg = ChipConfig::nominal(k, n);
    cfg.i_ref = 1024.0;
    cfg.i_max = 1023.0;
    cfg.i_rst = 1e12;
    return cfg;
}

WeightMatrix labelled(int k, int n) {
    Eigen::MatrixXd e(k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) e(i, j) = 10.0 * (i + 1) + (j + 1);
    return WeightMatrix::from_entries(e);
}

}  // namespace

TEST_SUITE("expansion") {

TEST_CASE("rotate_rows examples") {
    const auto w = labelled(2, 3);
    CHECK(rotate_rows(w, 0).entries() == w.entries());
    CHECK(rotate_rows(w, 2).entries() == w.entries());
    const auto r = rotate_rows(w, 1);
    CHECK(r.entries().row(0) == w.entries().row(1));
    CHECK(r.entries().row(1) == w.entries().row(0));
    CHECK_THROWS_AS(rotate_rows(w, -1), DomainError);
}

TEST_CASE("rotate_cols examples") {
    const auto w = labelled(2, 3);
    CHECK(rotate_cols(w, 0).entries() == w.entries());
    CHECK(rotate_cols(w, 3).entries() == w.entries());
    const auto r = rotate_cols(w, 1);
    // columns (2, 3, 1) in one-based terms
    CHECK(r.entries().col(0) == w.entries().col(1));
    CHECK(r.entries().col(1) == w.entries().col(2));
    CHECK(r.entries().col(2) == w.entries().col(0));
}

TEST_CASE("rotations form a group and commute across axes") {
    Rng rng(1);
    const auto w = integer_weights(5, 4, rng);
    for (int a = 0; a < 7; ++a)
        for (int b = 0; b < 7; ++b) {
            CHECK(rotate_rows(rotate_rows(w, a), b).entries() == rotate_rows(w, a + b).entries());
            CHECK(rotate_cols(rotate_cols(w, a), b).entries() == rotate_cols(w, a + b).entries());
            CHECK(rotate_rows(rotate_cols(w, a), b).entries() == rotate_cols(rotate_rows(w, b), a).entries());
        }
}

TEST_CASE("2x3 array expands to the 6x6 layout") {
    const auto w = labelled(2, 3);
    const auto v = build_virtual_matrix(w, {2, 3, 6, 6});
    // w_ij encoded as 10 i + j (one-based)
    Eigen::MatrixXd expect(6, 6);
    expect << 11, 12, 13, 21, 22, 23,
              21, 22, 23, 11, 12, 13,
              12, 13, 11, 22, 23, 21,
              22, 23, 21, 12, 13, 11,
              13, 11, 12, 23, 21, 22,
              23, 21, 22, 13, 11, 12;
    CHECK(v == expect);
    CHECK(build_virtual_matrix(w, VirtualShape::physical(2, 3)) == w.entries());
}

TEST_CASE("virtual shape validation") {
    CHECK_THROWS_AS(VirtualShape({2, 3, 7, 6}).validate(), CapacityError);
    CHECK_THROWS_AS(VirtualShape({2, 3, 6, 7}).validate(), CapacityError);
    CHECK_THROWS_AS(VirtualShape({2, 3, 0, 6}).validate(), ShapeError);
    CHECK(VirtualShape{4, 3, 9, 7}.chunks() == 3);
    CHECK(VirtualShape{4, 3, 9, 7}.blocks() == 3);
}

TEST_CASE("pipeline with identity response equals the explicit virtual product") {
    Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        const int k = 1 + static_cast<int>(rng.below(8));
        const int n = 1 + static_cast<int>(rng.below(8));
        const int d = 1 + static_cast<int>(rng.below(k * n));
        const int l = 1 + static_cast<int>(rng.below(k * n));
        const auto w = integer_weights(k, n, rng);
        const VirtualShape shape{k, n, d, l};
        std::vector<int> codes(d);
        for (auto& c : codes) c = static_cast<int>(rng.below(1024));
        const auto got = virtual_forward_codes(codes, w, exact_chip(k, n), shape, Response::currents);
        const auto v = build_virtual_matrix(w, shape);
        for (int j = 0; j < l; ++j) {
            double want = 0.0;
            for (int r = 0; r < d; ++r) want += codes[r] * v(r, j);
            CHECK(got(j) == want);
        }
    }
}

TEST_CASE("3x4 array to 12x12 matches the brute-force product") {
    ChipConfig cfg = exact_chip(3, 4);
    Eigen::MatrixXd e(3, 4);
    e << 1.5, 0.25, 3, 0.5, 2, 1.25, 0.75, 4, 0.5, 2.5, 1, 1.75;
    const auto w = WeightMatrix::from_entries(e);
    const VirtualShape shape{3, 4, 12, 12};
    std::vector<int> codes{5, 1000, 0, 17, 512, 3, 99, 1023, 8, 64, 300, 1};
    const auto got = virtual_forward_codes(codes, w, cfg, shape, Response::currents);
    const auto v = build_virtual_matrix(w, shape);
    for (int j = 0; j < 12; ++j) {
        double want = 0.0;
        for (int r = 0; r < 12; ++r) want += codes[r] * v(r, j);
        CHECK(got(j) == want);
    }
}

TEST_CASE("extended_hidden blocks equal forward under the pre-rotated matrix") {
    ChipConfig cfg = ChipConfig::nominal(6, 5);
    const auto w = sample_mismatch(cfg);
    const VirtualShape shape{6, 5, 6, 23};
    std::vector<double> x{0.5, -0.2, 0.9, 1.0, -1.0, 0.3};
    const auto out = extended_hidden(x, w, cfg, shape);
    REQUIRE(out.size() == 23);
    for (int m = 0; m < shape.blocks(); ++m) {
        const auto block = forward(x, rotate_rows(w, m), cfg);
        for (int j = 0; j < 5 && m * 5 + j < 23; ++j) CHECK(out[m * 5 + j] == block[j]);
    }
    // l = n reduces to forward; the second block carries distinct weights
    CHECK(extended_hidden(x, w, cfg, {6, 5, 6, 5}) == forward(x, w, cfg));
    const auto two = extended_hidden(x, w, cfg, {6, 5, 6, 10});
    CHECK(std::vector<std::int64_t>(two.begin(), two.begin() + 5) !=
          std::vector<std::int64_t>(two.begin() + 5, two.end()));
    CHECK_THROWS_AS(extended_hidden(std::vector<double>(7, 0.0), w, cfg, {6, 5, 7, 5}), ShapeError);
}

TEST_CASE("extended_forward examples") {
    ChipConfig cfg = ChipConfig::nominal(4, 6);
    const auto w = sample_mismatch(cfg);
    std::vector<double> x{0.1, 0.7, -0.3, 0.4};
    CHECK(extended_forward(x, w, cfg, {4, 6, 4, 6}) == forward(x, w, cfg));

    std::vector<double> padded{0.1, 0.7, -0.3, 0.4, -1.0, -1.0, -1.0, -1.0};
    CHECK(extended_forward(padded, w, cfg, {4, 6, 8, 6}) == forward(x, w, cfg));

    CHECK_THROWS_AS(extended_forward(std::vector<double>(25, 0.0), w, cfg, {4, 6, 25, 6}), CapacityError);
}

TEST_CASE("extended_forward accumulates rotated chunks") {
    ChipConfig cfg = ChipConfig::nominal(3, 4);
    const auto w = sample_mismatch(cfg);
    std::vector<double> x{0.2, -0.6, 0.9, 0.4, 1.0, -0.1, 0.0};
    const VirtualShape shape{3, 4, 7, 4};
    const auto out = extended_forward(x, w, cfg, shape);
    std::vector<std::int64_t> want(4, 0);
    for (int c = 0; c < 3; ++c) {
        std::vector<int> codes(3, 0);
        for (int i = 0; i < 3 && 3 * c + i < 7; ++i) codes[i] = map_value(x[3 * c + i], cfg);
        const auto part = forward_codes(codes, rotate_cols(w, c), cfg);
        for (int j = 0; j < 4; ++j) want[j] += part[j];
    }
    CHECK(out == want);
}

TEST_CASE("saturating chunks: accumulation is position-bound and not additive in current") {
    // one input row, two neurons, two chunks; chunk c sees the columns rotated by c
    ChipConfig cfg = ChipConfig::nominal(1, 2);
    cfg.i_ref = 1024.0;
    cfg.i_max = 1023.0;
    cfg.i_rst = 1e12;
    cfg.c_b = 1.0;
    cfg.vdd = 1.0;
    cfg.t_neu = 1.0;  // count = floor(current)
    cfg.b = 10;
    cfg.neuron_model = NeuronModel::linear;
    Eigen::MatrixXd e(1, 2);
    e << 1.0, 8.0;
    const auto w = WeightMatrix::from_entries(e);
    const VirtualShape shape{1, 2, 2, 2};

    const std::vector<int> a{200, 50}, b{50, 200};
    const auto guarded_a = virtual_forward_codes(a, w, cfg, shape, Response::counts, AccumulatorPolicy::guarded);
    const auto guarded_b = virtual_forward_codes(b, w, cfg, shape, Response::counts, AccumulatorPolicy::guarded);
    // neuron 0: 200*1 + min(50*8, 1024) vs 50*1 + min(200*8 -> 1024)
    CHECK(guarded_a(0) == 600.0);
    CHECK(guarded_b(0) == 1074.0);
    CHECK(guarded_a(0) != guarded_b(0));

    // per-chunk clipping loses current the ideal product keeps
    const auto ideal_b = virtual_forward_codes(b, w, cfg, shape, Response::currents);
    CHECK(ideal_b(0) == 1650.0);
    // the counter-width accumulator clips the sum again
    const auto counter_b = virtual_forward_codes(b, w, cfg, shape, Response::counts, AccumulatorPolicy::counter);
    CHECK(counter_b(0) == 1024.0);
}

TEST_CASE("virtual hidden matrix agrees with extended_forward per sample") {
    ChipConfig cfg = ChipConfig::nominal(4, 5);
    const auto w = sample_mismatch(cfg);
    const VirtualShape shape{4, 5, 11, 13};
    Rng rng(3);
    Eigen::MatrixXd x(6, 11);
    for (int s = 0; s < 6; ++s)
        for (int r = 0; r < 11; ++r) x(s, r) = rng.uniform(-1.0, 1.0);
    const auto h = build_virtual_hidden(x, w, cfg, shape);
    for (int s = 0; s < 6; ++s) {
        std::vector<double> row;
        for (int r = 0; r < 11; ++r) row.push_back(x(s, r));
        const auto out = extended_forward(row, w, cfg, shape);
        for (int j = 0; j < 13; ++j) CHECK(h(s, j) == static_cast<double>(out[j]));
    }
}

TEST_CASE("bias row is rejected") {
    ChipConfig cfg = ChipConfig::nominal(2, 2);
    cfg.bias_row = true;
    const auto w = sample_mismatch(cfg);
    std::vector<int> codes{1, 2};
    CHECK_THROWS_AS(virtual_forward_codes(codes, w, cfg, {3, 2, 2, 2}), ConfigError);
}

}  // TEST_SUITE
