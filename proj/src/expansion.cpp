#include "mmelm/expansion.hpp"

#include <bit>
#include <numeric>
#include <string>

#include "mmelm/error.hpp"

namespace mmelm {

namespace {

int wrap(long long v, int m) { return static_cast<int>(((v % m) + m) % m); }

void check_physical(const WeightMatrix& w, const ChipConfig& cfg, const VirtualShape& shape) {
    shape.validate();
    if (cfg.bias_row) throw ConfigError("expansion: bias row is not supported with weight rotation");
    if (w.rows() != shape.k || w.cols() != shape.n)
        throw ShapeError("expansion: weight matrix is " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + ", shape declares " + std::to_string(shape.k) +
                         "x" + std::to_string(shape.n));
}

int guard_bits(int chunks) { return chunks <= 1 ? 0 : std::bit_width(static_cast<unsigned>(chunks - 1)); }

}  // namespace

void VirtualShape::validate() const {
    if (k < 1 || n < 1 || d < 1 || l < 1) throw ShapeError("virtual shape: all sizes must be >= 1");
    const long long cap = static_cast<long long>(k) * n;
    if (d > cap)
        throw CapacityError("virtual shape: d = " + std::to_string(d) + " exceeds k*n = " +
                            std::to_string(cap));
    if (l > cap)
        throw CapacityError("virtual shape: l = " + std::to_string(l) + " exceeds k*n = " +
                            std::to_string(cap));
}

WeightMatrix rotate_rows(const WeightMatrix& w, int steps) {
    if (steps < 0) throw DomainError("rotate_rows: steps must be >= 0");
    std::vector<int> rows(static_cast<std::size_t>(w.rows()));
    std::vector<int> cols(static_cast<std::size_t>(w.cols()));
    for (int i = 0; i < w.rows(); ++i) rows[i] = wrap(static_cast<long long>(i) + steps, w.rows());
    std::iota(cols.begin(), cols.end(), 0);
    return w.remapped(rows, cols);
}

WeightMatrix rotate_cols(const WeightMatrix& w, int steps) {
    if (steps < 0) throw DomainError("rotate_cols: steps must be >= 0");
    std::vector<int> rows(static_cast<std::size_t>(w.rows()));
    std::vector<int> cols(static_cast<std::size_t>(w.cols()));
    std::iota(rows.begin(), rows.end(), 0);
    for (int j = 0; j < w.cols(); ++j) cols[j] = wrap(static_cast<long long>(j) + steps, w.cols());
    return w.remapped(rows, cols);
}

Eigen::MatrixXd build_virtual_matrix(const WeightMatrix& w, const VirtualShape& shape) {
    shape.validate();
    if (w.rows() != shape.k || w.cols() != shape.n)
        throw ShapeError("build_virtual_matrix: weight matrix does not match shape");
    Eigen::MatrixXd v(shape.d, shape.l);
    for (int r = 0; r < shape.d; ++r) {
        const int c = r / shape.k, i = r % shape.k;
        for (int col = 0; col < shape.l; ++col) {
            const int m = col / shape.n, j = col % shape.n;
            v(r, col) = w((i + m) % shape.k, (j + c) % shape.n);
        }
    }
    return v;
}

Eigen::VectorXd virtual_forward_codes(std::span<const int> codes, const WeightMatrix& w,
                                      const ChipConfig& cfg, const VirtualShape& shape,
                                      Response response, AccumulatorPolicy policy) {
    check_physical(w, cfg, shape);
    if (static_cast<int>(codes.size()) != shape.d)
        throw ShapeError("virtual forward: " + std::to_string(codes.size()) + " codes for d = " +
                         std::to_string(shape.d));
    const int chunks = shape.chunks();
    const double limit = response == Response::currents
                             ? 0.0
                             : policy == AccumulatorPolicy::counter
                                   ? static_cast<double>(cfg.count_limit())
                                   : std::ldexp(static_cast<double>(cfg.count_limit()), guard_bits(chunks));

    // chunk codes, zero-padded (code 0 carries no current)
    std::vector<std::vector<int>> chunk_codes(chunks, std::vector<int>(shape.k, 0));
    for (int r = 0; r < shape.d; ++r) chunk_codes[r / shape.k][r % shape.k] = codes[r];

    Eigen::VectorXd out(shape.l);
    for (int m = 0; m < shape.blocks(); ++m) {
        const WeightMatrix wm = rotate_rows(w, m);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(shape.n);
        for (int c = 0; c < chunks; ++c) {
            const WeightMatrix wmc = c == 0 ? wm : rotate_cols(wm, c);
            if (response == Response::currents) {
                acc += column_currents(chunk_codes[c], wmc, cfg);
            } else {
                const auto counts = forward_codes(chunk_codes[c], wmc, cfg);
                for (int j = 0; j < shape.n; ++j)
                    acc(j) = std::min(acc(j) + static_cast<double>(counts[j]), limit);
            }
        }
        const int width = std::min(shape.n, shape.l - m * shape.n);
        out.segment(m * shape.n, width) = acc.head(width);
    }
    return out;
}

std::vector<std::int64_t> extended_hidden(std::span<const double> x, const WeightMatrix& w,
                                          const ChipConfig& cfg, const VirtualShape& shape) {
    if (shape.d > shape.k)
        throw ShapeError("extended_hidden: d exceeds physical rows; use extended_forward");
    check_physical(w, cfg, shape);
    if (static_cast<int>(x.size()) != shape.d)
        throw ShapeError("extended_hidden: input length does not match shape.d");
    std::vector<int> codes = map_input(x, cfg).codes;
    codes.resize(shape.k, 0);
    std::vector<std::int64_t> out;
    out.reserve(shape.l);
    for (int m = 0; m < shape.blocks(); ++m) {
        const auto block = forward_codes(codes, rotate_rows(w, m), cfg);
        const int width = std::min(shape.n, shape.l - m * shape.n);
        out.insert(out.end(), block.begin(), block.begin() + width);
    }
    return out;
}

std::vector<std::int64_t> extended_forward(std::span<const double> x, const WeightMatrix& w,
                                           const ChipConfig& cfg, const VirtualShape& shape,
                                           AccumulatorPolicy policy) {
    if (static_cast<int>(x.size()) != shape.d)
        throw ShapeError("extended_forward: input length does not match shape.d");
    const auto codes = map_input(x, cfg).codes;
    const Eigen::VectorXd v = virtual_forward_codes(codes, w, cfg, shape, Response::counts, policy);
    std::vector<std::int64_t> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index j = 0; j < v.size(); ++j) out[j] = static_cast<std::int64_t>(v(j));
    return out;
}

Eigen::MatrixXd build_virtual_hidden(const Eigen::MatrixXd& features, const WeightMatrix& w,
                                     const ChipConfig& cfg, const VirtualShape& shape,
                                     AccumulatorPolicy policy) {
    if (features.cols() != shape.d)
        throw ShapeError("virtual hidden: dataset has " + std::to_string(features.cols()) +
                         " features, shape.d = " + std::to_string(shape.d));
    check_physical(w, cfg, shape);
    // Pre-rotate once per (block, chunk); the per-sample loop then only sums currents.
    const int chunks = shape.chunks();
    std::vector<WeightMatrix> mats;
    for (int m = 0; m < shape.blocks(); ++m) {
        const WeightMatrix wm = rotate_rows(w, m);
        for (int c = 0; c < chunks; ++c) mats.push_back(c == 0 ? wm : rotate_cols(wm, c));
    }
    const double limit = policy == AccumulatorPolicy::counter
                             ? static_cast<double>(cfg.count_limit())
                             : std::ldexp(static_cast<double>(cfg.count_limit()), guard_bits(chunks));
    Eigen::MatrixXd h(features.rows(), shape.l);
    std::vector<std::vector<int>> chunk_codes(chunks, std::vector<int>(shape.k, 0));
    for (Eigen::Index s = 0; s < features.rows(); ++s) {
        for (auto& cc : chunk_codes) std::fill(cc.begin(), cc.end(), 0);
        for (int r = 0; r < shape.d; ++r) chunk_codes[r / shape.k][r % shape.k] = map_value(features(s, r), cfg);
        for (int m = 0; m < shape.blocks(); ++m) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(shape.n);
            for (int c = 0; c < chunks; ++c) {
                const auto counts = forward_codes(chunk_codes[c], mats[m * chunks + c], cfg);
                for (int j = 0; j < shape.n; ++j)
                    acc(j) = std::min(acc(j) + static_cast<double>(counts[j]), limit);
            }
            const int width = std::min(shape.n, shape.l - m * shape.n);
            h.row(s).segment(m * shape.n, width) = acc.head(width).transpose();
        }
    }
    return h;
}

}  // namespace mmelm
