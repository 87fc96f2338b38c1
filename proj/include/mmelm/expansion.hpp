#pragma once

// Weight reuse by circular rotation: a physical k x n mismatch array serves a
// virtual d x l projection with d, l <= k * n.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mmelm/chip.hpp"

namespace mmelm {

struct VirtualShape {
    int k = 1;  // physical input rows
    int n = 1;  // physical neurons
    int d = 1;  // virtual input dimension
    int l = 1;  // virtual hidden count

    int chunks() const { return (d + k - 1) / k; }
    int blocks() const { return (l + n - 1) / n; }
    /// Throws CapacityError when d or l exceeds k * n, ShapeError for other violations.
    void validate() const;
    static VirtualShape physical(int k, int n) { return {k, n, k, n}; }
};

/// Row i of the result is row (i + steps) mod k of w.
WeightMatrix rotate_rows(const WeightMatrix& w, int steps);
/// Column j of the result is column (j + steps) mod n of w.
WeightMatrix rotate_cols(const WeightMatrix& w, int steps);

/// How per-chunk counts are combined when the input is split into chunks.
enum class AccumulatorPolicy {
    guarded,  // accumulator of b + ceil(log2 chunks) bits, saturating at 2^(b + guard)
    counter,  // accumulator as wide as the counter, saturating at 2^b
};

/// Neuron response used by the virtual pipeline.
enum class Response {
    counts,    // saturating counter (the chip)
    currents,  // identity: summed column currents, no oscillator or counter
};

/// Explicit d x l matrix equal to the composition of rotations and accumulation.
/// V(c*k + i, m*n + j) = w((i + m) mod k, (j + c) mod n).
Eigen::MatrixXd build_virtual_matrix(const WeightMatrix& w, const VirtualShape& shape);

/// Full virtual pipeline on already-mapped codes (length shape.d). Hidden block m
/// and input chunk c use rotate_cols(rotate_rows(w, m), c); chunk outputs are
/// accumulated in order. Returns shape.l values.
Eigen::VectorXd virtual_forward_codes(std::span<const int> codes, const WeightMatrix& w,
                                      const ChipConfig& cfg, const VirtualShape& shape,
                                      Response response = Response::counts,
                                      AccumulatorPolicy policy = AccumulatorPolicy::guarded);

/// Hidden-count expansion only (shape.d <= k); block m = forward under rotate_rows(w, m).
std::vector<std::int64_t> extended_hidden(std::span<const double> x, const WeightMatrix& w,
                                          const ChipConfig& cfg, const VirtualShape& shape);

/// Input-dimension expansion: ceil(d/k) chunks, chunk c through rotate_cols(w, c),
/// zero-padded last chunk, counts summed. Also expands hidden count when l > n.
std::vector<std::int64_t> extended_forward(std::span<const double> x, const WeightMatrix& w,
                                           const ChipConfig& cfg, const VirtualShape& shape,
                                           AccumulatorPolicy policy = AccumulatorPolicy::guarded);

/// Virtual hidden matrix for a dataset (rows of `features` have length shape.d).
Eigen::MatrixXd build_virtual_hidden(const Eigen::MatrixXd& features, const WeightMatrix& w,
                                     const ChipConfig& cfg, const VirtualShape& shape,
                                     AccumulatorPolicy policy = AccumulatorPolicy::guarded);

}  // namespace mmelm
