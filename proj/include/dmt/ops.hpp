#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmt/common.hpp"
#include "dmt/tensor.hpp"

namespace dmt::ad {

// Elementwise, with numpy-style broadcasting (right-aligned, extent-1 dims expand).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

/// Batched product of the last two dims. `b` is either a matrix shared by
/// every batch entry or has the same leading dims as `a`. With `transpose_b`
/// the last two dims of `b` are read swapped.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);

/// Max-subtracted softmax. -inf entries get exactly 0; a row with every entry
/// at -inf yields zeros and is counted in the output's fault_count().
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);

/// Normalizes over the last dim, then applies gamma/beta (shape [last dim]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Row gather from `table` [V, d]; result shape is ids_shape + [d].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, const Shape& ids_shape);

enum class PadMode { same, causal };

/// Temporal convolution of x [B, T, C] with weight [K, C, O] and bias [O].
/// `same` pads (K-1)/2 on each side (K odd); `causal` pads K-1 on the left only.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, PadMode mode);

/// First half of the last dim gated by the sigmoid of the second half.
Tensor glu(const Tensor& x);

/// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor reshape(const Tensor& x, const Shape& shape);
/// Gathers entries along axis 0.
Tensor index_select(const Tensor& x, std::span<const std::size_t> indices);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over non-pad positions of
///   (1 - eps) * -log p[target] + eps * mean_v(-log p[v])
/// with logits [..., V] and one target per row. Throws when every target is pad.
Tensor label_smoothed_nll(const Tensor& logits, std::span<const std::int32_t> targets,
                          std::int32_t pad_id, double epsilon);

}  // namespace dmt::ad
