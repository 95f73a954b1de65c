#pragma once

#include <optional>
#include <vector>

#include "defgate/net.hpp"

namespace defgate {

// Per-layer activations from a forward pass: acts[0] is the input batch,
// acts[i+1] the output of layer i.
struct Trace {
  std::vector<Tensor> acts;
  int batch = 1;
  const Tensor& output() const { return acts.back(); }
};

// Forward evaluation. `x` either matches the network input shape exactly or
// carries one extra leading batch dimension.
Tensor forward(const Network& net, const Tensor& x);
Trace forward_trace(const Network& net, const Tensor& x);

struct Grads {
  std::optional<Tensor> input;            // same shape as the forward input
  std::vector<LayerParams> params;        // aligned with net.params (empty when not requested)
};

// Reverse-mode sweep from `grad_out` (shape of the traced output) back to the
// input and/or the parameters.
Grads backward(const Network& net, const Trace& trace, const Tensor& grad_out, bool want_input, bool want_params);

// Gradient of the sum of all output elements with respect to the input:
// the scalar head is sum(u) over the final activation, whatever its rank.
Tensor input_gradient(const Network& net, const Tensor& x);

}  // namespace defgate
