#pragma once

#include "avatar/core.hpp"
#include "avatar/rng.hpp"

#include <string>
#include <vector>

namespace avatar {

enum class Activation { None, Relu, Sigmoid, Softplus };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

// Dense MLP family. instance_count = 1 for global nets, P for per-patch
// families evaluated with per-row instance selection.
struct MlpSpec {
    std::vector<int> widths;              // [in, hidden..., out]
    std::vector<Activation> activations;  // one per layer
    int instance_count = 1;

    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
    int input_width() const { return widths.front(); }
    int output_width() const { return widths.back(); }
    size_t params_per_instance() const;
    size_t param_count() const { return params_per_instance() * instance_count; }
    void validate() const;
};

struct MlpParams {
    MlpSpec spec;
    std::vector<double> values;  // instance-major; per layer: W (out x in, col-major), then b

    static MlpParams glorot_init(const MlpSpec& spec, uint64_t seed);
    static MlpParams zeros(const MlpSpec& spec);

    Eigen::Map<MatX> weight(int instance, int layer);
    Eigen::Map<const MatX> weight(int instance, int layer) const;
    Eigen::Map<VecX> bias(int instance, int layer);
    Eigen::Map<const VecX> bias(int instance, int layer) const;
};

// Activations saved by forward for the backward pass.
struct MlpCache {
    std::vector<int> instance_ids;  // empty means instance 0 for every row
    std::vector<MatX> pre;          // pre-activation per layer, N x width
    std::vector<MatX> post;         // post-activation per layer; post[0] is the input
};

// rows of `input` are samples; `instance_ids` (optional) selects the weight
// set per row for instanced families.
MatX mlp_forward(const MlpParams& params, const MatX& input, MlpCache* cache = nullptr,
                 const std::vector<int>* instance_ids = nullptr);

// Exact reverse-mode gradients. Returns the input gradient; parameter
// gradients are accumulated into `param_grads` (same layout as values).
MatX mlp_backward(const MlpParams& params, const MlpCache& cache, const MatX& output_grad,
                  std::vector<double>& param_grads);

}  // namespace avatar
