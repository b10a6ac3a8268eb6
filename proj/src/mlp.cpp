#include "avatar/mlp.hpp"

#include <cmath>

namespace avatar {

Activation activation_from_string(const std::string& s) {
    if (s == "none") return Activation::None;
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softplus") return Activation::Softplus;
    fail("unknown activation: " + s);
}

std::string activation_to_string(Activation a) {
    switch (a) {
        case Activation::None: return "none";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softplus: return "softplus";
    }
    fail("bad activation enum");
}

size_t MlpSpec::params_per_instance() const {
    size_t n = 0;
    for (int l = 0; l < layer_count(); ++l)
        n += static_cast<size_t>(widths[l + 1]) * widths[l] + widths[l + 1];
    return n;
}

void MlpSpec::validate() const {
    require(widths.size() >= 2, "mlp spec needs at least input and output widths");
    for (int w : widths) require(w > 0, "mlp widths must be positive");
    require(activations.size() == static_cast<size_t>(layer_count()),
            "mlp spec needs one activation per layer");
    require(instance_count >= 1, "mlp instance_count must be >= 1");
}

namespace {

size_t layer_offset(const MlpSpec& spec, int instance, int layer) {
    size_t off = static_cast<size_t>(instance) * spec.params_per_instance();
    for (int l = 0; l < layer; ++l)
        off += static_cast<size_t>(spec.widths[l + 1]) * spec.widths[l] + spec.widths[l + 1];
    return off;
}

double apply_act(Activation a, double z) {
    switch (a) {
        case Activation::None: return z;
        case Activation::Relu: return z > 0 ? z : 0.0;
        case Activation::Sigmoid: return sigmoid(z);
        case Activation::Softplus: return softplus(z);
    }
    return z;
}

double act_grad(Activation a, double z) {
    switch (a) {
        case Activation::None: return 1.0;
        case Activation::Relu: return z > 0 ? 1.0 : 0.0;
        case Activation::Sigmoid: {
            double s = sigmoid(z);
            return s * (1.0 - s);
        }
        case Activation::Softplus: return sigmoid(z);
    }
    return 1.0;
}

}  // namespace

MlpParams MlpParams::glorot_init(const MlpSpec& spec, uint64_t seed) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    p.values.assign(spec.param_count(), 0.0);
    for (int inst = 0; inst < spec.instance_count; ++inst) {
        Pcg32 rng(mix_seed(seed, static_cast<uint64_t>(inst)));
        for (int l = 0; l < spec.layer_count(); ++l) {
            int fan_in = spec.widths[l], fan_out = spec.widths[l + 1];
            double bound = std::sqrt(6.0 / (fan_in + fan_out));
            auto w = p.weight(inst, l);
            for (int c = 0; c < w.cols(); ++c)
                for (int r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
            // biases stay zero
        }
    }
    return p;
}

MlpParams MlpParams::zeros(const MlpSpec& spec) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    p.values.assign(spec.param_count(), 0.0);
    return p;
}

Eigen::Map<MatX> MlpParams::weight(int instance, int layer) {
    size_t off = layer_offset(spec, instance, layer);
    return {values.data() + off, spec.widths[layer + 1], spec.widths[layer]};
}

Eigen::Map<const MatX> MlpParams::weight(int instance, int layer) const {
    size_t off = layer_offset(spec, instance, layer);
    return {values.data() + off, spec.widths[layer + 1], spec.widths[layer]};
}

Eigen::Map<VecX> MlpParams::bias(int instance, int layer) {
    size_t off = layer_offset(spec, instance, layer) +
                 static_cast<size_t>(spec.widths[layer + 1]) * spec.widths[layer];
    return {values.data() + off, spec.widths[layer + 1]};
}

Eigen::Map<const VecX> MlpParams::bias(int instance, int layer) const {
    size_t off = layer_offset(spec, instance, layer) +
                 static_cast<size_t>(spec.widths[layer + 1]) * spec.widths[layer];
    return {values.data() + off, spec.widths[layer + 1]};
}

MatX mlp_forward(const MlpParams& params, const MatX& input, MlpCache* cache,
                 const std::vector<int>* instance_ids) {
    const MlpSpec& spec = params.spec;
    const int n = static_cast<int>(input.rows());
    require(input.cols() == spec.input_width(), "mlp input width mismatch");
    if (instance_ids) {
        require(static_cast<int>(instance_ids->size()) == n, "instance id per input row required");
        for (int id : *instance_ids)
            require(id >= 0 && id < spec.instance_count, "mlp instance id out of range");
    } else {
        require(spec.instance_count == 1, "instanced mlp requires instance ids");
    }

    if (cache) {
        cache->instance_ids = instance_ids ? *instance_ids : std::vector<int>{};
        cache->pre.assign(spec.layer_count(), MatX());
        cache->post.assign(spec.layer_count() + 1, MatX());
        cache->post[0] = input;
    }

    MatX a = input;
    for (int l = 0; l < spec.layer_count(); ++l) {
        MatX z(n, spec.widths[l + 1]);
        if (!instance_ids) {
            z = a * params.weight(0, l).transpose();
            z.rowwise() += params.bias(0, l).transpose();
        } else {
            for (int r = 0; r < n; ++r) {
                int inst = (*instance_ids)[r];
                z.row(r) = a.row(r) * params.weight(inst, l).transpose() +
                           params.bias(inst, l).transpose();
            }
        }
        MatX out = z.unaryExpr([&](double v) { return apply_act(spec.activations[l], v); });
        if (cache) {
            cache->pre[l] = z;
            cache->post[l + 1] = out;
        }
        a = std::move(out);
    }
    return a;
}

MatX mlp_backward(const MlpParams& params, const MlpCache& cache, const MatX& output_grad,
                  std::vector<double>& param_grads) {
    const MlpSpec& spec = params.spec;
    require(param_grads.size() == params.values.size(), "param grad buffer size mismatch");
    const int n = static_cast<int>(output_grad.rows());
    require(output_grad.cols() == spec.output_width(), "mlp output grad width mismatch");
    require(cache.post.size() == static_cast<size_t>(spec.layer_count()) + 1,
            "mlp cache does not match spec");
    const bool instanced = !cache.instance_ids.empty();

    MatX grad = output_grad;
    for (int l = spec.layer_count() - 1; l >= 0; --l) {
        MatX dz = grad.cwiseProduct(cache.pre[l].unaryExpr(
            [&](double v) { return act_grad(spec.activations[l], v); }));
        const MatX& a_prev = cache.post[l];
        if (!instanced) {
            size_t off = layer_offset(spec, 0, l);
            Eigen::Map<MatX> dw(param_grads.data() + off, spec.widths[l + 1], spec.widths[l]);
            Eigen::Map<VecX> db(
                param_grads.data() + off + static_cast<size_t>(spec.widths[l + 1]) * spec.widths[l],
                spec.widths[l + 1]);
            dw += dz.transpose() * a_prev;
            db += dz.colwise().sum().transpose();
            grad = dz * params.weight(0, l);
        } else {
            MatX dx(n, spec.widths[l]);
            for (int r = 0; r < n; ++r) {
                int inst = cache.instance_ids[r];
                size_t off = layer_offset(spec, inst, l);
                Eigen::Map<MatX> dw(param_grads.data() + off, spec.widths[l + 1], spec.widths[l]);
                Eigen::Map<VecX> db(param_grads.data() + off +
                                        static_cast<size_t>(spec.widths[l + 1]) * spec.widths[l],
                                    spec.widths[l + 1]);
                dw += dz.row(r).transpose() * a_prev.row(r);
                db += dz.row(r).transpose();
                dx.row(r) = dz.row(r) * params.weight(inst, l);
            }
            grad = std::move(dx);
        }
    }
    return grad;
}

}  // namespace avatar
