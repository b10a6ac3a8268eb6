#include "avatar/adam.hpp"

#include <cmath>

namespace avatar {

AdamState AdamState::make(size_t n, double lr, double decay_factor) {
    AdamState s;
    s.lr = lr;
    s.decay_factor = decay_factor;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
}

void AdamState::step(std::span<double> params, std::span<const double> grads,
                     const std::string& group_name) {
    require(params.size() == m.size() && grads.size() == m.size(),
            "adam size mismatch for group " + group_name);
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        if (!std::isfinite(g)) fail("non-finite gradient in parameter group " + group_name);
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    lr *= decay_factor;
}

void AdamState::remap(const std::vector<int>& new_to_old, int stride) {
    require(stride > 0, "adam remap stride must be positive");
    require(m.size() % static_cast<size_t>(stride) == 0, "adam remap stride mismatch");
    const int old_count = static_cast<int>(m.size()) / stride;
    std::vector<double> nm(new_to_old.size() * stride, 0.0);
    std::vector<double> nv(new_to_old.size() * stride, 0.0);
    for (size_t i = 0; i < new_to_old.size(); ++i) {
        int src = new_to_old[i];
        if (src < 0) continue;
        require(src < old_count, "adam remap source out of range");
        for (int k = 0; k < stride; ++k) {
            nm[i * stride + k] = m[static_cast<size_t>(src) * stride + k];
            nv[i * stride + k] = v[static_cast<size_t>(src) * stride + k];
        }
    }
    m = std::move(nm);
    v = std::move(nv);
}

}  // namespace avatar
