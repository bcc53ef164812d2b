#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace mmf {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam over one flat parameter vector.
class Adam {
public:
    Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
        }
    }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

// Scales `grad` in place so its L2 norm is at most `max_norm` (no-op when
// max_norm <= 0). Returns the pre-clip norm.
inline double clip_by_norm(std::span<double> grad, double max_norm) {
    double s = 0;
    for (double g : grad) s += g * g;
    double norm = std::sqrt(s);
    if (max_norm > 0 && norm > max_norm) {
        double k = max_norm / norm;
        for (double& g : grad) g *= k;
    }
    return norm;
}

} // namespace mmf
