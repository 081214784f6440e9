#include "gssl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gssl {

double gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("gradient_check: step must be positive");

    Tensor leaf = x.detach();
    leaf.set_requires_grad(true);
    const Tensor root = f(leaf);
    if (root.numel() != 1) {
        throw std::invalid_argument("gradient_check: f must return a scalar, got shape " +
                                    shape_to_string(root.shape()));
    }
    if (!std::isfinite(root.item())) throw std::domain_error("gradient_check: f(x) is not finite");
    root.backward();
    std::vector<double> analytic(leaf.numel(), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

    NoGradGuard no_grad;
    double worst = 0.0;
    Tensor probe = x.detach();
    auto values = probe.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + h;
        const double plus = f(probe).item();
        values[i] = original - h;
        const double minus = f(probe).item();
        values[i] = original;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            throw std::domain_error("gradient_check: f is not finite near coordinate " +
                                    std::to_string(i));
        }
        const double numeric = (plus - minus) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

}  // namespace gssl
