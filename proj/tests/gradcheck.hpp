#pragma once

// Central finite-difference oracle for gradient checks. Kept independent of
// the tape's backward path: it only re-runs forward evaluations.

#include <cmath>
#include <functional>
#include <string>

#include "corgi/tensor.hpp"

namespace testutil {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "param[index]"
};

// build() must construct a scalar loss on a fresh tape from the store's
// current values. Analytic gradients come from one backward pass; each
// parameter element is then perturbed symmetrically.
inline GradCheckResult grad_check(corgi::tc::ParamStore<double>& store,
                                  const std::function<double()>& eval_loss,
                                  const std::function<void()>& accumulate_grads,
                                  double h = 1e-5) {
    store.zero_grad();
    accumulate_grads();

    GradCheckResult result;
    for (const auto& p : store.all()) {
        for (std::size_t k = 0; k < p->size(); ++k) {
            const double saved = p->value[k];
            const double step = h * std::max(1.0, std::fabs(saved));
            p->value[k] = saved + step;
            const double lp = eval_loss();
            p->value[k] = saved - step;
            const double lm = eval_loss();
            p->value[k] = saved;
            const double fd = (lp - lm) / (2.0 * step);
            const double an = p->grad[k];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            const double rel = std::fabs(fd - an) / denom;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst = p->name + "[" + std::to_string(k) + "]";
            }
        }
    }
    return result;
}

}  // namespace testutil
