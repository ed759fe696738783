#pragma once

// Central finite-difference oracle for gradient checks. Independent of the
// backward closures: it only evaluates forward passes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "imu2emg/core/rng.hpp"
#include "imu2emg/core/tape.hpp"

namespace imu2emg::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

// `build` records a scalar loss on the given tape using tape.leaf() on the
// supplied params. Relative error uses max(|analytic|, |numeric|, floor).
inline GradCheck check_gradients(const std::vector<Tensor<double>*>& params,
                                 const std::function<Var<double>(Tape<double>&)>& build,
                                 double step = 1e-5, double floor = 1e-6) {
  for (auto* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape<double> tape;
    auto loss = build(tape);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape<double> tape;
    return build(tape).value().item();
  };
  GradCheck out;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double orig = (*p)[i];
      (*p)[i] = orig + step;
      const double up = eval();
      (*p)[i] = orig - step;
      const double down = eval();
      (*p)[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad()[i];
      const double abs_err = std::abs(analytic - numeric);
      const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
      out.max_abs_error = std::max(out.max_abs_error, abs_err);
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

inline Tensor<double> random_tensor(Shape shape, RngState& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace imu2emg::testing
