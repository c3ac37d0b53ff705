#pragma once

// Central finite-difference check of the network's analytic gradients. The
// analytic side runs in float (the training precision); the reference is a
// double-precision evaluation of the loss only, never of its gradient.

#include <cmath>
#include <string>

#include "flim/sunet.hpp"

namespace flim::oracles {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // |g| below the floor on both sides
};

inline double loss_double(SunetModel<double>& m, const Tensor<double>& flair, const Tensor<double>& t1gd,
                          const LabelVolume& labels) {
  Tape<double> tape;
  for (auto& p : m.params) p.frozen = true;
  const auto id = forward_graph(m, tape, flair, t1gd);
  return ce_dice_loss(tape.value(id), labels).total;
}

/// Every trainable tensor of `model` (regime already applied) is checked
/// elementwise; entries with max(|analytic|, |numeric|) < floor are skipped.
inline GradCheckResult gradient_check(const SunetModel<float>& model, const Volume& flair, const Volume& t1gd,
                                      const LabelVolume& labels, double h = 1e-6, double floor = 1e-6) {
  SunetModel<float> fm = model;
  Tape<float> tape;
  const auto logits = forward_graph(fm, tape, to_tensor<float>(flair), to_tensor<float>(t1gd));
  train_step_loss(fm, tape, logits, labels);

  SunetModel<double> dm = model.cast<double>();
  const auto f64 = to_tensor<double>(flair);
  const auto t64 = to_tensor<double>(t1gd);
  GradCheckResult r;
  for (std::size_t k = 0; k < fm.params.size(); ++k) {
    const Param<float>& p = fm.params[k];
    if (!p.trainable()) continue;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = dm.params[k].value[i];
      dm.params[k].value[i] = keep + h;
      const double lp = loss_double(dm, f64, t64, labels);
      dm.params[k].value[i] = keep - h;
      const double lm = loss_double(dm, f64, t64, labels);
      dm.params[k].value[i] = keep;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = p.grad.empty() ? 0.0 : static_cast<double>(p.grad[i]);
      const double scale = std::max(std::abs(num), std::abs(ana));
      if (scale < floor) {
        ++r.skipped;
        continue;
      }
      ++r.checked;
      const double rel = std::abs(num - ana) / scale;
      if (rel > r.max_rel_err) {
        r.max_rel_err = rel;
        r.worst_tensor = p.name;
        r.worst_index = i;
      }
    }
  }
  return r;
}

}  // namespace flim::oracles
