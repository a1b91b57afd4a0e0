#pragma once

// Central finite-difference gradient verification. Runs at 64-bit precision;
// coordinates whose perturbation lands within a margin of a ReLU-family kink
// (or flips any activation sign) are skipped rather than scored.

#include <algorithm>
#include <vector>

#include "geogan/ops.hpp"
#include "geogan/tape.hpp"

namespace geogan {

struct FdOptions {
  double h_scale = 1e-5;        // h = h_scale * (1 + |x|)
  int coords_per_tensor = 64;
  double kink_margin_mult = 10.0;  // skip if within 10*h of a kink
  double rel_floor = 1e-6;      // denominator floor for tiny gradients
  std::uint64_t seed = 0x5eedULL;
};

struct FdCoordRecord {
  int tensor_index = 0;
  std::int64_t coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  bool skipped = false;
};

struct FdReport {
  double max_rel_err = 0.0;
  std::int64_t checked = 0;
  std::int64_t skipped = 0;
  std::vector<double> per_tensor_max;
  std::vector<FdCoordRecord> records;

  bool pass(double tol) const { return checked > 0 && max_rel_err < tol; }
};

// BuildFn: (Tape<double>&, const std::vector<Var<double>>& leaves) -> scalar Var.
// Must be deterministic (no train-mode dropout).
template <typename BuildFn>
FdReport finite_diff_check(BuildFn&& build, std::vector<Tensor<double>> inputs,
                           const FdOptions& opt = {}) {
  auto run = [&](bool with_grad, bool record_kinks, double margin,
                 std::vector<Tensor<double>>* grads,
                 std::vector<std::uint8_t>* signature,
                 bool* kink_hit) -> double {
    Tape<double> tape;
    tape.record_kinks = record_kinks;
    tape.kink_margin = margin;
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x, with_grad));
    Var<double> loss = build(tape, leaves);
    if (loss.value().numel() != 1)
      throw ValidationError("fd_check: builder must return a scalar loss");
    double value = loss.value()[0];
    if (with_grad) {
      tape.backward(loss);
      grads->clear();
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        Node<double>* n = leaves[i].node();
        grads->push_back(n->has_grad() ? n->grad
                                       : Tensor<double>(inputs[i].shape()));
      }
    }
    if (signature) *signature = tape.kink_signature;
    if (kink_hit) *kink_hit = tape.kink_hit;
    return value;
  };

  std::vector<Tensor<double>> analytic;
  run(true, false, 0.0, &analytic, nullptr, nullptr);

  FdReport report;
  report.per_tensor_max.assign(inputs.size(), 0.0);
  CounterRng rng{CounterRng::mix(opt.seed)};

  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::int64_t n = inputs[t].numel();
    std::vector<std::int64_t> coords;
    if (n <= opt.coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      CounterRng cr = rng.stream(static_cast<std::uint64_t>(t));
      std::vector<std::uint8_t> taken(static_cast<std::size_t>(n), 0);
      while (static_cast<int>(coords.size()) < opt.coords_per_tensor) {
        std::int64_t c = static_cast<std::int64_t>(cr.next_below(static_cast<std::uint64_t>(n)));
        if (!taken[static_cast<std::size_t>(c)]) {
          taken[static_cast<std::size_t>(c)] = 1;
          coords.push_back(c);
        }
      }
    }

    for (std::int64_t c : coords) {
      const double x0 = inputs[t][c];
      const double h = opt.h_scale * (1.0 + std::abs(x0));
      const double margin = opt.kink_margin_mult * h;

      std::vector<std::uint8_t> sig_plus, sig_minus;
      bool hit_plus = false, hit_minus = false;

      inputs[t][c] = x0 + h;
      double f_plus = run(false, true, margin, nullptr, &sig_plus, &hit_plus);
      inputs[t][c] = x0 - h;
      double f_minus = run(false, true, margin, nullptr, &sig_minus, &hit_minus);
      inputs[t][c] = x0;

      FdCoordRecord rec;
      rec.tensor_index = static_cast<int>(t);
      rec.coord = c;
      rec.analytic = analytic[t][c];

      if (hit_plus || hit_minus || sig_plus != sig_minus) {
        rec.skipped = true;
        ++report.skipped;
        report.records.push_back(rec);
        continue;
      }

      rec.numeric = (f_plus - f_minus) / (2.0 * h);
      double denom = std::max({std::abs(rec.analytic), std::abs(rec.numeric),
                               opt.rel_floor});
      rec.rel_err = std::abs(rec.analytic - rec.numeric) / denom;
      ++report.checked;
      report.max_rel_err = std::max(report.max_rel_err, rec.rel_err);
      report.per_tensor_max[t] = std::max(report.per_tensor_max[t], rec.rel_err);
      report.records.push_back(rec);
    }
  }
  return report;
}

}  // namespace geogan
