#pragma once

// Unimodal objective stubs and trace invariant checks shared by the tuner tests and the
// acceptance binary.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ftclip/tuner.hpp"

namespace ftclip::test {

struct Stub {
  std::string name;
  double act_max;
  std::function<double(double)> auc;
};

inline std::vector<Stub> unimodal_stubs() {
  return {
      {"quadratic", 9.0, [](double t) { return 1.0 - std::pow((t - 3.0) / 10.0, 2); }},
      {"asymmetric_bell", 12.0,
       [](double t) { return t < 7.5 ? std::exp(-std::pow((t - 7.5) / 4.0, 2)) : std::exp(-std::pow((t - 7.5) / 1.2, 2)); }},
      {"plateau", 10.0, [](double t) { return std::min(1.0, 0.2 + t / 5.0) - (t > 8.0 ? (t - 8.0) * 0.3 : 0.0); }},
  };
}

/// Grid argmax over [0, act_max] at resolution act_max / 1e4; returns every maximizer's range.
inline std::pair<double, double> brute_force_argmax(const Stub& s) {
  constexpr int n = 10000;
  double best = -INFINITY, lo = 0, hi = 0;
  for (int i = 0; i <= n; ++i) {
    const double t = s.act_max * i / n, v = s.auc(t);
    if (v > best + 1e-12) {
      best = v;
      lo = hi = t;
    } else if (std::abs(v - best) <= 1e-12) {
      hi = t;
    }
  }
  return {lo, hi};
}

/// Empty string when every iteration nests in the previous and shrinks by exactly 1/3 (edge
/// branches) or 2/3 (interior branch); otherwise a description of the first violation.
inline std::string check_trace_invariants(const TuneTrace& tr, double act_max, const TuneConfig& cfg) {
  if (tr.iterations.size() > static_cast<std::size_t>(cfg.max_iterations)) return "trace longer than N";
  for (std::size_t i = 0; i < tr.iterations.size(); ++i) {
    const auto& it = tr.iterations[i];
    for (double t : it.thresholds)
      if (t < 0.0 || t > act_max) return "threshold outside [0, act_max]";
    if (i == 0) {
      if (it.interval.lo != 0.0 || it.interval.hi != act_max) return "first interval is not [0, act_max]";
      continue;
    }
    const auto& prev = tr.iterations[i - 1];
    if (!prev.interval.contains(it.interval)) return "interval not nested at iteration " + std::to_string(i + 1);
    const double ratio = it.interval.width() / prev.interval.width();
    const std::size_t idx = argmax_boundary(prev.auc);
    const double want = (idx == 0 || idx == 3) ? 1.0 / 3.0 : 2.0 / 3.0;
    if (std::abs(ratio - want) > 1e-9) return "width ratio " + std::to_string(ratio) + " at iteration " + std::to_string(i + 1);
  }
  bool plateau_ok = false;
  if (!tr.iterations.empty()) {
    const auto& last = tr.iterations.back();
    double md = 0;
    for (double d : last.deltas) md = std::max(md, d);
    plateau_ok = md <= cfg.delta && last.counter + 1 >= cfg.min_iterations;
  }
  if ((tr.exit_reason == ExitReason::plateau) != plateau_ok) return "exit reason disagrees with deltas";
  return {};
}

}  // namespace ftclip::test
