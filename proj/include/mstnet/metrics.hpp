#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "mstnet/errors.hpp"

namespace mstnet::metrics {

inline constexpr std::size_t kClasses = 3;

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kClasses>, kClasses> counts{};

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
      for (auto v : row) t += v;
    return t;
  }

  std::uint64_t trace() const {
    std::uint64_t t = 0;
    for (std::size_t k = 0; k < kClasses; ++k) t += counts[k][k];
    return t;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> labels,
                                 std::span<const std::size_t> predictions) {
  if (labels.size() != predictions.size()) {
    throw DimensionError("confusion: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(predictions.size()) + " predictions");
  }
  ConfusionMatrix m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= kClasses || predictions[i] >= kClasses) {
      throw DimensionError("confusion: class index out of range at position " +
                           std::to_string(i));
    }
    ++m.counts[labels[i]][predictions[i]];
  }
  return m;
}

struct Scores {
  double precision = 0;  // macro
  double recall = 0;     // macro
  double f1 = 0;         // macro of per-class F1
  double accuracy = 0;
  double mcc = 0;
  std::array<double, kClasses> class_precision{};
  std::array<double, kClasses> class_recall{};
  std::array<double, kClasses> class_f1{};
};

namespace detail {
inline double ratio(double num, double den) { return den == 0 ? 0.0 : num / den; }
}  // namespace detail

// Per-class precision/recall/F1 with 0/0 := 0, macro-averaged; accuracy is
// trace/total.
inline Scores macro_scores(const ConfusionMatrix& m) {
  const std::uint64_t total = m.total();
  if (total == 0) throw DimensionError("macro_scores: empty confusion matrix");
  Scores s;
  for (std::size_t k = 0; k < kClasses; ++k) {
    double predicted = 0, actual = 0;
    for (std::size_t j = 0; j < kClasses; ++j) {
      predicted += static_cast<double>(m.counts[j][k]);
      actual += static_cast<double>(m.counts[k][j]);
    }
    const double tp = static_cast<double>(m.counts[k][k]);
    const double p = detail::ratio(tp, predicted);
    const double r = detail::ratio(tp, actual);
    s.class_precision[k] = p;
    s.class_recall[k] = r;
    s.class_f1[k] = detail::ratio(2 * p * r, p + r);
    s.precision += p / kClasses;
    s.recall += r / kClasses;
    s.f1 += s.class_f1[k] / kClasses;
  }
  s.accuracy = static_cast<double>(m.trace()) / static_cast<double>(total);
  return s;
}

// Multiclass Matthews correlation (Gorodkin's R_K):
// (c*s - sum_k p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2)),
// defined as 0 when the denominator vanishes.
inline double mcc(const ConfusionMatrix& m) {
  const double s = static_cast<double>(m.total());
  const double c = static_cast<double>(m.trace());
  double pt = 0, pp = 0, tt = 0;
  for (std::size_t k = 0; k < kClasses; ++k) {
    double p = 0, t = 0;
    for (std::size_t j = 0; j < kClasses; ++j) {
      p += static_cast<double>(m.counts[j][k]);
      t += static_cast<double>(m.counts[k][j]);
    }
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double den = std::sqrt(s * s - pp) * std::sqrt(s * s - tt);
  if (den == 0) return 0.0;
  return (c * s - pt) / den;
}

inline Scores evaluate(const ConfusionMatrix& m) {
  Scores s = macro_scores(m);
  s.mcc = mcc(m);
  return s;
}

}  // namespace mstnet::metrics
