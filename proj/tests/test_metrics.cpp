#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mstnet/metrics.hpp"

using namespace mstnet;
using namespace mstnet::metrics;

namespace {

using Matrix = std::array<std::array<std::uint64_t, 3>, 3>;

// Definitional oracle: expand the matrix into (label, prediction) pairs and
// count one-vs-rest outcomes per class.
struct Reference {
  double precision = 0, recall = 0, f1 = 0, accuracy = 0, mcc = 0;
};

double triple_sum_mcc(const Matrix& c) {
  double num = 0;
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l)
      for (int m = 0; m < 3; ++m)
        num += static_cast<double>(c[k][k]) * static_cast<double>(c[l][m]) -
               static_cast<double>(c[k][l]) * static_cast<double>(c[m][k]);
  double d1 = 0, d2 = 0;
  for (int k = 0; k < 3; ++k) {
    double row_k = 0, col_k = 0, row_rest = 0, col_rest = 0;
    for (int l = 0; l < 3; ++l) {
      row_k += static_cast<double>(c[k][l]);
      col_k += static_cast<double>(c[l][k]);
    }
    for (int k2 = 0; k2 < 3; ++k2) {
      if (k2 == k) continue;
      for (int l = 0; l < 3; ++l) {
        row_rest += static_cast<double>(c[k2][l]);
        col_rest += static_cast<double>(c[l][k2]);
      }
    }
    d1 += row_k * row_rest;
    d2 += col_k * col_rest;
  }
  const double den = std::sqrt(d1) * std::sqrt(d2);
  return den == 0 ? 0.0 : num / den;
}

Reference reference(const Matrix& c) {
  std::vector<std::pair<int, int>> pairs;
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      for (std::uint64_t n = 0; n < c[t][p]; ++n) pairs.emplace_back(t, p);
  Reference r;
  std::size_t correct = 0;
  for (auto [t, p] : pairs) correct += t == p;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
  for (int k = 0; k < 3; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (auto [t, p] : pairs) {
      tp += t == k && p == k;
      fp += t != k && p == k;
      fn += t == k && p != k;
    }
    const double prec = tp + fp == 0 ? 0 : tp / (tp + fp);
    const double rec = tp + fn == 0 ? 0 : tp / (tp + fn);
    const double f1 = prec + rec == 0 ? 0 : 2 * prec * rec / (prec + rec);
    r.precision += prec / 3;
    r.recall += rec / 3;
    r.f1 += f1 / 3;
  }
  r.mcc = triple_sum_mcc(c);
  return r;
}

ConfusionMatrix make(const Matrix& m) {
  ConfusionMatrix c;
  c.counts = m;
  return c;
}

}  // namespace

TEST(Confusion, CountsPairs) {
  const std::vector<std::size_t> y{0, 1, 2, 2, 1, 0}, p{0, 2, 2, 1, 1, 1};
  const auto m = confusion(y, p);
  EXPECT_EQ(m.counts, (Matrix{{{1, 1, 0}, {0, 1, 1}, {0, 1, 1}}}));
  EXPECT_EQ(m.total(), 6u);
  EXPECT_EQ(m.trace(), 3u);
}

TEST(Confusion, RejectsBadInput) {
  const std::vector<std::size_t> y{0, 1}, p{0}, q{0, 3};
  EXPECT_THROW(confusion(y, p), DimensionError);
  EXPECT_THROW(confusion(y, q), DimensionError);
  EXPECT_THROW(macro_scores(ConfusionMatrix{}), DimensionError);
}

TEST(Scores, WorkedExample) {
  // predicted totals 1, 3, 2; true totals 2 each
  const auto s = evaluate(make({{{1, 1, 0}, {0, 1, 1}, {0, 1, 1}}}));
  EXPECT_NEAR(s.precision, (1.0 + 1.0 / 3 + 0.5) / 3, 1e-15);
  EXPECT_NEAR(s.recall, 0.5, 1e-15);
  EXPECT_NEAR(s.f1, (2.0 / 3 + 0.4 + 0.5) / 3, 1e-15);
  EXPECT_NEAR(s.accuracy, 0.5, 1e-15);
  EXPECT_NEAR(s.mcc, 6.0 / std::sqrt(22.0 * 24.0), 1e-15);  // (3*6 - 12) / sqrt((36-14)(36-12))
  EXPECT_NEAR(s.mcc, triple_sum_mcc({{{1, 1, 0}, {0, 1, 1}, {0, 1, 1}}}), 1e-15);
}

TEST(Scores, AgreeWithDefinitionsOnRandomMatrices) {
  std::mt19937_64 rng(1000);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix m{};
    const std::uint64_t hi = 1 + rng() % 40;
    for (auto& row : m)
      for (auto& v : row) v = (rng() % 4 == 0) ? 0 : rng() % (hi + 1);
    if (make(m).total() == 0) m[0][0] = 1;
    const auto s = evaluate(make(m));
    const auto r = reference(m);
    for (double d : {s.precision - r.precision, s.recall - r.recall, s.f1 - r.f1,
                     s.accuracy - r.accuracy, s.mcc - r.mcc})
      worst = std::max(worst, std::abs(d));
    ASSERT_GE(s.mcc, -1.0 - 1e-12);
    ASSERT_LE(s.mcc, 1.0 + 1e-12);
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Scores, PerfectClassification) {
  const auto s = evaluate(make({{{4, 0, 0}, {0, 3, 0}, {0, 0, 5}}}));
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 1.0);
  EXPECT_EQ(s.f1, 1.0);
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_NEAR(s.mcc, 1.0, 1e-15);
}

TEST(Scores, AllPredictedOneClass) {
  const auto s = evaluate(make({{{5, 0, 0}, {4, 0, 0}, {6, 0, 0}}}));
  EXPECT_EQ(s.class_precision[1], 0.0);  // 0/0
  EXPECT_EQ(s.class_precision[2], 0.0);
  EXPECT_EQ(s.class_f1[1], 0.0);
  EXPECT_NEAR(s.class_precision[0], 1.0 / 3, 1e-15);
  EXPECT_EQ(s.class_recall[0], 1.0);
  EXPECT_EQ(s.mcc, 0.0);  // zero denominator
  EXPECT_NEAR(s.accuracy, 1.0 / 3, 1e-15);
}

TEST(Scores, AllOneTrueClass) {
  const auto s = evaluate(make({{{0, 0, 0}, {0, 0, 0}, {2, 3, 4}}}));
  EXPECT_EQ(s.class_recall[0], 0.0);  // 0/0
  EXPECT_EQ(s.class_recall[1], 0.0);
  EXPECT_EQ(s.class_precision[2], 1.0);
  EXPECT_EQ(s.mcc, 0.0);
}

TEST(Scores, SingleCellMatrix) {
  const auto s = evaluate(make({{{0, 0, 0}, {0, 7, 0}, {0, 0, 0}}}));
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_NEAR(s.precision, 1.0 / 3, 1e-15);
  EXPECT_EQ(s.mcc, 0.0);
}

TEST(Scores, TotallyWrongTwoClassIsMinusOne) {
  const auto s = evaluate(make({{{0, 3, 0}, {3, 0, 0}, {0, 0, 0}}}));
  EXPECT_NEAR(s.mcc, -1.0, 1e-15);
  EXPECT_EQ(s.accuracy, 0.0);
}

TEST(Scores, BinaryCaseMatchesBinaryMcc) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double tp = 1 + rng() % 20, fn = rng() % 20, fp = rng() % 20, tn = 1 + rng() % 20;
    Matrix m{};
    m[0][0] = static_cast<std::uint64_t>(tp);
    m[0][1] = static_cast<std::uint64_t>(fn);
    m[1][0] = static_cast<std::uint64_t>(fp);
    m[1][1] = static_cast<std::uint64_t>(tn);
    const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    const double expected = den == 0 ? 0 : (tp * tn - fp * fn) / den;
    EXPECT_NEAR(mcc(make(m)), expected, 1e-12);
  }
}
