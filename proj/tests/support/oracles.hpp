#pragma once

#include <cmath>
#include <set>
#include <span>
#include <vector>

#include "triage/evaluator.hpp"

namespace oracle {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts confusion(std::span<const triage::Verdict> v, std::span<const triage::Label> y) {
  Counts c;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int p = v[i].predicted == triage::Label::TruePositive;
    const int t = y[i] == triage::Label::TruePositive;
    if (p && t) ++c.tp;
    if (p && !t) ++c.fp;
    if (!p && t) ++c.fn;
    if (!p && !t) ++c.tn;
  }
  return c;
}

// Pairwise: P(score_pos > score_neg) + 0.5 P(tie).
inline double auc(std::span<const double> s, std::span<const triage::Label> y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != triage::Label::TruePositive) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] == triage::Label::TruePositive) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Sum over distinct thresholds of precision(>= t) * recall increment.
inline double average_precision(std::span<const double> s, std::span<const triage::Label> y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double positives = 0;
  for (auto l : y) positives += l == triage::Label::TruePositive;
  double ap = 0, prev = 0;
  for (double t : thresholds) {
    double tp = 0, k = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        ++k;
        tp += y[i] == triage::Label::TruePositive;
      }
    }
    ap += (tp / positives - prev) * (tp / k);
    prev = tp / positives;
  }
  return ap;
}

inline double mcc(const Counts& c) {
  const double d = double(c.tp + c.fp) * double(c.tp + c.fn) * double(c.tn + c.fp) * double(c.tn + c.fn);
  return d == 0 ? 0.0 : (double(c.tp) * double(c.tn) - double(c.fp) * double(c.fn)) / std::sqrt(d);
}

}  // namespace oracle
