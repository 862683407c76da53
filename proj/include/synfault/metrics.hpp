#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "synfault/error.hpp"

namespace synfault::metrics {

/// K x K counts, row = ground truth, column = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {
    detail::require(classes >= 1, "confusion matrix needs at least one class");
  }

  /// From nested rows; every row must have K entries.
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix cm(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      detail::require<ShapeError>(rows[r].size() == rows.size(), "confusion matrix must be square");
      for (std::size_t c = 0; c < rows.size(); ++c) cm.at(r, c) = rows[r][c];
    }
    return cm;
  }

  static ConfusionMatrix from_predictions(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
    detail::require<ShapeError>(truth.size() == predicted.size(), "truth and prediction counts differ");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
  }

  void add(int truth, int predicted) {
    detail::require(truth >= 0 && static_cast<std::size_t>(truth) < k_ && predicted >= 0 && static_cast<std::size_t>(predicted) < k_,
                    "class index out of range");
    ++at(static_cast<std::size_t>(truth), static_cast<std::size_t>(predicted));
  }

  std::size_t classes() const { return k_; }
  std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }

  std::uint64_t row_sum(std::size_t r) const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < k_; ++c) s += at(r, c);
    return s;
  }
  std::uint64_t col_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t r = 0; r < k_; ++r) s += at(r, c);
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto v : counts_) s += v;
    return s;
  }
  std::uint64_t correct() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += at(i, i);
    return s;
  }

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

inline double accuracy(const ConfusionMatrix& cm) {
  detail::require(cm.total() > 0, "accuracy of an empty confusion matrix");
  return static_cast<double>(cm.correct()) / static_cast<double>(cm.total());
}

/// Mean per-class recall. Every class must have at least one test sample.
/// Evaluated as one division over the common denominator lcm(M_k) when that
/// fits in 64 bits, so balanced counts give exactly the plain accuracy.
inline double balanced_accuracy(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  std::vector<std::uint64_t> m(k);
  for (std::size_t c = 0; c < k; ++c) {
    m[c] = cm.row_sum(c);
    if (m[c] == 0) throw ParameterError("balanced accuracy: class " + std::to_string(c) + " has no test samples");
  }
  using u128 = unsigned __int128;
  constexpr u128 kLimit = u128(1) << 64;
  u128 l = 1;
  for (auto v : m) {
    l = l / std::gcd(static_cast<std::uint64_t>(l), v) * v;
    if (l * k >= kLimit) break;
  }
  if (l * k < kLimit) {
    u128 num = 0;
    for (std::size_t c = 0; c < k; ++c) num += static_cast<u128>(cm.at(c, c)) * (l / m[c]);
    if (num < kLimit) return static_cast<double>(static_cast<std::uint64_t>(num)) / static_cast<double>(static_cast<std::uint64_t>(l * k));
  }
  double s = 0.0;
  for (std::size_t c = 0; c < k; ++c) s += static_cast<double>(cm.at(c, c)) / static_cast<double>(m[c]);
  return s / static_cast<double>(k);
}

struct F1Scores {
  double macro = 0.0;
  double micro = 0.0;
  std::vector<double> per_class;
};

/// Per-class F1 = 2 TP / (2 TP + FP + FN), defined as 0 when the denominator
/// is 0. Micro F1 pools TP/FP/FN over classes.
inline F1Scores f1_scores(const ConfusionMatrix& cm) {
  F1Scores out;
  std::uint64_t tp_all = 0, fp_all = 0, fn_all = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    const std::uint64_t tp = cm.at(k, k);
    const std::uint64_t fp = cm.col_sum(k) - tp;
    const std::uint64_t fn = cm.row_sum(k) - tp;
    const std::uint64_t denom = 2 * tp + fp + fn;
    out.per_class.push_back(denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom));
    out.macro += out.per_class.back();
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  out.macro /= static_cast<double>(cm.classes());
  const std::uint64_t denom = 2 * tp_all + fp_all + fn_all;
  out.micro = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp_all) / static_cast<double>(denom);
  return out;
}

inline double cohens_kappa(const ConfusionMatrix& cm) {
  const double n = static_cast<double>(cm.total());
  detail::require(n > 0, "kappa of an empty confusion matrix");
  const double po = static_cast<double>(cm.correct()) / n;
  double pe = 0.0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    pe += (static_cast<double>(cm.row_sum(k)) / n) * (static_cast<double>(cm.col_sum(k)) / n);
  }
  if (pe >= 1.0) throw DegenerateInputError("kappa undefined: both raters use a single constant label");
  return (po - pe) / (1.0 - pe);
}

/// Scalar metrics of one evaluation.
struct Report {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double f1_macro = 0.0;
  double f1_micro = 0.0;
  double kappa = 0.0;
  std::uint64_t samples = 0;

  std::map<std::string, double> fields() const {
    return {{"accuracy", accuracy},
            {"balanced_accuracy", balanced_accuracy},
            {"f1_macro", f1_macro},
            {"f1_micro", f1_micro},
            {"kappa", kappa},
            {"samples", static_cast<double>(samples)}};
  }
};

/// All metrics of a confusion matrix. Kappa is reported as 0 when it is
/// undefined (a single class on both sides).
inline Report evaluate(const ConfusionMatrix& cm) {
  Report r;
  r.samples = cm.total();
  r.accuracy = accuracy(cm);
  r.balanced_accuracy = balanced_accuracy(cm);
  const auto f1 = f1_scores(cm);
  r.f1_macro = f1.macro;
  r.f1_micro = f1.micro;
  try {
    r.kappa = cohens_kappa(cm);
  } catch (const DegenerateInputError&) {
    r.kappa = 0.0;
  }
  return r;
}

/// Arithmetic mean of per-run metrics (not the metrics of a pooled matrix).
inline Report mean_report(std::span<const Report> runs) {
  detail::require(!runs.empty(), "mean of zero runs");
  Report m;
  for (const auto& r : runs) {
    m.accuracy += r.accuracy;
    m.balanced_accuracy += r.balanced_accuracy;
    m.f1_macro += r.f1_macro;
    m.f1_micro += r.f1_micro;
    m.kappa += r.kappa;
    m.samples += r.samples;
  }
  const double n = static_cast<double>(runs.size());
  m.accuracy /= n;
  m.balanced_accuracy /= n;
  m.f1_macro /= n;
  m.f1_micro /= n;
  m.kappa /= n;
  m.samples /= runs.size();
  return m;
}

/// "key=value key=value ..." on one line.
inline std::string to_key_value(const Report& r, const std::map<std::string, std::string>& extra = {}) {
  std::ostringstream os;
  os.precision(6);
  bool first = true;
  for (const auto& [k, v] : extra) {
    os << (first ? "" : " ") << k << "=" << v;
    first = false;
  }
  for (const auto& [k, v] : r.fields()) {
    os << (first ? "" : " ") << k << "=" << v;
    first = false;
  }
  return os.str();
}

/// Tab-separated table: header row then one row per entry.
inline void write_tsv(std::ostream& os, const std::vector<std::pair<std::map<std::string, std::string>, Report>>& rows) {
  if (rows.empty()) return;
  bool first = true;
  for (const auto& [k, v] : rows.front().first) {
    os << (first ? "" : "\t") << k;
    first = false;
  }
  for (const auto& [k, v] : rows.front().second.fields()) {
    os << (first ? "" : "\t") << k;
    first = false;
  }
  os << "\n";
  os.precision(6);
  for (const auto& [labels, report] : rows) {
    first = true;
    for (const auto& [k, v] : labels) {
      os << (first ? "" : "\t") << v;
      first = false;
    }
    for (const auto& [k, v] : report.fields()) {
      os << (first ? "" : "\t") << v;
      first = false;
    }
    os << "\n";
  }
}

inline std::string to_string(const ConfusionMatrix& cm) {
  std::ostringstream os;
  for (std::size_t r = 0; r < cm.classes(); ++r) {
    for (std::size_t c = 0; c < cm.classes(); ++c) os << (c ? "\t" : "") << cm.at(r, c);
    os << "\n";
  }
  return os.str();
}

}  // namespace synfault::metrics
