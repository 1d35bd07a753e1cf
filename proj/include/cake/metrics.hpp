#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cake/datamodel.hpp"
#include "cake/numerics.hpp"

namespace cake {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes = kNumEmotions) : n_(n_classes), cells_(n_classes * n_classes, 0) {}

  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix cm(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw Error("metrics", "confusion matrix must be square");
      for (std::size_t c = 0; c < rows.size(); ++c) cm.add(r, c, rows[r][c]);
    }
    return cm;
  }

  std::size_t n_classes() const { return n_; }
  std::uint64_t operator()(std::size_t truth, std::size_t pred) const { return cells_[truth * n_ + pred]; }
  std::uint64_t total() const { return total_; }

  void add(std::size_t truth, std::size_t pred, std::uint64_t count = 1) {
    if (truth >= n_ || pred >= n_) throw Error("metrics", "class index out of range");
    cells_[truth * n_ + pred] += count;
    total_ += count;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.n_ != n_) throw Error("metrics", "cannot merge confusion matrices of different size");
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += o.cells_[i];
    total_ += o.total_;
    return *this;
  }

  std::uint64_t tp(std::size_t c) const { return (*this)(c, c); }
  std::uint64_t fp(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t r = 0; r < n_; ++r) s += r == c ? 0 : (*this)(r, c);
    return s;
  }
  std::uint64_t fn(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < n_; ++p) s += p == c ? 0 : (*this)(c, p);
    return s;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> cells_;
  std::uint64_t total_ = 0;
};

inline ConfusionMatrix confusion(std::span<const EmotionClass> preds, std::span<const EmotionClass> labels,
                                 std::size_t n_classes = kNumEmotions) {
  if (preds.size() != labels.size()) {
    throw Error("metrics", "confusion: " + std::to_string(preds.size()) + " predictions for " +
                               std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(index_of(labels[i]), index_of(preds[i]));
  return cm;
}

// F1 of one class; 0 whenever precision or recall is undefined or both are 0.
inline double class_f1(const ConfusionMatrix& cm, std::size_t c) {
  const double tp = static_cast<double>(cm.tp(c));
  const double fp = static_cast<double>(cm.fp(c));
  const double fn = static_cast<double>(cm.fn(c));
  if (tp + fp == 0 || tp + fn == 0) return 0.0;
  const double prec = tp / (tp + fp);
  const double rec = tp / (tp + fn);
  if (prec + rec == 0) return 0.0;
  return 2.0 * prec * rec / (prec + rec);
}

inline Vec64 per_class_f1(const ConfusionMatrix& cm) {
  Vec64 out(cm.n_classes());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = class_f1(cm, c);
  return out;
}

// Unweighted mean over all n_classes, absent classes included as 0.
inline double macro_f1(const ConfusionMatrix& cm) {
  double s = 0;
  for (std::size_t c = 0; c < cm.n_classes(); ++c) s += class_f1(cm, c);
  return s / static_cast<double>(cm.n_classes());
}

inline double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error("metrics", "accuracy undefined on an empty confusion matrix");
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < cm.n_classes(); ++c) trace += cm.tp(c);
  return static_cast<double>(trace) / static_cast<double>(cm.total());
}

enum class RecallSupport {
  present_only,  // classes with no true samples are left out of the mean
  all_classes,   // such classes count as recall 0
};

inline double mean_class_recall(const ConfusionMatrix& cm, RecallSupport mode = RecallSupport::present_only) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cm.n_classes(); ++c) {
    const auto support = cm.tp(c) + cm.fn(c);
    if (support == 0) {
      if (mode == RecallSupport::all_classes) ++n;
      continue;
    }
    s += static_cast<double>(cm.tp(c)) / static_cast<double>(support);
    ++n;
  }
  if (n == 0 || (mode == RecallSupport::all_classes && cm.total() == 0)) {
    throw Error("metrics", "mean class recall undefined: no class has any sample");
  }
  return s / static_cast<double>(n);
}

struct DomainScores {
  std::string domain;
  std::uint64_t support = 0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  double mean_recall = 0.0;
};

// Shortest round-trip decimal form; used for every number written to CSV so
// equal doubles always print identically.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_scores_csv(std::ostream& os, std::span<const DomainScores> rows, double weighted_f1) {
  os << "domain,support,macro_f1,accuracy,mean_class_recall\n";
  for (const auto& r : rows) {
    os << r.domain << ',' << r.support << ',' << format_double(r.macro_f1) << ','
       << format_double(r.accuracy) << ',' << format_double(r.mean_recall) << '\n';
  }
  os << "weighted,,"  << format_double(weighted_f1) << ",,\n";
}

inline void write_scores_text(std::ostream& os, std::span<const DomainScores> rows, double weighted_f1) {
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %9s %9s %9s\n", "domain", "support", "macro-F1", "accuracy", "mean-rec");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %8llu %9.4f %9.4f %9.4f\n", r.domain.c_str(),
                  static_cast<unsigned long long>(r.support), r.macro_f1, r.accuracy, r.mean_recall);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-16s %8s %9.4f\n", "weighted", "", weighted_f1);
  os << line;
}

inline void write_confusion_text(std::ostream& os, const ConfusionMatrix& cm) {
  char cell[32];
  os << "true\\pred";
  for (std::size_t c = 0; c < cm.n_classes(); ++c) {
    std::snprintf(cell, sizeof cell, " %9.9s", std::string(emotion_name(static_cast<EmotionClass>(c))).c_str());
    os << cell;
  }
  os << '\n';
  for (std::size_t r = 0; r < cm.n_classes(); ++r) {
    std::snprintf(cell, sizeof cell, "%-9.9s", std::string(emotion_name(static_cast<EmotionClass>(r))).c_str());
    os << cell;
    for (std::size_t c = 0; c < cm.n_classes(); ++c) {
      std::snprintf(cell, sizeof cell, " %9llu", static_cast<unsigned long long>(cm(r, c)));
      os << cell;
    }
    os << '\n';
  }
}

}  // namespace cake
