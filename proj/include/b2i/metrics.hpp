#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "b2i/error.hpp"

namespace b2i {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {
    if (num_classes == 0) throw ParameterError("confusion matrix needs classes");
  }

  std::size_t num_classes() const noexcept { return k_; }

  void update(std::uint32_t truth, std::uint32_t pred) {
    if (truth >= k_ || pred >= k_) {
      throw LabelError("label pair (" + std::to_string(truth) + ", " +
                       std::to_string(pred) + ") out of range for " +
                       std::to_string(k_) + " classes");
    }
    ++counts_[truth * k_ + pred];
  }

  void update(std::span<const std::uint32_t> truth,
              std::span<const std::uint32_t> pred) {
    if (truth.size() != pred.size()) {
      throw ShapeError("confusion update: label and prediction counts differ");
    }
    for (std::size_t i = 0; i < truth.size(); ++i) update(truth[i], pred[i]);
  }

  void merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw ShapeError("cannot merge matrices of different size");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  }

  std::uint64_t count(std::size_t truth, std::size_t pred) const {
    return counts_.at(truth * k_ + pred);
  }
  std::uint64_t row_total(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < k_; ++p) s += counts_[truth * k_ + p];
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < k_; ++c) s += counts_[c * k_ + c];
    return s;
  }

  double accuracy() const {
    const std::uint64_t n = total();
    if (n == 0) throw EvaluationError("accuracy of an empty confusion matrix");
    return static_cast<double>(trace()) / static_cast<double>(n);
  }

  /// Undefined (nullopt) when the class has no samples.
  std::optional<double> class_accuracy(std::size_t c) const {
    if (c >= k_) throw LabelError("class " + std::to_string(c) + " out of range");
    const std::uint64_t n = row_total(c);
    if (n == 0) return std::nullopt;
    return static_cast<double>(counts_[c * k_ + c]) / static_cast<double>(n);
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

struct MetricsReport {
  std::uint64_t samples = 0;
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class;
  double macro_accuracy = 0.0;  // mean over classes that have samples
  std::optional<std::size_t> target_class;
  std::optional<double> target_accuracy;
};

inline MetricsReport report(const ConfusionMatrix& m,
                            std::optional<std::size_t> target_class = {}) {
  MetricsReport r;
  r.samples = m.total();
  r.accuracy = m.accuracy();
  double sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t c = 0; c < m.num_classes(); ++c) {
    r.per_class.push_back(m.class_accuracy(c));
    if (r.per_class.back()) {
      sum += *r.per_class.back();
      ++seen;
    }
  }
  r.macro_accuracy = sum / static_cast<double>(seen);
  if (target_class) {
    r.target_class = target_class;
    r.target_accuracy = m.class_accuracy(*target_class);
  }
  return r;
}

namespace detail {
inline std::string fixed(double v, int prec = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}
inline std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}
inline std::string pad_left(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}
}  // namespace detail

/// Aligned text: summary, per-class accuracies, then the confusion matrix.
inline std::string render_table(const ConfusionMatrix& m, const MetricsReport& r,
                                const std::vector<std::string>& labels) {
  using detail::fixed;
  using detail::pad_left;
  using detail::pad_right;
  const std::size_t k = m.num_classes();
  auto name = [&](std::size_t c) {
    return c < labels.size() ? labels[c] : std::to_string(c);
  };
  std::size_t w = 8;
  for (std::size_t c = 0; c < k; ++c) w = std::max(w, name(c).size() + 2);

  std::string out;
  out += "samples   " + std::to_string(r.samples) + "\n";
  out += "accuracy  " + fixed(r.accuracy) + "\n";
  out += "macro     " + fixed(r.macro_accuracy) + "\n";
  if (r.target_class) {
    out += "target    " + name(*r.target_class) + " " +
           (r.target_accuracy ? fixed(*r.target_accuracy) : "n/a") + "\n";
  }
  out += "\n" + pad_right("class", w) + pad_left("acc", 8) +
         pad_left("n", 8) + "\n";
  for (std::size_t c = 0; c < k; ++c) {
    out += pad_right(name(c), w) +
           pad_left(r.per_class[c] ? fixed(*r.per_class[c]) : "n/a", 8) +
           pad_left(std::to_string(m.row_total(c)), 8) + "\n";
  }
  out += "\n" + pad_right("true\\pred", w);
  for (std::size_t c = 0; c < k; ++c) out += pad_left(name(c), w);
  out += "\n";
  for (std::size_t t = 0; t < k; ++t) {
    out += pad_right(name(t), w);
    for (std::size_t p = 0; p < k; ++p)
      out += pad_left(std::to_string(m.count(t, p)), w);
    out += "\n";
  }
  return out;
}

/// One metric per line, key=value.
inline std::string render_kv(const ConfusionMatrix& m, const MetricsReport& r,
                             const std::vector<std::string>& labels) {
  using detail::fixed;
  auto name = [&](std::size_t c) {
    return c < labels.size() ? labels[c] : std::to_string(c);
  };
  std::string out;
  out += "samples=" + std::to_string(r.samples) + "\n";
  out += "accuracy=" + fixed(r.accuracy, 6) + "\n";
  out += "macro_accuracy=" + fixed(r.macro_accuracy, 6) + "\n";
  for (std::size_t c = 0; c < m.num_classes(); ++c) {
    out += "class_accuracy." + name(c) + "=" +
           (r.per_class[c] ? fixed(*r.per_class[c], 6) : "nan") + "\n";
  }
  if (r.target_class) {
    out += "target_class=" + name(*r.target_class) + "\n";
    out += "target_accuracy=" +
           (r.target_accuracy ? fixed(*r.target_accuracy, 6) : "nan") + "\n";
  }
  for (std::size_t t = 0; t < m.num_classes(); ++t)
    for (std::size_t p = 0; p < m.num_classes(); ++p)
      out += "confusion." + name(t) + "." + name(p) + "=" +
             std::to_string(m.count(t, p)) + "\n";
  return out;
}

}  // namespace b2i
