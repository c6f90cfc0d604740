#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ssac/core.hpp"

namespace ssac {
inline namespace SSAC_ABI {

/// Rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;  // classes x classes, row-major

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t c) : classes(c), counts(c * c, 0) {}
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * classes + pred]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes);

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct MetricsReport {
  double acc = 0;
  double ba = 0;
  /// Macro averages over classes.
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::vector<ClassMetrics> per_class;
  std::optional<double> auroc;
  ConfusionMatrix cm;
  int replication = -1;
  std::uint64_t seed = 0;
};

/// ACC = trace / total, BA = mean recall, macro precision/recall/F1. A class
/// with no predicted positives has precision 0; F1 is 0 when P + R = 0.
MetricsReport classification_metrics(const ConfusionMatrix& cm);

/// Mann-Whitney estimate of P(score_new > score_known), ties counted 1/2.
double auroc(std::span<const double> scores_known, std::span<const double> scores_new);

struct SignTestResult {
  int h = 0;
  double p_value = 1;
  std::size_t n = 0;     // non-tied pairs
  std::size_t wins = 0;  // pairs where a > b
};

/// One-sided exact sign test of "a is not superior to b".
SignTestResult sign_test(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

/// Linear-interpolation quantile (the R type 7 estimator), q in [0, 1].
double quantile(std::vector<double> values, double q);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

}  // namespace SSAC_ABI
}  // namespace ssac
