#include "ssac/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssac/errors.hpp"

namespace ssac {
inline namespace SSAC_ABI {

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t(0)); }

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) throw ContractError("confusion: label sequences differ in length");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || p < 0 || std::size_t(t) >= classes || std::size_t(p) >= classes) {
      throw ContractError("confusion: label out of range at position " + std::to_string(i));
    }
    ++cm.at(std::size_t(t), std::size_t(p));
  }
  return cm;
}

MetricsReport classification_metrics(const ConfusionMatrix& cm) {
  if (cm.classes == 0) throw ContractError("classification_metrics: no classes");
  MetricsReport r;
  r.cm = cm;
  const double total = double(cm.total());
  double trace = 0;
  for (std::size_t c = 0; c < cm.classes; ++c) {
    const double tp = double(cm.at(c, c));
    const double actual = double(cm.row_sum(c));
    const double predicted = double(cm.col_sum(c));
    if (actual == 0) throw ContractError("classification_metrics: class " + std::to_string(c) + " has no samples");
    ClassMetrics m;
    m.recall = tp / actual;
    m.precision = predicted > 0 ? tp / predicted : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.per_class.push_back(m);
    trace += tp;
  }
  const double n = double(cm.classes);
  r.acc = trace / total;
  for (const auto& m : r.per_class) {
    r.precision += m.precision / n;
    r.recall += m.recall / n;
    r.f1 += m.f1 / n;
  }
  r.ba = r.recall;
  return r;
}

double auroc(std::span<const double> scores_known, std::span<const double> scores_new) {
  if (scores_known.empty() || scores_new.empty()) throw ContractError("auroc: empty score sequence");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> all;
  all.reserve(scores_known.size() + scores_new.size());
  for (double s : scores_known) all.push_back({s, false});
  for (double s : scores_new) all.push_back({s, true});
  for (const auto& it : all)
    if (std::isnan(it.score)) throw NumericalError("auroc: NaN score");
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  // Sum of mid-ranks of the positives.
  double rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t pos = 0;
    while (j < all.size() && all[j].score == all[i].score) pos += all[j++].positive;
    const double mid = 0.5 * double(i + 1 + j);  // mean of ranks i+1 .. j
    rank_sum += mid * double(pos);
    i = j;
  }
  const double n1 = double(scores_new.size()), n0 = double(scores_known.size());
  return (rank_sum - n1 * (n1 + 1) / 2) / (n1 * n0);
}

SignTestResult sign_test(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() != b.size()) throw ContractError("sign_test: paired sequences differ in length");
  if (a.empty()) throw ContractError("sign_test: no pairs");
  SignTestResult r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) continue;
    ++r.n;
    r.wins += a[i] > b[i];
  }
  if (r.n > 0) {
    // Upper binomial tail sum_{j >= w} C(n, j) 2^-n, accumulated in log space.
    const double n = double(r.n);
    double top = -INFINITY;
    std::vector<double> terms;
    for (std::size_t j = r.wins; j <= r.n; ++j) {
      const double t = std::lgamma(n + 1) - std::lgamma(double(j) + 1) - std::lgamma(n - double(j) + 1) - n * std::log(2.0);
      terms.push_back(t);
      top = std::max(top, t);
    }
    double sum = 0;
    for (double t : terms) sum += std::exp(t - top);
    r.p_value = std::min(1.0, std::exp(top) * sum);
  }
  r.h = r.p_value < alpha ? 1 : 0;
  return r;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile: no values");
  if (!(q >= 0 && q <= 1)) throw ContractError("quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (double(values.size()) - 1) * q;
  const auto lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - double(lo)) * (values[hi] - values[lo]);
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw ContractError("mean_std: no values");
  MeanStd r;
  for (double v : values) r.mean += v / double(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / double(values.size() - 1));
  }
  return r;
}

}  // namespace SSAC_ABI
}  // namespace ssac
