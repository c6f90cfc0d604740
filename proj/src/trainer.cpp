#include "ssac/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ssac/errors.hpp"
#include "ssac/random.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace {

// Seed streams derived from TrainConfig::seed.
constexpr std::uint64_t kStreamEncoder = 1;
constexpr std::uint64_t kStreamSubspace = 2;
constexpr std::uint64_t kStreamSvd = 3;
constexpr std::uint64_t kStreamShuffle = 4;
constexpr std::uint64_t kStreamLinear = 5;

const char* form_name(DistanceForm f) { return f == DistanceForm::Centered ? "centered" : "literal"; }

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

const char* head_name(HeadKind h) { return h == HeadKind::Subspace ? "subspace" : "linear"; }

HeadKind parse_head(const std::string& name) {
  if (name == "subspace") return HeadKind::Subspace;
  if (name == "linear") return HeadKind::Linear;
  throw ConfigError("head", "expected 'subspace' or 'linear', got '" + name + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const char* key, const std::string& what) { throw ConfigError(key, what); };
  if (!(lr > 0) || !finite(lr)) fail("lr", "must be positive");
  if (!(weight_decay >= 0) || !finite(weight_decay)) fail("weight_decay", "must be non-negative");
  if (batch_size < 2) fail("batch_size", "must be at least 2");
  if (epochs < 1) fail("epochs", "must be at least 1");
  if (n_init > epochs) fail("n_init", "must not exceed epochs");
  if (p < 1) fail("p", "must be positive");
  if (k > p) fail("k", "must not exceed p");
  if (!(lambda >= 0) || !finite(lambda)) fail("lambda", "must be non-negative");
  if (!finite(m_near) || !finite(m_far)) fail("m_far", "margins must be finite");
  encoder_config().validate();
  loss_config().validate();
}

KeyValueBinder TrainConfig::binder() {
  KeyValueBinder b;
  b.bind("lr", lr)
      .bind("weight_decay", weight_decay)
      .bind("batch_size", batch_size)
      .bind("epochs", epochs)
      .bind("k", k)
      .bind("lambda", lambda)
      .bind("m_near", m_near)
      .bind("m_far", m_far)
      .bind("n_init", n_init)
      .bind("p", p)
      .bind("seed", seed)
      .bind("ce_only", ce_only);
  b.bind("channels", [this](const std::string& v) {
    std::istringstream in(v);
    std::vector<std::size_t> out;
    std::string tok;
    while (in >> tok) {
      const long long c = parse_integer("channels", tok);
      if (c < 1) throw ConfigError("channels", "widths must be positive");
      out.push_back(std::size_t(c));
    }
    channels = std::move(out);
  });
  b.bind("distance_form", [this](const std::string& v) {
    if (v == "centered") form = DistanceForm::Centered;
    else if (v == "literal") form = DistanceForm::Literal;
    else throw ConfigError("distance_form", "expected 'centered' or 'literal', got '" + v + "'");
  });
  b.bind("ce_reduction", [this](const std::string& v) {
    if (v == "sum") ce_reduction = Reduction::Sum;
    else if (v == "mean") ce_reduction = Reduction::Mean;
    else throw ConfigError("ce_reduction", "expected 'sum' or 'mean', got '" + v + "'");
  });
  b.bind("head", [this](const std::string& v) { head = parse_head(v); });
  return b;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  return {{"lr", format_real(lr)},
          {"weight_decay", format_real(weight_decay)},
          {"batch_size", std::to_string(batch_size)},
          {"epochs", std::to_string(epochs)},
          {"k", std::to_string(k)},
          {"lambda", format_real(lambda)},
          {"m_near", format_real(m_near)},
          {"m_far", format_real(m_far)},
          {"n_init", std::to_string(n_init)},
          {"p", std::to_string(p)},
          {"seed", std::to_string(seed)},
          {"channels", join_sizes(channels)},
          {"distance_form", form_name(form)},
          {"ce_reduction", ce_reduction == Reduction::Sum ? "sum" : "mean"},
          {"head", head_name(head)},
          {"ce_only", ce_only ? "true" : "false"}};
}

EncoderConfig TrainConfig::encoder_config() const {
  EncoderConfig e;
  e.p = p;
  e.channels = channels;
  return e;
}

LossConfig TrainConfig::loss_config() const {
  LossConfig l;
  l.lambda = static_cast<Real>(lambda);
  l.m_near = static_cast<Real>(m_near);
  l.m_far = static_cast<Real>(m_far);
  l.ce_reduction = ce_reduction;
  return l;
}

TrainConfig load_train_config(const std::string& path) {
  TrainConfig cfg;
  cfg.binder().apply(load_key_values(path));
  cfg.validate();
  return cfg;
}

double cosine_lr(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.epochs) {
    throw ContractError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(cfg.epochs)));
}

void OptimizerState::reset(std::size_t first, std::size_t count) {
  if (first + count > slots.size()) throw ContractError("OptimizerState::reset: slot range out of bounds");
  for (std::size_t i = first; i < first + count; ++i) slots[i] = AdamSlot{};
}

void adam_step(std::span<const Tensor> params, OptimizerState& state, double lr, double weight_decay) {
  if (state.slots.empty()) state.slots.resize(params.size());
  if (state.slots.size() != params.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(state.slots.size()) + " optimizer slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    for (Real g : params[i].grad()) {
      if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient in parameter " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i];
    AdamSlot& slot = state.slots[i];
    const std::size_t n = t.numel();
    if (slot.m.size() != n) {
      slot.m.assign(n, 0.0);
      slot.v.assign(n, 0.0);
      slot.step = 0;
    }
    ++slot.step;
    const double c1 = 1.0 - std::pow(state.beta1, double(slot.step));
    const double c2 = 1.0 - std::pow(state.beta2, double(slot.step));
    auto theta = t.mutable_data();
    const bool has = t.has_grad();
    auto grad = has ? t.grad() : std::span<const Real>{};
    for (std::size_t j = 0; j < n; ++j) {
      const double g = (has ? double(grad[j]) : 0.0) + weight_decay * double(theta[j]);
      slot.m[j] = state.beta1 * slot.m[j] + (1.0 - state.beta1) * g;
      slot.v[j] = state.beta2 * slot.v[j] + (1.0 - state.beta2) * g * g;
      const double update = lr * (slot.m[j] / c1) / (std::sqrt(slot.v[j] / c2) + state.epsilon);
      theta[j] = static_cast<Real>(double(theta[j]) - update);
    }
  }
}

std::size_t Model::classes() const { return head == HeadKind::Subspace ? subspaces.classes() : linear_b.dim(0); }

std::vector<Tensor> Model::learnable() const {
  std::vector<Tensor> out = encoder.learnable();
  if (head == HeadKind::Subspace) {
    for (auto& t : subspaces.learnable()) out.push_back(t);
  } else {
    out.push_back(linear_w);
    out.push_back(linear_b);
  }
  return out;
}

std::size_t Model::head_learnable_count() const {
  return head == HeadKind::Subspace ? subspaces.learnable_count() : linear_w.numel() + linear_b.numel();
}

Model Model::clone() const {
  Model c;
  c.encoder = encoder.clone();
  c.head = head;
  if (head == HeadKind::Subspace) {
    c.subspaces = subspaces.clone();
  } else {
    c.linear_w = linear_w.detach(true);
    c.linear_b = linear_b.detach(true);
  }
  return c;
}

Model model_init(const TrainConfig& cfg, std::size_t classes) {
  if (classes < 2) throw ContractError("model_init: at least two classes required");
  Model m;
  m.encoder = encoder_init(cfg.encoder_config(), derive_seed(cfg.seed, kStreamEncoder));
  m.head = cfg.head;
  if (cfg.head == HeadKind::Subspace) {
    m.subspaces = SubspaceSet::random(classes, cfg.p, cfg.k, derive_seed(cfg.seed, kStreamSubspace));
    m.subspaces.form = cfg.form;
  } else {
    Rng rng(derive_seed(cfg.seed, kStreamLinear));
    const double sd = 1.0 / std::sqrt(double(cfg.p));
    std::vector<Real> w(cfg.p * classes);
    for (auto& v : w) v = static_cast<Real>(sd * normal(rng));
    m.linear_w = Tensor::from_data({cfg.p, classes}, std::move(w), true);
    m.linear_b = Tensor::zeros({classes}, true);
  }
  return m;
}

Tensor head_distances(const Model& model, const Tensor& features) {
  if (model.head == HeadKind::Subspace) return distances(features, model.subspaces);
  return neg(add_bias(matmul(features, model.linear_w), model.linear_b));
}

StepLosses forward_backward(Model& model, const Tensor& x, std::span<const int> labels, const TrainConfig& cfg) {
  model.encoder.mode = Mode::Train;
  Tape tape;
  StepLosses out;
  {
    TapeScope scope(tape);
    const Tensor f = encode(model.encoder, x);
    const Tensor d = head_distances(model, f);
    Tensor total;
    if (cfg.ce_only || model.head == HeadKind::Linear) {
      total = cross_entropy(d, labels, cfg.ce_reduction);
      out.ce = total.item();
    } else {
      const LossParts parts = total_loss(BatchDistances{d, {labels.begin(), labels.end()}}, cfg.loss_config());
      total = parts.total;
      out.ce = parts.ce.item();
      if (parts.pos.defined()) {
        out.pos = parts.pos.item();
        out.neg = parts.neg.item();
        out.ineq = parts.ineq.item();
      }
    }
    out.total = total.item();
    if (!std::isfinite(out.total)) return out;
    backward(total, tape);
  }
  return out;
}

Tensor encode_all(Model& model, const PointSet& set, std::size_t batch_size) {
  if (set.size() == 0) throw ContractError("encode_all: empty point set");
  const Mode saved = model.encoder.mode;
  model.encoder.mode = Mode::Eval;
  std::vector<Real> reps;
  std::size_t p = 0;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    const Tensor f = encode(model.encoder, set.batch(idx));
    p = f.dim(1);
    reps.insert(reps.end(), f.data().begin(), f.data().end());
  }
  model.encoder.mode = saved;
  return Tensor::from_data({set.size(), p}, std::move(reps));
}

void svd_warm_reinit(Model& model, const PointSet& train_set, OptimizerState& opt, std::size_t k,
                     std::uint64_t seed) {
  if (model.head != HeadKind::Subspace) throw ContractError("svd_warm_reinit: model has no subspace head");
  const std::size_t classes = model.subspaces.classes();
  const Tensor reps = encode_all(model, train_set);
  const std::size_t p = reps.dim(1);
  std::vector<std::vector<Real>> grouped(classes);
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const int y = train_set.labels[i];
    if (y < 0 || std::size_t(y) >= classes) throw ContractError("svd_warm_reinit: label out of range");
    auto row = reps.data().subspan(i * p, p);
    grouped[std::size_t(y)].insert(grouped[std::size_t(y)].end(), row.begin(), row.end());
  }
  std::vector<Tensor> by_class;
  for (std::size_t c = 0; c < classes; ++c) {
    if (grouped[c].empty()) throw ContractError("svd_warm_reinit: class " + std::to_string(c) + " has no samples");
    const std::size_t m = grouped[c].size() / p;
    by_class.push_back(Tensor::from_data({m, p}, std::move(grouped[c])));
  }
  const DistanceForm form = model.subspaces.form;
  model.subspaces = svd_initialize(by_class, k, seed);
  model.subspaces.form = form;
  if (!opt.slots.empty()) opt.reset(model.head_offset(), model.subspaces.learnable().size());
}

Inference infer(Model& model, const Tensor& points) {
  Tensor x = points;
  if (points.rank() == 2 && points.dim(1) == 3) {
    x = reshape(points, {1, points.dim(0), 3});
  } else if (!(points.rank() == 3 && points.dim(0) == 1 && points.dim(2) == 3)) {
    throw DimensionError("infer: expected N x 3 points, got " + shape_str(points.shape()));
  }
  PointSet one;
  one.points = x.dim(1);
  one.clouds.emplace_back(x.data().begin(), x.data().end());
  one.labels.push_back(0);
  one.ids.emplace_back();
  return infer_all(model, one, 1).front();
}

std::vector<Inference> infer_all(Model& model, const PointSet& set, std::size_t batch_size) {
  const Tensor reps = encode_all(model, set, batch_size);
  const Tensor d = head_distances(model, reps);
  const std::size_t c = d.dim(1);
  std::vector<Inference> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto row = d.data().subspan(i * c, c);
    Inference& r = out[i];
    r.distances.assign(row.begin(), row.end());
    r.score = anomaly_score(row);
    r.probabilities = class_probabilities(row);
    r.predicted = classify(row);
  }
  return out;
}

MetricsReport evaluate(Model& model, const PointSet& set, std::size_t batch_size) {
  const auto results = infer_all(model, set, batch_size);
  std::vector<int> predicted;
  for (const auto& r : results) predicted.push_back(r.predicted);
  return classification_metrics(confusion(set.labels, predicted, model.classes()));
}

std::string EpochRecord::line() const {
  std::ostringstream s;
  s << "epoch=" << epoch << " lr=" << format_real(lr) << " loss=" << format_real(losses.total)
    << " ce=" << format_real(losses.ce) << " pos=" << format_real(losses.pos) << " neg=" << format_real(losses.neg)
    << " ineq=" << format_real(losses.ineq) << " val_acc=" << format_real(val_acc) << " val_ba=" << format_real(val_ba)
    << " val_f1=" << format_real(val_f1);
  return s.str();
}

TrainResult train(const PointSet& train_set, const PointSet& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() == 0) throw ContractError("train: empty training set");
  if (val_set.size() == 0) throw ContractError("train: empty validation set");
  int max_label = -1;
  for (int y : train_set.labels) {
    if (y < 0) throw ContractError("train: new-type (label -1) sample in the training split");
    max_label = std::max(max_label, y);
  }
  const std::size_t classes = std::size_t(max_label) + 1;
  std::vector<std::size_t> per_class(classes, 0);
  for (int y : train_set.labels) ++per_class[std::size_t(y)];
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class[c] == 0) throw ContractError("train: class " + std::to_string(c) + " has no training samples");
  }
  for (int y : val_set.labels) {
    if (y < 0 || std::size_t(y) >= classes) throw ContractError("train: validation label outside the training classes");
  }

  Model model = model_init(cfg, classes);
  const bool warm = cfg.head == HeadKind::Subspace;
  OptimizerState opt;
  TrainResult result;
  double best_ba = -1;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg);
    if (warm && epoch < cfg.n_init) {
      svd_warm_reinit(model, train_set, opt, cfg.k, derive_seed(derive_seed(cfg.seed, kStreamSvd), epoch));
      result.events.push_back({TrainEvent::Kind::Reinit, epoch, 0});
    }
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(derive_seed(cfg.seed, kStreamShuffle), epoch));
    shuffle(order, rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    const std::vector<Tensor> params = model.learnable();
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train_set.labels[i]);
      const StepLosses l = forward_backward(model, train_set.batch(idx), labels, cfg);
      if (!std::isfinite(l.total)) {
        std::ostringstream s;
        s << "non-finite loss at epoch " << epoch << " batch " << batch << ": total=" << l.total << " ce=" << l.ce
          << " pos=" << l.pos << " neg=" << l.neg << " ineq=" << l.ineq;
        throw NumericalError(s.str());
      }
      adam_step(params, opt, lr, cfg.weight_decay);
      for (const Tensor& t : params) {
        Tensor h = t;
        h.clear_grad();
      }
      result.events.push_back({TrainEvent::Kind::Step, epoch, batch});
      result.steps.push_back({epoch, batch, l});
      rec.losses.total += l.total;
      rec.losses.ce += l.ce;
      rec.losses.pos += l.pos;
      rec.losses.neg += l.neg;
      rec.losses.ineq += l.ineq;
    }

    const MetricsReport val = evaluate(model, val_set);
    rec.val_acc = val.acc;
    rec.val_ba = val.ba;
    rec.val_f1 = val.f1;
    result.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (val.ba >= best_ba) {
      best_ba = val.ba;
      result.best_model = TrainedModel{model.clone(), cfg, val, epoch};
      result.best_model.model.encoder.mode = Mode::Eval;
    }
    if (epoch + 1 == cfg.epochs) {
      model.encoder.mode = Mode::Eval;
      result.final_model = TrainedModel{std::move(model), cfg, val, epoch};
    }
  }
  return result;
}

TrainResult mlp_baseline_train(const PointSet& train_set, const PointSet& val_set, TrainConfig cfg,
                               const EpochCallback& on_epoch) {
  cfg.head = HeadKind::Linear;
  cfg.ce_only = true;
  return train(train_set, val_set, cfg, on_epoch);
}

}  // namespace SSAC_ABI
}  // namespace ssac
