#include "ssac/commands.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ssac/errors.hpp"
#include "ssac/io.hpp"
#include "ssac/random.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string csv_real(double v) { return std::isnan(v) ? "nan" : format_real(v); }

// Runs fn(i) for i in [0, n) on up to `threads` workers. Every item runs even
// if another fails; the first failure (by index) is rethrown afterwards.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min<std::size_t>(n, std::size_t(std::max(threads, 1))));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void check_classes(const TrainedModel& tm, const DatasetManifest& m) {
  if (tm.model.classes() != m.classes()) {
    throw ContractError("checkpoint has " + std::to_string(tm.model.classes()) + " classes but the manifest has " +
                        std::to_string(m.classes()));
  }
}

ordered_json metrics_object(const MetricsReport& r, const std::vector<std::string>& names) {
  ordered_json j;
  j["acc"] = r.acc;
  j["ba"] = r.ba;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["auroc"] = r.auroc ? ordered_json(*r.auroc) : ordered_json(nullptr);
  ordered_json per = ordered_json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    per.push_back({{"class", c < names.size() ? names[c] : std::to_string(c)},
                   {"precision", r.per_class[c].precision},
                   {"recall", r.per_class[c].recall},
                   {"f1", r.per_class[c].f1}});
  }
  j["per_class"] = per;
  ordered_json cm = ordered_json::array();
  for (std::size_t t = 0; t < r.cm.classes; ++t) {
    ordered_json row = ordered_json::array();
    for (std::size_t p = 0; p < r.cm.classes; ++p) row.push_back(r.cm.at(t, p));
    cm.push_back(row);
  }
  j["confusion"] = cm;
  j["replication"] = r.replication;
  j["seed"] = r.seed;
  return j;
}

// Test-split metrics plus AUROC of new-type scores against known test scores.
MetricsReport test_report(Model& model, const DatasetManifest& m) {
  const PointSet test = load_split(m, "test");
  const auto known = infer_all(model, test);
  std::vector<int> predicted;
  std::vector<double> sk;
  for (const auto& r : known) {
    predicted.push_back(r.predicted);
    sk.push_back(r.score);
  }
  MetricsReport rep = classification_metrics(confusion(test.labels, predicted, model.classes()));
  if (!m.split("new").empty()) {
    std::vector<double> sn;
    for (const auto& r : infer_all(model, load_split(m, "new"))) sn.push_back(r.score);
    rep.auroc = auroc(sk, sn);
  }
  return rep;
}

void write_epoch_log(const std::string& path, const TrainResult& r) {
  std::string text;
  for (const auto& e : r.epochs) text += e.line() + "\n";
  write_file(path, text);
}

TrainResult run_training(const DatasetManifest& m, const TrainConfig& cfg) {
  const PointSet train_set = load_split(m, "train");
  const PointSet val_set = load_split(m, "val");
  return train(train_set, val_set, cfg);
}

}  // namespace

TrainConfig resolve_train_config(const std::string& config_path, const std::vector<KeyValueEntry>& overrides) {
  TrainConfig cfg;
  auto binder = cfg.binder();
  if (!config_path.empty()) binder.apply(load_key_values(config_path));
  binder.apply(overrides);
  cfg.validate();
  return cfg;
}

std::string cmd_gen(const std::string& config_path, const std::string& out_dir, std::uint64_t seed, int threads,
                    std::ostream& log) {
  const GeneratorConfig cfg = config_path.empty() ? GeneratorConfig{} : load_generator_config(config_path);
  const DatasetManifest m = generate_dataset(cfg, seed, out_dir, threads);
  log << "generated " << m.samples.size() << " samples in " << out_dir << ":";
  for (auto split : kSplits) log << " " << split << "=" << m.split(split).size();
  log << "\n";
  return join(out_dir, "manifest.json");
}

TrainOutputs cmd_train(const std::string& manifest_path, const TrainConfig& cfg, const std::string& out_dir,
                       std::ostream& log) {
  const DatasetManifest m = read_manifest(manifest_path);
  for (auto split : {"train", "val"}) {
    for (const auto* r : m.split(split)) {
      if (r->label < 0) throw ContractError("new-type sample " + r->id + " in the " + split + " split");
    }
  }
  ensure_directory(out_dir);
  TrainOutputs out;
  out.best_checkpoint = join(out_dir, "best.ckpt");
  out.final_checkpoint = join(out_dir, "final.ckpt");
  out.log_path = join(out_dir, "train.log");
  const PointSet train_set = load_split(m, "train");
  const PointSet val_set = load_split(m, "val");
  std::ofstream epoch_log(out.log_path, std::ios::binary | std::ios::trunc);
  out.result = train(train_set, val_set, cfg, [&](const EpochRecord& e) {
    epoch_log << e.line() << "\n";
    epoch_log.flush();
  });
  epoch_log.close();
  save_checkpoint(out.best_checkpoint, out.result.best_model);
  save_checkpoint(out.final_checkpoint, out.result.final_model);
  const auto& best = out.result.best_model;
  const auto& fin = out.result.final_model;
  log << "final epoch " << fin.epoch << ": val_acc=" << format_real(fin.validation.acc)
      << " val_ba=" << format_real(fin.validation.ba) << " val_f1=" << format_real(fin.validation.f1) << "\n";
  log << "best epoch " << best.epoch << ": val_acc=" << format_real(best.validation.acc)
      << " val_ba=" << format_real(best.validation.ba) << " val_f1=" << format_real(best.validation.f1) << "\n";
  log << "checkpoints: " << out.best_checkpoint << " " << out.final_checkpoint << "\n";
  return out;
}

std::string report_json(const MetricsReport& r, const std::vector<std::string>& class_names, const std::string& split) {
  ordered_json j;
  j["split"] = split;
  j["classes"] = class_names;
  const ordered_json body = metrics_object(r, class_names);
  for (const auto& [k, v] : body.items()) j[k] = v;
  return j.dump(1) + "\n";
}

MetricsReport cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path, const std::string& split,
                       const std::string& out_dir, std::ostream& log) {
  TrainedModel tm = load_checkpoint(checkpoint_path);
  const DatasetManifest m = read_manifest(manifest_path);
  check_classes(tm, m);
  if (split == "new") throw ContractError("eval: the new-type pool has no class labels; use detect");
  const PointSet set = load_split(m, split);
  if (set.size() == 0) throw ContractError("eval: split '" + split + "' is empty");
  const auto results = infer_all(tm.model, set);
  std::vector<int> predicted;
  for (const auto& r : results) predicted.push_back(r.predicted);
  MetricsReport rep = classification_metrics(confusion(set.labels, predicted, tm.model.classes()));
  rep.seed = tm.config.seed;

  const std::size_t c = tm.model.classes();
  std::string csv = "id,true,predicted,score";
  for (std::size_t k = 0; k < c; ++k) csv += ",p_" + std::to_string(k);
  for (std::size_t k = 0; k < c; ++k) csv += ",d_" + std::to_string(k);
  csv += "\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& r = results[i];
    csv += set.ids[i] + "," + std::to_string(set.labels[i]) + "," + std::to_string(r.predicted) + "," +
           csv_real(r.score);
    for (Real p : r.probabilities) csv += "," + csv_real(p);
    for (Real d : r.distances) csv += "," + csv_real(d);
    csv += "\n";
  }
  ensure_directory(out_dir);
  write_file(join(out_dir, "report_" + split + ".json"), report_json(rep, m.class_names, split));
  write_file(join(out_dir, "predictions_" + split + ".csv"), csv);
  log << split << ": n=" << set.size() << " acc=" << format_real(rep.acc) << " ba=" << format_real(rep.ba)
      << " precision=" << format_real(rep.precision) << " recall=" << format_real(rep.recall)
      << " f1=" << format_real(rep.f1) << "\n";
  return rep;
}

DetectionReport cmd_detect(const std::string& checkpoint_path, const std::string& manifest_path,
                           const std::string& out_dir, double q, std::ostream& log) {
  TrainedModel tm = load_checkpoint(checkpoint_path);
  const DatasetManifest m = read_manifest(manifest_path);
  check_classes(tm, m);
  if (m.split("new").empty()) throw ContractError("detect: the manifest has no new-type samples");
  const PointSet val = load_split(m, "val"), test = load_split(m, "test"), fresh = load_split(m, "new");
  const auto rv = infer_all(tm.model, val), rt = infer_all(tm.model, test), rn = infer_all(tm.model, fresh);
  std::vector<double> sv, sk, sn;
  for (const auto& r : rv) sv.push_back(r.score);
  for (const auto& r : rt) sk.push_back(r.score);
  for (const auto& r : rn) sn.push_back(r.score);
  for (const auto* s : {&sv, &sk, &sn})
    for (double v : *s)
      if (!std::isfinite(v)) throw NumericalError("detect: non-finite anomaly score");

  DetectionReport d;
  d.quantile = q;
  d.auroc = auroc(sk, sn);
  d.threshold = quantile(sv, q);
  d.known = sk.size();
  d.fresh = sn.size();
  for (double v : sn) d.detection_rate += (v > d.threshold) / double(sn.size());
  for (double v : sk) d.false_alarm_rate += (v > d.threshold) / double(sk.size());

  std::string csv = "id,split,label,score,flagged\n";
  auto rows = [&](const PointSet& set, const char* split, const std::vector<double>& s) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      csv += set.ids[i] + "," + split + "," + std::to_string(set.labels[i]) + "," + csv_real(s[i]) + "," +
             (s[i] > d.threshold ? "1" : "0") + "\n";
    }
  };
  rows(test, "test", sk);
  rows(fresh, "new", sn);
  ordered_json j;
  j["auroc"] = d.auroc;
  j["threshold"] = d.threshold;
  j["threshold_quantile"] = q;
  j["known_samples"] = d.known;
  j["new_samples"] = d.fresh;
  j["detection_rate"] = d.detection_rate;
  j["false_alarm_rate"] = d.false_alarm_rate;
  ensure_directory(out_dir);
  write_file(join(out_dir, "detect.json"), j.dump(1) + "\n");
  write_file(join(out_dir, "scores.csv"), csv);
  log << "auroc=" << format_real(d.auroc) << " threshold=" << format_real(d.threshold) << " (q=" << format_real(q)
      << " of validation scores) detection_rate=" << format_real(d.detection_rate)
      << " false_alarm_rate=" << format_real(d.false_alarm_rate) << "\n";
  return d;
}

std::vector<MetricSummary> aggregate_runs(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw ContractError("aggregate_runs: no runs");
  using Getter = double (*)(const MetricsReport&);
  const std::pair<const char*, Getter> metrics[] = {
      {"acc", [](const MetricsReport& r) { return r.acc; }},
      {"ba", [](const MetricsReport& r) { return r.ba; }},
      {"precision", [](const MetricsReport& r) { return r.precision; }},
      {"recall", [](const MetricsReport& r) { return r.recall; }},
      {"f1", [](const MetricsReport& r) { return r.f1; }},
      {"auroc", [](const MetricsReport& r) { return r.auroc.value_or(std::nan("")); }},
  };
  std::vector<MetricSummary> out;
  for (const auto& [name, get] : metrics) {
    std::vector<double> a, b;
    for (const auto& r : runs) {
      a.push_back(get(r.subspace));
      b.push_back(get(r.baseline));
    }
    if (std::isnan(a.front()) || std::isnan(b.front())) continue;
    out.push_back({name, mean_std(a), mean_std(b), sign_test(a, b)});
  }
  return out;
}

ReplicationReport cmd_replicate(const std::string& manifest_path, int replications, std::uint64_t base_seed,
                                const TrainConfig& cfg, const std::string& out_dir, int threads, std::ostream& log) {
  if (replications < 1) throw UsageError("replicate: at least one replication required");
  const DatasetManifest pool = read_manifest(manifest_path);
  if (pool.split("new").empty()) throw ContractError("replicate: the manifest has no new-type samples");
  const std::size_t n_train = pool.split("train").size() / pool.classes();
  const std::size_t n_val = pool.split("val").size() / pool.classes();
  const std::size_t n_test = pool.split("test").size() / pool.classes();
  ensure_directory(out_dir);

  ReplicationReport report;
  report.runs.resize(std::size_t(replications));
  std::vector<bool> done(std::size_t(replications), false);
  std::mutex mu;
  auto write_aggregate = [&] {
    std::vector<RunRecord> finished;
    for (std::size_t r = 0; r < done.size(); ++r)
      if (done[r]) finished.push_back(report.runs[r]);
    ordered_json j;
    j["replications_requested"] = replications;
    j["replications_completed"] = finished.size();
    ordered_json runs = ordered_json::array();
    for (const auto& r : finished) {
      runs.push_back({{"replication", r.replication},
                      {"master_seed", r.master_seed},
                      {"split_seed", r.split_seed},
                      {"train_seed", r.train_seed},
                      {"subspace_report", r.subspace_report},
                      {"baseline_report", r.baseline_report},
                      {"subspace_checkpoint", r.subspace_checkpoint},
                      {"baseline_checkpoint", r.baseline_checkpoint},
                      {"subspace", metrics_object(r.subspace, pool.class_names)},
                      {"baseline", metrics_object(r.baseline, pool.class_names)}});
    }
    j["runs"] = runs;
    ordered_json summary = ordered_json::array();
    if (!finished.empty()) {
      for (const auto& s : aggregate_runs(finished)) {
        summary.push_back({{"metric", s.metric},
                           {"subspace_mean", s.subspace.mean},
                           {"subspace_std", s.subspace.std},
                           {"baseline_mean", s.baseline.mean},
                           {"baseline_std", s.baseline.std},
                           {"sign_test_n", s.sign.n},
                           {"sign_test_wins", s.sign.wins},
                           {"sign_test_p", s.sign.p_value},
                           {"sign_test_h", s.sign.h}});
      }
    }
    j["summary"] = summary;
    write_file(join(out_dir, "aggregate.json"), j.dump(1) + "\n");
  };

  std::exception_ptr failure;
  try {
    parallel_for(std::size_t(replications), threads, [&](std::size_t r) {
      RunRecord rec;
      rec.replication = int(r);
      rec.master_seed = base_seed;
      rec.split_seed = derive_seed(base_seed, r);
      rec.train_seed = derive_seed(cfg.seed, r);
      const DatasetManifest m = resplit(pool, rec.split_seed, n_train, n_val, n_test);
      TrainConfig c = cfg;
      c.seed = rec.train_seed;
      c.head = HeadKind::Subspace;
      rec.config = c.entries();
      const std::string dir = join(out_dir, "rep_" + std::to_string(r));
      ensure_directory(dir);

      TrainResult sub = run_training(m, c);
      TrainConfig bc = c;
      TrainResult base = mlp_baseline_train(load_split(m, "train"), load_split(m, "val"), bc);
      rec.subspace = test_report(sub.best_model.model, m);
      rec.baseline = test_report(base.best_model.model, m);
      rec.subspace.replication = rec.baseline.replication = int(r);
      rec.subspace.seed = rec.baseline.seed = rec.train_seed;

      rec.subspace_checkpoint = join(dir, "subspace.ckpt");
      rec.baseline_checkpoint = join(dir, "baseline.ckpt");
      rec.subspace_report = join(dir, "subspace_test.json");
      rec.baseline_report = join(dir, "baseline_test.json");
      save_checkpoint(rec.subspace_checkpoint, sub.best_model);
      save_checkpoint(rec.baseline_checkpoint, base.best_model);
      write_epoch_log(join(dir, "subspace_train.log"), sub);
      write_epoch_log(join(dir, "baseline_train.log"), base);
      write_file(rec.subspace_report, report_json(rec.subspace, m.class_names, "test"));
      write_file(rec.baseline_report, report_json(rec.baseline, m.class_names, "test"));

      std::lock_guard<std::mutex> lock(mu);
      report.runs[r] = rec;
      done[r] = true;
      write_aggregate();
      log << "replication " << r << ": subspace f1=" << format_real(rec.subspace.f1)
          << " auroc=" << format_real(rec.subspace.auroc.value_or(std::nan(""))) << " | baseline f1="
          << format_real(rec.baseline.f1) << "\n";
      log.flush();
    });
  } catch (...) {
    failure = std::current_exception();
  }
  if (failure) {
    std::vector<RunRecord> finished;
    for (std::size_t r = 0; r < done.size(); ++r)
      if (done[r]) finished.push_back(report.runs[r]);
    report.runs = finished;
    std::rethrow_exception(failure);
  }
  write_aggregate();
  report.summary = aggregate_runs(report.runs);
  for (const auto& s : report.summary) {
    log << s.metric << ": subspace " << format_real(s.subspace.mean) << " +- " << format_real(s.subspace.std)
        << " | baseline " << format_real(s.baseline.mean) << " +- " << format_real(s.baseline.std)
        << " | sign test p=" << format_real(s.sign.p_value) << " H=" << s.sign.h << "\n";
  }
  return report;
}

std::vector<SweepRow> cmd_sweep_k(const std::string& manifest_path, const std::vector<std::size_t>& values,
                                  const TrainConfig& cfg, const std::string& out_dir, int threads, std::ostream& log) {
  if (values.empty()) throw UsageError("sweep-k: no k values");
  const DatasetManifest m = read_manifest(manifest_path);
  ensure_directory(out_dir);
  std::vector<SweepRow> rows(values.size());
  std::mutex mu;
  parallel_for(values.size(), threads, [&](std::size_t i) {
    TrainConfig c = cfg;
    c.k = values[i];
    c.head = HeadKind::Subspace;
    c.validate();
    TrainResult r = run_training(m, c);
    rows[i].k = values[i];
    rows[i].test = test_report(r.best_model.model, m);
    save_checkpoint(join(out_dir, "k_" + std::to_string(values[i]) + ".ckpt"), r.best_model);
    std::lock_guard<std::mutex> lock(mu);
    log << "k=" << values[i] << " f1=" << format_real(rows[i].test.f1) << "\n";
    log.flush();
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].test.f1 > rows[best].test.f1) best = i;
  rows[best].best = true;
  std::string csv = "k,acc,ba,precision,recall,f1,auroc,best\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.k) + "," + csv_real(r.test.acc) + "," + csv_real(r.test.ba) + "," +
           csv_real(r.test.precision) + "," + csv_real(r.test.recall) + "," + csv_real(r.test.f1) + "," +
           csv_real(r.test.auroc.value_or(std::nan(""))) + "," + (r.best ? "1" : "0") + "\n";
  }
  write_file(join(out_dir, "sweep_k.csv"), csv);
  return rows;
}

std::string cmd_export_repr(const std::string& checkpoint_path, const std::string& manifest_path,
                            const std::string& split, const std::string& out_path, std::ostream& log) {
  TrainedModel tm = load_checkpoint(checkpoint_path);
  const DatasetManifest m = read_manifest(manifest_path);
  check_classes(tm, m);
  const PointSet set = load_split(m, split);
  if (set.size() == 0) throw ContractError("export-repr: split '" + split + "' is empty");
  const Tensor f = encode_all(tm.model, set);
  const Tensor d = head_distances(tm.model, f);
  const std::size_t p = f.dim(1), c = d.dim(1);

  std::string csv = "id,label";
  for (std::size_t j = 0; j < p; ++j) csv += ",f_" + std::to_string(j);
  for (std::size_t j = 0; j < c; ++j) csv += ",d_" + std::to_string(j);
  csv += ",d_own,d_nearest\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int y = set.labels[i];
    csv += set.ids[i] + "," + std::to_string(y);
    for (std::size_t j = 0; j < p; ++j) csv += "," + csv_real(f.data()[i * p + j]);
    double own = std::nan(""), nearest = INFINITY;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = d.data()[i * c + j];
      csv += "," + csv_real(v);
      if (int(j) == y) own = v;
      else nearest = std::min(nearest, v);
    }
    csv += "," + csv_real(own) + "," + csv_real(nearest) + "\n";
  }
  const fs::path out(out_path);
  if (out.has_parent_path()) ensure_directory(out.parent_path().string());
  write_file(out_path, csv);
  log << "wrote " << set.size() << " rows (" << p << " features, " << c << " distances) to " << out_path << "\n";
  return out_path;
}

}  // namespace SSAC_ABI
}  // namespace ssac
