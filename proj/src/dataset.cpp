#include "ssac/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "ssac/errors.hpp"
#include "ssac/io.hpp"
#include "ssac/random.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json spec_to_json(const AnomalySpec& s) {
  return json{{"class", class_name(s.cls)}, {"length", s.length},       {"width", s.width},
              {"depth", s.depth},           {"radius", s.radius},       {"height", s.height},
              {"wall_run", s.wall_run},     {"groove_span", s.groove_span}, {"rotation", s.pose.rotation},
              {"tx", s.pose.tx},            {"ty", s.pose.ty},          {"nonrigid_seed", s.nonrigid_seed}};
}

AnomalySpec spec_from_json(const json& j) {
  AnomalySpec s;
  s.cls = parse_class(j.at("class").get<std::string>());
  s.length = j.at("length").get<double>();
  s.width = j.at("width").get<double>();
  s.depth = j.at("depth").get<double>();
  s.radius = j.at("radius").get<double>();
  s.height = j.at("height").get<double>();
  s.wall_run = j.at("wall_run").get<double>();
  s.groove_span = j.at("groove_span").get<double>();
  s.pose.rotation = j.at("rotation").get<double>();
  s.pose.tx = j.at("tx").get<double>();
  s.pose.ty = j.at("ty").get<double>();
  s.nonrigid_seed = j.at("nonrigid_seed").get<std::uint64_t>();
  return s;
}

std::string make_id(std::string_view cls, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*s_%03zu", int(cls.size()), cls.data(), index);
  return buf;
}

}  // namespace

std::vector<const SampleRecord*> DatasetManifest::split(std::string_view name) const {
  std::vector<const SampleRecord*> out;
  for (const auto& s : samples)
    if (s.split == name) out.push_back(&s);
  return out;
}

std::string DatasetManifest::resolve(const SampleRecord& r) const {
  const fs::path p(r.path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

void DatasetManifest::validate() const {
  if (class_names.empty()) throw SpecError("manifest: no known classes");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw SpecError("manifest: sample " + s.id + " listed twice");
    if (std::find(std::begin(kSplits), std::end(kSplits), s.split) == std::end(kSplits)) {
      throw SpecError("manifest: sample " + s.id + " has unknown split '" + s.split + "'");
    }
    if (s.label == -1) {
      if (s.split != "new") throw SpecError("manifest: new-type sample " + s.id + " assigned to split " + s.split);
    } else {
      if (s.label < 0 || std::size_t(s.label) >= class_names.size()) {
        throw SpecError("manifest: sample " + s.id + " label " + std::to_string(s.label) + " out of range");
      }
      if (class_names[std::size_t(s.label)] != s.class_name) {
        throw SpecError("manifest: sample " + s.id + " label does not match class " + s.class_name);
      }
      if (s.split == "new") throw SpecError("manifest: known-class sample " + s.id + " in the new-type split");
    }
    if (s.spec && std::string(class_name(s.spec->cls)) != s.class_name) {
      throw SpecError("manifest: sample " + s.id + " spec class does not match its class");
    }
  }
}

std::string manifest_json(const DatasetManifest& m) {
  json j;
  j["format"] = "ssac-manifest";
  j["generator_version"] = m.generator_version;
  j["master_seed"] = m.master_seed;
  j["classes"] = m.class_names;
  json cfg = json::object();
  for (const auto& [k, v] : m.config) cfg[k] = v;
  j["config"] = cfg;
  json splits = json::object();
  for (auto name : kSplits) {
    json ids = json::array();
    for (const auto* r : m.split(name)) ids.push_back(r->id);
    splits[std::string(name)] = ids;
  }
  j["splits"] = splits;
  json samples = json::array();
  for (const auto& s : m.samples) {
    json r{{"id", s.id},         {"path", s.path},     {"label", s.label}, {"class", s.class_name},
           {"split", s.split},   {"points", s.points}, {"seed", s.seed},   {"sha256", s.sha256}};
    if (s.spec) r["spec"] = spec_to_json(*s.spec);
    samples.push_back(r);
  }
  j["samples"] = samples;
  return j.dump(1) + "\n";
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  m.validate();
  write_file(path, manifest_json(m));
}

DatasetManifest read_manifest(const std::string& path) {
  const std::string text = read_file(path);
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "ssac-manifest") throw SpecError(path + ": not an ssac manifest");
    m.generator_version = j.value("generator_version", "");
    m.master_seed = j.value("master_seed", std::uint64_t(0));
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("config")) {
      for (const auto& [k, v] : j.at("config").items()) m.config.emplace_back(k, v.get<std::string>());
    }
    for (const auto& r : j.at("samples")) {
      SampleRecord s;
      s.id = r.at("id").get<std::string>();
      s.path = r.at("path").get<std::string>();
      s.label = r.at("label").get<int>();
      s.class_name = r.at("class").get<std::string>();
      s.split = r.at("split").get<std::string>();
      s.points = r.value("points", std::size_t(0));
      s.seed = r.value("seed", std::uint64_t(0));
      s.sha256 = r.value("sha256", "");
      if (r.contains("spec")) s.spec = spec_from_json(r.at("spec"));
      m.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw SpecError(path + ": malformed manifest: " + e.what());
  }
  m.base_dir = fs::path(path).parent_path().string();
  m.validate();
  return m;
}

DatasetManifest generate_dataset(const GeneratorConfig& cfg, std::uint64_t master_seed, const std::string& out_dir,
                                 int threads) {
  cfg.validate();
  const SampleFormat format = parse_sample_format(cfg.sample_format);
  const std::size_t known = cfg.known_per_class();

  struct Job {
    AnomalyClass cls;
    std::size_t index;  // within class
    std::size_t global;
  };
  std::vector<Job> jobs;
  const AnomalyClass known_classes[] = {AnomalyClass::Dent, AnomalyClass::Scratch, AnomalyClass::Hole};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t j = 0; j < known; ++j) jobs.push_back({known_classes[c], j, jobs.size()});
  for (std::size_t j = 0; j < cfg.new_type_count; ++j) jobs.push_back({AnomalyClass::Groove, j, jobs.size()});

  DatasetManifest m;
  m.master_seed = master_seed;
  m.class_names = {"dent", "scratch", "hole"};
  m.config = cfg.entries();
  m.samples.resize(jobs.size());
  m.base_dir = out_dir;
  ensure_directory((fs::path(out_dir) / "samples").string());

  auto run = [&](const Job& job) {
    const std::uint64_t child = derive_seed(master_seed, job.global);
    const AnomalySpec spec = draw_spec(job.cls, cfg, derive_seed(child, 0));
    const SurfaceSample sample = synthesize_sample(spec, cfg.points, derive_seed(child, 1), cfg);
    SampleRecord r;
    r.class_name = std::string(class_name(job.cls));
    r.id = make_id(r.class_name, job.index);
    r.path = "samples/" + r.id + std::string(sample_extension(format));
    r.label = sample.label;
    if (job.cls == AnomalyClass::Groove) {
      r.split = "new";
    } else if (job.index < cfg.train_per_class) {
      r.split = "train";
    } else if (job.index < cfg.train_per_class + cfg.val_per_class) {
      r.split = "val";
    } else {
      r.split = "test";
    }
    r.points = sample.points.size();
    r.seed = child;
    r.spec = spec;
    const std::string full = (fs::path(out_dir) / r.path).string();
    write_sample(full, sample.points, format);
    r.sha256 = sha256_file(full);
    m.samples[job.global] = std::move(r);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::size_t(std::max(threads, 1)), jobs.size()));
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < jobs.size(); i += workers) run(jobs[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  write_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  return m;
}

DatasetManifest resplit(const DatasetManifest& m, std::uint64_t seed, std::size_t train_per_class,
                        std::size_t val_per_class, std::size_t test_per_class) {
  DatasetManifest out = m;
  for (std::size_t c = 0; c < m.classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
      if (out.samples[i].label == int(c)) members.push_back(i);
    if (members.size() < train_per_class + val_per_class + test_per_class) {
      throw ContractError("resplit: class " + m.class_names[c] + " has only " + std::to_string(members.size()) +
                          " samples");
    }
    Rng rng(derive_seed(seed, c));
    shuffle(members, rng);
    for (std::size_t j = 0; j < members.size(); ++j) {
      auto& s = out.samples[members[j]].split;
      if (j < train_per_class) {
        s = "train";
      } else if (j < train_per_class + val_per_class) {
        s = "val";
      } else if (j < train_per_class + val_per_class + test_per_class) {
        s = "test";
      } else {
        s = "unused";
      }
    }
  }
  // Samples beyond the requested sizes leave the manifest's view entirely.
  std::erase_if(out.samples, [](const SampleRecord& s) { return s.split == "unused"; });
  return out;
}

void PointSet::add(std::string id, int label, const Points& pts) {
  if (pts.empty()) throw ContractError("PointSet: empty cloud " + id);
  if (clouds.empty()) {
    points = pts.size();
  } else if (pts.size() != points) {
    throw DimensionError("PointSet: sample " + id + " has " + std::to_string(pts.size()) + " points, expected " +
                         std::to_string(points));
  }
  std::vector<Real> flat(pts.size() * 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) flat[i * 3 + std::size_t(c)] = static_cast<Real>(pts[i][std::size_t(c)]);
  clouds.push_back(std::move(flat));
  labels.push_back(label);
  ids.push_back(std::move(id));
}

Tensor PointSet::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("PointSet::batch: no indices");
  std::vector<Real> data;
  data.reserve(indices.size() * points * 3);
  for (auto i : indices) {
    const auto& c = clouds.at(i);
    data.insert(data.end(), c.begin(), c.end());
  }
  return Tensor::from_data({indices.size(), points, 3}, std::move(data));
}

Tensor PointSet::single(std::size_t index) const {
  const std::size_t idx[] = {index};
  return batch(idx);
}

PointSet load_split(const DatasetManifest& m, std::string_view split, bool verify) {
  PointSet set;
  for (const auto* r : m.split(split)) {
    const std::string path = m.resolve(*r);
    if (verify && !r->sha256.empty()) {
      const std::string bytes = read_file(path);
      if (sha256_hex(bytes) != r->sha256) throw StorageError("digest mismatch for " + path);
    }
    const Points pts = read_sample(path);
    if (r->points && pts.size() != r->points) {
      throw StorageError(path + ": holds " + std::to_string(pts.size()) + " points, manifest says " +
                         std::to_string(r->points));
    }
    set.add(r->id, r->label, pts);
  }
  return set;
}

}  // namespace SSAC_ABI
}  // namespace ssac
