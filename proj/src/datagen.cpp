#include "ssac/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ssac/errors.hpp"
#include "ssac/random.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace {

constexpr double kPi = std::numbers::pi;

double deg2rad(double d) { return d * kPi / 180.0; }

void require(bool ok, const std::string& what) {
  if (!ok) throw SpecError(what);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0; }
bool finite_pos(double v) { return std::isfinite(v) && v > 0; }

}  // namespace

std::string_view class_name(AnomalyClass cls) {
  switch (cls) {
    case AnomalyClass::Dent: return "dent";
    case AnomalyClass::Scratch: return "scratch";
    case AnomalyClass::Hole: return "hole";
    case AnomalyClass::Groove: return "groove";
  }
  return "?";
}

AnomalyClass parse_class(std::string_view name) {
  for (auto c : {AnomalyClass::Dent, AnomalyClass::Scratch, AnomalyClass::Hole, AnomalyClass::Groove}) {
    if (class_name(c) == name) return c;
  }
  throw SpecError("unknown anomaly class '" + std::string(name) + "'");
}

int class_label(AnomalyClass cls) {
  switch (cls) {
    case AnomalyClass::Dent: return 0;
    case AnomalyClass::Scratch: return 1;
    case AnomalyClass::Hole: return 2;
    case AnomalyClass::Groove: return -1;
  }
  return -1;
}

void AnomalySpec::validate() const {
  const std::string name(class_name(cls));
  switch (cls) {
    case AnomalyClass::Dent:
      require(finite_pos(length) && finite_pos(width), name + ": footprint has zero area");
      require(finite_nonneg(depth), name + ": depth must be >= 0");
      break;
    case AnomalyClass::Scratch:
      require(finite_pos(length) && finite_pos(radius), name + ": footprint has zero area");
      break;
    case AnomalyClass::Hole:
      require(finite_pos(radius), name + ": footprint has zero area");
      require(finite_nonneg(height), name + ": height must be >= 0");
      break;
    case AnomalyClass::Groove:
      require(finite_pos(width) && finite_pos(groove_span), name + ": footprint has zero area");
      require(finite_nonneg(depth) && finite_nonneg(wall_run), name + ": depth and wall run must be >= 0");
      break;
  }
  require(std::isfinite(pose.rotation) && std::isfinite(pose.tx) && std::isfinite(pose.ty), name + ": bad pose");
}

double AnomalySpec::footprint_diameter() const {
  switch (cls) {
    case AnomalyClass::Dent: return std::max(length, width);
    case AnomalyClass::Scratch: return std::max(length, 2 * radius);
    case AnomalyClass::Hole: return 2 * radius;
    case AnomalyClass::Groove: return groove_span;
  }
  return 0;
}

double AnomalySpec::footprint_area() const {
  switch (cls) {
    case AnomalyClass::Dent: return kPi * length * width / 4;
    case AnomalyClass::Scratch: return 2 * radius * length;
    case AnomalyClass::Hole: return kPi * radius * radius;
    case AnomalyClass::Groove: return groove_span * (width + 2 * wall_run * depth);
  }
  return 0;
}

double AnomalySpec::patch_side(double patch_scale) const {
  return cls == AnomalyClass::Groove ? groove_span : patch_scale * footprint_diameter();
}

bool AnomalySpec::in_footprint(double u, double v) const {
  switch (cls) {
    case AnomalyClass::Dent: {
      const double a = length / 2, b = width / 2;
      return (u / a) * (u / a) + (v / b) * (v / b) < 1;
    }
    case AnomalyClass::Scratch: return std::abs(u) <= length / 2 && std::abs(v) < radius;
    case AnomalyClass::Hole: return std::hypot(u, v) < radius;
    case AnomalyClass::Groove:
      return std::abs(u) <= groove_span / 2 && std::abs(v) < width / 2 + wall_run * depth;
  }
  return false;
}

double primitive_depth_field(const AnomalySpec& spec, double u, double v) {
  spec.validate();
  if (!spec.in_footprint(u, v)) return 0;
  switch (spec.cls) {
    case AnomalyClass::Dent: {
      const double a = spec.length / 2, b = spec.width / 2;
      return -spec.depth * std::sqrt(std::max(0.0, 1 - (u / a) * (u / a) - (v / b) * (v / b)));
    }
    case AnomalyClass::Scratch: return -std::sqrt(std::max(0.0, spec.radius * spec.radius - v * v));
    case AnomalyClass::Hole: return -spec.height * (1 - std::hypot(u, v) / spec.radius);
    case AnomalyClass::Groove: {
      const double off = std::abs(v) - spec.width / 2;
      if (off <= 0) return -spec.depth;
      return -spec.depth * (1 - off / (spec.wall_run * spec.depth));
    }
  }
  return 0;
}

void NonrigidConfig::validate() const {
  if (anchors < 1) throw ConfigError("nonrigid.anchors", "must be >= 1");
  if (!(scale_min > 0 && scale_min <= scale_max)) throw ConfigError("nonrigid.scale_min", "needs 0 < min <= max");
  if (!(max_rotation_deg >= 0)) throw ConfigError("nonrigid.max_rotation_deg", "must be >= 0");
  if (!(max_translation >= 0)) throw ConfigError("nonrigid.max_translation", "must be >= 0");
  if (!(sigma_fraction > 0)) throw ConfigError("nonrigid.sigma_fraction", "must be > 0");
}

Point LocalMap::apply(const Point& x) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dx = x[0] - anchor[0], dy = x[1] - anchor[1], dz = x[2] - anchor[2];
  return {anchor[0] + scale * (c * dx - s * dy) + tx, anchor[1] + scale * (s * dx + c * dy) + ty,
          anchor[2] + scale * dz};
}

Point LocalMap::displacement(const Point& x) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dx = x[0] - anchor[0], dy = x[1] - anchor[1], dz = x[2] - anchor[2];
  return {(scale * (c * dx - s * dy) - dx) + tx, (scale * (s * dx + c * dy) - dy) + ty, scale * dz - dz};
}

std::vector<LocalMap> draw_local_maps(const AnomalySpec& spec, const NonrigidConfig& cfg, std::uint64_t seed) {
  spec.validate();
  cfg.validate();
  Rng rng(seed);
  const double diameter = spec.footprint_diameter();
  // Bounding half-extents of the footprint, for rejection sampling.
  double hu = diameter / 2, hv = diameter / 2;
  if (spec.cls == AnomalyClass::Dent) {
    hu = spec.length / 2;
    hv = spec.width / 2;
  } else if (spec.cls == AnomalyClass::Scratch) {
    hu = spec.length / 2;
    hv = spec.radius;
  } else if (spec.cls == AnomalyClass::Groove) {
    hu = spec.groove_span / 2;
    hv = spec.width / 2 + spec.wall_run * spec.depth;
  }
  std::vector<LocalMap> maps(std::size_t(cfg.anchors));
  for (auto& m : maps) {
    double u, v;
    do {
      u = uniform(rng, -hu, hu);
      v = uniform(rng, -hv, hv);
    } while (!spec.in_footprint(u, v));
    m.anchor = {u, v, 0.0};
    m.angle = deg2rad(uniform(rng, -cfg.max_rotation_deg, cfg.max_rotation_deg));
    m.scale = uniform(rng, cfg.scale_min, cfg.scale_max);
    const double r = cfg.max_translation * diameter * std::sqrt(uniform01(rng));
    const double phi = uniform(rng, 0, 2 * kPi);
    m.tx = r * std::cos(phi);
    m.ty = r * std::sin(phi);
  }
  return maps;
}

Points blend_local_maps(const Points& points, const std::vector<LocalMap>& maps, double sigma) {
  if (maps.empty()) return points;
  Points out(points.size());
  std::vector<double> logw(maps.size());
  const double inv = 1.0 / (2 * sigma * sigma);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& x = points[i];
    double top = -INFINITY;
    for (std::size_t j = 0; j < maps.size(); ++j) {
      const auto& a = maps[j].anchor;
      const double d2 = (x[0] - a[0]) * (x[0] - a[0]) + (x[1] - a[1]) * (x[1] - a[1]) + (x[2] - a[2]) * (x[2] - a[2]);
      logw[j] = -d2 * inv;
      top = std::max(top, logw[j]);
    }
    // Weights are normalized after a max shift, so far-away points still get
    // a proper convex combination instead of 0/0.
    double total = 0;
    Point disp{0, 0, 0};
    for (std::size_t j = 0; j < maps.size(); ++j) {
      const double w = std::exp(logw[j] - top);
      total += w;
      const Point dj = maps[j].displacement(x);
      for (int c = 0; c < 3; ++c) disp[c] += w * dj[c];
    }
    for (int c = 0; c < 3; ++c) out[i][c] = x[c] + disp[c] / total;
  }
  return out;
}

Points apply_nonrigid(const Points& points, const AnomalySpec& spec, const NonrigidConfig& cfg, std::uint64_t seed) {
  const auto maps = draw_local_maps(spec, cfg, seed);
  return blend_local_maps(points, maps, cfg.sigma_fraction * spec.footprint_diameter() / 2);
}

double nonrigid_displacement_bound(const AnomalySpec& spec, const NonrigidConfig& cfg, double reach) {
  // ||(sR - I)(x - a) + t|| <= ||sR - I|| ||x - a|| + ||t||, and the spectral
  // norm of sR - I is |s e^{i theta} - 1| (in plane) or |s - 1| (along z).
  const double th = deg2rad(cfg.max_rotation_deg);
  double k = 0;
  for (double s : {cfg.scale_min, cfg.scale_max}) {
    k = std::max({k, std::sqrt(s * s - 2 * s * std::cos(th) + 1), std::abs(s - 1)});
  }
  return k * reach + cfg.max_translation * spec.footprint_diameter();
}

Points apply_rigid(const Points& points, const RigidPose& pose) {
  const double c = std::cos(pose.rotation), s = std::sin(pose.rotation);
  Points out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    out[i] = {c * p[0] - s * p[1] + pose.tx, s * p[0] + c * p[1] + pose.ty, p[2]};
  }
  return out;
}

Points normalize_points(const Points& points) {
  if (points.empty()) throw ContractError("normalize_points: empty cloud");
  Point mean{0, 0, 0};
  for (const auto& p : points)
    for (int c = 0; c < 3; ++c) mean[c] += p[c];
  for (int c = 0; c < 3; ++c) mean[c] /= double(points.size());
  Points out(points.size());
  double rmax = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int c = 0; c < 3; ++c) out[i][c] = points[i][c] - mean[c];
    rmax = std::max(rmax, std::sqrt(out[i][0] * out[i][0] + out[i][1] * out[i][1] + out[i][2] * out[i][2]));
  }
  if (!(rmax > 0) || !std::isfinite(rmax)) throw NumericalError("normalize_points: degenerate cloud");
  for (auto& p : out)
    for (auto& v : p) v /= rmax;
  return out;
}

void GeneratorConfig::validate() const {
  if (points < 64) throw ConfigError("points", "must be >= 64");
  if (sample_format != "binary" && sample_format != "text") throw ConfigError("sample_format", "binary or text");
  if (train_per_class < 1) throw ConfigError("train_per_class", "must be >= 1");
  if (!(patch_scale >= 1)) throw ConfigError("patch_scale", "must be >= 1");
  if (!(patch_side >= 0)) throw ConfigError("patch_side", "must be >= 0");
  if (!(noise_fraction >= 0)) throw ConfigError("noise_fraction", "must be >= 0");
  if (!(groove_wall_run >= 0)) throw ConfigError("groove.wall_run", "must be >= 0");
  if (!(groove_span > 0)) throw ConfigError("groove.span", "must be > 0");
  nonrigid.validate();
  const std::pair<const char*, const ParamRange*> ranges[] = {
      {"dent.length", &dent_length},       {"dent.width", &dent_width},       {"dent.depth", &dent_depth},
      {"scratch.length", &scratch_length}, {"scratch.radius", &scratch_radius}, {"hole.height", &hole_height},
      {"hole.radius", &hole_radius},       {"groove.width", &groove_width},   {"groove.depth", &groove_depth}};
  for (const auto& [key, r] : ranges) {
    if (!(r->lo > 0 && r->lo <= r->hi && std::isfinite(r->hi))) throw ConfigError(key, "range must satisfy 0 < lo <= hi");
  }
}

KeyValueBinder GeneratorConfig::binder() {
  KeyValueBinder b;
  b.bind("points", points)
      .bind("sample_format", sample_format)
      .bind("train_per_class", train_per_class)
      .bind("val_per_class", val_per_class)
      .bind("test_per_class", test_per_class)
      .bind("new_type_count", new_type_count)
      .bind("patch_scale", patch_scale)
      .bind("patch_side", patch_side)
      .bind("noise_fraction", noise_fraction)
      .bind("nonrigid.anchors", nonrigid.anchors)
      .bind("nonrigid.max_rotation_deg", nonrigid.max_rotation_deg)
      .bind("nonrigid.scale_min", nonrigid.scale_min)
      .bind("nonrigid.scale_max", nonrigid.scale_max)
      .bind("nonrigid.max_translation", nonrigid.max_translation)
      .bind("nonrigid.sigma_fraction", nonrigid.sigma_fraction)
      .bind("rigid.max_rotation_deg", rigid_max_rotation_deg)
      .bind("rigid.max_translation", rigid_max_translation)
      .bind_range("dent.length", dent_length.lo, dent_length.hi)
      .bind_range("dent.width", dent_width.lo, dent_width.hi)
      .bind_range("dent.depth", dent_depth.lo, dent_depth.hi)
      .bind_range("scratch.length", scratch_length.lo, scratch_length.hi)
      .bind_range("scratch.radius", scratch_radius.lo, scratch_radius.hi)
      .bind_range("hole.height", hole_height.lo, hole_height.hi)
      .bind_range("hole.radius", hole_radius.lo, hole_radius.hi)
      .bind_range("groove.width", groove_width.lo, groove_width.hi)
      .bind_range("groove.depth", groove_depth.lo, groove_depth.hi)
      .bind("groove.wall_run", groove_wall_run)
      .bind("groove.span", groove_span);
  return b;
}

std::vector<std::pair<std::string, std::string>> GeneratorConfig::entries() const {
  auto r = [](const ParamRange& p) { return format_real(p.lo) + " " + format_real(p.hi); };
  return {{"points", std::to_string(points)},
          {"sample_format", sample_format},
          {"train_per_class", std::to_string(train_per_class)},
          {"val_per_class", std::to_string(val_per_class)},
          {"test_per_class", std::to_string(test_per_class)},
          {"new_type_count", std::to_string(new_type_count)},
          {"patch_scale", format_real(patch_scale)},
          {"patch_side", format_real(patch_side)},
          {"noise_fraction", format_real(noise_fraction)},
          {"nonrigid.anchors", std::to_string(nonrigid.anchors)},
          {"nonrigid.max_rotation_deg", format_real(nonrigid.max_rotation_deg)},
          {"nonrigid.scale_min", format_real(nonrigid.scale_min)},
          {"nonrigid.scale_max", format_real(nonrigid.scale_max)},
          {"nonrigid.max_translation", format_real(nonrigid.max_translation)},
          {"nonrigid.sigma_fraction", format_real(nonrigid.sigma_fraction)},
          {"rigid.max_rotation_deg", format_real(rigid_max_rotation_deg)},
          {"rigid.max_translation", format_real(rigid_max_translation)},
          {"dent.length", r(dent_length)},
          {"dent.width", r(dent_width)},
          {"dent.depth", r(dent_depth)},
          {"scratch.length", r(scratch_length)},
          {"scratch.radius", r(scratch_radius)},
          {"hole.height", r(hole_height)},
          {"hole.radius", r(hole_radius)},
          {"groove.width", r(groove_width)},
          {"groove.depth", r(groove_depth)},
          {"groove.wall_run", format_real(groove_wall_run)},
          {"groove.span", format_real(groove_span)}};
}

GeneratorConfig load_generator_config(const std::string& path) {
  GeneratorConfig cfg;
  cfg.binder().apply(load_key_values(path));
  cfg.validate();
  return cfg;
}

AnomalySpec draw_spec(AnomalyClass cls, const GeneratorConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&rng](const ParamRange& r) { return uniform(rng, r.lo, r.hi); };
  AnomalySpec s;
  s.cls = cls;
  switch (cls) {
    case AnomalyClass::Dent:
      s.length = draw(cfg.dent_length);
      s.width = draw(cfg.dent_width);
      s.depth = draw(cfg.dent_depth);
      break;
    case AnomalyClass::Scratch:
      s.length = draw(cfg.scratch_length);
      s.radius = draw(cfg.scratch_radius);
      break;
    case AnomalyClass::Hole:
      s.height = draw(cfg.hole_height);
      s.radius = draw(cfg.hole_radius);
      break;
    case AnomalyClass::Groove:
      s.width = draw(cfg.groove_width);
      s.depth = draw(cfg.groove_depth);
      s.wall_run = cfg.groove_wall_run;
      s.groove_span = cfg.groove_span;
      break;
  }
  s.pose.rotation = deg2rad(uniform(rng, -cfg.rigid_max_rotation_deg, cfg.rigid_max_rotation_deg));
  const double side = cfg.side_for(s);
  s.pose.tx = uniform(rng, -cfg.rigid_max_translation, cfg.rigid_max_translation) * side;
  s.pose.ty = uniform(rng, -cfg.rigid_max_translation, cfg.rigid_max_translation) * side;
  s.nonrigid_seed = rng();
  return s;
}

SurfaceSample synthesize_sample(const AnomalySpec& spec, std::size_t n, std::uint64_t seed,
                                const GeneratorConfig& cfg) {
  if (n < 64) throw ContractError("synthesize_sample: needs at least 64 points");
  spec.validate();
  const double side = cfg.side_for(spec);
  Rng rng(seed);
  Points pts(n);
  for (auto& p : pts) {
    const double u = uniform(rng, -side / 2, side / 2);
    const double v = uniform(rng, -side / 2, side / 2);
    p = {u, v, primitive_depth_field(spec, u, v)};
  }
  pts = apply_nonrigid(pts, spec, cfg.nonrigid, spec.nonrigid_seed);
  pts = apply_rigid(pts, spec.pose);
  const double sd = cfg.noise_fraction * side;
  if (sd > 0) {
    for (auto& p : pts) p[2] += sd * normal(rng);
  }
  SurfaceSample out;
  out.points = normalize_points(pts);
  out.label = class_label(spec.cls);
  out.spec = spec;
  return out;
}

}  // namespace SSAC_ABI
}  // namespace ssac
