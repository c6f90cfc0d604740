#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ssac/core.hpp"
#include "ssac/kvconfig.hpp"

namespace ssac {
inline namespace SSAC_ABI {

enum class AnomalyClass { Dent, Scratch, Hole, Groove };

std::string_view class_name(AnomalyClass cls);
AnomalyClass parse_class(std::string_view name);
/// Training label: dent 0, scratch 1, hole 2; groove (new type) -1.
int class_label(AnomalyClass cls);

using Point = std::array<double, 3>;
using Points = std::vector<Point>;

struct RigidPose {
  double rotation = 0;  // radians about the surface normal (z)
  double tx = 0;
  double ty = 0;
};

/// One anomaly instance. Unused shape fields stay 0:
///   dent    length (x extent), width (y extent), depth
///   scratch length, radius
///   hole    height, radius
///   groove  width, depth
struct AnomalySpec {
  AnomalyClass cls = AnomalyClass::Dent;
  double length = 0;
  double width = 0;
  double depth = 0;
  double radius = 0;
  double height = 0;
  /// Horizontal run of each groove wall per unit depth (0 = vertical walls).
  double wall_run = 0;
  /// Side of the square patch that a groove crosses end to end.
  double groove_span = 1;
  RigidPose pose;
  std::uint64_t nonrigid_seed = 0;

  /// Footprint dimensions must be positive; depths may be 0 (a flat patch).
  void validate() const;
  /// Largest in-plane extent of the footprint.
  double footprint_diameter() const;
  double footprint_area() const;
  /// Side of the square base patch: patch_scale footprint diameters, or the
  /// groove span for a groove (which crosses the patch end to end).
  double patch_side(double patch_scale = 3.0) const;
  bool in_footprint(double u, double v) const;
};

/// Signed height of the standard model at in-plane (u, v), centered at the
/// origin, 0 outside the footprint.
double primitive_depth_field(const AnomalySpec& spec, double u, double v);

struct NonrigidConfig {
  int anchors = 3;
  double max_rotation_deg = 15;
  double scale_min = 0.8;
  double scale_max = 1.2;
  /// Translation radius as a fraction of the footprint diameter.
  double max_translation = 0.1;
  /// Gaussian width as a fraction of the footprint radius.
  double sigma_fraction = 0.5;

  void validate() const;
};

/// Local affine map x -> anchor + scale * R_z(angle) * (x - anchor) + t.
struct LocalMap {
  Point anchor{};
  double angle = 0;
  double scale = 1;
  double tx = 0;
  double ty = 0;

  Point apply(const Point& x) const;
  /// apply(x) - x, evaluated directly (exactly 0 for the identity map).
  Point displacement(const Point& x) const;
};

/// Anchors on the footprint and one random local map each, from `seed`.
std::vector<LocalMap> draw_local_maps(const AnomalySpec& spec, const NonrigidConfig& cfg, std::uint64_t seed);

/// Each point moves by the normalized-Gaussian-weighted average of the local
/// maps' displacements.
Points blend_local_maps(const Points& points, const std::vector<LocalMap>& maps, double sigma);

Points apply_nonrigid(const Points& points, const AnomalySpec& spec, const NonrigidConfig& cfg, std::uint64_t seed);

/// Upper bound on any point's displacement under apply_nonrigid for points
/// within `reach` of every anchor.
double nonrigid_displacement_bound(const AnomalySpec& spec, const NonrigidConfig& cfg, double reach);

Points apply_rigid(const Points& points, const RigidPose& pose);

/// Centroid to the origin, largest norm to 1.
Points normalize_points(const Points& points);

struct ParamRange {
  double lo = 0;
  double hi = 0;
};

struct GeneratorConfig {
  std::size_t points = 2048;
  std::string sample_format = "binary";  // binary | text
  std::size_t train_per_class = 30;
  std::size_t val_per_class = 10;
  std::size_t test_per_class = 60;
  std::size_t new_type_count = 30;
  /// Patch side over footprint diameter for the known classes.
  double patch_scale = 3.0;
  /// Fixed patch side for every class when positive; shape parameters are
  /// then fractions of it. Zero derives the side from patch_scale.
  double patch_side = 0;
  /// Sensor noise standard deviation over patch side.
  double noise_fraction = 0.005;
  NonrigidConfig nonrigid;
  /// Rigid rotation drawn from [-max, max] degrees.
  double rigid_max_rotation_deg = 180;
  /// In-plane translation per axis as a fraction of the patch side.
  double rigid_max_translation = 0.1;

  ParamRange dent_length{0.15, 0.45};
  ParamRange dent_width{0.05, 0.20};
  ParamRange dent_depth{0.05, 0.20};
  ParamRange scratch_length{0.15, 0.45};
  ParamRange scratch_radius{0.05, 0.20};
  ParamRange hole_height{0.05, 0.20};
  ParamRange hole_radius{0.05, 0.20};
  ParamRange groove_width{0.05, 0.20};
  ParamRange groove_depth{0.05, 0.20};
  double groove_wall_run = 0.5;
  double groove_span = 1.0;

  void validate() const;
  std::size_t known_per_class() const { return train_per_class + val_per_class + test_per_class; }
  double side_for(const AnomalySpec& spec) const {
    return patch_side > 0 ? patch_side : spec.patch_side(patch_scale);
  }
  /// Key/value binder over every field (the documented config keys).
  KeyValueBinder binder();
  /// Every key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

GeneratorConfig load_generator_config(const std::string& path);

/// Shape parameters uniform in the configured ranges plus a random pose.
AnomalySpec draw_spec(AnomalyClass cls, const GeneratorConfig& cfg, std::uint64_t seed);

struct SurfaceSample {
  Points points;
  int label = 0;
  AnomalySpec spec;
};

/// Base patch with the anomaly, deformations, z noise and normalization.
SurfaceSample synthesize_sample(const AnomalySpec& spec, std::size_t n, std::uint64_t seed,
                                const GeneratorConfig& cfg = {});

}  // namespace SSAC_ABI
}  // namespace ssac
