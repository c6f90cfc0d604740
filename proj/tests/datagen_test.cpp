#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "ssac/dataset.hpp"
#include "ssac/datagen.hpp"
#include "ssac/errors.hpp"
#include "ssac/io.hpp"

using namespace ssac;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

AnomalySpec dent(double l, double w, double d) {
  AnomalySpec s;
  s.cls = AnomalyClass::Dent;
  s.length = l;
  s.width = w;
  s.depth = d;
  return s;
}

AnomalySpec hole(double h, double r) {
  AnomalySpec s;
  s.cls = AnomalyClass::Hole;
  s.height = h;
  s.radius = r;
  return s;
}

Points random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Points p(n);
  for (auto& x : p) x = {u(rng), u(rng), 0.1 * u(rng)};
  return p;
}

double dist(const Point& a, const Point& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

// Height of a triangulated cone (rings x sectors) under (u, v): locate the
// triangle containing the query and interpolate barycentrically.
double cone_mesh_height(double h, double radius, double u, double v, int rings, int sectors) {
  auto vertex = [&](int i, int j) {
    const double r = radius * double(i) / rings, t = 2 * kPi * double(j) / sectors;
    return Point{r * std::cos(t), r * std::sin(t), -h * (1 - r / radius)};
  };
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < sectors; ++j) {
      const Point q[4] = {vertex(i, j), vertex(i + 1, j), vertex(i + 1, j + 1), vertex(i, j + 1)};
      const int tris[2][3] = {{0, 1, 2}, {0, 2, 3}};
      for (const auto& t : tris) {
        const Point &a = q[t[0]], &b = q[t[1]], &c = q[t[2]];
        const double det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
        if (std::abs(det) < 1e-15) continue;
        const double l1 = ((b[1] - c[1]) * (u - c[0]) + (c[0] - b[0]) * (v - c[1])) / det;
        const double l2 = ((c[1] - a[1]) * (u - c[0]) + (a[0] - c[0]) * (v - c[1])) / det;
        const double l3 = 1 - l1 - l2;
        if (l1 >= -1e-12 && l2 >= -1e-12 && l3 >= -1e-12) return l1 * a[2] + l2 * b[2] + l3 * c[2];
      }
    }
  }
  return 0;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("ssac_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST(DepthField, DentApexAndOutside) {
  auto s = dent(0.4, 0.2, 0.1);
  EXPECT_DOUBLE_EQ(primitive_depth_field(s, 0, 0), -0.1);
  EXPECT_EQ(primitive_depth_field(s, 0.21, 0), 0);
  EXPECT_EQ(primitive_depth_field(s, 0, 0.11), 0);
  EXPECT_NEAR(primitive_depth_field(s, 0.1, 0), -0.1 * std::sqrt(0.75), 1e-12);
}

TEST(DepthField, ScratchIsHalfCylinder) {
  AnomalySpec s;
  s.cls = AnomalyClass::Scratch;
  s.length = 0.3;
  s.radius = 0.05;
  EXPECT_DOUBLE_EQ(primitive_depth_field(s, 0.1, 0), -0.05);
  EXPECT_NEAR(primitive_depth_field(s, -0.14, 0.03), -0.04, 1e-12);
  EXPECT_EQ(primitive_depth_field(s, 0.16, 0), 0);
}

TEST(DepthField, GrooveFloorAndWalls) {
  AnomalySpec s;
  s.cls = AnomalyClass::Groove;
  s.width = 0.1;
  s.depth = 0.08;
  s.wall_run = 0.5;  // wall spans 0.04 horizontally
  EXPECT_DOUBLE_EQ(primitive_depth_field(s, 0.45, 0.02), -0.08);
  EXPECT_NEAR(primitive_depth_field(s, 0, 0.07), -0.04, 1e-12);
  EXPECT_EQ(primitive_depth_field(s, 0, 0.091), 0);
}

TEST(DepthField, ConeMatchesTriangulatedMesh) {
  auto s = hole(0.15, 0.12);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.12, 0.12);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng), y = u(rng);
    const double expected = cone_mesh_height(0.15, 0.12, x, y, 40, 720);
    EXPECT_NEAR(primitive_depth_field(s, x, y), expected, 1e-4) << x << "," << y;
  }
}

TEST(DepthField, DegenerateFootprintIsSpecError) {
  EXPECT_THROW(primitive_depth_field(dent(0, 0.1, 0.1), 0, 0), SpecError);
  EXPECT_THROW(primitive_depth_field(hole(0.1, 0), 0, 0), SpecError);
  AnomalySpec g;
  g.cls = AnomalyClass::Groove;
  g.depth = 0.1;
  EXPECT_THROW(primitive_depth_field(g, 0, 0), SpecError);
}

TEST(Nonrigid, IdentityMapsLeavePointsUnchanged) {
  auto pts = random_cloud(200, 1);
  std::vector<LocalMap> maps(3);
  maps[0].anchor = {0.1, 0.2, 0};
  maps[1].anchor = {-0.3, 0.0, 0};
  maps[2].anchor = {0.0, -0.4, 0};
  const auto out = blend_local_maps(pts, maps, 0.2);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(out[i][c], pts[i][c]);
  auto s = dent(0.3, 0.1, 0.05);
  NonrigidConfig cfg;
  cfg.max_rotation_deg = 0;
  cfg.scale_min = cfg.scale_max = 1;
  cfg.max_translation = 0;
  const auto same = apply_nonrigid(pts, s, cfg, 42);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(same[i][c], pts[i][c], 1e-15);
}

TEST(Nonrigid, SingleTranslationMovesEveryPoint) {
  auto pts = random_cloud(100, 2);
  LocalMap m;
  m.anchor = {0.5, -0.5, 0};
  m.tx = 0.03;
  m.ty = -0.02;
  const auto out = blend_local_maps(pts, {m}, 0.01);  // far points: weights still normalize
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(out[i][0] - pts[i][0], 0.03, 1e-12);
    EXPECT_NEAR(out[i][1] - pts[i][1], -0.02, 1e-12);
    EXPECT_EQ(out[i][2], pts[i][2]);
  }
}

TEST(Nonrigid, MeanDisplacementWithinBound) {
  auto s = dent(0.3, 0.15, 0.1);
  NonrigidConfig cfg;
  const double side = s.patch_side();
  // Anchors lie on the footprint, the points on the patch.
  const double reach = side / std::sqrt(2.0) + s.footprint_diameter() / 2 + s.depth;
  const double bound = nonrigid_displacement_bound(s, cfg, reach);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-side / 2, side / 2);
  Points pts(500);
  for (auto& p : pts) p = {u(rng), u(rng), 0};
  for (auto& p : pts) p[2] = primitive_depth_field(s, p[0], p[1]);
  double worst_mean = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto maps = draw_local_maps(s, cfg, seed);
    for (const auto& m : maps) {
      EXPECT_TRUE(s.in_footprint(m.anchor[0], m.anchor[1]));
      EXPECT_LE(std::abs(m.angle), cfg.max_rotation_deg * kPi / 180 + 1e-12);
      EXPECT_GE(m.scale, cfg.scale_min);
      EXPECT_LE(m.scale, cfg.scale_max);
      EXPECT_LE(std::hypot(m.tx, m.ty), cfg.max_translation * s.footprint_diameter() + 1e-12);
    }
    const auto out = apply_nonrigid(pts, s, cfg, seed);
    double mean = 0, worst = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = dist(out[i], pts[i]);
      mean += d / double(pts.size());
      worst = std::max(worst, d);
    }
    EXPECT_LE(worst, bound);
    EXPECT_GT(mean, 0);
    worst_mean = std::max(worst_mean, mean);
  }
  EXPECT_LE(worst_mean, bound);
}

TEST(Nonrigid, PreservesFlatSurfaceHeight) {
  auto s = dent(0.3, 0.15, 0.1);
  Points flat = random_cloud(300, 5);
  for (auto& p : flat) p[2] = 0;
  const auto out = apply_nonrigid(flat, s, NonrigidConfig{}, 9);
  for (const auto& p : out) EXPECT_EQ(p[2], 0);
}

TEST(Rigid, IdentityAndQuarterTurn) {
  auto pts = random_cloud(50, 6);
  auto same = apply_rigid(pts, {});
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(same[i][c], pts[i][c]);
  auto r = apply_rigid({{1, 0, 0}}, {kPi / 2, 0, 0});
  EXPECT_NEAR(r[0][0], 0, 1e-6);
  EXPECT_NEAR(r[0][1], 1, 1e-6);
  EXPECT_NEAR(r[0][2], 0, 1e-6);
}

TEST(Rigid, PreservesPairwiseDistances) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> a(-kPi, kPi), t(-2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    auto pts = random_cloud(60, std::uint64_t(trial));
    auto out = apply_rigid(pts, {a(rng), t(rng), t(rng)});
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j) EXPECT_NEAR(dist(out[i], out[j]), dist(pts[i], pts[j]), 1e-5);
  }
}

TEST(Synthesize, ZeroDepthWithoutNoiseIsPlanar) {
  GeneratorConfig cfg;
  cfg.noise_fraction = 0;
  auto s = dent(0.3, 0.1, 0.0);
  s.pose = {0.7, 0.1, -0.05};
  auto sample = synthesize_sample(s, 256, 3, cfg);
  for (const auto& p : sample.points) EXPECT_NEAR(p[2], 0, 1e-6);
}

TEST(Synthesize, DeterministicAndNormalized) {
  GeneratorConfig cfg;
  for (auto cls : {AnomalyClass::Dent, AnomalyClass::Scratch, AnomalyClass::Hole, AnomalyClass::Groove}) {
    auto spec = draw_spec(cls, cfg, 11);
    auto a = synthesize_sample(spec, 512, 5, cfg), b = synthesize_sample(spec, 512, 5, cfg);
    ASSERT_EQ(a.points.size(), 512u);
    EXPECT_EQ(a.points, b.points);
    EXPECT_EQ(a.label, class_label(cls));
    Point mean{0, 0, 0};
    double rmax = 0;
    for (const auto& p : a.points) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_TRUE(std::isfinite(p[c]));
        mean[c] += p[c] / 512;
      }
      rmax = std::max(rmax, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
    }
    for (double m : mean) EXPECT_NEAR(m, 0, 1e-5);
    EXPECT_NEAR(rmax, 1, 1e-5);
    auto other = synthesize_sample(spec, 512, 6, cfg);
    EXPECT_NE(other.points, a.points);
  }
}

TEST(Synthesize, FootprintFractionMatchesAreaRatio) {
  for (double fixed_side : {0.0, 1.0}) {
    GeneratorConfig cfg;
    cfg.noise_fraction = 0;
    cfg.patch_side = fixed_side;
    for (auto cls : {AnomalyClass::Dent, AnomalyClass::Scratch, AnomalyClass::Hole, AnomalyClass::Groove}) {
      double frac = 0, ratio = 0;
      for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto spec = draw_spec(cls, cfg, 1000 + seed);
        const auto sample = synthesize_sample(spec, 1024, seed, cfg);
        // The base plane is the highest level; every footprint point lies below it.
        double top = -1e300;
        for (const auto& p : sample.points) top = std::max(top, p[2]);
        std::size_t inside = 0;
        for (const auto& p : sample.points) inside += p[2] < top - 1e-12;
        frac += double(inside) / 1024 / 50;
        const double side = cfg.side_for(spec);
        ratio += spec.footprint_area() / (side * side) / 50;
      }
      EXPECT_NEAR(frac / ratio, 1.0, 0.3) << class_name(cls) << " side " << fixed_side;
    }
  }
}

TEST(GeneratorConfig, FixedPatchSide) {
  GeneratorConfig cfg;
  const auto spec = draw_spec(AnomalyClass::Hole, cfg, 3);
  EXPECT_EQ(cfg.side_for(spec), spec.patch_side(cfg.patch_scale));
  cfg.patch_side = 1.0;
  EXPECT_EQ(cfg.side_for(spec), 1.0);
  cfg.patch_side = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Synthesize, Preconditions) {
  EXPECT_THROW(synthesize_sample(dent(0.3, 0.1, 0.1), 63, 0), ContractError);
  EXPECT_THROW(synthesize_sample(dent(0.3, -0.1, 0.1), 64, 0), SpecError);
}

TEST(GeneratorConfig, KeysRoundTripAndUnknownKeyIsNamed) {
  GeneratorConfig cfg;
  cfg.binder().apply(parse_key_values("points = 512\ndent.width = 0.1 0.3\nnonrigid.anchors = 4\n"));
  EXPECT_EQ(cfg.points, 512u);
  EXPECT_EQ(cfg.dent_width.lo, 0.1);
  EXPECT_EQ(cfg.nonrigid.anchors, 4);
  GeneratorConfig copy;
  std::string text;
  for (const auto& [k, v] : cfg.entries()) text += k + " = " + v + "\n";
  copy.binder().apply(parse_key_values(text));
  EXPECT_EQ(copy.entries(), cfg.entries());
  try {
    cfg.binder().apply(parse_key_values("dent.colour = 3\n"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "dent.colour");
  }
  EXPECT_THROW(cfg.binder().apply(parse_key_values("points = many\n")), ConfigError);
  EXPECT_THROW(parse_key_values("just words\n"), ConfigError);
}

TEST(DrawSpec, CoversConfiguredRanges) {
  GeneratorConfig cfg;
  struct Field {
    AnomalyClass cls;
    double AnomalySpec::*member;
    ParamRange range;
  };
  const Field fields[] = {{AnomalyClass::Dent, &AnomalySpec::length, cfg.dent_length},
                          {AnomalyClass::Dent, &AnomalySpec::width, cfg.dent_width},
                          {AnomalyClass::Dent, &AnomalySpec::depth, cfg.dent_depth},
                          {AnomalyClass::Scratch, &AnomalySpec::length, cfg.scratch_length},
                          {AnomalyClass::Scratch, &AnomalySpec::radius, cfg.scratch_radius},
                          {AnomalyClass::Hole, &AnomalySpec::height, cfg.hole_height},
                          {AnomalyClass::Hole, &AnomalySpec::radius, cfg.hole_radius},
                          {AnomalyClass::Groove, &AnomalySpec::width, cfg.groove_width},
                          {AnomalyClass::Groove, &AnomalySpec::depth, cfg.groove_depth}};
  for (const auto& f : fields) {
    double lo = 1e300, hi = -1e300;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const double v = draw_spec(f.cls, cfg, seed).*f.member;
      ASSERT_GE(v, f.range.lo);
      ASSERT_LE(v, f.range.hi);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = f.range.hi - f.range.lo;
    EXPECT_LE(lo - f.range.lo, 0.05 * span);
    EXPECT_LE(f.range.hi - hi, 0.05 * span);
  }
}

TEST(SampleFiles, BinaryAndTextAgree) {
  TempDir dir("samples");
  auto pts = random_cloud(300, 8);
  write_sample((dir.path / "a.pcb").string(), pts, SampleFormat::Binary);
  write_sample((dir.path / "a.xyz").string(), pts, SampleFormat::Text);
  auto b = read_sample((dir.path / "a.pcb").string());
  auto t = read_sample((dir.path / "a.xyz").string());
  ASSERT_EQ(b.size(), 300u);
  ASSERT_EQ(t.size(), 300u);
  for (std::size_t i = 0; i < 300; ++i)
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(b[i][c], t[i][c], 1e-6);
      EXPECT_EQ(b[i][c], double(float(pts[i][c])));
    }
  const std::string bytes = read_file((dir.path / "a.pcb").string());
  EXPECT_EQ(bytes.substr(0, 4), "PCB1");
  EXPECT_EQ(bytes.size(), 8 + 300 * 12u);
}

TEST(SampleFiles, CorruptFilesAreRejected) {
  TempDir dir("corrupt");
  write_file((dir.path / "short.pcb").string(), std::string("PCB1\x05\0\0\0", 8) + "abc");
  EXPECT_THROW(read_sample((dir.path / "short.pcb").string()), StorageError);
  write_file((dir.path / "bad.xyz").string(), "1 2 3\n4 5\n");
  EXPECT_THROW(read_sample((dir.path / "bad.xyz").string()), StorageError);
  EXPECT_THROW(read_sample((dir.path / "missing.pcb").string()), StorageError);
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Dataset, DefaultConfigCountsAndIntegrity) {
  TempDir dir("dataset");
  GeneratorConfig cfg;
  auto m = generate_dataset(cfg, 123, dir.str(), 4);
  EXPECT_EQ(m.samples.size(), 330u);
  EXPECT_EQ(m.split("train").size(), 90u);
  EXPECT_EQ(m.split("val").size(), 30u);
  EXPECT_EQ(m.split("test").size(), 180u);
  EXPECT_EQ(m.split("new").size(), 30u);
  for (const auto& s : m.samples) {
    ASSERT_TRUE(s.spec.has_value());
    EXPECT_EQ(class_label(s.spec->cls), s.label);
    EXPECT_EQ(s.points, 2048u);
    if (s.label == -1) {
      EXPECT_EQ(s.split, "new");
    }
    EXPECT_EQ(sha256_file(m.resolve(s)), s.sha256);
  }
  auto read = read_manifest((dir.path / "manifest.json").string());
  EXPECT_EQ(manifest_json(read), manifest_json(m));
  auto train = load_split(read, "train");
  EXPECT_EQ(train.size(), 90u);
  EXPECT_EQ(train.points, 2048u);
}

TEST(Dataset, SameSeedSameManifestAnyThreadCount) {
  TempDir a("det_a"), b("det_b");
  GeneratorConfig cfg;
  cfg.points = 128;
  cfg.sample_format = "text";
  generate_dataset(cfg, 77, a.str(), 1);
  generate_dataset(cfg, 77, b.str(), 3);
  EXPECT_EQ(sha256_file((a.path / "manifest.json").string()), sha256_file((b.path / "manifest.json").string()));
  TempDir c("det_c");
  generate_dataset(cfg, 78, c.str(), 1);
  EXPECT_NE(sha256_file((a.path / "manifest.json").string()), sha256_file((c.path / "manifest.json").string()));
}

TEST(Dataset, ResplitKeepsPoolAndSizes) {
  TempDir dir("resplit");
  GeneratorConfig cfg;
  cfg.points = 64;
  auto m = generate_dataset(cfg, 5, dir.str(), 2);
  auto r1 = resplit(m, 1, 30, 10, 60), r2 = resplit(m, 2, 30, 10, 60), again = resplit(m, 1, 30, 10, 60);
  EXPECT_EQ(manifest_json(r1), manifest_json(again));
  EXPECT_NE(manifest_json(r1), manifest_json(r2));
  EXPECT_EQ(r1.split("train").size(), 90u);
  EXPECT_EQ(r1.split("test").size(), 180u);
  EXPECT_EQ(r1.split("new").size(), 30u);
  r1.validate();
  EXPECT_THROW(resplit(m, 1, 80, 10, 60), ContractError);
}

TEST(Dataset, TamperedManifestsAreRejected) {
  TempDir dir("tamper");
  GeneratorConfig cfg;
  cfg.points = 64;
  cfg.train_per_class = 2;
  cfg.val_per_class = 1;
  cfg.test_per_class = 1;
  cfg.new_type_count = 2;
  auto m = generate_dataset(cfg, 9, dir.str());
  auto bad = m;
  bad.samples.back().split = "train";  // a groove sample in training
  EXPECT_THROW(bad.validate(), SpecError);
  bad = m;
  bad.samples.front().label = 1;
  EXPECT_THROW(bad.validate(), SpecError);
  bad = m;
  bad.samples[1].id = bad.samples[0].id;
  EXPECT_THROW(bad.validate(), SpecError);
  // Digest check on load.
  write_sample(m.resolve(m.samples[0]), random_cloud(64, 1), SampleFormat::Binary);
  EXPECT_THROW(load_split(m, "train"), StorageError);
}
