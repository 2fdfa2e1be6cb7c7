#pragma once

// Synthetic benchmark generation: primitive shapes, mesh ingestion, rigidly transformed pairs,
// partial crops and train/test splits.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "scralign/geometry.hpp"

namespace scr {

/// The first six kinds have continuous or large discrete rotational symmetry; box, wedge,
/// tetra, lshape and tshape are asymmetric enough for rotation errors to be well defined.
enum class ShapeKind { Sphere, Cube, Torus, Cone, Cylinder, Helix, Box, Wedge, Tetra, LShape, TShape };

std::string to_string(ShapeKind kind);
/// Throws InvalidArgument for unknown names.
ShapeKind parse_shape_kind(const std::string& name);
const std::vector<ShapeKind>& all_shape_kinds();

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;

  double face_area(std::size_t f) const;
};

TriangleMesh parse_off(std::istream& in);
/// Throws IoError when unreadable and ParseError (with line number) when malformed.
TriangleMesh load_off(const std::filesystem::path& path);

/// Area-weighted triangle choice, then a uniform barycentric point. No normalization.
PointCloud sample_mesh_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

/// Surface samples of the primitive at its native scale (cube faces at +-1, ...).
PointCloud sample_primitive_raw(ShapeKind kind, std::size_t n, std::uint64_t seed);

/// Uniform surface sample followed by center_and_rescale. Requires n >= 16.
PointCloud generate_primitive(ShapeKind kind, std::size_t n, std::uint64_t seed);
PointCloud generate_primitive(const std::string& kind, std::size_t n, std::uint64_t seed);

/// Triangle mesh behind the polyhedral kinds (cube, box, wedge, tetra, lshape, tshape).
TriangleMesh primitive_mesh(ShapeKind kind);

struct PairSpec {
  std::string pair_id;
  PointCloud source;
  PointCloud target;
  RigidTransform ground_truth;
  std::string category;
  bool partial = false;
};

/// Draws 3 angles uniform in [0, angle_max_deg] degrees and 3 translations uniform in
/// [-trans_range, trans_range]; target = ground_truth applied to `cloud`.
PairSpec sample_pair(const PointCloud& cloud, std::uint64_t seed, double angle_max_deg = 45.0, double trans_range = 0.5);

/// Same draw, but the target is the transform of a separately sampled cloud of the same shape.
PairSpec sample_pair(const PointCloud& source, const PointCloud& target_base, std::uint64_t seed,
                     double angle_max_deg, double trans_range);

/// Crops source and target independently to the `keep` points nearest a uniform random point
/// of [-1, 1]^3 (ties by lower index; kept points stay in their original order).
PairSpec make_partial(const PairSpec& pair, std::size_t keep, std::uint64_t seed);

/// Indices of the `keep` points nearest `center`, in original order.
std::vector<std::size_t> nearest_subset(const PointCloud& cloud, const Vec3& center, std::size_t keep);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle, first round(train_fraction * n) go to train.
SplitIndices split_random(std::size_t count, double train_fraction, std::uint64_t seed);
/// Pairs whose category is listed go to test, the rest to train.
SplitIndices split_by_category(const std::vector<std::string>& categories, const std::vector<std::string>& test_categories);
/// Chooses round((1 - train_fraction) * #categories) categories at random for test.
SplitIndices split_by_category(const std::vector<std::string>& categories, double train_fraction, std::uint64_t seed);

struct GenerationParams {
  std::vector<std::string> shapes{"box", "wedge", "tetra", "lshape"};
  std::size_t pairs = 100;
  std::size_t points = 256;
  std::uint64_t seed = 0;
  double angle_max_deg = 45.0;
  double trans_range = 0.5;
  bool partial = false;
  double keep_ratio = 0.75;
  bool resample = false;
  std::string split = "random";  // random | category
  double train_fraction = 0.8;
  std::vector<std::string> test_shapes;  // category split; empty = random choice of categories

  void validate() const;
};

struct DatasetPair {
  PairSpec spec;
  std::string split;  // train | test
  std::uint64_t shape_seed = 0;
  std::uint64_t pose_seed = 0;
  std::uint64_t crop_seed = 0;
};

/// Fully deterministic in params (each pair derives its seeds from (seed, index)).
std::vector<DatasetPair> generate_dataset(const GenerationParams& params);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream);

/// Layout: <dir>/manifest.json plus <dir>/<split>/<pair_id>.{source.xyz,target.xyz,meta.json}.
void write_dataset(const std::filesystem::path& dir, const GenerationParams& params, const std::vector<DatasetPair>& pairs);

struct Dataset {
  GenerationParams params;
  std::vector<DatasetPair> pairs;

  std::vector<DatasetPair> split(const std::string& name) const;
};

Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace scr
