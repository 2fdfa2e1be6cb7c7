#include "scralign/data.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <sstream>

#include "scralign/errors.hpp"
#include "scralign/io.hpp"

namespace scr {

namespace {

using Rng = std::mt19937_64;
using json = nlohmann::json;

double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

Vec3 unit_sphere_point(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.squaredNorm() < 1e-24);
  return v.normalized();
}

void add_quad(TriangleMesh& m, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const std::size_t base = m.vertices.size();
  m.vertices.insert(m.vertices.end(), {a, b, c, d});
  m.faces.push_back({base, base + 1, base + 2});
  m.faces.push_back({base, base + 2, base + 3});
}

void add_triangle(TriangleMesh& m, const Vec3& a, const Vec3& b, const Vec3& c) {
  const std::size_t base = m.vertices.size();
  m.vertices.insert(m.vertices.end(), {a, b, c});
  m.faces.push_back({base, base + 1, base + 2});
}

TriangleMesh cuboid(const Vec3& h) {
  TriangleMesh m;
  const double x = h.x(), y = h.y(), z = h.z();
  add_quad(m, {-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z});
  add_quad(m, {-x, -y, z}, {x, -y, z}, {x, y, z}, {-x, y, z});
  add_quad(m, {-x, -y, -z}, {x, -y, -z}, {x, -y, z}, {-x, -y, z});
  add_quad(m, {-x, y, -z}, {x, y, -z}, {x, y, z}, {-x, y, z});
  add_quad(m, {-x, -y, -z}, {-x, y, -z}, {-x, y, z}, {-x, -y, z});
  add_quad(m, {x, -y, -z}, {x, y, -z}, {x, y, z}, {x, -y, z});
  return m;
}

// Prism over a polygon given as triangles (caps) plus its boundary loop (sides).
TriangleMesh extrude(const std::vector<std::array<Eigen::Vector2d, 3>>& cap, const std::vector<Eigen::Vector2d>& loop,
                     double z0, double z1) {
  TriangleMesh m;
  for (const auto& t : cap) {
    add_triangle(m, {t[0].x(), t[0].y(), z0}, {t[1].x(), t[1].y(), z0}, {t[2].x(), t[2].y(), z0});
    add_triangle(m, {t[0].x(), t[0].y(), z1}, {t[1].x(), t[1].y(), z1}, {t[2].x(), t[2].y(), z1});
  }
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const auto& a = loop[i];
    const auto& b = loop[(i + 1) % loop.size()];
    add_quad(m, {a.x(), a.y(), z0}, {b.x(), b.y(), z0}, {b.x(), b.y(), z1}, {a.x(), a.y(), z1});
  }
  return m;
}

// Area-uniform samples on a surface of revolution piece chosen by weights.
std::size_t pick(Rng& rng, const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = uniform(rng, 0.0, total);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

Vec3 disk_point(Rng& rng, double radius, double z) {
  const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
  const double t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return {r * std::cos(t), r * std::sin(t), z};
}

Vec3 sample_torus(Rng& rng) {
  constexpr double major = 1.0, minor = 0.35;
  for (;;) {
    const double u = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double v = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    // Area element is proportional to (major + minor cos v).
    if (uniform(rng, 0.0, major + minor) <= major + minor * std::cos(v)) {
      const double rho = major + minor * std::cos(v);
      return {rho * std::cos(u), rho * std::sin(u), minor * std::sin(v)};
    }
  }
}

Vec3 sample_cone(Rng& rng) {
  constexpr double radius = 1.0, height = 2.0;
  const double slant = std::hypot(radius, height);
  if (pick(rng, {std::numbers::pi * radius * slant, std::numbers::pi * radius * radius}) == 1) {
    return disk_point(rng, radius, -height / 2);
  }
  // Lateral surface: distance from apex s has density proportional to s.
  const double s = std::sqrt(uniform(rng, 0.0, 1.0));
  const double t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return {s * radius * std::cos(t), s * radius * std::sin(t), height / 2 - s * height};
}

Vec3 sample_cylinder(Rng& rng) {
  constexpr double radius = 0.7, height = 2.0;
  const std::size_t part = pick(rng, {2 * std::numbers::pi * radius * height, std::numbers::pi * radius * radius,
                                      std::numbers::pi * radius * radius});
  if (part == 1) return disk_point(rng, radius, -height / 2);
  if (part == 2) return disk_point(rng, radius, height / 2);
  const double t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return {radius * std::cos(t), radius * std::sin(t), uniform(rng, -height / 2, height / 2)};
}

Vec3 sample_helix(Rng& rng) {
  constexpr double turns = 2.5, pitch = 0.15, tube = 0.1;
  const double curvature = 1.0 / (1.0 + pitch * pitch);
  const double norm = std::sqrt(1.0 + pitch * pitch);
  for (;;) {
    const double t = uniform(rng, 0.0, turns * 2.0 * std::numbers::pi);
    const double v = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    if (uniform(rng, 0.0, 1.0 + curvature * tube) > 1.0 - curvature * tube * std::cos(v)) continue;
    const Vec3 center(std::cos(t), std::sin(t), pitch * t - pitch * turns * std::numbers::pi);
    const Vec3 normal(-std::cos(t), -std::sin(t), 0.0);
    const Vec3 tangent = Vec3(-std::sin(t), std::cos(t), pitch) / norm;
    const Vec3 binormal = tangent.cross(normal);
    return center + tube * (std::cos(v) * normal + std::sin(v) * binormal);
  }
}

json transform_json(const RigidTransform& t) {
  const Vec3 deg = t.rotation.degrees();
  return {{"angles_deg", {deg.x(), deg.y(), deg.z()}}, {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

RigidTransform transform_from_json(const json& j) {
  const auto& a = j.at("angles_deg");
  const auto& t = j.at("translation");
  RigidTransform out;
  out.rotation = EulerAnglesXYZ::from_degrees(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
  out.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  return out;
}

json params_json(const GenerationParams& p) {
  return {{"shapes", p.shapes},
          {"pairs", p.pairs},
          {"points", p.points},
          {"seed", p.seed},
          {"angle_max_deg", p.angle_max_deg},
          {"trans_range", p.trans_range},
          {"partial", p.partial},
          {"keep_ratio", p.keep_ratio},
          {"resample", p.resample},
          {"split", p.split},
          {"train_fraction", p.train_fraction},
          {"test_shapes", p.test_shapes}};
}

GenerationParams params_from_json(const json& j) {
  GenerationParams p;
  p.shapes = j.at("shapes").get<std::vector<std::string>>();
  p.pairs = j.at("pairs").get<std::size_t>();
  p.points = j.at("points").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.angle_max_deg = j.at("angle_max_deg").get<double>();
  p.trans_range = j.at("trans_range").get<double>();
  p.partial = j.at("partial").get<bool>();
  p.keep_ratio = j.at("keep_ratio").get<double>();
  p.resample = j.at("resample").get<bool>();
  p.split = j.at("split").get<std::string>();
  p.train_fraction = j.at("train_fraction").get<double>();
  p.test_shapes = j.at("test_shapes").get<std::vector<std::string>>();
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

// ---- shapes -------------------------------------------------------------------------

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Cone: return "cone";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Helix: return "helix";
    case ShapeKind::Box: return "box";
    case ShapeKind::Wedge: return "wedge";
    case ShapeKind::Tetra: return "tetra";
    case ShapeKind::LShape: return "lshape";
    case ShapeKind::TShape: return "tshape";
  }
  return "unknown";
}

const std::vector<ShapeKind>& all_shape_kinds() {
  static const std::vector<ShapeKind> kinds{ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Torus, ShapeKind::Cone,
                                            ShapeKind::Cylinder, ShapeKind::Helix, ShapeKind::Box, ShapeKind::Wedge,
                                            ShapeKind::Tetra, ShapeKind::LShape, ShapeKind::TShape};
  return kinds;
}

ShapeKind parse_shape_kind(const std::string& name) {
  for (auto k : all_shape_kinds())
    if (to_string(k) == name) return k;
  throw InvalidArgument("unknown shape kind '" + name + "'");
}

double TriangleMesh::face_area(std::size_t f) const {
  const auto& [a, b, c] = faces.at(f);
  return 0.5 * (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]).norm();
}

TriangleMesh primitive_mesh(ShapeKind kind) {
  using V2 = Eigen::Vector2d;
  switch (kind) {
    case ShapeKind::Cube: return cuboid({1.0, 1.0, 1.0});
    case ShapeKind::Box: return cuboid({1.0, 0.6, 0.35});
    case ShapeKind::Wedge: {
      // Scalene right triangle, so no proper rotation maps the prism onto itself.
      const V2 a(-0.8, -0.5), b(1.0, -0.5), c(-0.8, 0.7);
      return extrude({{a, b, c}}, {a, b, c}, -0.4, 0.4);
    }
    case ShapeKind::Tetra: {
      TriangleMesh m;
      m.vertices = {{1.0, 0.0, -0.3}, {-0.6, 0.8, -0.2}, {-0.4, -0.7, -0.4}, {0.1, 0.1, 0.9}};
      m.faces = {{0, 1, 2}, {0, 1, 3}, {1, 2, 3}, {0, 2, 3}};
      return m;
    }
    case ShapeKind::LShape: {
      const std::vector<V2> loop{{0.0, 0.0}, {1.6, 0.0}, {1.6, 0.5}, {0.6, 0.5}, {0.6, 1.2}, {0.0, 1.2}};
      const std::vector<std::array<V2, 3>> cap{{loop[0], loop[1], loop[2]}, {loop[0], loop[2], V2(0.0, 0.5)},
                                               {V2(0.0, 0.5), loop[3], loop[4]}, {V2(0.0, 0.5), loop[4], loop[5]}};
      return extrude(cap, loop, 0.0, 0.5);
    }
    case ShapeKind::TShape: {
      // Off-center stem and unequal arms.
      const std::vector<V2> loop{{0.0, 0.0}, {0.5, 0.0}, {0.5, 0.9}, {1.3, 0.9}, {1.3, 1.3}, {-0.6, 1.3}, {-0.6, 0.9}, {0.0, 0.9}};
      const std::vector<std::array<V2, 3>> cap{{loop[0], loop[1], loop[2]}, {loop[0], loop[2], loop[7]},
                                               {loop[6], loop[3], loop[4]}, {loop[6], loop[4], loop[5]}};
      return extrude(cap, loop, 0.0, 0.45);
    }
    default: break;
  }
  throw InvalidArgument("shape kind '" + to_string(kind) + "' has no polyhedral mesh");
}

PointCloud sample_mesh_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.faces.empty()) throw InvalidArgument("mesh has no faces");
  if (n == 0) throw InvalidArgument("sample count must be positive");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw DegenerateGeometry("mesh has zero surface area");
  Rng rng(seed);
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform(rng, 0.0, total);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t f = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), mesh.faces.size() - 1);
    const auto& [a, b, c] = mesh.faces[f];
    const double r1 = std::sqrt(uniform(rng, 0.0, 1.0)), r2 = uniform(rng, 0.0, 1.0);
    pts.push_back((1.0 - r1) * mesh.vertices[a] + r1 * (1.0 - r2) * mesh.vertices[b] + r1 * r2 * mesh.vertices[c]);
  }
  return PointCloud(std::move(pts));
}

PointCloud sample_primitive_raw(ShapeKind kind, std::size_t n, std::uint64_t seed) {
  switch (kind) {
    case ShapeKind::Cube:
    case ShapeKind::Box:
    case ShapeKind::Wedge:
    case ShapeKind::Tetra:
    case ShapeKind::LShape:
    case ShapeKind::TShape: return sample_mesh_surface(primitive_mesh(kind), n, seed);
    default: break;
  }
  Rng rng(seed);
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case ShapeKind::Sphere: pts.push_back(unit_sphere_point(rng)); break;
      case ShapeKind::Torus: pts.push_back(sample_torus(rng)); break;
      case ShapeKind::Cone: pts.push_back(sample_cone(rng)); break;
      case ShapeKind::Cylinder: pts.push_back(sample_cylinder(rng)); break;
      case ShapeKind::Helix: pts.push_back(sample_helix(rng)); break;
      default: throw InvalidArgument("unhandled shape kind");
    }
  }
  return PointCloud(std::move(pts));
}

PointCloud generate_primitive(ShapeKind kind, std::size_t n, std::uint64_t seed) {
  if (n < 16) throw InvalidArgument("generate_primitive: need at least 16 points, got " + std::to_string(n));
  return center_and_rescale(sample_primitive_raw(kind, n, seed));
}

PointCloud generate_primitive(const std::string& kind, std::size_t n, std::uint64_t seed) {
  return generate_primitive(parse_shape_kind(kind), n, seed);
}

// ---- OFF ----------------------------------------------------------------------------

TriangleMesh parse_off(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  // Next line that is neither blank nor a comment, tokenized.
  auto next_tokens = [&](std::vector<std::string>& tokens) {
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      std::istringstream ss(hash == std::string::npos ? line : line.substr(0, hash));
      tokens.clear();
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  };
  auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) throw ParseError("OFF: invalid number '" + s + "'", line_no);
    return v;
  };
  auto to_index = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ParseError("OFF: invalid integer '" + s + "'", line_no);
    }
    return std::stoull(s);
  };

  std::vector<std::string> tok;
  if (!next_tokens(tok) || tok[0].rfind("OFF", 0) != 0) throw ParseError("OFF: missing 'OFF' header", line_no ? line_no : 1);
  // Some exporters glue the counts onto the header ("OFF8 6 0").
  std::vector<std::string> counts;
  if (tok[0].size() > 3) counts.push_back(tok[0].substr(3));
  counts.insert(counts.end(), tok.begin() + 1, tok.end());
  if (counts.empty()) {
    if (!next_tokens(counts)) throw ParseError("OFF: missing counts line", line_no + 1);
  }
  if (counts.size() < 2) throw ParseError("OFF: counts line needs vertex and face counts", line_no);
  const std::size_t nv = to_index(counts[0]);
  const std::size_t nf = to_index(counts[1]);

  TriangleMesh mesh;
  mesh.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    if (!next_tokens(tok)) {
      throw ParseError("OFF: header declares " + std::to_string(nv) + " vertices but only " + std::to_string(i) +
                           " found before end of file", line_no + 1);
    }
    if (tok.size() < 3) throw ParseError("OFF: vertex line needs 3 coordinates", line_no);
    mesh.vertices.emplace_back(to_double(tok[0]), to_double(tok[1]), to_double(tok[2]));
    if (!mesh.vertices.back().allFinite()) throw ParseError("OFF: non-finite vertex", line_no);
  }
  for (std::size_t f = 0; f < nf; ++f) {
    if (!next_tokens(tok)) {
      throw ParseError("OFF: header declares " + std::to_string(nf) + " faces but only " + std::to_string(f) +
                           " found before end of file", line_no + 1);
    }
    const std::size_t k = to_index(tok[0]);
    if (k < 3 || tok.size() < k + 1) throw ParseError("OFF: face line has an invalid vertex count", line_no);
    std::vector<std::size_t> idx(k);
    for (std::size_t j = 0; j < k; ++j) {
      idx[j] = to_index(tok[j + 1]);
      if (idx[j] >= nv) throw ParseError("OFF: face references vertex " + std::to_string(idx[j]) + " of " + std::to_string(nv), line_no);
    }
    for (std::size_t j = 1; j + 1 < k; ++j) mesh.faces.push_back({idx[0], idx[j], idx[j + 1]});
  }
  if (next_tokens(tok)) {
    throw ParseError("OFF: unexpected content after the " + std::to_string(nv) + " vertices and " + std::to_string(nf) +
                         " faces declared in the header", line_no);
  }
  if (mesh.vertices.empty()) throw ParseError("OFF: no vertices", line_no);
  return mesh;
}

TriangleMesh load_off(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return parse_off(in);
  } catch (const ParseError& e) {
    throw e.with_prefix(path.string() + ": ");
  }
}

// ---- pairs --------------------------------------------------------------------------

PairSpec sample_pair(const PointCloud& source, const PointCloud& target_base, std::uint64_t seed, double angle_max_deg,
                     double trans_range) {
  if (angle_max_deg < 0.0 || trans_range < 0.0) throw InvalidArgument("sample_pair: ranges must be non-negative");
  Rng rng(seed);
  const double ax = uniform(rng, 0.0, angle_max_deg), ay = uniform(rng, 0.0, angle_max_deg), az = uniform(rng, 0.0, angle_max_deg);
  const double tx = uniform(rng, -trans_range, trans_range), ty = uniform(rng, -trans_range, trans_range),
               tz = uniform(rng, -trans_range, trans_range);
  PairSpec pair;
  pair.ground_truth.rotation = EulerAnglesXYZ::from_degrees(ax, ay, az);
  pair.ground_truth.translation = Vec3(tx, ty, tz);
  pair.source = source;
  pair.target = apply_transform(pair.ground_truth, target_base);
  return pair;
}

PairSpec sample_pair(const PointCloud& cloud, std::uint64_t seed, double angle_max_deg, double trans_range) {
  return sample_pair(cloud, cloud, seed, angle_max_deg, trans_range);
}

std::vector<std::size_t> nearest_subset(const PointCloud& cloud, const Vec3& center, std::size_t keep) {
  if (keep > cloud.size()) {
    throw InvalidArgument("cannot keep " + std::to_string(keep) + " of " + std::to_string(cloud.size()) + " points");
  }
  if (keep == 0) throw InvalidArgument("partial crop must keep at least one point");
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> dist(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) dist[i] = (cloud[i] - center).squaredNorm();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

PairSpec make_partial(const PairSpec& pair, std::size_t keep, std::uint64_t seed) {
  Rng rng(seed);
  const Vec3 source_center(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  const Vec3 target_center(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  PairSpec out = pair;
  out.source = pair.source.subset(nearest_subset(pair.source, source_center, keep));
  out.target = pair.target.subset(nearest_subset(pair.target, target_center, keep));
  out.partial = true;
  return out;
}

// ---- splits -------------------------------------------------------------------------

SplitIndices split_random(std::size_t count, double train_fraction, std::uint64_t seed) {
  if (count == 0) throw InvalidArgument("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must be in (0, 1)");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(count)));
  if (n_train == 0 || n_train == count) throw InvalidArgument("split leaves one side empty");
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

SplitIndices split_by_category(const std::vector<std::string>& categories, const std::vector<std::string>& test_categories) {
  if (categories.empty()) throw InvalidArgument("cannot split an empty dataset");
  SplitIndices s;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const bool test = std::find(test_categories.begin(), test_categories.end(), categories[i]) != test_categories.end();
    (test ? s.test : s.train).push_back(i);
  }
  if (s.train.empty() || s.test.empty()) throw InvalidArgument("category split leaves one side empty");
  return s;
}

SplitIndices split_by_category(const std::vector<std::string>& categories, double train_fraction, std::uint64_t seed) {
  std::vector<std::string> unique;
  for (const auto& c : categories)
    if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(c);
  std::sort(unique.begin(), unique.end());
  Rng rng(seed);
  std::shuffle(unique.begin(), unique.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround((1.0 - train_fraction) * static_cast<double>(unique.size())));
  return split_by_category(categories, std::vector<std::string>(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(std::min(n_test, unique.size()))));
}

// ---- datasets -----------------------------------------------------------------------

void GenerationParams::validate() const {
  if (shapes.empty()) throw InvalidArgument("at least one shape kind is required");
  for (const auto& s : shapes) parse_shape_kind(s);
  for (const auto& s : test_shapes) parse_shape_kind(s);
  if (pairs == 0) throw InvalidArgument("pair count must be positive");
  if (points < 16) throw InvalidArgument("need at least 16 points per cloud");
  if (!(angle_max_deg >= 0.0 && angle_max_deg <= 180.0)) throw InvalidArgument("angle range must be within [0, 180] degrees");
  if (!(trans_range >= 0.0)) throw InvalidArgument("translation range must be non-negative");
  if (partial && !(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw InvalidArgument("keep ratio must be in (0, 1]");
  if (split != "random" && split != "category") throw InvalidArgument("split must be 'random' or 'category'");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must be in (0, 1)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  // splitmix64 over the combined key
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index * 0xBF58476D1CE4E5B9ULL + stream * 0x94D049BB133111EBULL + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<DatasetPair> generate_dataset(const GenerationParams& params) {
  params.validate();
  std::vector<DatasetPair> out(params.pairs);
  std::vector<std::string> categories;
  for (std::size_t i = 0; i < params.pairs; ++i) {
    auto& p = out[i];
    const ShapeKind kind = parse_shape_kind(params.shapes[i % params.shapes.size()]);
    p.shape_seed = derive_seed(params.seed, i, 1);
    p.pose_seed = derive_seed(params.seed, i, 2);
    p.crop_seed = derive_seed(params.seed, i, 3);
    const PointCloud source = generate_primitive(kind, params.points, p.shape_seed);
    if (params.resample) {
      const PointCloud other = generate_primitive(kind, params.points, derive_seed(params.seed, i, 4));
      p.spec = sample_pair(source, other, p.pose_seed, params.angle_max_deg, params.trans_range);
    } else {
      p.spec = sample_pair(source, p.pose_seed, params.angle_max_deg, params.trans_range);
    }
    char id[32];
    std::snprintf(id, sizeof id, "pair_%05zu", i);
    p.spec.pair_id = id;
    p.spec.category = to_string(kind);
    if (params.partial) {
      const auto keep = static_cast<std::size_t>(std::llround(params.keep_ratio * static_cast<double>(params.points)));
      p.spec = make_partial(p.spec, keep, p.crop_seed);
    }
    categories.push_back(p.spec.category);
  }
  SplitIndices split;
  if (params.split == "category") {
    split = params.test_shapes.empty() ? split_by_category(categories, params.train_fraction, params.seed)
                                       : split_by_category(categories, params.test_shapes);
  } else {
    split = split_random(params.pairs, params.train_fraction, params.seed);
  }
  for (auto i : split.train) out[i].split = "train";
  for (auto i : split.test) out[i].split = "test";
  return out;
}

void write_dataset(const std::filesystem::path& dir, const GenerationParams& params, const std::vector<DatasetPair>& pairs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  json entries = json::array();
  for (const auto& p : pairs) {
    const auto split_dir = dir / p.split;
    std::filesystem::create_directories(split_dir, ec);
    if (ec) throw IoError("cannot create '" + split_dir.string() + "': " + ec.message());
    const std::string stem = p.spec.pair_id;
    write_xyz(split_dir / (stem + ".source.xyz"), p.spec.source);
    write_xyz(split_dir / (stem + ".target.xyz"), p.spec.target);
    const json meta = {{"pair_id", p.spec.pair_id},
                       {"category", p.spec.category},
                       {"partial", p.spec.partial},
                       {"ground_truth", transform_json(p.spec.ground_truth)},
                       {"seeds", {{"shape", p.shape_seed}, {"pose", p.pose_seed}, {"crop", p.crop_seed}}}};
    write_text(split_dir / (stem + ".meta.json"), meta.dump(2) + "\n");
    entries.push_back({{"pair_id", p.spec.pair_id},
                       {"split", p.split},
                       {"source", p.split + "/" + stem + ".source.xyz"},
                       {"target", p.split + "/" + stem + ".target.xyz"},
                       {"meta", p.split + "/" + stem + ".meta.json"}});
  }
  const json manifest = {{"format", "scralign-dataset"}, {"version", 1}, {"generation", params_json(params)}, {"pairs", entries}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  Dataset ds;
  try {
    if (manifest.at("format") != "scralign-dataset") throw ParseError((dir / "manifest.json").string() + ": not a dataset manifest");
    ds.params = params_from_json(manifest.at("generation"));
    for (const auto& e : manifest.at("pairs")) {
      DatasetPair p;
      p.split = e.at("split").get<std::string>();
      const json meta = read_json(dir / e.at("meta").get<std::string>());
      p.spec.pair_id = meta.at("pair_id").get<std::string>();
      p.spec.category = meta.at("category").get<std::string>();
      p.spec.partial = meta.at("partial").get<bool>();
      p.spec.ground_truth = transform_from_json(meta.at("ground_truth"));
      p.shape_seed = meta.at("seeds").at("shape").get<std::uint64_t>();
      p.pose_seed = meta.at("seeds").at("pose").get<std::uint64_t>();
      p.crop_seed = meta.at("seeds").at("crop").get<std::uint64_t>();
      p.spec.source = read_xyz(dir / e.at("source").get<std::string>());
      p.spec.target = read_xyz(dir / e.at("target").get<std::string>());
      ds.pairs.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  return ds;
}

std::vector<DatasetPair> Dataset::split(const std::string& name) const {
  std::vector<DatasetPair> out;
  for (const auto& p : pairs)
    if (p.split == name) out.push_back(p);
  return out;
}

}  // namespace scr
