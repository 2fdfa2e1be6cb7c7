#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "support.hpp"
#include "scralign/data.hpp"
#include "scralign/errors.hpp"
#include "scralign/losses.hpp"

using namespace scr;

namespace {
const char* kCubeOff = R"(OFF
# unit cube centred at the origin
8 6 12
-0.5 -0.5 -0.5
 0.5 -0.5 -0.5
 0.5  0.5 -0.5
-0.5  0.5 -0.5
-0.5 -0.5  0.5
 0.5 -0.5  0.5
 0.5  0.5  0.5
-0.5  0.5  0.5
4 0 3 2 1
4 4 5 6 7
4 0 1 5 4
4 2 3 7 6
4 1 2 6 5
4 0 4 7 3
)";

TriangleMesh parse(const std::string& text) {
  std::istringstream in(text);
  return parse_off(in);
}

int parse_error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}
}  // namespace

TEST_CASE("OFF parsing") {
  const auto cube = parse(kCubeOff);
  CHECK(cube.vertices.size() == 8);
  CHECK(cube.faces.size() == 12);  // quads fan-split
  double area = 0;
  for (std::size_t f = 0; f < cube.faces.size(); ++f) area += cube.face_area(f);
  CHECK(area == doctest::Approx(6.0));

  CHECK(parse("OFF8 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 0\n1 0 1\n0 1 1\n1 1 1\n3 0 1 2\n").faces.size() == 1);
  CHECK(parse_error_line("COFF\n") == 1);
  CHECK(parse_error_line("OFF\n3 1 0\n0 0 0\n1 0 0\n") >= 4);
  CHECK(parse_error_line("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n") == 6);
  CHECK(parse_error_line("OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n") == 4);
  CHECK(parse_error_line("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n9 9 9\n") == 7);
  CHECK_THROWS_AS(load_off("/nonexistent/file.off"), IoError);
}

TEST_CASE("mesh surface sampling") {
  const auto cube = parse(kCubeOff);
  const auto pts = sample_mesh_surface(cube, 2000, 5);
  CHECK(pts.size() == 2000);
  for (const auto& p : pts) CHECK(std::abs(p.cwiseAbs().maxCoeff() - 0.5) < 1e-12);
  CHECK(sample_mesh_surface(cube, 100, 5) == sample_mesh_surface(cube, 100, 5));

  SUBCASE("face density follows area") {
    // two triangles with areas 1/2 and 3/2 in the z = 0 plane
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 0, 0}, {5, 0, 0}, {2, 1, 0}};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    const std::size_t n = 100000;
    const auto s = sample_mesh_surface(m, n, 9);
    std::size_t first = 0;
    for (const auto& p : s) first += p.x() <= 1.0 + 1e-12;
    const double p = 0.25, sd = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(static_cast<double>(first) - n * p) < 3 * sd);
  }
  CHECK_THROWS_AS(sample_mesh_surface(TriangleMesh{}, 10, 1), InvalidArgument);
}

TEST_CASE("primitives are normalized and seeded") {
  for (auto kind : all_shape_kinds()) {
    CAPTURE(to_string(kind));
    const auto c = generate_primitive(kind, 256, 3);
    CHECK(c.size() == 256);
    CHECK(centroid(c).norm() < 1e-12);
    double r = 0;
    for (const auto& p : c) r = std::max(r, p.norm());
    CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c == generate_primitive(kind, 256, 3));
    CHECK(parse_shape_kind(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_shape_kind("blob"), InvalidArgument);
  CHECK_THROWS_AS(generate_primitive(ShapeKind::Box, 4, 1), InvalidArgument);
}

TEST_CASE("pair sampling") {
  const auto c = generate_primitive(ShapeKind::Wedge, 64, 1);
  double mean = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto p = sample_pair(c, static_cast<std::uint64_t>(i));
    const Vec3 deg = p.ground_truth.rotation.degrees();
    CHECK((deg.minCoeff() >= 0.0 && deg.maxCoeff() <= 45.0));
    CHECK(p.ground_truth.translation.cwiseAbs().maxCoeff() <= 0.5);
    mean += deg.sum() / 3;
    if (i < 20) CHECK(chamfer(apply_transform(p.ground_truth, p.source), p.target) < 1e-24);
  }
  CHECK(std::abs(mean / draws - 22.5) < 0.5);
  const auto same = sample_pair(c, 4, 0.0, 0.0);
  CHECK(same.target == same.source);
  CHECK(same.ground_truth == RigidTransform::identity());
}

TEST_CASE("partial crops") {
  const auto c = generate_primitive(ShapeKind::LShape, 1024, 2);
  const auto pair = sample_pair(c, 7);
  const auto part = make_partial(pair, 768, 11);
  CHECK(part.partial);
  CHECK(part.source.size() == 768);
  CHECK(part.target.size() == 768);
  CHECK(part.ground_truth == pair.ground_truth);
  CHECK(make_partial(pair, 1024, 11).source.size() == 1024);
  CHECK_THROWS_AS(make_partial(pair, 1025, 11), InvalidArgument);

  // retained set = the keep smallest distances by brute-force sort, and contiguous
  const Vec3 centre(0.3, -0.2, 0.9);
  const auto kept = nearest_subset(c, centre, 100);
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < c.size(); ++i) order.push_back({(c[i] - centre).squaredNorm(), i});
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < 100; ++i) expected.push_back(order[i].second);
  std::sort(expected.begin(), expected.end());
  CHECK(kept == expected);
  CHECK(order[99].first < order[100].first);
}

TEST_CASE("splits") {
  const auto a = split_random(100, 0.8, 5);
  CHECK(a.train.size() == 80);
  CHECK(a.test.size() == 20);
  CHECK(split_random(100, 0.8, 5).train == a.train);
  CHECK_THROWS_AS(split_random(1, 0.5, 5), InvalidArgument);

  const std::vector<std::string> cats{"box", "wedge", "box", "tetra", "wedge", "tetra"};
  const auto s = split_by_category(cats, {"tetra"});
  std::set<std::string> train_cats, test_cats;
  for (auto i : s.train) train_cats.insert(cats[i]);
  for (auto i : s.test) test_cats.insert(cats[i]);
  CHECK(test_cats == std::set<std::string>{"tetra"});
  CHECK(train_cats.count("tetra") == 0);
  CHECK_THROWS_AS(split_by_category(cats, {"sphere"}), InvalidArgument);
  const auto r = split_by_category(cats, 0.6, 3);
  for (auto i : r.train)
    for (auto j : r.test) CHECK(cats[i] != cats[j]);
}

TEST_CASE("dataset generation and round trip") {
  GenerationParams gp;
  gp.pairs = 12;
  gp.points = 32;
  gp.seed = 77;
  const auto a = generate_dataset(gp);
  const auto b = generate_dataset(gp);
  REQUIRE(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].spec.source == b[i].spec.source);
    CHECK(a[i].spec.ground_truth == b[i].spec.ground_truth);
  }
  CHECK(a[0].spec.pair_id == "pair_00000");
  CHECK(a[1].spec.category == "wedge");
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));

  const auto dir = std::filesystem::temp_directory_path() / "scralign_test_dataset";
  std::filesystem::remove_all(dir);
  write_dataset(dir, gp, a);
  const auto back = read_dataset(dir);
  REQUIRE(back.pairs.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back.pairs[i].spec.source == a[i].spec.source);
    CHECK(back.pairs[i].spec.target == a[i].spec.target);
    CHECK(back.pairs[i].split == a[i].split);
    const Vec3 d = back.pairs[i].spec.ground_truth.rotation.degrees() - a[i].spec.ground_truth.rotation.degrees();
    CHECK(d.norm() < 1e-9);
  }
  CHECK(back.split("train").size() + back.split("test").size() == 12);
  std::filesystem::remove_all(dir);

  GenerationParams bad = gp;
  bad.shapes = {};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
