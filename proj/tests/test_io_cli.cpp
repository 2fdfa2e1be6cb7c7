#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "support.hpp"
#include "scralign/checkpoint.hpp"
#include "scralign/cli.hpp"
#include "scralign/config.hpp"
#include "scralign/errors.hpp"
#include "scralign/io.hpp"

using namespace scr;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

DecoderConfig tiny() {
  DecoderConfig c;
  c.latent_dim = 6;
  c.point_mlp_dims = {8, 5};
  c.head_dims = {5, 4, 3};
  return c;
}
}  // namespace

TEST_CASE("xyz round trip") {
  std::mt19937_64 rng(71);
  const auto c = scrtest::random_cloud(rng, 50);
  std::ostringstream out;
  write_xyz(out, c);
  std::istringstream in(out.str());
  CHECK(parse_xyz(in) == c);
  CHECK(format_double(0.1) == "0.1");

  std::istringstream commented("# header\n\n1 2 3\n  4 5 6  \n");
  CHECK(parse_xyz(commented).size() == 2);
  std::istringstream bad("1 2 3\n1 2\n");
  try {
    parse_xyz(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream word("1 2 abc\n");
  CHECK_THROWS_AS(parse_xyz(word), ParseError);
  CHECK_THROWS_AS(read_xyz("/nonexistent.xyz"), IoError);
}

TEST_CASE("checkpoint round trip is byte exact") {
  Checkpoint ck;
  ck.params = DecoderParams::initialize(tiny(), 3);
  ck.latents.push_back({"a", {0.5, -0.25, 1, 2, 3, 4}, {true, false, true}, {false, true}, 7});
  ck.latents.push_back({"b", {0, 0, 0, 0, 0, 0.125}, {}, {}, -1});
  ck.epochs_completed = 12;
  ck.seed = 99;
  ck.loss_kind = LossKind::AdaptiveChamfer;
  const std::string bytes = serialize_checkpoint(ck);
  CHECK(bytes.rfind("SCRALIGN-CHECKPOINT 1\n", 0) == 0);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.latents[0].source_mask == ck.latents[0].source_mask);
  CHECK(back.latents[0].mask_epoch == 7);
  CHECK(back.epochs_completed == 12);
  CHECK(back.loss_kind == LossKind::AdaptiveChamfer);

  CHECK_THROWS_AS(deserialize_checkpoint("NOPE\n{}\n"), ParseError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 4)), ParseError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent.ckpt"), IoError);

  TempDir dir("scralign_test_ckpt");
  save_checkpoint(dir.path / "m.ckpt", ck);
  CHECK(slurp(dir.path / "m.ckpt") == bytes);
}

TEST_CASE("run config") {
  const auto c = parse_run_config(R"({"train": {"epochs": 7, "loss": "adaptive-chamfer"}, "icp": {"max_iterations": 3}})");
  CHECK(c.train.epochs == 7);
  CHECK(c.train.loss_kind == LossKind::AdaptiveChamfer);
  CHECK(c.icp.max_iterations == 3);
  CHECK(c.infer.max_steps == InferConfig{}.max_steps);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochz": 7}})"), ParseError);
  CHECK_THROWS_AS(parse_run_config(R"({"trian": {}})"), ParseError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": "many"}})"), ParseError);
  CHECK_THROWS_AS(parse_run_config("{"), ParseError);
  // dump then parse reproduces the same config
  const auto again = parse_run_config(dump_run_config(c));
  CHECK(dump_run_config(again) == dump_run_config(c));
}

TEST_CASE("cli exit codes") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"register", "/nonexistent/a.xyz", "/nonexistent/b.xyz", "--checkpoint", "/nonexistent.ckpt"}).code == kExitUsage);
  CHECK(cli({"gen-data", "--out", "/tmp/x", "--pairs", "0"}).code == kExitUsage);
  CHECK(cli({"repro", "no_such_script"}).code == kExitUsage);
  const auto list = cli({"repro", "--list"});
  CHECK(list.code == kExitOk);
  CHECK(list.out.find("exp_full_desk") != std::string::npos);
}

TEST_CASE("gen-data is byte deterministic") {
  TempDir dir("scralign_test_gen");
  const std::vector<std::string> common{"--pairs", "6", "--points", "32", "--seed", "5"};
  auto args = [&](const std::string& out) {
    std::vector<std::string> a{"gen-data", "--out", (dir.path / out).string()};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  REQUIRE(cli(args("a")).code == kExitOk);
  REQUIRE(cli(args("b")).code == kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), dir.path / "a");
    CHECK(slurp(e.path()) == slurp(dir.path / "b" / rel));
  }
  CHECK(files == 6 * 3 + 1);
  const auto manifest = nlohmann::json::parse(slurp(dir.path / "a" / "manifest.json"));
  CHECK(manifest["format"] == "scralign-dataset");
  CHECK(manifest["pairs"].size() == 6);
}

TEST_CASE("train, register, eval and bench through the cli") {
  TempDir dir("scralign_test_cli");
  const auto data = (dir.path / "data").string();
  const auto ckpt = (dir.path / "m.ckpt").string();
  REQUIRE(cli({"gen-data", "--out", data, "--pairs", "5", "--points", "24", "--seed", "8"}).code == kExitOk);

  // a small decoder through a config file keeps this quick
  const auto cfg = dir.path / "cfg.json";
  std::ofstream(cfg) << R"({"decoder": {"latent_dim": 6, "point_mlp_dims": [8, 5], "head_dims": [5, 4, 3]}})";
  const auto tr = cli({"train", "--data", data, "--out", ckpt, "--epochs", "3", "--config", cfg.string(), "--csv",
                       (dir.path / "train.csv").string()});
  REQUIRE(tr.code == kExitOk);
  const auto csv = slurp(dir.path / "train.csv");
  CHECK(csv.rfind("epoch,mean_loss,lr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  SUBCASE("register identity pair") {
    std::mt19937_64 rng(72);
    const auto c = scrtest::random_cloud(rng, 20);
    write_xyz(dir.path / "s.xyz", c);
    const auto r = cli({"register", (dir.path / "s.xyz").string(), (dir.path / "s.xyz").string(), "--checkpoint", ckpt,
                        "--json", "--steps", "5", "--emit-aligned", (dir.path / "aligned.xyz").string()});
    REQUIRE(r.code == kExitOk);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["angles_deg"].size() == 3);
    CHECK(j.contains("final_loss"));
    CHECK(read_xyz(dir.path / "aligned.xyz").size() == 20);
  }
  SUBCASE("eval writes per-pair rows") {
    const auto r = cli({"eval", "--data", data, "--split", "all", "--method", "scr", "--checkpoint", ckpt, "--steps", "3", "--csv",
                        (dir.path / "eval.csv").string()});
    REQUIRE(r.code == kExitOk);
    const auto rows = slurp(dir.path / "eval.csv");
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 6);
    CHECK(r.out.find("MSE(R)") != std::string::npos);
    CHECK(cli({"eval", "--data", data, "--method", "icp", "--checkpoint", ckpt}).code == kExitUsage);
    CHECK(cli({"eval", "--data", data, "--split", "all", "--method", "icp"}).code == kExitOk);
  }
  SUBCASE("bench") {
    const auto r = cli({"bench", "--data", data, "--checkpoint", ckpt, "--pairs", "1", "--steps", "3", "--direct-steps", "3", "--csv",
                        (dir.path / "bench.csv").string()});
    REQUIRE(r.code == kExitOk);
    const auto rows = slurp(dir.path / "bench.csv");
    CHECK(rows.rfind("method,pairs,threads,total_s,s_per_pair\n", 0) == 0);
    CHECK(rows.find("\nicp,1,1,") != std::string::npos);
  }
  SUBCASE("resume continues the epoch count") {
    const auto r = cli({"train", "--data", data, "--out", ckpt, "--resume", ckpt, "--epochs", "5", "--config", cfg.string()});
    REQUIRE(r.code == kExitOk);
    CHECK(load_checkpoint(ckpt).epochs_completed == 5);
  }
}
