#include "scralign/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <sstream>

#include "scralign/errors.hpp"

namespace scr {

namespace {

using json = nlohmann::json;
using Setter = std::function<void(const json&)>;

template <class T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

Setter set_loss(LossKind& field) {
  return [&field](const json& v) { field = parse_loss_kind(v.get<std::string>()); };
}

void apply_section(const json& section, const std::string& name, const std::map<std::string, Setter>& schema) {
  if (!section.is_object()) throw ParseError("config: section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    const auto it = schema.find(key);
    if (it == schema.end()) throw ParseError("config: unknown key '" + name + "." + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ParseError("config: bad value for '" + name + "." + key + "': " + e.what());
    } catch (const InvalidArgument& e) {
      throw ParseError("config: bad value for '" + name + "." + key + "': " + e.what());
    }
  }
}

std::map<std::string, std::map<std::string, Setter>> schema(RunConfig& c) {
  return {
      {"data",
       {{"shapes", set(c.data.shapes)},
        {"pairs", set(c.data.pairs)},
        {"points", set(c.data.points)},
        {"seed", set(c.data.seed)},
        {"angle_max_deg", set(c.data.angle_max_deg)},
        {"trans_range", set(c.data.trans_range)},
        {"partial", set(c.data.partial)},
        {"keep_ratio", set(c.data.keep_ratio)},
        {"resample", set(c.data.resample)},
        {"split", set(c.data.split)},
        {"train_fraction", set(c.data.train_fraction)},
        {"test_shapes", set(c.data.test_shapes)}}},
      {"decoder",
       {{"latent_dim", set(c.decoder.latent_dim)},
        {"point_mlp_dims", set(c.decoder.point_mlp_dims)},
        {"head_dims", set(c.decoder.head_dims)},
        {"use_batch_norm", set(c.decoder.use_batch_norm)},
        {"leaky_slope", set(c.decoder.leaky_slope)}}},
      {"train",
       {{"batch_size", set(c.train.batch_size)},
        {"lr", set(c.train.lr)},
        {"lr_decay_per_epoch", set(c.train.lr_decay_per_epoch)},
        {"epochs", set(c.train.epochs)},
        {"loss", set_loss(c.train.loss_kind)},
        {"sigma_start", set(c.train.sigma_schedule.sigma_start)},
        {"sigma_end", set(c.train.sigma_schedule.sigma_end)},
        {"sigma_epochs", set(c.train.sigma_schedule.horizon_epochs)},
        {"seed", set(c.train.seed)},
        {"threads", set(c.train.threads)}}},
      {"infer",
       {{"max_steps", set(c.infer.max_steps)},
        {"lr", set(c.infer.lr)},
        {"tol", set(c.infer.convergence_tol)},
        {"window", set(c.infer.window)},
        {"restarts", set(c.infer.restarts)},
        {"seed", set(c.infer.seed)},
        {"loss", set_loss(c.infer.loss_kind)},
        {"sigma_start", set(c.infer.sigma_schedule.sigma_start)},
        {"sigma_end", set(c.infer.sigma_schedule.sigma_end)},
        {"sigma_epochs", set(c.infer.sigma_schedule.horizon_epochs)},
        {"steps_per_sigma_epoch", set(c.infer.steps_per_sigma_epoch)}}},
      {"direct",
       {{"steps", set(c.direct.steps)},
        {"lr", set(c.direct.lr)},
        {"loss", set_loss(c.direct.loss_kind)},
        {"sigma_start", set(c.direct.sigma_schedule.sigma_start)},
        {"sigma_end", set(c.direct.sigma_schedule.sigma_end)},
        {"sigma_epochs", set(c.direct.sigma_schedule.horizon_epochs)},
        {"steps_per_sigma_epoch", set(c.direct.steps_per_sigma_epoch)}}},
      {"icp", {{"max_iterations", set(c.icp.max_iterations)}, {"tol", set(c.icp.convergence_tol)}}},
  };
}

}  // namespace

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw ParseError("config: top level must be an object");
  RunConfig out = std::move(base);
  const auto sections = schema(out);
  for (const auto& [name, section] : root.items()) {
    const auto it = sections.find(name);
    if (it == sections.end()) throw ParseError("config: unknown section '" + name + "'");
    apply_section(section, name, it->second);
  }
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), std::move(base));
  } catch (const ParseError& e) {
    throw e.with_prefix(path.string() + ": ");
  }
}

std::string dump_run_config(const RunConfig& c) {
  const json j = {
      {"data",
       {{"shapes", c.data.shapes},
        {"pairs", c.data.pairs},
        {"points", c.data.points},
        {"seed", c.data.seed},
        {"angle_max_deg", c.data.angle_max_deg},
        {"trans_range", c.data.trans_range},
        {"partial", c.data.partial},
        {"keep_ratio", c.data.keep_ratio},
        {"resample", c.data.resample},
        {"split", c.data.split},
        {"train_fraction", c.data.train_fraction},
        {"test_shapes", c.data.test_shapes}}},
      {"decoder",
       {{"latent_dim", c.decoder.latent_dim},
        {"point_mlp_dims", c.decoder.point_mlp_dims},
        {"head_dims", c.decoder.head_dims},
        {"use_batch_norm", c.decoder.use_batch_norm},
        {"leaky_slope", c.decoder.leaky_slope}}},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"lr_decay_per_epoch", c.train.lr_decay_per_epoch},
        {"epochs", c.train.epochs},
        {"loss", to_string(c.train.loss_kind)},
        {"sigma_start", c.train.sigma_schedule.sigma_start},
        {"sigma_end", c.train.sigma_schedule.sigma_end},
        {"sigma_epochs", c.train.sigma_schedule.horizon_epochs},
        {"seed", c.train.seed},
        {"threads", c.train.threads}}},
      {"infer",
       {{"max_steps", c.infer.max_steps},
        {"lr", c.infer.lr},
        {"tol", c.infer.convergence_tol},
        {"window", c.infer.window},
        {"restarts", c.infer.restarts},
        {"seed", c.infer.seed},
        {"loss", to_string(c.infer.loss_kind)},
        {"sigma_start", c.infer.sigma_schedule.sigma_start},
        {"sigma_end", c.infer.sigma_schedule.sigma_end},
        {"sigma_epochs", c.infer.sigma_schedule.horizon_epochs},
        {"steps_per_sigma_epoch", c.infer.steps_per_sigma_epoch}}},
      {"direct",
       {{"steps", c.direct.steps},
        {"lr", c.direct.lr},
        {"loss", to_string(c.direct.loss_kind)},
        {"sigma_start", c.direct.sigma_schedule.sigma_start},
        {"sigma_end", c.direct.sigma_schedule.sigma_end},
        {"sigma_epochs", c.direct.sigma_schedule.horizon_epochs},
        {"steps_per_sigma_epoch", c.direct.steps_per_sigma_epoch}}},
      {"icp", {{"max_iterations", c.icp.max_iterations}, {"tol", c.icp.convergence_tol}}},
  };
  return j.dump(2) + "\n";
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("SCRALIGN_DATA_DIR"); env && *env) return env;
  return "data";
}

}  // namespace scr
