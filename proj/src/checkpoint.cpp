#include "scralign/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "scralign/errors.hpp"

namespace scr {

namespace {

using json = nlohmann::json;

constexpr const char* kMagic = "SCRALIGN-CHECKPOINT";

void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

double get_f32(const std::string& in, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  return static_cast<double>(std::bit_cast<float>(bits));
}

struct Writer {
  std::string payload;
  json block(const std::string& name, const std::vector<std::size_t>& shape, std::span<const double> values) {
    const std::size_t offset = payload.size();
    for (double v : values) put_f32(payload, v);
    return {{"name", name}, {"shape", shape}, {"offset", offset}, {"bytes", values.size() * 4}};
  }
  json mask(const std::vector<bool>& m) {
    const std::size_t offset = payload.size();
    for (bool b : m) payload.push_back(b ? '\1' : '\0');
    return {{"offset", offset}, {"bytes", m.size()}};
  }
};

struct Reader {
  const std::string& payload;
  std::vector<double> block(const json& j, std::size_t expected) {
    const auto offset = j.at("offset").get<std::size_t>();
    const auto bytes = j.at("bytes").get<std::size_t>();
    if (bytes != expected * 4) {
      throw ParseError("checkpoint: block '" + j.value("name", std::string("?")) + "' declares " + std::to_string(bytes) +
                       " bytes but its shape needs " + std::to_string(expected * 4));
    }
    if (offset > payload.size() || bytes > payload.size() - offset) throw ParseError("checkpoint: payload truncated");
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) out[i] = get_f32(payload, offset + 4 * i);
    return out;
  }
  std::vector<bool> mask(const json& j) {
    const auto offset = j.at("offset").get<std::size_t>();
    const auto bytes = j.at("bytes").get<std::size_t>();
    if (offset > payload.size() || bytes > payload.size() - offset) throw ParseError("checkpoint: payload truncated");
    std::vector<bool> out(bytes);
    for (std::size_t i = 0; i < bytes; ++i) out[i] = payload[offset + i] != '\0';
    return out;
  }
};

json config_json(const DecoderConfig& c) {
  return {{"latent_dim", c.latent_dim},
          {"point_mlp_dims", c.point_mlp_dims},
          {"head_dims", c.head_dims},
          {"use_batch_norm", c.use_batch_norm},
          {"leaky_slope", c.leaky_slope}};
}

DecoderConfig config_from_json(const json& j) {
  DecoderConfig c;
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.point_mlp_dims = j.at("point_mlp_dims").get<std::vector<std::size_t>>();
  c.head_dims = j.at("head_dims").get<std::vector<std::size_t>>();
  c.use_batch_norm = j.at("use_batch_norm").get<bool>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.validate();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  json tensors = json::array();
  for (const auto& t : ckpt.params.tensors()) tensors.push_back(w.block(t.name, t.shape, t.values));
  json stats = json::array();
  for (std::size_t l = 0; l < ckpt.params.running_stats().size(); ++l) {
    const auto& s = ckpt.params.running_stats()[l];
    const std::string base = "point." + std::to_string(l);
    stats.push_back({{"mean", w.block(base + ".running_mean", {s.running_mean.size()}, s.running_mean)},
                     {"var", w.block(base + ".running_var", {s.running_var.size()}, s.running_var)}});
  }
  json latents = json::array();
  for (const auto& l : ckpt.latents) {
    json e = {{"pair_id", l.pair_id}, {"z", w.block("z", {l.z.size()}, l.z)}};
    if (!l.source_mask.empty() || !l.target_mask.empty()) {
      e["source_mask"] = w.mask(l.source_mask);
      e["target_mask"] = w.mask(l.target_mask);
      e["mask_epoch"] = l.mask_epoch;
    }
    latents.push_back(std::move(e));
  }
  const json manifest = {{"version", kCheckpointVersion},
                         {"decoder", config_json(ckpt.params.config())},
                         {"tensors", tensors},
                         {"running_stats", stats},
                         {"latents", latents},
                         {"payload_bytes", w.payload.size()},
                         {"training",
                          {{"epochs_completed", ckpt.epochs_completed},
                           {"seed", ckpt.seed},
                           {"loss_kind", to_string(ckpt.loss_kind)},
                           {"batch_size", ckpt.batch_size},
                           {"lr", ckpt.lr},
                           {"lr_decay_per_epoch", ckpt.lr_decay_per_epoch}}}};
  return std::string(kMagic) + " " + std::to_string(kCheckpointVersion) + "\n" + manifest.dump() + "\n" + w.payload;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const auto eol1 = bytes.find('\n');
  if (eol1 == std::string::npos || bytes.compare(0, std::strlen(kMagic), kMagic) != 0) {
    throw ParseError("not a checkpoint file (missing header)", 1);
  }
  const std::string version_text = bytes.substr(std::strlen(kMagic), eol1 - std::strlen(kMagic));
  if (version_text != " " + std::to_string(kCheckpointVersion)) {
    throw ParseError("unsupported checkpoint version '" + version_text + "'", 1);
  }
  const auto eol2 = bytes.find('\n', eol1 + 1);
  if (eol2 == std::string::npos) throw ParseError("checkpoint: missing manifest", 2);
  const std::string payload = bytes.substr(eol2 + 1);
  Reader r{payload};
  Checkpoint ckpt;
  try {
    const json m = json::parse(bytes.substr(eol1 + 1, eol2 - eol1 - 1));
    if (m.at("payload_bytes").get<std::size_t>() != payload.size()) {
      throw ParseError("checkpoint: payload is " + std::to_string(payload.size()) + " bytes, manifest declares " +
                       std::to_string(m.at("payload_bytes").get<std::size_t>()));
    }
    const DecoderConfig config = config_from_json(m.at("decoder"));
    ckpt.params = DecoderParams::zeros(config);
    auto& tensors = ckpt.params.tensors();
    const auto& jt = m.at("tensors");
    if (jt.size() != tensors.size()) throw ParseError("checkpoint: tensor count does not match the decoder config");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (jt[i].at("name").get<std::string>() != tensors[i].name) {
        throw ParseError("checkpoint: expected tensor '" + tensors[i].name + "', found '" + jt[i].at("name").get<std::string>() + "'");
      }
      if (jt[i].at("shape").get<std::vector<std::size_t>>() != tensors[i].shape) {
        throw ParseError("checkpoint: tensor '" + tensors[i].name + "' has the wrong shape");
      }
      tensors[i].values = r.block(jt[i], tensors[i].values.size());
    }
    auto& stats = ckpt.params.running_stats();
    const auto& js = m.at("running_stats");
    if (js.size() != stats.size()) throw ParseError("checkpoint: running-stat count does not match the decoder config");
    for (std::size_t l = 0; l < stats.size(); ++l) {
      stats[l].running_mean = r.block(js[l].at("mean"), stats[l].running_mean.size());
      stats[l].running_var = r.block(js[l].at("var"), stats[l].running_var.size());
    }
    for (const auto& jl : m.at("latents")) {
      CheckpointLatent l;
      l.pair_id = jl.at("pair_id").get<std::string>();
      l.z = r.block(jl.at("z"), config.latent_dim);
      if (jl.contains("source_mask")) {
        l.source_mask = r.mask(jl.at("source_mask"));
        l.target_mask = r.mask(jl.at("target_mask"));
        l.mask_epoch = jl.at("mask_epoch").get<int>();
      }
      ckpt.latents.push_back(std::move(l));
    }
    const auto& t = m.at("training");
    ckpt.epochs_completed = t.at("epochs_completed").get<int>();
    ckpt.seed = t.at("seed").get<std::uint64_t>();
    ckpt.loss_kind = parse_loss_kind(t.at("loss_kind").get<std::string>());
    ckpt.batch_size = t.at("batch_size").get<std::size_t>();
    ckpt.lr = t.at("lr").get<double>();
    ckpt.lr_decay_per_epoch = t.at("lr_decay_per_epoch").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what(), 2);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what(), 2);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const ParseError& e) {
    throw e.with_prefix(path.string() + ": ");
  }
}

Checkpoint make_checkpoint(const TrainState& state, const std::vector<TrainingPair>& pairs, const TrainConfig& config) {
  Checkpoint ckpt;
  ckpt.params = state.params;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const ScrEntry* e = state.latents.find(pairs[i].pair_id);
    if (!e) continue;
    CheckpointLatent l;
    l.pair_id = e->pair_id;
    l.z = e->z;
    if (i < state.overlaps.size()) {
      l.source_mask = state.overlaps[i].source_mask;
      l.target_mask = state.overlaps[i].target_mask;
      l.mask_epoch = state.overlaps[i].epoch_of_last_update;
    }
    ckpt.latents.push_back(std::move(l));
  }
  ckpt.epochs_completed = state.epochs_completed;
  ckpt.seed = config.seed;
  ckpt.loss_kind = config.loss_kind;
  ckpt.batch_size = config.batch_size;
  ckpt.lr = config.lr;
  ckpt.lr_decay_per_epoch = config.lr_decay_per_epoch;
  return ckpt;
}

TrainState restore_train_state(const Checkpoint& ckpt, const std::vector<TrainingPair>& pairs) {
  TrainState state;
  state.params = ckpt.params;
  state.epochs_completed = ckpt.epochs_completed;
  bool have_masks = !pairs.empty();
  std::vector<OverlapState> overlaps;
  for (const auto& p : pairs) {
    const CheckpointLatent* found = nullptr;
    for (const auto& l : ckpt.latents)
      if (l.pair_id == p.pair_id) found = &l;
    ScrEntry e = init_scr(p.pair_id, ckpt.seed, ckpt.params.config().latent_dim);
    OverlapState o = OverlapState::full(p.source.size(), p.target.size());
    if (found) {
      e.z = found->z;
      if (found->source_mask.size() == p.source.size() && found->target_mask.size() == p.target.size()) {
        o.source_mask = found->source_mask;
        o.target_mask = found->target_mask;
        o.epoch_of_last_update = found->mask_epoch;
      } else {
        have_masks = false;
      }
    } else {
      have_masks = false;
    }
    state.latents.add(std::move(e));
    overlaps.push_back(std::move(o));
  }
  if (have_masks) state.overlaps = std::move(overlaps);
  return state;
}

}  // namespace scr
