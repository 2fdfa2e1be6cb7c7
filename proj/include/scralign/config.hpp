#pragma once

// Run configuration file: JSON with optional sections "data", "decoder", "train", "infer",
// "direct" and "icp". Keys not listed in the schema are rejected.

#include <filesystem>
#include <string>

#include "scralign/baselines.hpp"
#include "scralign/data.hpp"
#include "scralign/decoder.hpp"
#include "scralign/engine.hpp"

namespace scr {

struct RunConfig {
  GenerationParams data;
  DecoderConfig decoder;
  TrainConfig train;
  InferConfig infer;
  DirectConfig direct;
  IcpConfig icp;
};

/// Applies the keys present in `text` on top of `base`. Throws ParseError naming the first
/// unknown key or mistyped value.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Full configuration, every key spelled out.
std::string dump_run_config(const RunConfig& config);

/// Default dataset directory: $SCRALIGN_DATA_DIR, else "data".
std::filesystem::path default_data_dir();

}  // namespace scr
