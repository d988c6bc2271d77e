#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "nnfdet/synthlab.hpp"
#include "nnfdet/trainer.hpp"

namespace nnfdet {

/// Everything a CLI run can be configured with. `seed` drives both the pool
/// and training.
struct RunConfig {
    std::string preset = "nnnf-l2";
    std::uint64_t seed = 1;
    int jobs = 0; // 0 = all cores
    PoolConfig pool;
    TrainConfig train;
    NormConfig norm;
    SynthParams synth;
};

std::vector<std::string> preset_names();

/// nnnf-l2, nnnf-l4, nf-only or nnnf-no-norm; ConfigError otherwise.
RunConfig preset_config(const std::string& name);

/// Sets one key; ConfigError for unknown keys or malformed values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// key=value lines, '#' comments. A `preset` line, wherever it appears,
/// is applied before the other keys.
RunConfig parse_config(std::istream& in, const std::string& source);
RunConfig load_config(const std::filesystem::path& path);

/// Pool, channel and normalization settings of a run with its seed applied.
ModelSetup make_setup(const RunConfig& cfg);
TrainConfig effective_train_config(const RunConfig& cfg);

} // namespace nnfdet
