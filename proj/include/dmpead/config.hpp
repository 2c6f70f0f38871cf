#pragma once

#include "dmpead/detect_eval.hpp"
#include "dmpead/ensemble.hpp"
#include "dmpead/meta_model.hpp"
#include "dmpead/model_pool.hpp"
#include "dmpead/pool_merge.hpp"
#include "dmpead/recon_model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace dmpead {

struct Config {
    PoolSpec pool;
    TrainConfig train;
    ExpansionPolicy expansion;
    MergePolicy merge;
    MetaTrainConfig meta;
    EnsembleSpec ensemble;
    ThresholdMethod threshold;
    std::size_t vus_window = 16;
    std::uint64_t seed = 0;
    TransferSource transfer = TransferSource::last;

    // Propagates seed and stride into the sub-configurations.
    void sync();
    void validate() const;
};

// key = value lines; '#' starts a comment. Unknown keys are rejected.
void apply_setting(Config& cfg, std::string_view key, std::string_view value);
Config parse_config(std::string_view text, const std::string& source);
Config load_config(const std::filesystem::path& path);

// Canonical listing of every key, one "key = value" per line.
std::string format_config(const Config& cfg);

// FNV-1a 64 of format_config.
std::uint64_t config_hash(const Config& cfg);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace dmpead
