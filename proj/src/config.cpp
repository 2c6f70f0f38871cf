#include "dmpead/config.hpp"

#include "dmpead/binary_io.hpp"
#include "dmpead/error.hpp"
#include "dmpead/random.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>

namespace dmpead {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    return "config key '" + std::string(key) + "': expected " + std::string(expected) + ", got '" +
           std::string(value) + "'";
}

std::uint64_t to_u64(std::string_view key, std::string_view value) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size()) {
        throw UsageError(bad_value(key, value, "a non-negative integer"));
    }
    return out;
}

std::size_t to_size(std::string_view key, std::string_view value) {
    return static_cast<std::size_t>(to_u64(key, value));
}

double to_real(std::string_view key, std::string_view value) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(out)) {
        throw UsageError(bad_value(key, value, "a finite number"));
    }
    return out;
}

std::vector<std::size_t> to_sizes(std::string_view key, std::string_view value) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= value.size()) {
        std::size_t comma = value.find(',', pos);
        if (comma == std::string_view::npos) comma = value.size();
        out.push_back(to_size(key, trim(value.substr(pos, comma - pos))));
        pos = comma + 1;
    }
    return out;
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string real(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

using Setter = std::function<void(Config&, std::string_view, std::string_view)>;
using Getter = std::function<std::string(const Config&)>;

struct Key {
    Setter set;
    Getter get;
};

const std::map<std::string, Key, std::less<>>& keys() {
    static const std::map<std::string, Key, std::less<>> table = {
        {"segment_length", {[](Config& c, auto k, auto v) { c.pool.segment_length = to_size(k, v); },
                            [](const Config& c) { return std::to_string(c.pool.segment_length); }}},
        {"stride", {[](Config& c, auto k, auto v) { c.pool.stride = to_size(k, v); },
                    [](const Config& c) { return std::to_string(c.pool.stride); }}},
        {"hidden", {[](Config& c, auto k, auto v) { c.pool.hidden = to_sizes(k, v); },
                    [](const Config& c) { return join(c.pool.hidden); }}},
        {"epochs", {[](Config& c, auto k, auto v) { c.train.epochs = to_size(k, v); },
                    [](const Config& c) { return std::to_string(c.train.epochs); }}},
        {"learning_rate", {[](Config& c, auto k, auto v) { c.train.learning_rate = to_real(k, v); },
                           [](const Config& c) { return real(c.train.learning_rate); }}},
        {"batch_size", {[](Config& c, auto k, auto v) { c.train.batch_size = to_size(k, v); },
                        [](const Config& c) { return std::to_string(c.train.batch_size); }}},
        {"beta", {[](Config& c, auto k, auto v) { c.train.beta = to_real(k, v); },
                  [](const Config& c) { return real(c.train.beta); }}},
        {"mu", {[](Config& c, auto k, auto v) { c.train.mu = to_real(k, v); },
                [](const Config& c) { return real(c.train.mu); }}},
        {"diversity_cap", {[](Config& c, auto k, auto v) { c.train.diversity_cap = to_real(k, v); },
                           [](const Config& c) { return real(c.train.diversity_cap); }}},
        {"eps_model", {[](Config& c, auto k, auto v) { c.expansion.eps_model = to_real(k, v); },
                       [](const Config& c) { return real(c.expansion.eps_model); }}},
        {"eps_judge_factor", {[](Config& c, auto k, auto v) { c.expansion.eps_judge_factor = to_real(k, v); },
                              [](const Config& c) { return real(c.expansion.eps_judge_factor); }}},
        {"eps_merge", {[](Config& c, auto k, auto v) { c.merge.eps_merge = to_size(k, v); },
                       [](const Config& c) { return std::to_string(c.merge.eps_merge); }}},
        {"eps_disscore", {[](Config& c, auto k, auto v) { c.merge.eps_disscore = to_real(k, v); },
                          [](const Config& c) { return real(c.merge.eps_disscore); }}},
        {"merge_timing", {[](Config& c, auto, auto v) { c.merge.timing = parse_merge_timing(v); },
                          [](const Config& c) { return std::string(to_string(c.merge.timing)); }}},
        {"k", {[](Config& c, auto k, auto v) { c.ensemble.k = to_size(k, v); },
               [](const Config& c) { return std::to_string(c.ensemble.k); }}},
        {"threshold", {[](Config& c, auto, auto v) { c.threshold.kind = parse_threshold_kind(v); },
                       [](const Config& c) { return std::string(to_string(c.threshold.kind)); }}},
        {"threshold_multiplier", {[](Config& c, auto k, auto v) { c.threshold.multiplier = to_real(k, v); },
                                  [](const Config& c) { return real(c.threshold.multiplier); }}},
        {"anomaly_ratio", {[](Config& c, auto k, auto v) { c.threshold.anomaly_ratio = to_real(k, v); },
                           [](const Config& c) { return real(c.threshold.anomaly_ratio); }}},
        {"vus_window", {[](Config& c, auto k, auto v) { c.vus_window = to_size(k, v); },
                        [](const Config& c) { return std::to_string(c.vus_window); }}},
        {"seed", {[](Config& c, auto k, auto v) { c.seed = to_u64(k, v); },
                  [](const Config& c) { return std::to_string(c.seed); }}},
        {"transfer", {[](Config& c, auto, auto v) { c.transfer = parse_transfer_source(v); },
                      [](const Config& c) { return std::string(to_string(c.transfer)); }}},
        {"meta_hidden", {[](Config& c, auto k, auto v) { c.meta.hidden = to_sizes(k, v); },
                         [](const Config& c) { return join(c.meta.hidden); }}},
        {"meta_folds", {[](Config& c, auto k, auto v) { c.meta.k_folds = to_size(k, v); },
                        [](const Config& c) { return std::to_string(c.meta.k_folds); }}},
        {"meta_learning_rate", {[](Config& c, auto k, auto v) { c.meta.learning_rate = to_real(k, v); },
                                [](const Config& c) { return real(c.meta.learning_rate); }}},
        {"meta_momentum", {[](Config& c, auto k, auto v) { c.meta.momentum = to_real(k, v); },
                           [](const Config& c) { return real(c.meta.momentum); }}},
        {"meta_batch_size", {[](Config& c, auto k, auto v) { c.meta.batch_size = to_size(k, v); },
                             [](const Config& c) { return std::to_string(c.meta.batch_size); }}},
        {"meta_max_epochs", {[](Config& c, auto k, auto v) { c.meta.max_epochs = to_size(k, v); },
                             [](const Config& c) { return std::to_string(c.meta.max_epochs); }}},
        {"meta_lr_halving_epochs", {[](Config& c, auto k, auto v) { c.meta.lr_halving_epochs = to_size(k, v); },
                                    [](const Config& c) { return std::to_string(c.meta.lr_halving_epochs); }}},
        {"meta_patience", {[](Config& c, auto k, auto v) { c.meta.patience = to_size(k, v); },
                           [](const Config& c) { return std::to_string(c.meta.patience); }}},
    };
    return table;
}

}  // namespace

void Config::sync() {
    train.seed = seed;
    train.stride = pool.stride;
    meta.seed = mix_seed(seed, 0x6d657461);
    ensemble.seed = seed;
}

void Config::validate() const {
    if (pool.segment_length < 2) throw UsageError("segment_length must be >= 2");
    if (pool.stride < 1) throw UsageError("stride must be >= 1");
    if (pool.hidden.empty()) throw UsageError("hidden must list at least one layer");
    for (auto h : pool.hidden) {
        if (h < 1) throw UsageError("hidden layer widths must be >= 1");
    }
    train.validate();
    expansion.validate();
    merge.validate();
    meta.validate();
    ensemble.validate();
    threshold.validate();
}

void apply_setting(Config& cfg, std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    const auto& table = keys();
    const auto it = table.find(key);
    if (it == table.end()) throw UsageError("unknown config key '" + std::string(key) + "'");
    it->second.set(cfg, key, value);
    cfg.sync();
}

Config parse_config(std::string_view text, const std::string& source) {
    Config cfg;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw UsageError(source + ":" + std::to_string(line_no) + ": expected key = value");
        }
        try {
            apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
        } catch (const UsageError& e) {
            throw UsageError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    cfg.sync();
    cfg.validate();
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw UsageError("config file not found: " + path.string());
    return parse_config(read_file_text(path), path.string());
}

std::string format_config(const Config& cfg) {
    std::string out;
    for (const auto& [name, key] : keys()) out += name + " = " + key.get(cfg) + "\n";
    return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t config_hash(const Config& cfg) { return fnv1a(format_config(cfg)); }

}  // namespace dmpead
