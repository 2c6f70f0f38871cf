#include "dmpead/binary_io.hpp"
#include "dmpead/config.hpp"
#include "dmpead/detect_eval.hpp"
#include "dmpead/error.hpp"
#include "dmpead/pipeline.hpp"
#include "dmpead/synthetic.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace dmpead;

namespace {

class PoolLock {
public:
    explicit PoolLock(const fs::path& dir) : path_(dir / "pool.lock") {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) throw Error("pool directory is locked by another process (" + path_.string() + ")");
    }
    ~PoolLock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    PoolLock(const PoolLock&) = delete;
    PoolLock& operator=(const PoolLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

Config resolve_config(const std::string& config_path, const fs::path& pool_dir,
                      const std::vector<std::string>& overrides) {
    Config cfg;
    if (!config_path.empty()) {
        cfg = load_config(config_path);
    } else if (!pool_dir.empty() && fs::exists(pool_dir / "config.txt")) {
        cfg = load_config(pool_dir / "config.txt");
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.sync();
    cfg.validate();
    return cfg;
}

std::size_t parse_count(const std::string& text, const std::string& what) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != text.size() || text.empty() || text.front() == '-') {
        throw UsageError("anomaly spec: " + what + " must be a non-negative integer, got '" + text + "'");
    }
    return static_cast<std::size_t>(v);
}

AnomalySpec parse_anomaly(const std::string& text, std::size_t dims) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        const auto colon = text.find(':', pos);
        parts.push_back(text.substr(pos, colon == std::string::npos ? std::string::npos : colon - pos));
        if (colon == std::string::npos) break;
        pos = colon + 1;
    }
    if (parts.size() != 4 && parts.size() != 5) {
        throw UsageError("anomaly spec '" + text + "' must be kind:start:length:magnitude[:dims]");
    }
    AnomalySpec spec;
    try {
        spec.kind = parse_anomaly_kind(parts[0]);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    spec.start = parse_count(parts[1], "start");
    spec.length = parse_count(parts[2], "length");
    try {
        std::size_t used = 0;
        spec.magnitude = std::stod(parts[3], &used);
        if (used != parts[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw UsageError("anomaly spec: magnitude must be a number, got '" + parts[3] + "'");
    }
    if (parts.size() == 5) {
        std::size_t p = 0;
        while (p <= parts[4].size()) {
            auto plus = parts[4].find('+', p);
            if (plus == std::string::npos) plus = parts[4].size();
            spec.dims.push_back(parse_count(parts[4].substr(p, plus - p), "dimension"));
            p = plus + 1;
        }
    } else {
        for (std::size_t d = 0; d < dims; ++d) spec.dims.push_back(d);
    }
    return spec;
}

void clear_pool_dir(const fs::path& dir) {
    for (const char* name : {"manifest.json", "probe.csv", "config.txt"}) fs::remove(dir / name);
    fs::remove_all(dir / "models");
    fs::remove_all(dir / "meta");
}

int cmd_build_pool(const std::string& data, const std::string& out, const std::string& config_path,
                   const std::vector<std::string>& overrides) {
    const Config cfg = resolve_config(config_path, {}, overrides);
    if (!fs::is_directory(data)) throw DataError("data directory not found: " + data);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(data)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no datasets in " + data);
    std::vector<NamedSeries> datasets;
    for (const auto& f : files) datasets.push_back({f.stem().string(), load_csv(f)});

    PoolState state = build_pool(datasets, cfg);
    try {
        fs::create_directories(out);
    } catch (const fs::filesystem_error& e) {
        throw Error(std::string("cannot create output directory: ") + e.what());
    }
    PoolLock lock(out);
    clear_pool_dir(out);
    save_state(state, out);
    write_file_text(fs::path(out) / "config.txt", format_config(cfg));
    std::cerr << "built pool of " << state.pool.size() << " models in " << out << "\n";
    return 0;
}

struct DetectArgs {
    std::string pool;
    std::string input;
    std::string report;
    std::string config;
    std::string scores;
    std::string plot;
    std::string rank_table;
    std::vector<std::string> overrides;
    bool frozen = false;
    bool no_expansion = false;
    bool no_merging = false;
    bool labels = false;
};

int cmd_detect(const DetectArgs& a) {
    const fs::path pool_dir = a.pool;
    if (!fs::is_directory(pool_dir)) throw IntegrityError("pool directory not found: " + a.pool);
    const Config cfg = resolve_config(a.config, pool_dir, a.overrides);
    NamedSeries input{fs::path(a.input).stem().string(), load_csv(a.input)};
    if (a.labels && !input.series.labels) throw DataError(a.input + ": --labels given but no label column found");
    if (!a.labels) input.series.labels.reset();

    DetectOptions opts;
    opts.frozen_pool = a.frozen;
    opts.no_expansion = a.no_expansion;
    opts.no_merging = a.no_merging;

    std::optional<PoolLock> lock;
    if (!a.frozen) lock.emplace(pool_dir);
    PoolState state = load_state(pool_dir);
    const DetectOutcome outcome = detect(state, input, cfg, opts);
    if (!a.frozen && outcome.pool_changed) save_state(state, pool_dir);

    write_file_text(a.report, format_report_json(outcome));
    if (!a.scores.empty()) write_file_text(a.scores, format_score_csv(outcome.ensemble.scores));
    if (!a.plot.empty()) write_file_text(a.plot, format_plot_csv(outcome));
    if (!a.rank_table.empty()) write_file_text(a.rank_table, format_rank_table_csv(outcome.ensemble.table));
    for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    std::cerr << outcome.detection.ranges.size() << " anomaly range(s); report written to " << a.report << "\n";
    return 0;
}

int cmd_synth(const std::string& out, const std::string& regime, std::size_t m, std::size_t n, std::uint64_t seed,
              const std::vector<std::string>& anomalies) {
    Regime r;
    try {
        r = parse_regime(regime);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (m < 2 || n < 1) throw UsageError("synth needs --m >= 2 and --n >= 1");
    TimeSeries ts = generate_regime(r, m, n, seed);
    ts.labels.emplace(m, std::uint8_t{0});
    for (const auto& text : anomalies) ts = inject_anomaly(ts, parse_anomaly(text, n));
    save_csv(ts, out);
    return 0;
}

// Values of one column: the first header name found in `preferred`, else the
// last column.
std::vector<double> pick_column(const fs::path& path, std::initializer_list<std::string_view> preferred) {
    const std::string text = read_file_text(path);
    std::vector<std::vector<std::string>> rows;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t c = 0;
        while (true) {
            const std::size_t comma = line.find(',', c);
            cells.push_back(line.substr(c, comma == std::string::npos ? std::string::npos : comma - c));
            if (comma == std::string::npos) break;
            c = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    if (rows.size() < 2) throw DataError(path.string() + ": no data rows");
    const auto& header = rows.front();
    std::size_t col = header.size() - 1;
    for (auto name : preferred) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it != header.end()) {
            col = static_cast<std::size_t>(it - header.begin());
            break;
        }
    }
    std::vector<double> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size()) {
            throw DataError(path.string() + ":" + std::to_string(r + 1) + ": expected " +
                            std::to_string(header.size()) + " cells");
        }
        const auto& cell = rows[r][col];
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
            throw DataError(path.string() + ":" + std::to_string(r + 1) + ": bad number '" + cell + "'");
        }
        out.push_back(v);
    }
    return out;
}

int cmd_eval(const std::string& scores_path, const std::string& labels_path, std::size_t window) {
    const auto scores = pick_column(scores_path, {"final", "score"});
    const auto raw_labels = pick_column(labels_path, {"label"});
    std::vector<std::uint8_t> labels;
    for (double v : raw_labels) {
        if (v != 0.0 && v != 1.0) throw DataError(labels_path + ": labels must be 0 or 1");
        labels.push_back(v == 1.0 ? 1 : 0);
    }
    const Metrics m = evaluate(scores, labels, window);
    const nlohmann::json doc = {{"ts_auc_pr", m.ts_auc_pr},
                                {"range_auc_pr", m.range_auc_pr},
                                {"vus_pr", m.vus_pr},
                                {"vus_window", window}};
    std::cout << doc.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic model pool for multivariate time-series anomaly detection"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    auto* build = app.add_subcommand("build-pool", "Train a model pool and meta-model from a directory of CSVs");
    std::string data_dir;
    std::string out_dir;
    build->add_option("--data", data_dir, "Directory of training CSVs")->required();
    build->add_option("--out", out_dir, "Pool directory to write")->required();
    build->add_option("--config", config_path, "key = value config file");
    build->add_option("--set", overrides, "Override a config key (key=value)");

    auto* det = app.add_subcommand("detect", "Detect anomalies in one CSV with a pool");
    DetectArgs da;
    det->add_option("--pool", da.pool, "Pool directory")->required();
    det->add_option("--input", da.input, "Input CSV")->required();
    det->add_option("--report", da.report, "JSON report path")->required();
    det->add_option("--config", da.config, "key = value config file (default: the pool's config)");
    det->add_option("--set", da.overrides, "Override a config key (key=value)");
    det->add_option("--scores", da.scores, "Write per-model and final scores as CSV");
    det->add_option("--plot", da.plot, "Write score/threshold/label series as CSV");
    det->add_option("--rank-table", da.rank_table, "Write the rank table as CSV");
    det->add_flag("--frozen-pool", da.frozen, "Leave the pool untouched (no expansion, no merging)");
    det->add_flag("--no-expansion", da.no_expansion, "Never add models");
    det->add_flag("--no-merging", da.no_merging, "Never merge models");
    det->add_flag("--labels", da.labels, "Input has a label column; add metrics to the report");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled CSV");
    std::string synth_out;
    std::string regime = "sine";
    std::size_t m = 2000;
    std::size_t n = 1;
    std::uint64_t seed = 0;
    std::vector<std::string> anomalies;
    synth->add_option("--out", synth_out, "Output CSV")->required();
    synth->add_option("--regime", regime, "sine | ar1 | trend_season | mixed");
    synth->add_option("--m", m, "Length");
    synth->add_option("--n", n, "Dimensions");
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--anomaly,--anomalies", anomalies, "kind:start:length:magnitude[:d0+d1...]");

    auto* ev = app.add_subcommand("eval", "Score a detection against labels");
    std::string scores_path;
    std::string labels_path;
    std::size_t window = 16;
    ev->add_option("--scores", scores_path, "CSV with a final or score column (else the last column is used)")->required();
    ev->add_option("--labels", labels_path, "CSV whose label (or last) column holds 0/1 labels")->required();
    ev->add_option("--window", window, "Largest VUS buffer");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*build) return cmd_build_pool(data_dir, out_dir, config_path, overrides);
        if (*det) return cmd_detect(da);
        if (*synth) return cmd_synth(synth_out, regime, m, n, seed, anomalies);
        if (*ev) return cmd_eval(scores_path, labels_path, window);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
