#include "dmpead/config.hpp"
#include "dmpead/error.hpp"
#include "dmpead/pipeline.hpp"
#include "dmpead/synthetic.hpp"

#include "test_support.hpp"

#include "json.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace dmpead;

namespace {

Config small_config() {
    Config cfg;
    cfg.train.epochs = 4;
    cfg.meta.max_epochs = 60;
    cfg.seed = 21;
    cfg.sync();
    return cfg;
}

std::vector<NamedSeries> small_datasets() {
    std::vector<NamedSeries> out;
    int i = 0;
    for (Regime r : {Regime::sine, Regime::ar1, Regime::trend_season}) {
        out.push_back({"set" + std::to_string(i), generate_regime(r, 300, 2, 40 + i)});
        ++i;
    }
    return out;
}

NamedSeries spiked_input() {
    auto ts = generate_regime(Regime::sine, 400, 2, 77);
    AnomalySpec spike;
    spike.kind = AnomalyKind::spike;
    spike.start = 150;
    spike.length = 1;
    spike.magnitude = 6.0;
    spike.dims = {0, 1};
    return {"probe_input", inject_anomaly(ts, spike)};
}

}  // namespace

TEST_CASE("Config - parsing and validation", "[config]") {
    SECTION("defaults") {
        const Config cfg;
        REQUIRE(cfg.pool.segment_length == 32);
        REQUIRE(cfg.pool.stride == 16);
        REQUIRE(cfg.train.epochs == 50);
        REQUIRE(cfg.train.learning_rate == 1e-2);
        REQUIRE(cfg.train.batch_size == 64);
        REQUIRE(cfg.train.beta == 0.3);
        REQUIRE(cfg.train.mu == 2.0);
        REQUIRE(cfg.expansion.eps_model == 0.8);
        REQUIRE(cfg.expansion.eps_judge_factor == 0.34);
        REQUIRE(cfg.merge.eps_merge == 15);
        REQUIRE(cfg.merge.eps_disscore == 0.01);
        REQUIRE(cfg.merge.timing == MergeTiming::after_test);
        REQUIRE(cfg.ensemble.k == 3);
        REQUIRE(cfg.vus_window == 16);
        REQUIRE(cfg.transfer == TransferSource::last);
        REQUIRE_NOTHROW(cfg.validate());
    }

    SECTION("key = value with comments") {
        const auto cfg = parse_config("# tuned\nepochs = 7\nbeta=0.5  \n\nhidden = 8,4,8\nthreshold = percentile\n"
                                      "anomaly_ratio = 0.02 # trailing\nmerge_timing = before_test\nseed = 9\n",
                                      "inline");
        REQUIRE(cfg.train.epochs == 7);
        REQUIRE(cfg.train.beta == 0.5);
        REQUIRE(cfg.pool.hidden == std::vector<std::size_t>{8, 4, 8});
        REQUIRE(cfg.threshold.kind == ThresholdKind::percentile);
        REQUIRE(cfg.threshold.anomaly_ratio == 0.02);
        REQUIRE(cfg.merge.timing == MergeTiming::before_test);
        REQUIRE(cfg.seed == 9);
        REQUIRE(cfg.train.seed == 9);
    }

    SECTION("unknown key") {
        REQUIRE_THROWS_AS(parse_config("epochz = 3\n", "inline"), UsageError);
        REQUIRE_THROWS_WITH(parse_config("seed = 1\nepochz = 3\n", "inline"),
                            Catch::Matchers::ContainsSubstring("inline:2"));
    }

    SECTION("invalid values") {
        REQUIRE_THROWS_AS(parse_config("beta = 1.5\n", "inline"), UsageError);
        REQUIRE_THROWS_AS(parse_config("eps_merge = 1\n", "inline"), UsageError);
        REQUIRE_THROWS_AS(parse_config("eps_judge_factor = 0\n", "inline"), UsageError);
        REQUIRE_THROWS_AS(parse_config("epochs = many\n", "inline"), UsageError);
        REQUIRE_THROWS_AS(parse_config("threshold = median\n", "inline"), UsageError);
        REQUIRE_THROWS_AS(parse_config("no equals sign\n", "inline"), UsageError);
    }

    SECTION("canonical form round trips") {
        Config cfg;
        apply_setting(cfg, "mu", "1.5");
        apply_setting(cfg, "k", "2");
        cfg.sync();
        const auto text = format_config(cfg);
        const auto back = parse_config(text, "canonical");
        REQUIRE(format_config(back) == text);
        REQUIRE(config_hash(back) == config_hash(cfg));
        REQUIRE(config_hash(back) != config_hash(Config{}));
    }

    SECTION("fnv1a reference values") {
        REQUIRE(fnv1a("") == 0xcbf29ce484222325ULL);
        REQUIRE(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    }
}

TEST_CASE("pipeline - build, persist, detect", "[pipeline]") {
    const auto cfg = small_config();
    const auto data = small_datasets();
    auto state = build_pool(data, cfg);
    REQUIRE(state.pool.size() == 3);
    REQUIRE(state.meta.trained());
    REQUIRE(state.pool.manifest().meta_version == state.meta.version);
    REQUIRE(state.datasets.size() == 3);

    SECTION("save and load") {
        testing::TempDir dir;
        save_state(state, dir.path());
        const auto back = load_state(dir.path());
        REQUIRE(back.pool.size() == 3);
        REQUIRE(format_store_csv(back.store) == format_store_csv(state.store));
        REQUIRE(back.meta.theta == state.meta.theta);
        REQUIRE(back.datasets.size() == 3);
        REQUIRE(std::filesystem::exists(dir / "meta/store.csv"));

        testing::TempDir again;
        save_state(back, again.path());
        REQUIRE(testing::snapshot(again.path()) == testing::snapshot(dir.path()));

        std::filesystem::remove(dir / "meta/meta.bin");
        REQUIRE_THROWS_AS(load_state(dir.path()), IntegrityError);
    }

    SECTION("same seed builds the same state") {
        testing::TempDir a;
        testing::TempDir b;
        save_state(state, a.path());
        save_state(build_pool(data, cfg), b.path());
        REQUIRE(testing::snapshot(a.path()) == testing::snapshot(b.path()));
    }

    SECTION("frozen detection leaves the state alone") {
        testing::TempDir dir;
        save_state(state, dir.path());
        const auto before = testing::snapshot(dir.path());
        auto loaded = load_state(dir.path());
        DetectOptions frozen;
        frozen.frozen_pool = true;
        const auto first = detect(loaded, spiked_input(), cfg, frozen);
        const auto second = detect(loaded, spiked_input(), cfg, frozen);
        REQUIRE(format_report_json(first) == format_report_json(second));
        REQUIRE_FALSE(first.pool_changed);
        REQUIRE_FALSE(first.expanded_model);
        save_state(loaded, dir.path());
        REQUIRE(testing::snapshot(dir.path()) == before);
    }

    SECTION("empty subset without expansion falls back to the pool") {
        Config strict = cfg;
        strict.expansion.eps_model = 1e9;
        DetectOptions opts;
        opts.no_expansion = true;
        const auto out = detect(state, spiked_input(), strict, opts);
        REQUIRE(out.match.subset.empty());
        REQUIRE(out.fallback_to_pool);
        REQUIRE(out.ensemble.scores.model_count() == state.pool.size());
        REQUIRE_FALSE(out.warnings.empty());
        REQUIRE(state.pool.size() == 3);
    }

    SECTION("create_new expands the pool and joins the subset") {
        Config strict = cfg;
        strict.expansion.eps_model = 1e9;
        const auto out = detect(state, spiked_input(), strict, DetectOptions{});
        REQUIRE(out.expanded_model);
        REQUIRE(state.pool.size() == 4);
        REQUIRE(out.ensemble.scores.model_ids == std::vector<std::string>{*out.expanded_model});
        REQUIRE(state.datasets.count("probe_input") == 1);
        REQUIRE(state.store.rows.size() > 0);
        REQUIRE(out.pool_changed);
    }

    SECTION("segment length must match the pool") {
        Config other = cfg;
        other.pool.segment_length = 16;
        other.pool.hidden = {8, 4, 8};
        other.sync();
        DetectOptions frozen;
        frozen.frozen_pool = true;
        REQUIRE_THROWS_AS(detect(state, spiked_input(), other, frozen), IntegrityError);
    }

    SECTION("report contents") {
        DetectOptions frozen;
        frozen.frozen_pool = true;
        auto input = spiked_input();
        const auto out = detect(state, input, cfg, frozen);
        const auto doc = nlohmann::json::parse(format_report_json(out));
        REQUIRE(doc.at("provenance").at("seed") == cfg.seed);
        REQUIRE(doc.at("provenance").contains("config_hash"));
        REQUIRE(doc.at("provenance").at("pool_size") == 3);
        REQUIRE(doc.at("metrics").at("ts_auc_pr").get<double>() >= 0.0);
        REQUIRE(doc.at("anomalies").is_object());
        const auto plot = format_plot_csv(out);
        REQUIRE(plot.rfind("t,score,threshold,label", 0) == 0);
        REQUIRE(std::count(plot.begin(), plot.end(), '\n') == 401);
    }
}
