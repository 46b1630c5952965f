#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rbf/cli.hpp"
#include "rbf/continuum_sim.hpp"
#include "rbf/data_mover.hpp"
#include "rbf/model_lifecycle.hpp"
#include "rbf/pipeline_engine.hpp"
#include "rbf/stats.hpp"
#include "test_util.hpp"

namespace rbf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void note(const std::string& s) { std::cout << "    " << s << std::endl; }

std::string fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

TEST(Acceptance, Criterion01_DataMoverRoundTrip) {
    testing::TempDir dir;
    constexpr int kFiles = 500;
    constexpr int kNames = 5;
    constexpr std::size_t kMax = 2 * 1024 * 1024;
    // Content is regenerated from a per-file seed instead of held in memory.
    auto size_of = [](int i) -> std::size_t {
        if (i == 0) return 0;
        if (i == 1) return kMax;
        std::mt19937_64 r(1000 + i);
        return static_cast<std::size_t>(r() % (kMax + 1));
    };
    auto content_of = [&](int i) {
        std::mt19937_64 r(5000 + i);
        return testing::random_bytes(r, size_of(i));
    };
    std::map<int, std::uint32_t> expected_version;
    {
        LocalRepository repo(dir.path());
        std::map<std::string, std::uint32_t> next;
        for (int i = 0; i < kFiles; ++i) {
            const std::string name = "file" + std::to_string(i % kNames);
            const Bytes c = content_of(i);
            const FileVersion v = repo.push_file(name, c);
            ASSERT_EQ(v.version, ++next[name]) << "file " << i;
            ASSERT_EQ(v.byte_length, c.size());
            expected_version[i] = v.version;
            ASSERT_EQ(repo.pull_file(name, v.version), c) << "file " << i;
        }
    }
    LocalRepository reloaded(dir.path());
    for (int n = 0; n < kNames; ++n) {
        const std::string name = "file" + std::to_string(n);
        const FileVersion latest = reloaded.latest_version(name);
        ASSERT_EQ(latest.version, static_cast<std::uint32_t>(kFiles / kNames));
        const auto all = reloaded.versions(name);
        for (std::size_t k = 0; k < all.size(); ++k) ASSERT_EQ(all[k].version, k + 1);
    }
    for (int i = 0; i < kFiles; ++i) {
        ASSERT_EQ(reloaded.pull_file("file" + std::to_string(i % kNames), expected_version[i]), content_of(i))
            << "file " << i << " after reload";
    }
    note("500 files, 0 B to 2 MiB, 5 names x versions 1..100, all bit-exact after reload");
}

TEST(Acceptance, Criterion02_DeploymentMonotonicity) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 30);
        std::vector<ModelArtifact> arts(n);
        std::int64_t max_cutoff = std::numeric_limits<std::int64_t>::min();
        for (int i = 0; i < n; ++i) {
            // Narrow range so ties are common.
            const std::int64_t cut = static_cast<std::int64_t>(rng() % 12) * kMsPerMinute;
            arts[i].meta.model_type = ModelType::Fno;
            arts[i].meta.cutoff_time = at_ms(cut);
            arts[i].meta.produced_time = at_ms(cut + 1);
            arts[i].artifact_version = static_cast<std::uint32_t>(i + 1);
            max_cutoff = std::max(max_cutoff, cut);
        }
        std::shuffle(arts.begin(), arts.end(), rng);
        DeployedSlot slot(ModelType::Fno);
        for (int i = 0; i < n; ++i) slot.maybe_deploy(arts[i], at_ms(i));
        const auto h = slot.history();
        ASSERT_FALSE(h.empty());
        for (std::size_t k = 1; k < h.size(); ++k) ASSERT_LT(h[k - 1].cutoff_time, h[k].cutoff_time) << trial;
        ASSERT_EQ(ms_of(slot.current()->cutoff_time), max_cutoff) << trial;
    }
    note("1000 shuffled arrival orders, cutoff history strictly increasing, final = max cutoff");
}

TEST(Acceptance, Criterion03_DeterministicDedicatedCadence) {
    const StageDurations d = StageDurations::deterministic();
    ASSERT_NEAR(d.cfd_mean + d.transform_mean + d.train.at(ModelType::Fno).mean + d.overhead_mean, 134.8, 1e-9);
    ScenarioConfig c;
    c.horizon_h = 48;
    c.poll_interval_min = 0;
    c.dedicated->durations = d;
    const SimTrace trace = run_scenario(c);
    const auto events = trace.publish_events();
    const Millis cadence = from_minutes(134.8);
    for (ModelType m : kAllModelTypes) {
        const auto gaps = publish_gaps_ms(events, m, TierSet::All);
        ASSERT_GE(gaps.size(), 20u);
        for (auto g : gaps) ASSERT_EQ(g, cadence.count()) << to_string(m);
        const auto deployed = trace.deployed(m);
        const Millis transfer = transfer_time(c.network, m, c.model_sizes.at(m));
        ASSERT_LT(transfer, Millis{3000});
        for (std::size_t i = 1; i < deployed.size(); ++i) {
            ASSERT_LE(std::abs((deployed[i].time - deployed[i - 1].time - cadence).count()), transfer.count());
        }
    }
    note("publish gap 8088000 ms = 134.8 min for pinn, fno, pcr; deploy gaps within transfer time");
}

TEST(Acceptance, Criterion04_StochasticDedicatedCadence) {
    DedicatedTierConfig cfg;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto pubs = run_dedicated_loop(cfg, Timestamp{}, Timestamp{} + from_hours(520), seed);
        auto gaps = publish_gaps_ms(pubs, ModelType::Fno, TierSet::Dedicated);
        ASSERT_GE(gaps.size(), 200u) << "seed " << seed;
        gaps.resize(200);
        const auto s = interval_stats(gaps);
        note("seed " + std::to_string(seed) + ": 200 instances mean " + fixed(s.avg, 1) + " std " + fixed(s.std, 1));
        EXPECT_NEAR(s.avg, 134.8, 15.0) << "seed " << seed;
        EXPECT_GE(s.std, 30.0) << "seed " << seed;
        EXPECT_LE(s.std, 80.0) << "seed " << seed;
    }
}

TEST(Acceptance, Criterion05_CombinedStalenessReduction) {
    std::map<ModelType, double> ratio_sum;
    constexpr int kSeeds = 20;
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
        ScenarioConfig c;
        c.horizon_h = 168;
        c.seed = seed;
        c.record_sensor_events = false;
        const auto ded = run_scenario(c).publish_events();
        c.batch_tiers.push_back(BatchTierConfig{});
        const auto comb = run_scenario(c).publish_events();
        for (ModelType m : kAllModelTypes) {
            const double a = interval_stats(publish_gaps_ms(ded, m, TierSet::All)).avg;
            const double b = interval_stats(publish_gaps_ms(comb, m, TierSet::All)).avg;
            ratio_sum[m] += b / a;
        }
    }
    for (ModelType m : kAllModelTypes) {
        const double ratio = ratio_sum[m] / kSeeds;
        note(std::string(to_string(m)) + ": combined/dedicated mean interval " + fixed(ratio, 3) + " (" +
             fixed(1 / ratio, 2) + "x)");
        EXPECT_LE(ratio, 0.55) << to_string(m);
    }
}

TEST(Acceptance, Criterion06_DecayPeriodFormula) {
    const double expected[] = {67.4, 134.8 / 3, 33.7};
    const long quoted[] = {67, 45, 34};
    for (std::uint32_t k = 1; k <= 3; ++k) {
        const double p = expected_decay_period(134.8, k);
        EXPECT_NEAR(p, expected[k - 1], 1e-9);
        EXPECT_EQ(std::lround(p), quoted[k - 1]);
    }
    const std::int64_t period = from_minutes(134.8).count();
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::int64_t> u(0, period - 1);
    constexpr std::int64_t kPeriods = 100'000;
    for (std::uint32_t k = 1; k <= 3; ++k) {
        std::vector<std::int64_t> times;
        times.reserve(kPeriods * (k + 1) + 1);
        for (std::int64_t p = 0; p < kPeriods; ++p) {
            times.push_back(p * period);
            for (std::uint32_t i = 0; i < k; ++i) times.push_back(p * period + u(rng));
        }
        times.push_back(kPeriods * period);
        std::sort(times.begin(), times.end());
        std::vector<std::int64_t> gaps;
        gaps.reserve(times.size());
        for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(times[i] - times[i - 1]);
        const double mean = interval_stats(gaps).avg;
        const double target = expected_decay_period(134.8, k);
        note("k=" + std::to_string(k) + ": formula " + fixed(target, 2) + " min, Monte-Carlo " + fixed(mean, 2));
        EXPECT_LE(std::abs(mean - target) / target, 0.01);
    }
}

TEST(Acceptance, Criterion07_TransferModel) {
    const std::uint64_t fno = ScenarioConfig::default_model_sizes().at(ModelType::Fno);
    LinkModel link = LinkModel::defaults();
    auto seconds = [&] { return static_cast<double>(transfer_time(link, ModelType::Fno, fno).count()) / 1000.0; };
    const double iso = seconds();
    link.contention_active = true;
    const double contended = seconds();
    link.slicing = true;
    const double sliced = seconds();
    note("fno 9.1 MB: isolated " + fixed(iso, 3) + " s, contention " + fixed(contended, 3) + " s, sliced " +
         fixed(sliced, 3) + " s");
    EXPECT_NEAR(iso, 1.85, 0.01);
    EXPECT_NEAR(contended, 2.35, 0.01);
    EXPECT_NEAR(sliced, 1.97, 0.01);

    const ScenarioConfig c;
    Millis worst{0};
    for (bool slicing : {false, true}) {
        for (bool contention : {false, true}) {
            LinkModel l = c.network;
            l.slicing = slicing;
            l.contention_active = contention;
            for (ModelType m : kAllModelTypes) worst = std::max(worst, transfer_time(l, m, c.model_sizes.at(m)));
        }
    }
    const Millis cadence = from_minutes(StageDurations::deterministic().deterministic_total_min());
    note("max configured transfer " + std::to_string(worst.count()) + " ms vs cadence " +
         std::to_string(cadence.count()) + " ms");
    EXPECT_LT(worst.count() * 100, cadence.count());
}

/// Rebuilds the sawtooth from NDJSON lines alone.
struct Replay {
    std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>> resets; // (time, age)
    std::size_t age_samples = 0;
    bool ages_agree = true;
};

Replay replay(const std::vector<std::string>& lines) {
    Replay r;
    std::map<std::string, std::int64_t> cutoff;
    for (const auto& l : lines) {
        const json j = json::parse(l);
        const std::string kind = j.at("kind");
        const std::int64_t t = j.at("t_ms");
        if (kind == "deploy" && j.at("decision") == "deployed") {
            const std::string m = j.at("model_type");
            cutoff[m] = j.at("cutoff_ms");
            r.resets[m].push_back({t, t - cutoff[m]});
        } else if (kind == "age") {
            ++r.age_samples;
            r.ages_agree &= j.at("age_ms").get<std::int64_t>() == t - cutoff.at(j.at("model_type"));
        }
    }
    return r;
}

TEST(Acceptance, Criterion08_StalenessSawtooth) {
    for (std::uint64_t seed : {1, 2, 3}) {
        ScenarioConfig c;
        c.seed = seed;
        c.batch_tiers.push_back(BatchTierConfig{});
        const SimTrace trace = run_scenario(c);
        const Replay oracle = replay(trace.lines);
        EXPECT_TRUE(oracle.ages_agree);
        EXPECT_EQ(oracle.age_samples, trace.ages.size());
        for (ModelType m : kAllModelTypes) {
            const auto series = staleness_series(trace, m);
            const auto deployed = trace.deployed(m);
            const auto& resets = oracle.resets.at(std::string(to_string(m)));
            ASSERT_EQ(resets.size(), deployed.size());
            ASSERT_EQ(series.size(), 2 * deployed.size());
            for (std::size_t i = 0; i < deployed.size(); ++i) {
                const auto& start = series[2 * i];
                const auto& stop = series[2 * i + 1];
                ASSERT_EQ(stop.age - start.age, stop.time - start.time);
                ASSERT_EQ(start.age, deployed[i].time - deployed[i].cutoff);
                ASSERT_EQ(ms_of(start.time), resets[i].first);
                ASSERT_EQ(start.age.count(), resets[i].second);
            }
        }
    }
    note("3 seeds x 3 models: slope 1 between deploys, resets match the NDJSON replay exactly");
}

TEST(Acceptance, Criterion09_StatisticsOracle) {
    const std::vector<double> gaps_min{113.4, 200.4, 114.2, 133.0, 115.1, 199.0, 115.6, 122.1, 115.9, 119.3};
    testing::TempDir dir;
    const fs::path trace = dir.path() / "table1.ndjson";
    {
        std::ofstream f(trace);
        std::int64_t t = 0;
        auto emit = [&] {
            f << json{{"kind", "publish"},  {"t_ms", t},        {"model_type", "fno"},      {"tier", "dedicated"},
                      {"cutoff_ms", t},     {"instance_id", 1}, {"history_window_ms", 0}, {"version", 1}}
                     .dump()
              << '\n';
        };
        emit();
        for (double g : gaps_min) {
            t += from_minutes(g).count();
            emit();
        }
    }
    std::ostringstream out, err;
    std::istringstream in;
    ASSERT_EQ(run_cli({"stats", "--trace", trace.string(), "--model", "fno", "--tiers", "ded"}, out, err, in), 0)
        << err.str();
    note("rbf stats: " + out.str().substr(0, out.str().size() - 1));
    EXPECT_EQ(out.str(), "fno/ded: n=10 min=113.4 avg=134.8 max=200.4 std=32.9\n");

    std::vector<std::int64_t> ms;
    for (double g : gaps_min) ms.push_back(from_minutes(g).count());
    EXPECT_EQ(interval_stats(ms), interval_stats_brute_force(ms));
    ScenarioConfig c;
    c.batch_tiers.push_back(BatchTierConfig{});
    const auto pubs = run_scenario(c).publish_events();
    for (ModelType m : kAllModelTypes) {
        for (TierSet s : {TierSet::Dedicated, TierSet::Opportunistic, TierSet::All}) {
            const auto g = publish_gaps_ms(pubs, m, s);
            EXPECT_EQ(interval_stats(g), interval_stats_brute_force(g));
        }
    }
}

TEST(Acceptance, Criterion10_Determinism) {
    const fs::path cfg = fs::path(RBF_SOURCE_DIR) / "configs" / "combined.json";
    testing::TempDir a, b;
    for (const auto* d : {&a, &b}) {
        std::ostringstream out, err;
        std::istringstream in;
        ASSERT_EQ(run_cli({"simulate", "--config", cfg.string(), "--seed", "11", "--out", d->path().string()}, out,
                          err, in),
                  0)
            << err.str();
    }
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a.path())) {
        EXPECT_EQ(slurp(entry.path()), slurp(b.path() / entry.path().filename())) << entry.path().filename();
        ++files;
    }
    EXPECT_GE(files, 7u);

    ScenarioConfig split;
    split.batch_tiers.push_back(BatchTierConfig{});
    split.batch_tiers.back().split_gpu_wait = true;
    split.batch_tiers.push_back(BatchTierConfig{});
    split.batch_tiers.back().name = "second";
    split.batch_tiers.back().admission = AdmissionPolicy::Always;
    EXPECT_EQ(run_scenario(split).ndjson(), run_scenario(split).ndjson());
    note("two runs of combined.json seed 11: " + std::to_string(files) + " output files byte-identical");
}

/// Prints one line per criterion after its test finishes.
class CriterionPrinter : public ::testing::EmptyTestEventListener {
    void OnTestEnd(const ::testing::TestInfo& info) override {
        const std::string name = info.name();
        const auto us = name.find('_');
        std::string number = name.substr(std::string("Criterion").size(), us - std::string("Criterion").size());
        number.erase(0, std::min(number.find_first_not_of('0'), number.size() - 1));
        const bool ok = info.result()->Passed();
        std::cout << (ok ? "PASS" : "FAIL") << " criterion " << number << ": " << name.substr(us + 1) << std::endl;
        ok ? ++passed_ : ++failed_;
    }
    void OnTestProgramEnd(const ::testing::UnitTest&) override {
        std::cout << passed_ << " passed, " << failed_ << " failed" << std::endl;
    }
    int passed_ = 0;
    int failed_ = 0;
};

} // namespace
} // namespace rbf

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    ::testing::UnitTest::GetInstance()->listeners().Append(new rbf::CriterionPrinter);
    return RUN_ALL_TESTS();
}
