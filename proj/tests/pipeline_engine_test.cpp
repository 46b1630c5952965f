#include "rbf/pipeline_engine.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbf/error.hpp"

namespace rbf {
namespace {

constexpr double kPi = 3.14159265358979323846;

/// E[max of n iid standard normals] by quadrature of x * n * phi(x) * Phi(x)^(n-1).
double expected_max_std_normal(int n) {
    double sum = 0;
    const double h = 1e-3;
    for (double x = -10; x <= 10; x += h) {
        const double phi = std::exp(-0.5 * x * x) / std::sqrt(2 * kPi);
        const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
        sum += x * n * phi * std::pow(cdf, n - 1) * h;
    }
    return sum;
}

std::vector<PipelineEvent> drain(PipelineInstance& inst, std::vector<PipelineEvent> pending,
                                 std::vector<PublishEvent>& publishes) {
    std::vector<PipelineEvent> seen;
    while (!pending.empty()) {
        std::stable_sort(pending.begin(), pending.end(), [](auto& a, auto& b) { return a.time < b.time; });
        const PipelineEvent ev = pending.front();
        pending.erase(pending.begin());
        seen.push_back(ev);
        AdvanceResult r = advance(inst, ev);
        publishes.insert(publishes.end(), r.publishes.begin(), r.publishes.end());
        pending.insert(pending.end(), r.follow_ups.begin(), r.follow_ups.end());
    }
    return seen;
}

template <class F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an rbf::Error";
    return ErrorCode::InvalidArgument;
}

TEST(StageDurationsTest, DeterministicTotalIs134Point8) {
    const StageDurations d = StageDurations::deterministic();
    EXPECT_DOUBLE_EQ(d.deterministic_total_min(), 134.8);
    Rng rng(1);
    const InstancePlan p = sample_plan(d, rng);
    ASSERT_EQ(p.sim_tasks.size(), 72u);
    for (Millis t : p.sim_tasks) EXPECT_EQ(t, from_minutes(52));
    EXPECT_EQ(p.transform, from_minutes(14));
    EXPECT_EQ(p.train.at(ModelType::Fno), from_minutes(54.8));
    EXPECT_EQ(p.overhead, from_minutes(14));
    EXPECT_EQ(*std::max_element(p.sim_tasks.begin(), p.sim_tasks.end()) + p.transform + p.train.at(ModelType::Fno) +
                  p.overhead,
              Millis(8'088'000));
}

TEST(StageDurationsTest, ValidateRejectsBadValues) {
    StageDurations d;
    EXPECT_NO_THROW(d.validate());
    d.cfd_mean = 0;
    EXPECT_EQ(code_of([&] { d.validate(); }), ErrorCode::InvalidConfig);
    d = {};
    d.train[ModelType::Pinn].std = -1;
    EXPECT_EQ(code_of([&] { d.validate(); }), ErrorCode::InvalidConfig);
    d = {};
    d.train_correlation = 1.5;
    EXPECT_EQ(code_of([&] { d.validate(); }), ErrorCode::InvalidConfig);
    d = {};
    d.sim_tasks = 0;
    EXPECT_EQ(code_of([&] { d.validate(); }), ErrorCode::InvalidConfig);
}

TEST(StageDurationsTest, TaskScaleCalibratesMaxOf72ToFiftyTwoMinutes) {
    StageDurations d;
    const double oracle = d.cfd_mean * d.task_scale + d.task_std * expected_max_std_normal(72);
    EXPECT_NEAR(oracle, 52.0, 0.1);

    d.cfd_std = 0;
    Rng rng(99);
    constexpr int kRuns = 20000;
    double sum = 0;
    for (int i = 0; i < kRuns; ++i) {
        const InstancePlan p = sample_plan(d, rng);
        sum += to_minutes(*std::max_element(p.sim_tasks.begin(), p.sim_tasks.end()));
    }
    EXPECT_NEAR(sum / kRuns, oracle, 0.05);
}

TEST(StageDurationsTest, MaxOf72DrawsExceedsTaskMean) {
    StageDurations d;
    d.cfd_std = 0;
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const InstancePlan p = sample_plan(d, rng);
        ASSERT_GT(to_minutes(*std::max_element(p.sim_tasks.begin(), p.sim_tasks.end())), d.cfd_mean * d.task_scale);
    }
}

TEST(StageDurationsTest, DrawsStayAboveFloor) {
    StageDurations d;
    d.cfd_std = 200;
    d.train[ModelType::Pcr].std = 100;
    Rng rng(8);
    for (int i = 0; i < 2000; ++i) {
        const InstancePlan p = sample_plan(d, rng);
        for (Millis t : p.sim_tasks) ASSERT_GE(t, from_minutes(5.2));
        ASSERT_GE(p.train.at(ModelType::Pcr), from_minutes(1.59));
        ASSERT_GE(p.transform, from_minutes(1.4));
        ASSERT_GE(p.overhead, from_minutes(1.385));
    }
}

TEST(StageDurationsTest, ScaledProfileLandsSlowestModelOnTotal) {
    const StageDurations d = StageDurations::deterministic();
    for (double minutes : {80.0, 13.7, 250.123, 134.8}) {
        const InstancePlan p = scaled_profile(d, from_minutes(minutes));
        Millis slowest{0};
        for (auto& [t, m] : p.train) slowest = std::max(slowest, m);
        EXPECT_EQ(p.sim_tasks.front() + p.transform + slowest + p.overhead, from_minutes(minutes));
        EXPECT_LT(p.train.at(ModelType::Pcr), p.train.at(ModelType::Fno));
    }
    const InstancePlan same = scaled_profile(d, from_minutes(134.8));
    Rng rng(1);
    const InstancePlan det = sample_plan(d, rng);
    EXPECT_EQ(same.train, det.train);
    EXPECT_EQ(same.sim_tasks, det.sim_tasks);
}

TEST(PipelineInstanceTest, FixedTasksEndSimAtFiftyTwo) {
    Rng rng(1);
    std::vector<PipelineEvent> first;
    PipelineInstance inst = launch_instance(1, Tier::Dedicated, at_ms(1000), from_hours(6),
                                            sample_plan(StageDurations::deterministic(), rng), std::nullopt, first);
    EXPECT_EQ(inst.state, Stage::Sim);
    EXPECT_EQ(inst.sim_tasks_remaining, 72u);
    EXPECT_EQ(first.size(), 72u);
    std::vector<PublishEvent> pubs;
    drain(inst, first, pubs);
    EXPECT_EQ(*inst.sim_end, at_ms(1000) + from_minutes(52));
    EXPECT_EQ(*inst.transform_end, at_ms(1000) + from_minutes(66));
    EXPECT_EQ(inst.state, Stage::Done);
    ASSERT_EQ(pubs.size(), 3u);
    // PCR, PINN, FNO in completion order.
    EXPECT_EQ(pubs[0].model_type, ModelType::Pcr);
    EXPECT_EQ(pubs[0].time, at_ms(1000) + from_minutes(66 + 15.9 + 14));
    EXPECT_EQ(pubs[2].model_type, ModelType::Fno);
    EXPECT_EQ(pubs[2].time, at_ms(1000) + Millis(8'088'000));
    for (const auto& p : pubs) {
        EXPECT_EQ(p.cutoff, at_ms(1000));
        EXPECT_LT(p.cutoff, p.time);
        EXPECT_EQ(p.history_window, from_hours(6));
    }
}

TEST(PipelineInstanceTest, TrainingNeverStartsBeforeLastSimTask) {
    Rng rng(21);
    StageDurations d;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<PipelineEvent> first;
        PipelineInstance inst =
            launch_instance(1, Tier::Dedicated, at_ms(0), from_hours(6), sample_plan(d, rng), std::nullopt, first);
        const Timestamp last_task = std::max_element(first.begin(), first.end(), [](auto& a, auto& b) {
                                        return a.time < b.time;
                                    })->time;
        std::vector<PublishEvent> pubs;
        const auto seen = drain(inst, first, pubs);
        ASSERT_EQ(*inst.sim_end, last_task);
        for (const auto& ev : seen) {
            if (ev.kind == EventKind::TrainDone) {
                ASSERT_GE(ev.time - inst.plan.train.at(*ev.model) - inst.plan.overhead, last_task);
            }
        }
    }
}

TEST(PipelineInstanceTest, PcrPublishesBeforePinnOnAverage) {
    Rng rng(5);
    StageDurations d;
    d.train_correlation = 0;
    double pcr = 0, pinn = 0;
    for (int i = 0; i < 2000; ++i) {
        const InstancePlan p = sample_plan(d, rng);
        pcr += to_minutes(p.train.at(ModelType::Pcr));
        pinn += to_minutes(p.train.at(ModelType::Pinn));
    }
    EXPECT_LT(pcr, pinn);
    EXPECT_NEAR(pcr / 2000, 15.9, 0.5);
}

TEST(PipelineInstanceTest, WrongEventIsInvalidTransition) {
    Rng rng(1);
    std::vector<PipelineEvent> first;
    PipelineInstance inst = launch_instance(7, Tier::Dedicated, at_ms(0), from_hours(6),
                                            sample_plan(StageDurations::deterministic(), rng), std::nullopt, first);
    const PipelineInstance before = inst;
    EXPECT_EQ(code_of([&] { advance(inst, {EventKind::TransformDone, at_ms(5), std::nullopt}); }),
              ErrorCode::InvalidTransition);
    EXPECT_EQ(code_of([&] { advance(inst, {EventKind::TrainDone, at_ms(5), ModelType::Fno}); }),
              ErrorCode::InvalidTransition);
    EXPECT_EQ(code_of([&] { advance(inst, {EventKind::PollTick, at_ms(5), std::nullopt}); }),
              ErrorCode::InvalidTransition);
    EXPECT_EQ(inst.sim_tasks_remaining, before.sim_tasks_remaining);
    EXPECT_EQ(inst.state, Stage::Sim);

    std::vector<PublishEvent> pubs;
    drain(inst, first, pubs);
    EXPECT_EQ(code_of([&] { advance(inst, {EventKind::SimTaskDone, at_ms(1), std::nullopt}); }),
              ErrorCode::InvalidTransition);
    EXPECT_EQ(code_of([&] { advance(inst, {EventKind::TrainDone, at_ms(1), ModelType::Fno}); }),
              ErrorCode::InvalidTransition);
}

TEST(PipelineInstanceTest, OpportunisticLaunchNeedsOpenAllocation) {
    Rng rng(1);
    std::vector<PipelineEvent> first;
    const InstancePlan plan = sample_plan(StageDurations::deterministic(), rng);
    EXPECT_EQ(code_of([&] { launch_instance(1, Tier::Opportunistic, at_ms(0), {}, plan, std::nullopt, first); }),
              ErrorCode::NoActiveAllocation);
    const Allocation a{9, at_ms(100), at_ms(200)};
    EXPECT_EQ(code_of([&] { launch_instance(1, Tier::Opportunistic, at_ms(200), {}, plan, a, first); }),
              ErrorCode::NoActiveAllocation);
    EXPECT_EQ(launch_instance(1, Tier::Opportunistic, at_ms(150), {}, plan, a, first).allocation_id, 9u);
}

std::vector<std::int64_t> gaps_ms(const std::vector<PublishEvent>& pubs, ModelType type) {
    std::vector<std::int64_t> out;
    std::optional<Timestamp> prev;
    for (const auto& p : pubs) {
        if (p.model_type != type) continue;
        if (prev) out.push_back((p.time - *prev).count());
        prev = p.time;
    }
    return out;
}

TEST(DedicatedLoopTest, DeterministicIntervalIsExactly134Point8) {
    DedicatedTierConfig cfg;
    cfg.durations = StageDurations::deterministic();
    const auto pubs = run_dedicated_loop(cfg, at_ms(0), at_ms(24 * kMsPerHour), 1);
    for (ModelType t : kAllModelTypes) {
        const auto g = gaps_ms(pubs, t);
        ASSERT_EQ(g.size(), 9u) << to_string(t);
        for (auto x : g) EXPECT_EQ(x, 8'088'000);
    }
    // Back to back: every cutoff is the previous instance's FNO publish.
    std::vector<Timestamp> fno_times, cutoffs;
    for (const auto& p : pubs) {
        if (p.model_type == ModelType::Fno) fno_times.push_back(p.time);
        if (p.model_type == ModelType::Pcr) cutoffs.push_back(p.cutoff);
    }
    for (std::size_t i = 0; i + 1 < cutoffs.size(); ++i) EXPECT_EQ(cutoffs[i + 1], fno_times[i]);
}

TEST(DedicatedLoopTest, StochasticMeanOfFifteenRuns) {
    DedicatedTierConfig cfg;
    // 15 instances: the horizon is long enough and only the first 15 count.
    const auto pubs = run_dedicated_loop(cfg, at_ms(0), at_ms(80 * kMsPerHour), 2024);
    auto g = gaps_ms(pubs, ModelType::Fno);
    ASSERT_GE(g.size(), 15u);
    g.resize(15);
    const double mean = std::accumulate(g.begin(), g.end(), 0.0) / 15.0 / kMsPerMinute;
    EXPECT_NEAR(mean, 134.8, 20.0);
}

TEST(DedicatedLoopTest, ZeroHorizonHasNoEvents) {
    EXPECT_TRUE(run_dedicated_loop({}, at_ms(5000), at_ms(5000), 1).empty());
    EXPECT_TRUE(run_batch_loop({}, at_ms(5000), at_ms(5000), 1).empty());
}

TEST(DedicatedLoopTest, SameSeedSameEvents) {
    const auto a = run_dedicated_loop({}, at_ms(0), at_ms(48 * kMsPerHour), 77);
    const auto b = run_dedicated_loop({}, at_ms(0), at_ms(48 * kMsPerHour), 77);
    const auto c = run_dedicated_loop({}, at_ms(0), at_ms(48 * kMsPerHour), 78);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(BatchLoopTest, SixHourAllocationsYieldAFewPublishesThenLongGap) {
    BatchTierConfig cfg;
    cfg.allocation_limit_h = 6;
    std::vector<Allocation> allocs;
    const auto pubs = run_batch_loop(cfg, at_ms(0), at_ms(60LL * 24 * kMsPerHour), 3, &allocs);
    ASSERT_GE(allocs.size(), 50u);

    std::map<std::uint64_t, int> fno_per_alloc;
    for (const auto& p : pubs) {
        ASSERT_TRUE(p.allocation_id);
        const auto a = std::find_if(allocs.begin(), allocs.end(), [&](auto& x) { return x.id == *p.allocation_id; });
        ASSERT_NE(a, allocs.end());
        ASSERT_GE(p.cutoff, a->start);
        ASSERT_LE(p.time, a->expiry);
        ASSERT_LT(p.cutoff, p.time);
        EXPECT_EQ(p.tier, Tier::Opportunistic);
        if (p.model_type == ModelType::Fno) ++fno_per_alloc[*p.allocation_id];
    }
    double total = 0;
    for (const auto& a : allocs) total += fno_per_alloc[a.id];
    // Admission needs 160.8 min left, so the fourth iteration rarely starts.
    const double avg = total / static_cast<double>(allocs.size());
    EXPECT_GE(avg, 2.5);
    EXPECT_LE(avg, 3.5);

    for (std::size_t i = 1; i < allocs.size(); ++i) {
        const Millis wait = allocs[i].start - allocs[i - 1].expiry;
        EXPECT_GE(wait, from_hours(17));
        EXPECT_LE(wait, from_hours(19));
    }
    // Gap between the last publish of one allocation and the first of the next.
    const auto g = gaps_ms(pubs, ModelType::Fno);
    const auto longest = *std::max_element(g.begin(), g.end());
    EXPECT_GE(longest, 17 * kMsPerHour);
    for (auto x : g) {
        if (x > 6 * kMsPerHour) EXPECT_GE(x, 17 * kMsPerHour);
    }
}

TEST(BatchLoopTest, AlwaysLaunchFitsAboutFourIterationsInSixHours) {
    BatchTierConfig cfg;
    cfg.allocation_limit_h = 6;
    cfg.admission = AdmissionPolicy::Always;
    std::vector<Allocation> allocs;
    const auto pubs = run_batch_loop(cfg, at_ms(0), at_ms(200LL * 24 * kMsPerHour), 3, &allocs);
    const auto fno = std::count_if(pubs.begin(), pubs.end(), [](auto& p) { return p.model_type == ModelType::Fno; });
    const double avg = static_cast<double>(fno) / static_cast<double>(allocs.size());
    EXPECT_GE(avg, 3.5);
    EXPECT_LE(avg, 4.5);
}

TEST(BatchLoopTest, AllocationShorterThanOneIterationPublishesNothing) {
    BatchTierConfig cfg;
    cfg.allocation_limit_h = 1.0;
    cfg.iteration_min = Distribution::fixed(80);
    cfg.admission = AdmissionPolicy::Always;
    std::vector<Allocation> allocs;
    const auto pubs = run_batch_loop(cfg, at_ms(0), at_ms(10LL * 24 * kMsPerHour), 3, &allocs);
    EXPECT_FALSE(allocs.empty());
    // PCR finishes inside the hour; FNO and PINN never do.
    for (const auto& p : pubs) EXPECT_EQ(p.model_type, ModelType::Pcr);

    cfg.admission = AdmissionPolicy::MeanPlusKStd;
    EXPECT_TRUE(run_batch_loop(cfg, at_ms(0), at_ms(10LL * 24 * kMsPerHour), 3).empty());
}

TEST(BatchLoopTest, AdmissionThresholdAndKills) {
    BatchTierConfig cfg;
    EXPECT_EQ(cfg.admission_threshold(), from_minutes(80.0 + 2 * 40.4));
    cfg.split_gpu_wait = true;
    EXPECT_GT(cfg.admission_threshold(), from_minutes(160.8 + 24.5));

    BatchTierConfig always;
    always.allocation_limit_h = 3;
    always.admission = AdmissionPolicy::Always;
    always.iteration_min = Distribution::fixed(100);
    std::size_t killed = 0;
    EventQueue q;
    IdSource ids;
    std::vector<PublishEvent> pubs;
    TierHooks hooks;
    hooks.allocation_expire = [&](const Allocation&, std::size_t k) { killed += k; };
    start_batch_tier(q, always, make_stream(1, 1), ids, at_ms(0), at_ms(30 * kMsPerHour),
                     [&](const PublishEvent& p) { pubs.push_back(p); }, hooks);
    q.run_until(at_ms(30 * kMsPerHour));
    // 180 min allocation, 100 min iterations: one completes, the second is killed.
    EXPECT_EQ(killed, 1u);
    EXPECT_EQ(std::count_if(pubs.begin(), pubs.end(), [](auto& p) { return p.model_type == ModelType::Fno; }), 1);
}

TEST(BatchLoopTest, SplitGpuWaitDelaysTraining) {
    BatchTierConfig cfg;
    cfg.iteration_min = Distribution::fixed(80);
    cfg.split_gpu_wait = true;
    cfg.gpu_wait_min = Distribution::fixed(20);
    const auto pubs = run_batch_loop(cfg, at_ms(0), at_ms(40 * kMsPerHour), 9);
    ASSERT_FALSE(pubs.empty());
    for (const auto& p : pubs) {
        if (p.model_type == ModelType::Fno) EXPECT_EQ(p.time - p.cutoff, from_minutes(100));
    }
}

TEST(PublishEventTest, CsvAndJson) {
    PublishEvent e{at_ms(8'088'000), ModelType::Fno, Tier::Opportunistic, at_ms(0), 4, 2, from_hours(6)};
    EXPECT_EQ(publish_csv_header(), "time_ms,model_type,tier,cutoff_ms,instance_id,allocation_id");
    EXPECT_EQ(to_csv_row(e), "8088000,fno,opportunistic,0,4,2");
    EXPECT_EQ(to_json_line(e),
              R"({"allocation_id":2,"cutoff_ms":0,"instance_id":4,"model_type":"fno","tier":"opportunistic","time_ms":8088000})");
    e.allocation_id.reset();
    EXPECT_EQ(to_csv_row(e), "8088000,fno,opportunistic,0,4,");
}

} // namespace
} // namespace rbf
