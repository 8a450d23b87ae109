#include <doctest.h>

#include <cmath>
#include <set>

#include "skelnav/metrics.hpp"
#include "skelnav/regulator.hpp"
#include "support.hpp"

using namespace skelnav;
using namespace skelnav::regulator;

namespace {

sim::SimWorld corridor() { return testsupport::room(22, 120, 0.1); }  // 11.8 m x 2 m interior

sim::EpisodeSpec episode(Vec2 start, Vec2 goal, std::string instruction, double yaw = 0.0) {
    sim::EpisodeSpec e;
    e.id = "e";
    e.start = {start, yaw};
    e.goal = goal;
    e.instruction = std::move(instruction);
    return e;
}

// Wraps the oracle and misbehaves on chosen calls.
class FlakyDecider : public backends::OracleDecisionProvider {
public:
    using OracleDecisionProvider::OracleDecisionProvider;
    int calls = 0;
    std::set<int> protocol_on;
    int backend_on = -1;
    Choice choose(const waypoint::DecisionSpace& space, const Feedback& f, const std::string& i,
                  std::span<const HistoryEntry> h) override {
        const int n = calls++;
        if (n == backend_on) throw BackendError("endpoint unreachable");
        if (protocol_on.count(n)) return {99, "out of range"};
        return OracleDecisionProvider::choose(space, f, i, h);
    }
};

class FixedDecomposer : public backends::OracleDecisionProvider {
public:
    FixedDecomposer(const sim::SimWorld& w, std::vector<std::string> out) : OracleDecisionProvider(w), out_(out) {}
    std::vector<std::string> decompose(const std::string&) override { return out_; }

private:
    std::vector<std::string> out_;
};

}  // namespace

TEST_CASE("verdict names") {
    CHECK(to_string(Verdict::Advanced) == "advanced");
    CHECK(parse_verdict("regressed") == Verdict::Regressed);
    CHECK(parse_verdict("unclear") == Verdict::Unclear);
    CHECK_THROWS_AS(parse_verdict("maybe"), InputError);
}

TEST_CASE("instruction decomposition") {
    const auto w = corridor();
    backends::OracleDecisionProvider oracle(w);
    const auto two = decompose("Walk out of the bedroom. Turn left and enter the bathroom.", oracle);
    REQUIRE(two.size() == 2);
    CHECK(two[0].index == 0);
    CHECK(two[1].text == "Turn left and enter the bathroom");
    CHECK(decompose("Go to the kitchen", oracle).size() == 1);
    CHECK_THROWS_AS(decompose("", oracle), InputError);

    const std::vector<Vec2> hints{{1, 1}};
    const auto hinted = decompose("A. B. C.", oracle, hints, Vec2{5, 5});
    CHECK(hinted[0].target_hint == Vec2{1, 1});
    CHECK(hinted[2].target_hint == Vec2{5, 5});

    FixedDecomposer empty(w, {});
    CHECK_THROWS_AS(decompose("Go.", empty), ProtocolError);
}

TEST_CASE("step budget") {
    EpisodeConfig cfg;
    CHECK(max_steps(std::vector<Subtask>(2), cfg) == 6);
    CHECK(max_steps(std::vector<Subtask>(9), cfg) == 9);
    CHECK(max_steps(std::vector<Subtask>(6), cfg) == 6);
    CHECK_THROWS_AS(max_steps(std::vector<Subtask>{}, cfg), InputError);
}

TEST_CASE("waypoint to action") {
    CHECK(to_action(waypoint::from_local({2.0, 2.0})).rotate_deg == doctest::Approx(45.0));
    CHECK(to_action(waypoint::from_local({2.0, 2.0})).translate_m == doctest::Approx(2.828).epsilon(1e-3));
    CHECK(to_action(waypoint::fallback_waypoint()) == sim::Action{90.0, 0.0});
    auto back = waypoint::from_local({-1.2, 0.0});
    CHECK(to_action(back) == sim::Action{180.0, 1.2});
}

TEST_CASE("config json round-trip and hash") {
    EpisodeConfig cfg;
    cfg.n_views = 6;
    cfg.perturb_magnitude = 0.5;
    cfg.seed = 17;
    const auto back = episode_config_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK(config_hash(back) == config_hash(cfg));
    cfg.seed = 18;
    CHECK(config_hash(back) != config_hash(cfg));
    CHECK(config_hash(cfg).size() == 16);
    cfg.n_views = 0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("straight corridor reaches a goal 4 m ahead") {
    const auto w = corridor();
    const auto e = episode({1.05, 1.05}, {5.05, 1.05}, "Walk down the corridor.");
    backends::OracleDescriptionProvider describe(w);
    backends::OracleDecisionProvider decide(w);
    const auto rec = run_episode(w, e, describe, decide, {});
    REQUIRE_FALSE(rec.failed);
    CHECK(rec.steps.size() == 6);
    const auto path = trajectory(rec);
    const double ne = metrics::navigation_error(w, path.back(), e.goal);
    CHECK(ne == doctest::Approx(testsupport::sweep_geodesic(w, path.back(), e.goal)).epsilon(1e-12));
    CHECK(ne < metrics::kSuccessThreshold);
    CHECK(metrics::evaluate(w, rec).sr == 1);
    for (std::size_t t = 1; t < rec.steps.size(); ++t)
        CHECK(rec.steps[t].goal_distance <= rec.steps[t - 1].goal_distance);
}

TEST_CASE("goal at the start") {
    const auto w = corridor();
    const auto e = episode({1.05, 1.05}, {1.05, 1.05}, "Stay here.");
    backends::OracleDescriptionProvider describe(w);
    backends::OracleDecisionProvider decide(w);
    const auto rec = run_episode(w, e, describe, decide, {});
    const auto m = metrics::evaluate(w, rec);
    CHECK(rec.steps.size() == 6);
    CHECK(m.ne < metrics::kSuccessThreshold);
    CHECK(m.sr == 1);
}

TEST_CASE("unreachable goal exhausts the budget") {
    Mask m(22, 120, 0);
    for (int r = 1; r < 21; ++r)
        for (int c = 1; c < 119; ++c) m(r, c) = c != 60;
    const sim::SimWorld w(m, 0.1);
    const auto e = episode({1.05, 1.05}, {10.05, 1.05}, "Go through the wall. Keep going.");
    backends::OracleDescriptionProvider describe(w);
    backends::OracleDecisionProvider decide(w);
    const auto rec = run_episode(w, e, describe, decide, {});
    CHECK_FALSE(rec.failed);
    CHECK(static_cast<int>(rec.steps.size()) == rec.max_steps);
    const auto metrics = metrics::evaluate(w, rec);
    CHECK(metrics.sr == 0);
    CHECK(metrics.spl == 0.0);
}

TEST_CASE("provider failures") {
    const auto w = corridor();
    const auto e = episode({1.05, 1.05}, {8.05, 1.05}, "Walk down the corridor.");
    backends::OracleDescriptionProvider describe(w);

    FlakyDecider once(w);
    once.protocol_on = {0};
    auto rec = run_episode(w, e, describe, once, {});
    CHECK_FALSE(rec.failed);
    CHECK(rec.steps.size() == 6);

    FlakyDecider twice(w);
    twice.protocol_on = {0, 1};
    rec = run_episode(w, e, describe, twice, {});
    CHECK(rec.failed);
    CHECK(rec.steps.empty());
    CHECK(rec.failure_reason.find("not on offer") != std::string::npos);

    FlakyDecider down(w);
    down.backend_on = 2;
    rec = run_episode(w, e, describe, down, {});
    CHECK(rec.failed);
    CHECK(rec.steps.size() == 2);
    CHECK(rec.failure_reason == "endpoint unreachable");
    CHECK(metrics::evaluate(w, rec).sr == 0);
}

TEST_CASE("records survive jsonl and replay exactly") {
    const auto w = corridor();
    auto e = episode({1.05, 1.05}, {9.05, 1.05}, "Walk. Keep walking. Stop at the end.");
    EpisodeConfig cfg;
    cfg.perturb_magnitude = 0.5;
    cfg.seed = 5;
    backends::OracleDescriptionProvider describe(w);
    backends::OracleDecisionProvider decide(w);
    const auto rec = run_episode(w, e, describe, decide, cfg);
    REQUIRE_FALSE(rec.failed);
    int perturbed = 0;
    for (const auto& s : rec.steps) perturbed += s.perturbed_pose.has_value();
    CHECK(perturbed == 1);

    const auto text = record_to_jsonl(rec);
    const auto back = record_from_jsonl(text);
    CHECK(record_to_jsonl(back) == text);

    // Re-executing the actions lands on the recorded poses bit for bit.
    const auto poses = replay_actions(w, back);
    std::vector<Pose> recorded{rec.start};
    for (const auto& s : rec.steps) {
        recorded.push_back(s.next_pose);
        if (s.perturbed_pose) recorded.push_back(*s.perturbed_pose);
    }
    CHECK(poses == recorded);

    // Running again from the tape reproduces the whole record.
    auto tape = tape_from_record(back);
    backends::ReplayDescriptionProvider rd(tape);
    backends::ReplayDecisionProvider rdec(tape);
    const auto again = run_episode(w, e, rd, rdec, back.config);
    CHECK(record_to_jsonl(again) == text);

    const auto m1 = metrics::evaluate(w, rec), m2 = metrics::evaluate(w, again);
    CHECK(m1.tl == m2.tl);
    CHECK(m1.ne == m2.ne);
    CHECK(m1.ndtw == m2.ndtw);
    CHECK(m1.spl == m2.spl);

    const auto dir = testsupport::scratch_dir("records");
    write_record(dir / "e.jsonl", rec);
    CHECK(record_to_jsonl(read_record(dir / "e.jsonl")) == text);
    CHECK_THROWS_AS(record_from_jsonl("{\"type\":\"step\"}"), InputError);
    CHECK_THROWS_AS(record_from_jsonl("not json"), InputError);
}

TEST_CASE("failed records replay to the same failure") {
    const auto w = corridor();
    const auto e = episode({1.05, 1.05}, {8.05, 1.05}, "Walk down the corridor.");
    backends::OracleDescriptionProvider describe(w);
    FlakyDecider down(w);
    down.backend_on = 3;
    const auto rec = run_episode(w, e, describe, down, {});
    REQUIRE(rec.failed);
    auto tape = tape_from_record(record_from_jsonl(record_to_jsonl(rec)));
    backends::ReplayDescriptionProvider rd(tape);
    backends::ReplayDecisionProvider rdec(tape);
    const auto again = run_episode(w, e, rd, rdec, rec.config);
    CHECK(record_to_jsonl(again) == record_to_jsonl(rec));
}
