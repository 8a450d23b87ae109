#pragma once

// Closed decision-feedback loop: decompose the instruction, then for a fixed
// step budget perceive, build the decision space, choose, act and reflect.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelnav/backends.hpp"
#include "skelnav/perception.hpp"
#include "skelnav/simenv.hpp"
#include "skelnav/task.hpp"
#include "skelnav/waypoint.hpp"

namespace skelnav::regulator {

struct EpisodeConfig {
    int min_steps = 6;
    int n_views = 12;
    perception::CameraIntrinsics camera;
    perception::PerceptionConfig perception;
    waypoint::WaypointConfig waypoint;
    /// Mid-trajectory displacement (metres); 0 disables it.
    double perturb_magnitude = 0.0;
    /// Step after which the displacement happens; -1 means max_steps / 2 - 1.
    int perturb_step = -1;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const EpisodeConfig& cfg);
EpisodeConfig episode_config_from_json(const nlohmann::json& j);
/// FNV-1a 64 of the compact config JSON, as 16 hex digits.
std::string config_hash(const EpisodeConfig& cfg);

/// Subtask texts from the provider; hints are attached by position, and
/// subtasks past the last hint aim at `fallback_hint`.
std::vector<Subtask> decompose(const std::string& instruction, backends::DecisionProvider& provider,
                               std::span<const Vec2> hints = {}, std::optional<Vec2> fallback_hint = std::nullopt);

int max_steps(std::span<const Subtask> subtasks, const EpisodeConfig& cfg);

/// Compares the pre-action view aligned with `chosen` against the front view
/// of the post-action observation.
Feedback generate_feedback(const perception::Observation& before, const perception::Observation& after,
                           const Subtask& subtask, const waypoint::Waypoint& chosen,
                           backends::DescriptionProvider& provider);

/// Asks the provider for a choice and checks it. A protocol violation is
/// retried once; a second one propagates.
Choice select_waypoint(const waypoint::DecisionSpace& space, const Feedback& feedback, const std::string& instruction,
                       std::span<const HistoryEntry> history, backends::DecisionProvider& provider);

sim::Action to_action(const waypoint::Waypoint& w);

struct StepRecord {
    int t = 0;
    Pose pose;
    int active_subtask = 0;
    std::string scene;
    waypoint::DecisionSpace space;
    int chosen_id = 0;
    std::string explanation;
    sim::Action action;
    Pose next_pose;
    std::optional<Pose> perturbed_pose;
    Feedback feedback;  // reflection produced after this step's action
    double goal_distance = 0.0;  // geodesic, from where the next step starts
};

struct EpisodeRecord {
    std::string episode_id;
    std::string instruction;
    std::vector<Subtask> subtasks;
    EpisodeConfig config;
    Pose start;
    Vec2 goal;
    std::vector<Vec2> reference_path;
    int max_steps = 0;
    std::string provider;
    bool failed = false;
    std::string failure_reason;
    std::vector<StepRecord> steps;
};

/// Runs one episode for exactly max_steps steps, or fewer if a provider fails,
/// in which case the record is marked failed and keeps the partial trajectory.
/// Once every subtask is complete the agent holds position with rotate-only
/// steps for the rest of the budget.
EpisodeRecord run_episode(const sim::SimWorld& world, const sim::EpisodeSpec& episode,
                          backends::DescriptionProvider& describer, backends::DecisionProvider& decider,
                          const EpisodeConfig& cfg);

/// Start position followed by every executed and perturbed position.
std::vector<Vec2> trajectory(const EpisodeRecord& record);

/// Re-executes the recorded actions (and perturbations) from the start pose.
std::vector<Pose> replay_actions(const sim::SimWorld& world, const EpisodeRecord& record);

/// Provider outputs in call order, for replay.
std::shared_ptr<backends::ProviderTape> tape_from_record(const EpisodeRecord& record);

std::string record_to_jsonl(const EpisodeRecord& record);
EpisodeRecord record_from_jsonl(const std::string& text);
/// Writes through a temporary file and a rename.
void write_record(const std::filesystem::path& path, const EpisodeRecord& record);
EpisodeRecord read_record(const std::filesystem::path& path);

}  // namespace skelnav::regulator
