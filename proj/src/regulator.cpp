#include "skelnav/regulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace skelnav::regulator {

using nlohmann::json;

void EpisodeConfig::validate() const {
    if (min_steps < 1) throw InputError("min_steps must be >= 1");
    if (n_views < 1 || 360 % n_views != 0) throw InputError("n_views must divide 360");
    camera.validate();
    perception.validate();
    waypoint.validate();
    if (!(perturb_magnitude >= 0.0)) throw InputError("perturb_magnitude must be >= 0");
    if (perturb_step < -1) throw InputError("perturb_step must be >= -1");
}

json to_json(const EpisodeConfig& cfg) {
    return {{"min_steps", cfg.min_steps},
            {"n_views", cfg.n_views},
            {"camera",
             {{"width", cfg.camera.width},
              {"height", cfg.camera.height},
              {"horizontal_fov_deg", cfg.camera.horizontal_fov_deg},
              {"camera_height", cfg.camera.camera_height}}},
            {"perception",
             {{"height_threshold", cfg.perception.height_threshold},
              {"planning_radius", cfg.perception.planning_radius},
              {"cell_size", cfg.perception.cell_size},
              {"smoothing_kernel", cfg.perception.smoothing_kernel},
              {"blind_fill_radius", cfg.perception.blind_fill_radius}}},
            {"waypoint",
             {{"merge_radius", cfg.waypoint.merge_radius},
              {"min_exclusion", cfg.waypoint.min_exclusion},
              {"degree_config", std::string(skeleton::to_string(cfg.waypoint.degree_config))}}},
            {"perturb_magnitude", cfg.perturb_magnitude},
            {"perturb_step", cfg.perturb_step},
            {"seed", cfg.seed}};
}

EpisodeConfig episode_config_from_json(const json& j) {
    EpisodeConfig cfg;
    cfg.min_steps = j.at("min_steps").get<int>();
    cfg.n_views = j.at("n_views").get<int>();
    const auto& cam = j.at("camera");
    cfg.camera.width = cam.at("width").get<int>();
    cfg.camera.height = cam.at("height").get<int>();
    cfg.camera.horizontal_fov_deg = cam.at("horizontal_fov_deg").get<double>();
    cfg.camera.camera_height = cam.at("camera_height").get<double>();
    const auto& per = j.at("perception");
    cfg.perception.height_threshold = per.at("height_threshold").get<double>();
    cfg.perception.planning_radius = per.at("planning_radius").get<double>();
    cfg.perception.cell_size = per.at("cell_size").get<double>();
    cfg.perception.smoothing_kernel = per.at("smoothing_kernel").get<int>();
    cfg.perception.blind_fill_radius = per.at("blind_fill_radius").get<double>();
    const auto& wp = j.at("waypoint");
    cfg.waypoint.merge_radius = wp.at("merge_radius").get<double>();
    cfg.waypoint.min_exclusion = wp.at("min_exclusion").get<double>();
    cfg.waypoint.degree_config = skeleton::parse_degree_config(wp.at("degree_config").get<std::string>());
    cfg.perturb_magnitude = j.at("perturb_magnitude").get<double>();
    cfg.perturb_step = j.at("perturb_step").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t perturbation_seed(const EpisodeConfig& cfg, const std::string& episode_id) {
    return (cfg.seed * 0x9E3779B97F4A7C15ULL) ^ fnv1a(episode_id);
}

int perturbation_step(const EpisodeConfig& cfg, int steps) {
    if (cfg.perturb_magnitude <= 0.0) return -1;
    return cfg.perturb_step >= 0 ? cfg.perturb_step : std::max(0, steps / 2 - 1);
}

}  // namespace

std::string config_hash(const EpisodeConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(cfg).dump())));
    return buf;
}

std::vector<Subtask> decompose(const std::string& instruction, backends::DecisionProvider& provider,
                               std::span<const Vec2> hints, std::optional<Vec2> fallback_hint) {
    if (instruction.find_first_not_of(" \t\r\n") == std::string::npos) throw InputError("instruction is empty");
    const auto texts = provider.decompose(instruction);
    if (texts.empty()) throw ProtocolError("decomposition returned no subtasks");
    std::vector<Subtask> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Subtask s{static_cast<int>(i), texts[i], std::nullopt};
        s.target_hint = i < hints.size() ? std::optional<Vec2>(hints[i]) : fallback_hint;
        out.push_back(std::move(s));
    }
    return out;
}

int max_steps(std::span<const Subtask> subtasks, const EpisodeConfig& cfg) {
    if (subtasks.empty()) throw InputError("no subtasks");
    return std::max(static_cast<int>(subtasks.size()), cfg.min_steps);
}

Feedback generate_feedback(const perception::Observation& before, const perception::Observation& after,
                           const Subtask& subtask, const waypoint::Waypoint& chosen,
                           backends::DescriptionProvider& provider) {
    before.validate();
    after.validate();
    const auto prev = backends::view_of(before, before.nearest_view(chosen.heading_deg));
    const auto next = backends::view_of(after, after.front_view());
    return provider.compare(prev, next, subtask);
}

Choice select_waypoint(const waypoint::DecisionSpace& space, const Feedback& feedback, const std::string& instruction,
                       std::span<const HistoryEntry> history, backends::DecisionProvider& provider) {
    if (space.entries.empty()) throw InputError("decision space is empty");
    for (int attempt = 0;; ++attempt) {
        try {
            Choice c = provider.choose(space, feedback, instruction, history);
            if (!space.contains(c.id))
                throw ProtocolError("provider chose waypoint " + std::to_string(c.id) + ", which is not on offer");
            if (c.explanation.empty()) throw ProtocolError("provider gave no explanation");
            return c;
        } catch (const ProtocolError&) {
            if (attempt >= 1) throw;
        }
    }
}

sim::Action to_action(const waypoint::Waypoint& w) { return {w.heading_deg, w.distance}; }

EpisodeRecord run_episode(const sim::SimWorld& world, const sim::EpisodeSpec& episode,
                          backends::DescriptionProvider& describer, backends::DecisionProvider& decider,
                          const EpisodeConfig& cfg) {
    cfg.validate();
    EpisodeRecord rec;
    rec.episode_id = episode.id;
    rec.instruction = episode.instruction;
    rec.config = cfg;
    rec.start = episode.start;
    rec.goal = episode.goal;
    rec.reference_path = episode.reference_path;
    rec.provider = decider.name();
    if (!world.is_free(episode.start.position)) throw InputError("episode " + episode.id + " starts inside a wall");

    try {
        rec.subtasks = decompose(episode.instruction, decider, episode.subtask_hints, episode.goal);
    } catch (const BackendError& e) {
        rec.failed = true;
        rec.failure_reason = e.what();
        return rec;
    }
    rec.max_steps = max_steps(rec.subtasks, cfg);
    const int n_sub = static_cast<int>(rec.subtasks.size());
    const int perturb_at = perturbation_step(cfg, rec.max_steps);

    Pose pose = episode.start;
    auto obs = sim::render_panorama(world, pose, cfg.n_views, cfg.camera, 0);
    Feedback feedback = initial_feedback();
    std::vector<HistoryEntry> history;
    int active = 0;

    for (int t = 0; t < rec.max_steps; ++t) {
        StepRecord s;
        s.t = t;
        s.pose = pose;
        s.active_subtask = active;
        const bool holding = active >= n_sub;
        const Subtask& subtask = rec.subtasks[std::min(active, n_sub - 1)];
        try {
            s.scene = describer.describe_panorama(obs);
            std::vector<waypoint::Waypoint> candidates;
            if (!holding) {
                candidates =
                    waypoint::plan_waypoints(obs, cfg.camera, cfg.perception, cfg.waypoint).waypoints;
            }
            s.space = waypoint::assemble_decision_space(std::move(candidates), describer, obs);
            s.space.scene = s.scene;
            s.space.oracle = waypoint::OracleContext{pose, subtask.target_hint};

            const Choice choice = select_waypoint(s.space, feedback, episode.instruction, history, decider);
            s.chosen_id = choice.id;
            s.explanation = choice.explanation;
            const auto& chosen = s.space.at(choice.id).waypoint;
            s.action = to_action(chosen);
            s.next_pose = sim::step(world, pose, s.action);

            auto next_obs = sim::render_panorama(world, s.next_pose, cfg.n_views, cfg.camera, t + 1);
            s.feedback = generate_feedback(obs, next_obs, subtask, chosen, describer);
            if (!holding && s.feedback.subtask_complete) {
                // Later subtasks aiming at the very same point are done as well.
                const auto done = rec.subtasks[active].target_hint;
                ++active;
                while (done && active < n_sub && rec.subtasks[active].target_hint == done) ++active;
            }

            pose = s.next_pose;
            if (t == perturb_at) {
                s.perturbed_pose = sim::inject_perturbation(world, pose, cfg.perturb_magnitude,
                                                            perturbation_seed(cfg, episode.id));
                pose = *s.perturbed_pose;
                next_obs = sim::render_panorama(world, pose, cfg.n_views, cfg.camera, t + 1);
            }
            s.goal_distance = sim::geodesic_distance(world, pose.position, episode.goal);
            history.push_back({t, choice.id, choice.explanation});
            feedback = s.feedback;
            obs = std::move(next_obs);
        } catch (const BackendError& e) {
            rec.failed = true;
            rec.failure_reason = e.what();
            return rec;
        }
        rec.steps.push_back(std::move(s));
    }
    return rec;
}

std::vector<Vec2> trajectory(const EpisodeRecord& record) {
    std::vector<Vec2> out{record.start.position};
    for (const auto& s : record.steps) {
        out.push_back(s.next_pose.position);
        if (s.perturbed_pose) out.push_back(s.perturbed_pose->position);
    }
    return out;
}

std::vector<Pose> replay_actions(const sim::SimWorld& world, const EpisodeRecord& record) {
    std::vector<Pose> out{record.start};
    Pose pose = record.start;
    for (const auto& s : record.steps) {
        pose = sim::step(world, pose, s.action);
        out.push_back(pose);
        if (s.perturbed_pose) {
            pose = sim::inject_perturbation(world, pose, record.config.perturb_magnitude,
                                            perturbation_seed(record.config, record.episode_id));
            out.push_back(pose);
        }
    }
    return out;
}

std::shared_ptr<backends::ProviderTape> tape_from_record(const EpisodeRecord& record) {
    auto tape = std::make_shared<backends::ProviderTape>();
    tape->provider_name = record.provider;
    for (const auto& s : record.subtasks) tape->subtasks.push_back(s.text);
    for (const auto& s : record.steps) {
        tape->scenes.push_back(s.scene);
        for (const auto& e : s.space.entries) tape->descriptions.push_back(e.description);
        tape->feedback.push_back(s.feedback);
        tape->choices.push_back({s.chosen_id, s.explanation});
    }
    if (record.failed) tape->failure = record.failure_reason;
    return tape;
}

// ---- serialisation ---------------------------------------------------------

namespace {

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json feedback_json(const Feedback& f) {
    return {{"text", f.text},
            {"subtask_index", f.subtask_index},
            {"verdict", std::string(to_string(f.verdict))},
            {"subtask_complete", f.subtask_complete}};
}

Feedback feedback_from(const json& j) {
    return {j.at("text").get<std::string>(), j.at("subtask_index").get<int>(),
            parse_verdict(j.at("verdict").get<std::string>()), j.at("subtask_complete").get<bool>()};
}

}  // namespace

std::string record_to_jsonl(const EpisodeRecord& r) {
    json subtasks = json::array();
    for (const auto& s : r.subtasks) {
        subtasks.push_back({{"index", s.index},
                            {"text", s.text},
                            {"target_hint", s.target_hint ? vec_json(*s.target_hint) : json(nullptr)}});
    }
    json ref = json::array();
    for (auto p : r.reference_path) ref.push_back(vec_json(p));
    json header = {{"type", "header"},
                   {"episode_id", r.episode_id},
                   {"instruction", r.instruction},
                   {"subtasks", subtasks},
                   {"config_hash", config_hash(r.config)},
                   {"config", to_json(r.config)},
                   {"start", sim::to_json(r.start)},
                   {"goal", vec_json(r.goal)},
                   {"reference_path", ref},
                   {"max_steps", r.max_steps},
                   {"provider", r.provider},
                   {"failed", r.failed},
                   {"failure_reason", r.failure_reason}};
    std::string out = header.dump() + "\n";
    for (const auto& s : r.steps) {
        json step = {{"type", "step"},
                     {"t", s.t},
                     {"pose", sim::to_json(s.pose)},
                     {"active_subtask", s.active_subtask},
                     {"scene", s.scene},
                     {"decision_space", waypoint::to_json(s.space)},
                     {"fallback", s.space.fallback},
                     {"chosen_id", s.chosen_id},
                     {"explanation", s.explanation},
                     {"action", {{"rotate_deg", s.action.rotate_deg}, {"translate_m", s.action.translate_m}}},
                     {"next_pose", sim::to_json(s.next_pose)},
                     {"feedback", feedback_json(s.feedback)},
                     {"goal_distance", std::isfinite(s.goal_distance) ? json(s.goal_distance) : json(nullptr)}};
        if (s.perturbed_pose) step["perturbed_pose"] = sim::to_json(*s.perturbed_pose);
        out += step.dump() + "\n";
    }
    return out;
}

EpisodeRecord record_from_jsonl(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    EpisodeRecord r;
    bool have_header = false;
    try {
        while (std::getline(is, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const json j = json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (type == "header") {
                if (have_header) throw InputError("record has two headers");
                have_header = true;
                r.episode_id = j.at("episode_id").get<std::string>();
                r.instruction = j.at("instruction").get<std::string>();
                for (const auto& s : j.at("subtasks")) {
                    Subtask st{s.at("index").get<int>(), s.at("text").get<std::string>(), std::nullopt};
                    if (!s.at("target_hint").is_null()) st.target_hint = vec_from(s.at("target_hint"));
                    r.subtasks.push_back(std::move(st));
                }
                r.config = episode_config_from_json(j.at("config"));
                if (j.at("config_hash").get<std::string>() != config_hash(r.config))
                    throw InputError("record config hash does not match its config");
                r.start = sim::pose_from_json(j.at("start"));
                r.goal = vec_from(j.at("goal"));
                for (const auto& p : j.at("reference_path")) r.reference_path.push_back(vec_from(p));
                r.max_steps = j.at("max_steps").get<int>();
                r.provider = j.at("provider").get<std::string>();
                r.failed = j.at("failed").get<bool>();
                r.failure_reason = j.at("failure_reason").get<std::string>();
            } else if (type == "step") {
                if (!have_header) throw InputError("step before header");
                StepRecord s;
                s.t = j.at("t").get<int>();
                s.pose = sim::pose_from_json(j.at("pose"));
                s.active_subtask = j.at("active_subtask").get<int>();
                s.scene = j.at("scene").get<std::string>();
                s.space = waypoint::decision_space_from_json(j.at("decision_space"));
                s.space.scene = s.scene;
                s.space.fallback = j.at("fallback").get<bool>();
                s.chosen_id = j.at("chosen_id").get<int>();
                s.explanation = j.at("explanation").get<std::string>();
                s.action = {j.at("action").at("rotate_deg").get<double>(),
                            j.at("action").at("translate_m").get<double>()};
                s.next_pose = sim::pose_from_json(j.at("next_pose"));
                if (j.contains("perturbed_pose")) s.perturbed_pose = sim::pose_from_json(j.at("perturbed_pose"));
                s.feedback = feedback_from(j.at("feedback"));
                s.goal_distance = j.at("goal_distance").is_null() ? sim::kUnreachable
                                                                  : j.at("goal_distance").get<double>();
                r.steps.push_back(std::move(s));
            } else {
                throw InputError("unknown record line type '" + type + "'");
            }
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed record: ") + e.what());
    }
    if (!have_header) throw InputError("record has no header");
    return r;
}

void write_record(const std::filesystem::path& path, const EpisodeRecord& record) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw InputError("cannot write " + tmp.string());
        os << record_to_jsonl(record);
        if (!os) throw InputError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

EpisodeRecord read_record(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open record " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return record_from_jsonl(ss.str());
}

}  // namespace skelnav::regulator
