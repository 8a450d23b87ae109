#include "skelnav/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <zlib.h>

namespace skelnav::backends {

using nlohmann::json;

namespace {

std::string fmt_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

const Pose& require_pose(const std::optional<Pose>& pose, const char* what) {
    if (!pose) throw BackendError(std::string("scripted provider needs the capture pose for ") + what);
    return *pose;
}

}  // namespace

View view_of(const perception::Observation& obs, std::size_t index) {
    if (index >= obs.frames.size()) throw InputError("view index out of range");
    return {obs.frames[index], obs.headings_deg[index], obs.pose};
}

// ---- scripted oracle -------------------------------------------------------

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        cur.push_back(ch);
        if (ch == '.' || ch == '!' || ch == '?') {
            auto t = trim(cur);
            // Drop the terminator itself so "Stop." and "Stop" read the same.
            while (!t.empty() && (t.back() == '.' || t.back() == '!' || t.back() == '?')) t.pop_back();
            t = trim(t);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        }
    }
    auto tail = trim(cur);
    if (!tail.empty()) out.push_back(tail);
    return out;
}

std::string oracle_describe_direction(const sim::SimWorld& world, const Pose& pose, const waypoint::Waypoint& w) {
    const double yaw = pose.yaw_deg + w.heading_deg;
    const double wall = world.cast_ray(pose.position, yaw);
    if (wall < 0.5) return "wall ahead";

    const Vec2 dir = rotate({1.0, 0.0}, yaw);
    const double reach = std::min(std::max(w.distance, 0.0), std::max(0.0, wall - 1e-6));
    const Vec2 probe = pose.position + reach * dir;
    const sim::Region* region = world.region_at(probe);
    const std::string place = region ? region->label : "open area";

    // Objects within 1 m of the unobstructed part of the ray, nearest first.
    std::vector<std::pair<double, std::string>> seen;
    for (const auto& obj : world.objects) {
        const Vec2 rel = obj.position - pose.position;
        const double along = rel.x * dir.x + rel.y * dir.y;
        if (along <= 0.0 || along > wall) continue;
        const double across = std::abs(rel.x * dir.y - rel.y * dir.x);
        if (across <= 1.0) seen.emplace_back(along, obj.label);
    }
    std::sort(seen.begin(), seen.end());
    std::string visible;
    std::vector<std::string> names;
    for (const auto& [d, label] : seen) {
        if (std::find(names.begin(), names.end(), label) != names.end()) continue;
        names.push_back(label);
        if (!visible.empty()) visible += ", ";
        visible += label;
    }
    return place + "; visible: " + (visible.empty() ? "none" : visible);
}

std::string oracle_feedback_text(Verdict verdict, const Subtask& subtask) {
    switch (verdict) {
        case Verdict::Advanced: return "moved closer to the goal of \"" + subtask.text + "\"";
        case Verdict::Regressed: return "moved away from the goal of \"" + subtask.text + "\"";
        case Verdict::Unclear: return "no clear progress on \"" + subtask.text + "\"";
    }
    return {};
}

OracleDescriptionProvider::OracleDescriptionProvider(const sim::SimWorld& world, double advance_radius)
    : world_(world), advance_radius_(advance_radius) {}

std::string OracleDescriptionProvider::describe_panorama(const perception::Observation& obs) {
    const Pose& pose = require_pose(obs.pose, "panorama descriptions");
    const sim::Region* region = world_.region_at(pose.position);
    std::vector<std::pair<double, std::string>> near;
    for (const auto& obj : world_.objects) {
        const Vec2 rel = obj.position - pose.position;
        const double d = norm(rel);
        if (d > 5.0) continue;
        const double bearing = rad2deg(std::atan2(rel.y, rel.x));
        if (d > 0.0 && world_.cast_ray(pose.position, bearing, d) < d) continue;
        near.emplace_back(d, obj.label);
    }
    std::sort(near.begin(), near.end());
    std::string text = std::string("in ") + (region ? region->label : "open area") + "; around: ";
    if (near.empty()) return text + "nothing";
    for (std::size_t i = 0; i < near.size(); ++i) text += (i ? ", " : "") + near[i].second;
    return text;
}

std::string OracleDescriptionProvider::describe_direction(const perception::Observation& obs, std::size_t,
                                                          const waypoint::Waypoint& w) {
    return oracle_describe_direction(world_, require_pose(obs.pose, "directional descriptions"), w);
}

Feedback OracleDescriptionProvider::compare(const View& before, const View& after, const Subtask& subtask) {
    const Pose& a = require_pose(before.pose, "feedback");
    const Pose& b = require_pose(after.pose, "feedback");
    if (!subtask.target_hint) throw BackendError("scripted feedback needs a subtask target hint");
    const double d0 = sim::geodesic_distance(world_, a.position, *subtask.target_hint);
    const double d1 = sim::geodesic_distance(world_, b.position, *subtask.target_hint);
    Feedback f;
    f.subtask_index = subtask.index;
    f.verdict = d1 < d0 ? Verdict::Advanced : d1 > d0 ? Verdict::Regressed : Verdict::Unclear;
    f.text = oracle_feedback_text(f.verdict, subtask);
    f.subtask_complete = f.verdict == Verdict::Advanced && d1 <= advance_radius_;
    return f;
}

OracleDecisionProvider::OracleDecisionProvider(const sim::SimWorld& world) : world_(world) {}

std::vector<std::string> OracleDecisionProvider::decompose(const std::string& instruction) {
    return split_sentences(instruction);
}

double OracleDecisionProvider::score(const waypoint::DecisionSpace& space, const waypoint::DecisionEntry& entry) const {
    if (!space.oracle) throw BackendError("scripted decisions need the agent pose");
    if (!space.oracle->target) throw BackendError("scripted decisions need a subtask target");
    const Vec2 p = agent_to_world(space.oracle->agent_pose, entry.waypoint.local);
    if (!world_.is_free(p)) return sim::kUnreachable;
    return sim::geodesic_distance(world_, p, *space.oracle->target);
}

Choice OracleDecisionProvider::choose(const waypoint::DecisionSpace& space, const Feedback&, const std::string&,
                                      std::span<const HistoryEntry>) {
    if (space.entries.empty()) throw BackendError("empty decision space");
    const waypoint::DecisionEntry* best = nullptr;
    double best_score = 0.0;
    for (const auto& e : space.entries) {
        const double s = score(space, e);
        if (!best) {
            best = &e;
            best_score = s;
            continue;
        }
        const double hb = std::abs(best->waypoint.heading_deg);
        const double he = std::abs(e.waypoint.heading_deg);
        if (s < best_score || (s == best_score && (he < hb || (he == hb && e.waypoint.id < best->waypoint.id)))) {
            best = &e;
            best_score = s;
        }
    }
    Choice c;
    c.id = best->waypoint.id;
    if (best->waypoint.rotate_only()) {
        c.explanation = "no usable waypoint; rotating in place to look around";
    } else {
        c.explanation = "waypoint " + std::to_string(c.id) + " (" + fmt_fixed(best->waypoint.distance, 2) + " m at " +
                        fmt_fixed(best->waypoint.heading_deg, 1) + " deg) is closest to the subtask target" +
                        (std::isfinite(best_score) ? " (" + fmt_fixed(best_score, 2) + " m left)" : "");
    }
    return c;
}

NoisyOracleDecisionProvider::NoisyOracleDecisionProvider(const sim::SimWorld& world, double noise, std::uint64_t seed)
    : OracleDecisionProvider(world), noise_(noise), rng_(seed) {
    if (!(noise >= 0.0 && noise <= 1.0)) throw InputError("noise must lie in [0, 1]");
}

Choice NoisyOracleDecisionProvider::choose(const waypoint::DecisionSpace& space, const Feedback& feedback,
                                           const std::string& instruction, std::span<const HistoryEntry> history) {
    if (space.entries.empty()) throw BackendError("empty decision space");
    // Both draws happen every call so the stream stays aligned across conditions.
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const auto pick = static_cast<std::size_t>(rng_() % space.entries.size());
    Choice clean = OracleDecisionProvider::choose(space, feedback, instruction, history);
    // A description grounded in a view far off the waypoint heading is less
    // reliable: the error rate grows with that misalignment, in 30 degree units.
    const auto& entry = space.at(clean.id);
    const double misalign = std::abs(wrap_degrees(entry.waypoint.heading_deg - entry.view_heading_deg));
    const double p = std::min(1.0, noise_ * (1.0 + misalign / 30.0));
    if (u < p) {
        const auto& e = space.entries[pick];
        return {e.waypoint.id, "exploring waypoint " + std::to_string(e.waypoint.id) + " at random"};
    }
    return clean;
}

// ---- replay ----------------------------------------------------------------

namespace {

template <class T>
T pop_tape(const ProviderTape& tape, std::deque<T>& q, const char* what) {
    if (q.empty()) {
        if (tape.failure) throw BackendError(*tape.failure);
        throw ProtocolError(std::string("replay tape exhausted: no more ") + what);
    }
    T v = std::move(q.front());
    q.pop_front();
    return v;
}

}  // namespace

std::string ReplayDescriptionProvider::describe_panorama(const perception::Observation&) {
    return pop_tape(*tape_, tape_->scenes, "scene descriptions");
}

std::string ReplayDescriptionProvider::describe_direction(const perception::Observation&, std::size_t,
                                                          const waypoint::Waypoint&) {
    return pop_tape(*tape_, tape_->descriptions, "directional descriptions");
}

Feedback ReplayDescriptionProvider::compare(const View&, const View&, const Subtask&) {
    return pop_tape(*tape_, tape_->feedback, "feedback entries");
}

std::vector<std::string> ReplayDecisionProvider::decompose(const std::string&) {
    if (tape_->subtasks.empty() && tape_->failure) throw BackendError(*tape_->failure);
    return tape_->subtasks;
}

Choice ReplayDecisionProvider::choose(const waypoint::DecisionSpace& space, const Feedback&, const std::string&,
                                      std::span<const HistoryEntry>) {
    Choice c = pop_tape(*tape_, tape_->choices, "decisions");
    if (!space.contains(c.id))
        throw ProtocolError("replayed decision " + std::to_string(c.id) + " is not in the current decision space");
    return c;
}

// ---- images ----------------------------------------------------------------

Image depth_to_image(const perception::DepthFrame& frame, double max_depth) {
    Image img{frame.width, frame.height, std::vector<std::uint8_t>(frame.depth.size(), 0)};
    for (std::size_t i = 0; i < frame.depth.size(); ++i) {
        const float d = frame.depth[i];
        if (!perception::is_valid_depth(d) || d >= max_depth) continue;
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - d / max_depth)));
    }
    return img;
}

Image compose_feedback_image(const Image& before, const Image& after) {
    if (before.height != after.height)
        throw InputError("feedback views differ in height (" + std::to_string(before.height) + " vs " +
                         std::to_string(after.height) + ")");
    Image out{before.width + after.width, before.height, {}};
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int r = 0; r < out.height; ++r) {
        auto dst = out.pixels.begin() + static_cast<std::ptrdiff_t>(r) * out.width;
        std::copy_n(before.pixels.begin() + static_cast<std::ptrdiff_t>(r) * before.width, before.width, dst);
        std::copy_n(after.pixels.begin() + static_cast<std::ptrdiff_t>(r) * after.width, after.width,
                    dst + before.width);
    }
    return out;
}

Image compose_grid_image(std::span<const Image> views, int rows, int cols) {
    if (views.empty()) throw InputError("no views to tile");
    if (rows <= 0 || cols <= 0 || static_cast<std::size_t>(rows) * cols < views.size())
        throw InputError("grid too small for the views");
    const int w = views.front().width;
    const int h = views.front().height;
    for (const auto& v : views) {
        if (v.width != w || v.height != h) throw InputError("grid views must share dimensions");
    }
    Image out{w * cols, h * rows, {}};
    out.pixels.assign(static_cast<std::size_t>(out.width) * out.height, 0);
    for (std::size_t i = 0; i < views.size(); ++i) {
        const int gr = static_cast<int>(i) / cols;
        const int gc = static_cast<int>(i) % cols;
        for (int r = 0; r < h; ++r) {
            std::copy_n(views[i].pixels.begin() + static_cast<std::ptrdiff_t>(r) * w, w,
                        out.pixels.begin() + static_cast<std::ptrdiff_t>(gr * h + r) * out.width + gc * w);
        }
    }
    return out;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFFu));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    put_u32(out, static_cast<std::uint32_t>(
                     crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

std::string encode_png(const Image& image) {
    std::string raw;
    raw.reserve(static_cast<std::size_t>(image.height) * (image.width + 1));
    for (int r = 0; r < image.height; ++r) {
        raw.push_back('\0');  // filter: none
        raw.append(reinterpret_cast<const char*>(image.pixels.data()) + static_cast<std::ptrdiff_t>(r) * image.width,
                   static_cast<std::size_t>(image.width));
    }
    uLongf cap = compressBound(static_cast<uLong>(raw.size()));
    std::string z(cap, '\0');
    if (compress2(reinterpret_cast<Bytef*>(z.data()), &cap, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK)
        throw BackendError("png compression failed");
    z.resize(cap);

    std::string png("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(image.width));
    put_u32(ihdr, static_cast<std::uint32_t>(image.height));
    ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit grayscale
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", z);
    put_chunk(png, "IEND", {});
    return png;
}

std::string base64_encode(std::string_view bytes) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                                (static_cast<std::uint8_t>(bytes[i + 1]) << 8) | static_cast<std::uint8_t>(bytes[i + 2]);
        out += {kAlphabet[(v >> 18) & 63], kAlphabet[(v >> 12) & 63], kAlphabet[(v >> 6) & 63], kAlphabet[v & 63]};
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
        out += {kAlphabet[(v >> 18) & 63], kAlphabet[(v >> 12) & 63], '=', '='};
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) | (static_cast<std::uint8_t>(bytes[i + 1]) << 8);
        out += {kAlphabet[(v >> 18) & 63], kAlphabet[(v >> 12) & 63], kAlphabet[(v >> 6) & 63], '='};
    }
    return out;
}

// ---- prompts ---------------------------------------------------------------

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && (std::islower(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) ++j;
            if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
                const std::string key(tmpl.substr(i + 1, j - i - 1));
                auto it = values.find(key);
                if (it == values.end()) throw InputError("prompt placeholder {" + key + "} has no value");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
    auto read = [&](const char* name) {
        std::ifstream is(dir / name);
        if (!is) throw InputError("missing prompt template " + (dir / name).string());
        std::ostringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    PromptLibrary p;
    p.version = dir.filename().string();
    p.panorama = read("panorama.txt");
    p.direction = read("direction.txt");
    p.feedback = read("feedback.txt");
    p.decompose = read("decompose.txt");
    p.decision = read("decision.txt");
    return p;
}

std::string format_decision_space(const waypoint::DecisionSpace& space) {
    std::string out;
    if (!space.scene.empty()) out += "Scene: " + space.scene + "\n";
    out += "Candidates:";
    for (const auto& e : space.entries) {
        out += "\n- id " + std::to_string(e.waypoint.id) + ": " + fmt_fixed(e.waypoint.distance, 2) + " m, heading " +
               fmt_fixed(e.waypoint.heading_deg, 1) + " deg; " + e.description;
    }
    return out;
}

std::string format_history(std::span<const HistoryEntry> history) {
    if (history.empty()) return "(none)";
    std::string out;
    for (const auto& h : history) {
        if (!out.empty()) out += "\n";
        out += "- step " + std::to_string(h.timestep) + ": chose " + std::to_string(h.waypoint_id) + " because " +
               h.explanation;
    }
    return out;
}

std::string format_feedback(const Feedback& feedback) { return feedback.text; }

std::string render_decision_prompt(const PromptLibrary& prompts, const waypoint::DecisionSpace& space,
                                   const Feedback& feedback, const std::string& instruction,
                                   std::span<const HistoryEntry> history) {
    return render_template(prompts.decision, {{"instruction", instruction},
                                              {"decision_space", format_decision_space(space)},
                                              {"feedback", format_feedback(feedback)},
                                              {"history", format_history(history)}});
}

// ---- remote ----------------------------------------------------------------

void RemoteConfig::validate() const {
    if (!(timeout_s > 0.0)) throw InputError("remote timeout must be positive");
    if (max_retries < 0) throw InputError("remote max_retries must be >= 0");
    if (endpoint.empty()) throw InputError("remote endpoint is empty");
}

std::string resolve_auth_token(const RemoteConfig& cfg) {
    const char* v = std::getenv(cfg.auth_env.c_str());
    if (!v || !*v) throw BackendError("remote provider: environment variable " + cfg.auth_env + " is not set");
    return v;
}

std::string remote_complete(Transport& transport, const RemoteConfig& cfg, const std::string& token,
                            const std::string& prompt, const Image* image) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    if (image) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + base64_encode(encode_png(*image))}}}});
    }
    json body = {{"model", cfg.model},
                 {"temperature", 0},
                 {"messages", json::array({{{"role", "user"}, {"content", content}}})}};

    HttpRequest req;
    req.url = cfg.endpoint;
    req.body = body.dump();
    req.headers = {{"Authorization", "Bearer " + token}, {"Content-Type", "application/json"}};
    req.timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(cfg.timeout_s * 1000.0)));

    HttpResponse resp;
    for (int attempt = 0;; ++attempt) {
        try {
            resp = transport.post(req);
            if (resp.status == 200) break;
            if (attempt >= cfg.max_retries || (resp.status != 429 && resp.status < 500))
                throw BackendError("remote endpoint returned HTTP " + std::to_string(resp.status));
        } catch (const ProtocolError&) {
            throw;
        } catch (const BackendError&) {
            if (attempt >= cfg.max_retries) throw;
        }
    }

    json reply;
    try {
        reply = json::parse(resp.body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed chat-completions response: ") + e.what());
    }
}

Choice parse_choice_reply(const std::string& reply, const waypoint::DecisionSpace& space) {
    json j;
    try {
        j = json::parse(reply);
    } catch (const json::exception&) {
        throw ProtocolError("decision reply is not JSON: " + reply.substr(0, 120));
    }
    if (!j.is_object() || !j.contains("chosen_id") || !j["chosen_id"].is_number_integer())
        throw ProtocolError("decision reply lacks an integer chosen_id");
    if (!j.contains("explanation") || !j["explanation"].is_string())
        throw ProtocolError("decision reply lacks an explanation string");
    Choice c{j["chosen_id"].get<int>(), trim(j["explanation"].get<std::string>())};
    if (c.explanation.empty()) throw ProtocolError("decision reply has an empty explanation");
    if (!space.contains(c.id)) throw ProtocolError("decision reply chose unknown waypoint id " + std::to_string(c.id));
    return c;
}

Choice remote_choose(Transport& transport, const RemoteConfig& cfg, const PromptLibrary& prompts,
                     const waypoint::DecisionSpace& space, const Feedback& feedback, const std::string& instruction,
                     std::span<const HistoryEntry> history) {
    const std::string token = resolve_auth_token(cfg);
    const std::string prompt = render_decision_prompt(prompts, space, feedback, instruction, history);
    return parse_choice_reply(remote_complete(transport, cfg, token, prompt), space);
}

RemoteDescriptionProvider::RemoteDescriptionProvider(std::shared_ptr<Transport> transport, RemoteConfig cfg,
                                                     PromptLibrary prompts)
    : transport_(std::move(transport)), cfg_(std::move(cfg)), prompts_(std::move(prompts)) {
    cfg_.validate();
    token_ = resolve_auth_token(cfg_);
}

std::string RemoteDescriptionProvider::describe_panorama(const perception::Observation& obs) {
    std::vector<Image> views;
    for (const auto& f : obs.frames) views.push_back(depth_to_image(f));
    const int cols = views.size() == 12 ? 4 : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(views.size()))));
    const int rows = static_cast<int>((views.size() + cols - 1) / cols);
    const Image grid = compose_grid_image(views, rows, cols);
    const auto prompt = render_template(prompts_.panorama, {{"view_count", std::to_string(views.size())}});
    auto text = trim(remote_complete(*transport_, cfg_, token_, prompt, &grid));
    if (text.empty()) throw ProtocolError("empty panorama description");
    return text;
}

std::string RemoteDescriptionProvider::describe_direction(const perception::Observation& obs, std::size_t view_index,
                                                          const waypoint::Waypoint& w) {
    const View v = view_of(obs, view_index);
    const Image img = depth_to_image(v.frame);
    const auto prompt = render_template(prompts_.direction, {{"view_heading", fmt_fixed(v.heading_deg, 0)},
                                                             {"distance", fmt_fixed(w.distance, 2)},
                                                             {"heading", fmt_fixed(w.heading_deg, 1)}});
    auto text = trim(remote_complete(*transport_, cfg_, token_, prompt, &img));
    if (text.empty()) throw ProtocolError("empty directional description");
    return text;
}

Feedback RemoteDescriptionProvider::compare(const View& before, const View& after, const Subtask& subtask) {
    const Image pair = compose_feedback_image(depth_to_image(before.frame), depth_to_image(after.frame));
    const auto prompt = render_template(prompts_.feedback, {{"subtask", subtask.text}});
    const auto text = trim(remote_complete(*transport_, cfg_, token_, prompt, &pair));
    if (text.empty()) throw ProtocolError("empty feedback reply");

    Feedback f;
    f.subtask_index = subtask.index;
    f.text = text;
    std::string head = text.substr(0, text.find('\n'));
    std::transform(head.begin(), head.end(), head.begin(), [](unsigned char c) { return std::toupper(c); });
    if (head.find("ADVANCED") != std::string::npos) f.verdict = Verdict::Advanced;
    else if (head.find("REGRESSED") != std::string::npos) f.verdict = Verdict::Regressed;
    else f.verdict = Verdict::Unclear;
    f.subtask_complete = text.find(kSubtaskCompleteToken) != std::string::npos;
    return f;
}

RemoteDecisionProvider::RemoteDecisionProvider(std::shared_ptr<Transport> transport, RemoteConfig cfg,
                                               PromptLibrary prompts)
    : transport_(std::move(transport)), cfg_(std::move(cfg)), prompts_(std::move(prompts)) {
    cfg_.validate();
    token_ = resolve_auth_token(cfg_);
}

std::vector<std::string> RemoteDecisionProvider::decompose(const std::string& instruction) {
    const auto prompt = render_template(prompts_.decompose, {{"instruction", instruction}});
    const auto reply = remote_complete(*transport_, cfg_, token_, prompt);
    json j;
    try {
        j = json::parse(reply);
    } catch (const json::exception&) {
        throw ProtocolError("decomposition reply is not JSON");
    }
    if (!j.is_object() || !j.contains("subtasks") || !j["subtasks"].is_array() || j["subtasks"].empty())
        throw ProtocolError("decomposition reply lacks a non-empty subtasks array");
    std::vector<std::string> out;
    for (const auto& s : j["subtasks"]) {
        if (!s.is_string() || trim(s.get<std::string>()).empty()) throw ProtocolError("subtasks must be non-empty strings");
        out.push_back(trim(s.get<std::string>()));
    }
    return out;
}

Choice RemoteDecisionProvider::choose(const waypoint::DecisionSpace& space, const Feedback& feedback,
                                      const std::string& instruction, std::span<const HistoryEntry> history) {
    const std::string prompt = render_decision_prompt(prompts_, space, feedback, instruction, history);
    return parse_choice_reply(remote_complete(*transport_, cfg_, token_, prompt), space);
}

}  // namespace skelnav::backends
