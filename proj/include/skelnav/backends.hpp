#pragma once

// Model provider contracts and their implementations: a scripted oracle
// driven by simulator ground truth, a noisy variant of it, replay providers
// fed from a recorded episode, and remote adapters that speak an
// OpenAI-style chat-completions protocol through an injected transport.

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelnav/perception.hpp"
#include "skelnav/simenv.hpp"
#include "skelnav/task.hpp"
#include "skelnav/waypoint.hpp"

namespace skelnav::backends {

/// One directional frame pulled out of a panorama.
struct View {
    perception::DepthFrame frame;
    double heading_deg = 0.0;
    std::optional<Pose> pose;  // capture pose of the parent observation
};

View view_of(const perception::Observation& obs, std::size_t index);

class DescriptionProvider {
public:
    virtual ~DescriptionProvider() = default;
    virtual std::string describe_panorama(const perception::Observation& obs) = 0;
    virtual std::string describe_direction(const perception::Observation& obs, std::size_t view_index,
                                           const waypoint::Waypoint& w) = 0;
    virtual Feedback compare(const View& before, const View& after, const Subtask& subtask) = 0;
};

class DecisionProvider {
public:
    virtual ~DecisionProvider() = default;
    virtual std::vector<std::string> decompose(const std::string& instruction) = 0;
    virtual Choice choose(const waypoint::DecisionSpace& space, const Feedback& feedback,
                          const std::string& instruction, std::span<const HistoryEntry> history) = 0;
    /// Label written into episode records.
    virtual std::string name() const = 0;
};

// ---- scripted oracle -------------------------------------------------------

/// Splits on sentence terminators (. ! ?) and trims; empty pieces are dropped.
std::vector<std::string> split_sentences(const std::string& text);

/// "<region>; visible: <objects>" along the waypoint ray, "wall ahead" when a
/// wall is closer than 0.5 m.
std::string oracle_describe_direction(const sim::SimWorld& world, const Pose& pose, const waypoint::Waypoint& w);

/// The three fixed feedback templates, keyed by verdict.
std::string oracle_feedback_text(Verdict verdict, const Subtask& subtask);

class OracleDescriptionProvider final : public DescriptionProvider {
public:
    /// `advance_radius`: geodesic distance to the subtask hint under which an
    /// Advanced step also completes the subtask.
    explicit OracleDescriptionProvider(const sim::SimWorld& world, double advance_radius = 1.5);

    std::string describe_panorama(const perception::Observation& obs) override;
    std::string describe_direction(const perception::Observation& obs, std::size_t view_index,
                                   const waypoint::Waypoint& w) override;
    Feedback compare(const View& before, const View& after, const Subtask& subtask) override;

private:
    const sim::SimWorld& world_;
    double advance_radius_;
};

/// Picks the waypoint whose world position is geodesically closest to the
/// active subtask target; ties go to smaller |heading|, then smaller id.
class OracleDecisionProvider : public DecisionProvider {
public:
    explicit OracleDecisionProvider(const sim::SimWorld& world);

    std::vector<std::string> decompose(const std::string& instruction) override;
    Choice choose(const waypoint::DecisionSpace& space, const Feedback& feedback, const std::string& instruction,
                  std::span<const HistoryEntry> history) override;
    std::string name() const override { return "oracle"; }

    /// Geodesic distance from a waypoint's world position to the target; +inf
    /// when the position is off the free map.
    double score(const waypoint::DecisionSpace& space, const waypoint::DecisionEntry& entry) const;

protected:
    const sim::SimWorld& world_;
};

/// Oracle that sometimes picks a uniformly random entry instead. The chance is
/// `noise` scaled by how far the grounding view sits from the oracle's pick:
/// noise * (1 + misalignment / 30 deg), capped at 1.
class NoisyOracleDecisionProvider final : public OracleDecisionProvider {
public:
    NoisyOracleDecisionProvider(const sim::SimWorld& world, double noise, std::uint64_t seed);

    Choice choose(const waypoint::DecisionSpace& space, const Feedback& feedback, const std::string& instruction,
                  std::span<const HistoryEntry> history) override;
    std::string name() const override { return "noisy-oracle"; }

private:
    double noise_;
    std::mt19937_64 rng_;
};

// ---- replay ----------------------------------------------------------------

/// Everything a recorded episode says its providers returned, in call order.
struct ProviderTape {
    std::string provider_name;
    std::vector<std::string> subtasks;
    std::deque<std::string> scenes;
    std::deque<std::string> descriptions;
    std::deque<Feedback> feedback;
    std::deque<Choice> choices;
    /// Set when the recorded episode failed: the call that finds the tape
    /// empty raises it again as a BackendError.
    std::optional<std::string> failure;
};

class ReplayDescriptionProvider final : public DescriptionProvider {
public:
    explicit ReplayDescriptionProvider(std::shared_ptr<ProviderTape> tape) : tape_(std::move(tape)) {}
    std::string describe_panorama(const perception::Observation& obs) override;
    std::string describe_direction(const perception::Observation& obs, std::size_t view_index,
                                   const waypoint::Waypoint& w) override;
    Feedback compare(const View& before, const View& after, const Subtask& subtask) override;

private:
    std::shared_ptr<ProviderTape> tape_;
};

class ReplayDecisionProvider final : public DecisionProvider {
public:
    explicit ReplayDecisionProvider(std::shared_ptr<ProviderTape> tape) : tape_(std::move(tape)) {}
    std::vector<std::string> decompose(const std::string& instruction) override;
    Choice choose(const waypoint::DecisionSpace& space, const Feedback& feedback, const std::string& instruction,
                  std::span<const HistoryEntry> history) override;
    std::string name() const override { return tape_->provider_name; }

private:
    std::shared_ptr<ProviderTape> tape_;
};

// ---- images ----------------------------------------------------------------

/// 8-bit grayscale image.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    friend bool operator==(const Image&, const Image&) = default;
};

/// Depth rendered as gray: near = bright, far or no return = black.
Image depth_to_image(const perception::DepthFrame& frame, double max_depth = 10.0);

/// Horizontal concatenation, `before` on the left.
Image compose_feedback_image(const Image& before, const Image& after);

/// Tiles views row-major into a rows x cols grid (3 x 4 for a 12-view panorama).
Image compose_grid_image(std::span<const Image> views, int rows, int cols);

std::string encode_png(const Image& image);
std::string base64_encode(std::string_view bytes);

// ---- prompts ---------------------------------------------------------------

/// Replaces {name} placeholders. Every placeholder (a brace-wrapped run of
/// lowercase letters and underscores) must be supplied; other braces pass
/// through untouched.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct PromptLibrary {
    std::string version;
    std::string panorama;
    std::string direction;
    std::string feedback;
    std::string decompose;
    std::string decision;

    static PromptLibrary builtin();
    /// Reads panorama.txt, direction.txt, feedback.txt, decompose.txt and decision.txt from `dir`.
    static PromptLibrary load(const std::filesystem::path& dir);
};

std::string format_decision_space(const waypoint::DecisionSpace& space);
std::string format_history(std::span<const HistoryEntry> history);
std::string format_feedback(const Feedback& feedback);

std::string render_decision_prompt(const PromptLibrary& prompts, const waypoint::DecisionSpace& space,
                                   const Feedback& feedback, const std::string& instruction,
                                   std::span<const HistoryEntry> history);

// ---- transport -------------------------------------------------------------

struct HttpRequest {
    std::string url;
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
    std::chrono::milliseconds timeout{30000};
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Synchronous POST. Throws TimeoutError on timeout and BackendError on
/// connection failures.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// cpp-httplib client. One client per call, so concurrent callers get
/// separate connections.
class HttpTransport final : public Transport {
public:
    HttpResponse post(const HttpRequest& request) override;
};

/// Records every exchange of an inner transport to a JSON Lines cassette, or
/// replays a cassette without touching the network. Replay checks that each
/// request body matches the recorded one.
class CassetteTransport final : public Transport {
public:
    static std::shared_ptr<CassetteTransport> record(std::shared_ptr<Transport> inner, std::filesystem::path file);
    static std::shared_ptr<CassetteTransport> replay(std::filesystem::path file);

    HttpResponse post(const HttpRequest& request) override;

private:
    CassetteTransport() = default;

    std::shared_ptr<Transport> inner_;
    std::filesystem::path file_;
    std::deque<std::pair<std::string, HttpResponse>> tape_;
    std::mutex mutex_;
};

// ---- remote adapters -------------------------------------------------------

struct RemoteConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string auth_env = "OPENAI_API_KEY";
    double timeout_s = 60.0;
    int max_retries = 1;

    void validate() const;
};

/// Reads the bearer token named by `cfg.auth_env`; BackendError if unset.
std::string resolve_auth_token(const RemoteConfig& cfg);

/// Sends one chat-completions request and returns the assistant message text.
/// `image` is attached as a PNG data URL when present.
std::string remote_complete(Transport& transport, const RemoteConfig& cfg, const std::string& token,
                            const std::string& prompt, const Image* image = nullptr);

/// Parses a strict {"chosen_id": int, "explanation": string} reply and checks
/// the id against the space.
Choice parse_choice_reply(const std::string& reply, const waypoint::DecisionSpace& space);

Choice remote_choose(Transport& transport, const RemoteConfig& cfg, const PromptLibrary& prompts,
                     const waypoint::DecisionSpace& space, const Feedback& feedback, const std::string& instruction,
                     std::span<const HistoryEntry> history);

/// Token a remote VLM puts in its feedback to declare the subtask done.
inline constexpr std::string_view kSubtaskCompleteToken = "[SUBTASK_COMPLETE]";

class RemoteDescriptionProvider final : public DescriptionProvider {
public:
    RemoteDescriptionProvider(std::shared_ptr<Transport> transport, RemoteConfig cfg,
                              PromptLibrary prompts = PromptLibrary::builtin());

    std::string describe_panorama(const perception::Observation& obs) override;
    std::string describe_direction(const perception::Observation& obs, std::size_t view_index,
                                   const waypoint::Waypoint& w) override;
    Feedback compare(const View& before, const View& after, const Subtask& subtask) override;

private:
    std::shared_ptr<Transport> transport_;
    RemoteConfig cfg_;
    PromptLibrary prompts_;
    std::string token_;
};

class RemoteDecisionProvider final : public DecisionProvider {
public:
    RemoteDecisionProvider(std::shared_ptr<Transport> transport, RemoteConfig cfg,
                           PromptLibrary prompts = PromptLibrary::builtin());

    std::vector<std::string> decompose(const std::string& instruction) override;
    Choice choose(const waypoint::DecisionSpace& space, const Feedback& feedback, const std::string& instruction,
                  std::span<const HistoryEntry> history) override;
    std::string name() const override { return "remote:" + cfg_.model; }

private:
    std::shared_ptr<Transport> transport_;
    RemoteConfig cfg_;
    PromptLibrary prompts_;
    std::string token_;
};

}  // namespace skelnav::backends
