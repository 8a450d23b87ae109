#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "skelnav/geometry.hpp"

namespace skelnav {

struct Subtask {
    int index = 0;
    std::string text;
    std::optional<Vec2> target_hint;  // scripted providers only
};

enum class Verdict { Advanced, Regressed, Unclear };

std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view s);

/// Post-action reflection on the active subtask.
struct Feedback {
    std::string text;
    int subtask_index = 0;
    Verdict verdict = Verdict::Unclear;
    bool subtask_complete = false;

    friend bool operator==(const Feedback&, const Feedback&) = default;
};

inline constexpr std::string_view kInitialFeedbackText = "no feedback yet";

inline Feedback initial_feedback() { return {std::string(kInitialFeedbackText), 0, Verdict::Unclear, false}; }

struct HistoryEntry {
    int timestep = 0;
    int waypoint_id = 0;
    std::string explanation;
};

struct Choice {
    int id = -1;
    std::string explanation;
};

}  // namespace skelnav
