#include "skelnav/task.hpp"

#include "skelnav/errors.hpp"

namespace skelnav {

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Advanced: return "advanced";
        case Verdict::Regressed: return "regressed";
        case Verdict::Unclear: return "unclear";
    }
    return "unclear";
}

Verdict parse_verdict(std::string_view s) {
    if (s == "advanced") return Verdict::Advanced;
    if (s == "regressed") return Verdict::Regressed;
    if (s == "unclear") return Verdict::Unclear;
    throw InputError("unknown verdict '" + std::string(s) + "'");
}

}  // namespace skelnav
