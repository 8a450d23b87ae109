#include <doctest.h>

#include <zlib.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "skelnav/backends.hpp"
#include "support.hpp"

using namespace skelnav;
using namespace skelnav::backends;
using nlohmann::json;

namespace {

// 12 m x 3 m hallway with a plant 4 m east of (1, 1.5).
sim::SimWorld hallway() {
    auto w = testsupport::room(30, 120, 0.1);
    w.regions.push_back({"hallway", {{0, 0}, {12, 0}, {12, 3}, {0, 3}}});
    w.objects.push_back({"plant", {5.0, 1.5}});
    return w;
}

waypoint::DecisionEntry entry(int id, double d, double h, std::size_t view = 0, double view_h = 0.0) {
    waypoint::DecisionEntry e;
    e.waypoint = waypoint::from_local(waypoint::polar_to_local(d, h), id);
    e.waypoint.distance = d;
    e.waypoint.heading_deg = h;
    e.description = "open area; visible: none";
    e.view_index = view;
    e.view_heading_deg = view_h;
    return e;
}

View view_at(Vec2 p) { return {{}, 0.0, Pose{p, 0.0}}; }

class StubTransport : public Transport {
public:
    std::function<HttpResponse(const HttpRequest&)> reply;
    std::vector<HttpRequest> seen;
    HttpResponse post(const HttpRequest& r) override {
        seen.push_back(r);
        return reply(r);
    }
};

HttpResponse chat(const std::string& content) {
    json j = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
    return {200, j.dump()};
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

std::uint32_t be32(const std::string& s, std::size_t at) {
    return (std::uint32_t(std::uint8_t(s[at])) << 24) | (std::uint32_t(std::uint8_t(s[at + 1])) << 16) |
           (std::uint32_t(std::uint8_t(s[at + 2])) << 8) | std::uint32_t(std::uint8_t(s[at + 3]));
}

}  // namespace

TEST_CASE("sentence splitting") {
    CHECK(split_sentences("Walk out of the bedroom. Turn left and enter the bathroom.") ==
          std::vector<std::string>{"Walk out of the bedroom", "Turn left and enter the bathroom"});
    CHECK(split_sentences("Go to the kitchen").size() == 1);
    CHECK(split_sentences("Stop! Wait?  ...").size() == 2);
    CHECK(split_sentences("   ").empty());
}

TEST_CASE("scripted direction descriptions") {
    const auto w = hallway();
    const Pose p{{1.0, 1.5}, 0.0};
    CHECK(oracle_describe_direction(w, p, waypoint::from_local({3.0, 0.0})) == "hallway; visible: plant");
    CHECK(oracle_describe_direction(w, p, waypoint::from_local({0.0, 1.0})) == "hallway; visible: none");

    auto open = testsupport::room(30, 30, 0.1);
    CHECK(oracle_describe_direction(open, {{1.5, 1.5}, 0.0}, waypoint::from_local({1.0, 0.0})) ==
          "open area; visible: none");
    CHECK(oracle_describe_direction(open, {{2.6, 1.5}, 0.0}, waypoint::from_local({1.0, 0.0})) == "wall ahead");
}

TEST_CASE("scripted feedback follows geodesic progress") {
    // A wall with a gap makes the geodesic differ from the straight line, so
    // the verdicts below are checked against the sweep oracle, not Euclid.
    Mask m(40, 80, 0);
    for (int r = 1; r < 39; ++r)
        for (int c = 1; c < 79; ++c) m(r, c) = 1;
    for (int r = 8; r < 39; ++r) m(r, 40) = 0;
    const sim::SimWorld w(m, 0.1);
    OracleDescriptionProvider oracle(w);
    const Vec2 target{6.05, 1.05};
    const Subtask st{0, "go east", target};

    const Vec2 a{1.05, 1.05}, b{3.05, 3.55}, c{1.05, 3.55};
    const double da = testsupport::sweep_geodesic(w, a, target);
    const double db = testsupport::sweep_geodesic(w, b, target);
    const double dc = testsupport::sweep_geodesic(w, c, target);
    REQUIRE(db < da);
    REQUIRE(dc > db);

    auto f = oracle.compare(view_at(a), view_at(b), st);
    CHECK(f.verdict == Verdict::Advanced);
    CHECK_FALSE(f.subtask_complete);
    CHECK(f.text == "moved closer to the goal of \"go east\"");
    CHECK(oracle.compare(view_at(b), view_at(b), st).verdict == Verdict::Unclear);
    CHECK(oracle.compare(view_at(b), view_at(c), st).verdict == Verdict::Regressed);

    // Completion: advanced and within 1.5 m of the target.
    f = oracle.compare(view_at({4.55, 1.05}), view_at({5.05, 1.05}), st);
    CHECK(f.verdict == Verdict::Advanced);
    CHECK(f.subtask_complete);
    CHECK_THROWS_AS(oracle.compare(view_at(a), view_at(b), Subtask{0, "x", std::nullopt}), BackendError);
}

TEST_CASE("scripted choice is the geodesically closest waypoint") {
    auto w = testsupport::room(40, 40, 0.1);
    OracleDecisionProvider oracle(w);
    waypoint::DecisionSpace space;
    space.oracle = waypoint::OracleContext{{{2.0, 2.0}, 0.0}, Vec2{3.5, 2.0}};
    space.entries = {entry(0, 1.0, 90.0), entry(1, 1.2, 0.0), entry(2, 1.5, -90.0)};
    CHECK(oracle.choose(space, {}, "", {}).id == 1);

    // Tie on distance: the smaller |heading| wins.
    space.oracle->target = Vec2{2.0, 2.0};
    space.entries = {entry(0, 1.0, -60.0), entry(1, 1.0, 30.0)};
    CHECK(oracle.choose(space, {}, "", {}).id == 1);

    space.entries = {entry(0, 1.0, 45.0)};
    CHECK(oracle.choose(space, {}, "", {}).id == 0);

    space.oracle.reset();
    CHECK_THROWS_AS(oracle.choose(space, {}, "", {}), BackendError);
}

TEST_CASE("noisy oracle is seeded") {
    auto w = testsupport::room(40, 40, 0.1);
    waypoint::DecisionSpace space;
    space.oracle = waypoint::OracleContext{{{2.0, 2.0}, 0.0}, Vec2{3.5, 2.0}};
    space.entries = {entry(0, 1.0, 90.0), entry(1, 1.2, 0.0), entry(2, 1.5, -90.0)};
    NoisyOracleDecisionProvider a(w, 0.5, 9), b(w, 0.5, 9), never(w, 0.0, 9), always(w, 1.0, 9);
    int random_picks = 0;
    for (int i = 0; i < 200; ++i) {
        const int ca = a.choose(space, {}, "", {}).id;
        CHECK(ca == b.choose(space, {}, "", {}).id);
        CHECK(never.choose(space, {}, "", {}).id == 1);
        random_picks += always.choose(space, {}, "", {}).id != 1;
    }
    // With noise 1 every pick is uniform: about two thirds differ from the oracle.
    CHECK(random_picks > 100);
    CHECK(random_picks < 170);
}

TEST_CASE("replay providers serve the tape in order") {
    auto tape = std::make_shared<ProviderTape>();
    tape->provider_name = "oracle";
    tape->subtasks = {"a", "b"};
    tape->scenes = {"s0"};
    tape->descriptions = {"d0", "d1"};
    tape->feedback = {Feedback{"f", 0, Verdict::Advanced, false}};
    tape->choices = {Choice{1, "because"}};
    ReplayDescriptionProvider describe(tape);
    ReplayDecisionProvider decide(tape);
    perception::Observation obs;
    CHECK(decide.decompose("ignored") == tape->subtasks);
    CHECK(describe.describe_panorama(obs) == "s0");
    CHECK(describe.describe_direction(obs, 0, {}) == "d0");
    CHECK(describe.describe_direction(obs, 0, {}) == "d1");
    CHECK(describe.compare({}, {}, {}).verdict == Verdict::Advanced);
    waypoint::DecisionSpace space;
    space.entries = {entry(0, 1.0, 0.0), entry(1, 2.0, 10.0)};
    CHECK(decide.choose(space, {}, "", {}).id == 1);
    CHECK(decide.name() == "oracle");
    CHECK_THROWS_AS(describe.describe_panorama(obs), ProtocolError);

    tape->failure = "backend went away";
    try {
        describe.describe_panorama(obs);
        FAIL("expected a failure");
    } catch (const ProtocolError&) {
        FAIL("recorded failure must not be a protocol error");
    } catch (const BackendError& e) {
        CHECK(std::string(e.what()) == "backend went away");
    }
}

TEST_CASE("feedback image composition") {
    perception::DepthFrame f{256, 256, std::vector<float>(256 * 256, 2.0F)};
    const auto img = depth_to_image(f);
    CHECK(img.width == 256);
    CHECK(img.pixels[0] == 204);  // 255 * (1 - 2/10)
    const auto both = compose_feedback_image(img, img);
    CHECK(both.width == 512);
    CHECK(both.height == 256);
    for (int r = 0; r < 256; r += 51)
        for (int c = 0; c < 256; c += 17) CHECK(both.pixels[r * 512 + c] == both.pixels[r * 512 + 256 + c]);
    Image short_img{256, 128, std::vector<std::uint8_t>(256 * 128, 0)};
    CHECK_THROWS_AS(compose_feedback_image(img, short_img), InputError);

    std::vector<Image> views(12, Image{2, 2, {1, 2, 3, 4}});
    const auto grid = compose_grid_image(views, 3, 4);
    CHECK(grid.width == 8);
    CHECK(grid.height == 6);
}

TEST_CASE("png encoding decodes with zlib") {
    Image img{3, 2, {0, 10, 20, 30, 40, 250}};
    const auto png = encode_png(img);
    REQUIRE(png.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
    std::size_t at = 8;
    std::string idat;
    bool seen_end = false;
    while (at < png.size()) {
        const std::uint32_t len = be32(png, at);
        const std::string type = png.substr(at + 4, 4);
        const std::string data = png.substr(at + 8, len);
        const std::uint32_t crc = be32(png, at + 8 + len);
        const std::string typed = type + data;
        CHECK(crc == crc32(0, reinterpret_cast<const Bytef*>(typed.data()), static_cast<uInt>(typed.size())));
        if (type == "IHDR") {
            CHECK(be32(data, 0) == 3);
            CHECK(be32(data, 4) == 2);
            CHECK(data[8] == 8);  // bit depth
            CHECK(data[9] == 0);  // grayscale
        }
        if (type == "IDAT") idat += data;
        if (type == "IEND") seen_end = true;
        at += 12 + len;
    }
    CHECK(seen_end);
    std::vector<Bytef> raw(2 * (1 + 3));
    uLongf raw_len = raw.size();
    REQUIRE(uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()), idat.size()) == Z_OK);
    CHECK(raw_len == 8);
    CHECK(std::vector<Bytef>(raw.begin(), raw.end()) == std::vector<Bytef>{0, 0, 10, 20, 0, 30, 40, 250});
}

TEST_CASE("base64 matches the RFC 4648 vectors") {
    CHECK(base64_encode("") == "");
    CHECK(base64_encode("f") == "Zg==");
    CHECK(base64_encode("fo") == "Zm8=");
    CHECK(base64_encode("foo") == "Zm9v");
    CHECK(base64_encode("foob") == "Zm9vYg==");
    CHECK(base64_encode("fooba") == "Zm9vYmE=");
    CHECK(base64_encode("foobar") == "Zm9vYmFy");
}

TEST_CASE("template rendering") {
    CHECK(render_template("go {where} now", {{"where", "east"}}) == "go east now");
    CHECK(render_template("{\"id\": 1} {x}", {{"x", "y"}}) == "{\"id\": 1} y");
    CHECK_THROWS_AS(render_template("go {where}", {}), InputError);
}

TEST_CASE("decision prompt matches the golden file") {
    waypoint::DecisionSpace space;
    space.scene = "in hallway; around: plant";
    space.entries = {entry(0, 2.5, 0.0), entry(1, 3.25, -45.0)};
    space.entries[1].description = "kitchen; visible: table";
    const std::vector<HistoryEntry> history{{0, 1, "it leads to the kitchen"}};
    const Feedback fb{"moved closer to the goal of \"enter the kitchen\"", 0, Verdict::Advanced, false};
    const auto prompt = render_decision_prompt(PromptLibrary::builtin(), space, fb, "Enter the kitchen.", history);
    const auto golden = testsupport::source_dir() / "tests" / "golden" / "decision_prompt.txt";
    const auto want = read_file(golden);
    if (prompt != want) {
        // Leave the actual text next to the build for review.
        std::ofstream(testsupport::scratch_dir("golden") / "decision_prompt.txt", std::ios::binary) << prompt;
    }
    CHECK(prompt == want);
    CHECK(format_history({}) == "(none)");

    const auto lib = PromptLibrary::load(testsupport::source_dir() / "prompts" / "v1");
    CHECK(lib.decision == PromptLibrary::builtin().decision);
    CHECK(lib.feedback == PromptLibrary::builtin().feedback);
    CHECK_THROWS_AS(PromptLibrary::load(testsupport::source_dir() / "no-such-dir"), InputError);
}

TEST_CASE("choice replies are strict") {
    waypoint::DecisionSpace space;
    space.entries = {entry(0, 1.0, 0.0), entry(1, 2.0, 10.0)};
    CHECK(parse_choice_reply(R"({"chosen_id": 1, "explanation": "closer"})", space).id == 1);
    CHECK_THROWS_AS(parse_choice_reply("I would pick waypoint 1.", space), ProtocolError);
    CHECK_THROWS_AS(parse_choice_reply(R"({"chosen_id": 5, "explanation": "x"})", space), ProtocolError);
    CHECK_THROWS_AS(parse_choice_reply(R"({"chosen_id": "1", "explanation": "x"})", space), ProtocolError);
    CHECK_THROWS_AS(parse_choice_reply(R"({"chosen_id": 1, "explanation": "  "})", space), ProtocolError);
}

TEST_CASE("remote choice through a stub transport") {
    setenv("SKELNAV_TEST_TOKEN", "secret", 1);
    RemoteConfig cfg;
    cfg.auth_env = "SKELNAV_TEST_TOKEN";
    cfg.timeout_s = 0.25;
    waypoint::DecisionSpace space;
    space.entries = {entry(0, 1.0, 0.0), entry(1, 2.0, 10.0)};
    const auto prompts = PromptLibrary::builtin();

    StubTransport t;
    t.reply = [](const HttpRequest&) { return chat(R"({"chosen_id": 1, "explanation": "wider"})"); };
    const auto c = remote_choose(t, cfg, prompts, space, initial_feedback(), "go", {});
    CHECK(c.id == 1);
    CHECK(c.explanation == "wider");
    REQUIRE(t.seen.size() == 1);
    CHECK(t.seen[0].timeout == std::chrono::milliseconds(250));
    const auto body = json::parse(t.seen[0].body);
    CHECK(body["temperature"] == 0);
    CHECK(body["model"] == cfg.model);
    bool has_auth = false;
    for (const auto& [k, v] : t.seen[0].headers) has_auth |= k == "Authorization" && v == "Bearer secret";
    CHECK(has_auth);

    t.reply = [](const HttpRequest&) { return chat("Waypoint one looks best."); };
    CHECK_THROWS_AS(remote_choose(t, cfg, prompts, space, initial_feedback(), "go", {}), ProtocolError);

    t.reply = [](const HttpRequest&) -> HttpResponse { throw TimeoutError("timed out"); };
    CHECK_THROWS_AS(remote_choose(t, cfg, prompts, space, initial_feedback(), "go", {}), TimeoutError);

    // 503 is retried once, then succeeds.
    int calls = 0;
    t.reply = [&](const HttpRequest&) {
        return ++calls == 1 ? HttpResponse{503, "busy"} : chat(R"({"chosen_id": 0, "explanation": "ok"})");
    };
    CHECK(remote_choose(t, cfg, prompts, space, initial_feedback(), "go", {}).id == 0);
    CHECK(calls == 2);

    t.reply = [](const HttpRequest&) { return HttpResponse{401, "no"}; };
    CHECK_THROWS_AS(remote_choose(t, cfg, prompts, space, initial_feedback(), "go", {}), BackendError);

    cfg.auth_env = "SKELNAV_TEST_TOKEN_UNSET";
    unsetenv("SKELNAV_TEST_TOKEN_UNSET");
    CHECK_THROWS_AS(resolve_auth_token(cfg), BackendError);
}

TEST_CASE("http transport times out against a slow server") {
    httplib::Server server;
    server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1500));
        res.set_content("{}", "application/json");
    });
    server.Post("/fast", [](const httplib::Request& req, httplib::Response& res) {
        res.set_content(req.body, "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpTransport http;
    HttpRequest req;
    req.url = "http://127.0.0.1:" + std::to_string(port) + "/fast";
    req.body = "ping";
    const auto resp = http.post(req);
    CHECK(resp.status == 200);
    CHECK(resp.body == "ping");

    req.url = "http://127.0.0.1:" + std::to_string(port) + "/slow";
    req.timeout = std::chrono::milliseconds(200);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(http.post(req), TimeoutError);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(1400));

    server.stop();
    th.join();

    req.url = "http://127.0.0.1:" + std::to_string(port) + "/fast";
    CHECK_THROWS_AS(http.post(req), BackendError);
}

TEST_CASE("cassette records and replays exchanges") {
    const auto dir = testsupport::scratch_dir("cassette");
    auto inner = std::make_shared<StubTransport>();
    inner->reply = [](const HttpRequest& r) { return HttpResponse{200, "echo:" + r.body}; };
    {
        auto rec = CassetteTransport::record(inner, dir / "tape.jsonl");
        CHECK(rec->post({"http://x", "one", {}, {}}).body == "echo:one");
        CHECK(rec->post({"http://x", "two", {}, {}}).body == "echo:two");
    }
    auto play = CassetteTransport::replay(dir / "tape.jsonl");
    CHECK(play->post({"http://x", "one", {}, {}}).body == "echo:one");
    CHECK_THROWS_AS(play->post({"http://x", "three", {}, {}}), ProtocolError);
}
