#include "skelnav/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "skelnav/backends.hpp"
#include "skelnav/metrics.hpp"
#include "skelnav/regulator.hpp"
#include "skelnav/simenv.hpp"

namespace skelnav::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- map catalogue ---------------------------------------------------------

struct Catalog {
    std::vector<std::shared_ptr<const sim::SimWorld>> worlds;
    std::vector<std::string> order;  // episode ids in load order
    std::map<std::string, std::size_t> owner;

    void add_bundle(const fs::path& dir) {
        auto world = std::make_shared<const sim::SimWorld>(sim::SimWorld::load(dir));
        for (const auto& e : world->episodes) {
            if (!owner.emplace(e.id, worlds.size()).second) throw InputError("duplicate episode id " + e.id);
            order.push_back(e.id);
        }
        worlds.push_back(std::move(world));
    }

    /// A bundle directory, or a directory whose subdirectories are bundles.
    void add(const fs::path& path) {
        if (fs::exists(path / "world.json")) {
            add_bundle(path);
            return;
        }
        if (!fs::is_directory(path)) throw InputError("map bundle not found: " + path.string());
        std::vector<fs::path> dirs;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_directory() && fs::exists(entry.path() / "world.json")) dirs.push_back(entry.path());
        }
        if (dirs.empty()) throw InputError("no map bundles under " + path.string());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs) add_bundle(d);
    }

    const sim::SimWorld& world_for(const std::string& id) const {
        auto it = owner.find(id);
        if (it == owner.end()) throw InputError("episode " + id + " is not in any loaded map");
        return *worlds[it->second];
    }
};

Catalog load_catalog(const std::vector<std::string>& maps) {
    if (maps.empty()) throw InputError("--map is required");
    Catalog c;
    for (const auto& m : maps) c.add(m);
    return c;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<fs::path> list_records(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(in)) {
                if (e.is_regular_file() && e.path().extension() == ".jsonl") found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else if (fs::is_regular_file(in)) {
            out.emplace_back(in);
        } else {
            throw InputError("record path not found: " + in);
        }
    }
    return out;
}

void write_atomic(const fs::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw InputError("cannot write " + tmp.string());
        os << text;
    }
    fs::rename(tmp, path);
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& id) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h ^ (seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
}

// ---- episode batches -------------------------------------------------------

struct RunOptions {
    std::vector<std::string> maps;
    std::string episodes;
    std::string mode = "oracle";
    int views = 12;
    double perturb_magnitude = 0.0;
    int perturb_step = -1;
    std::uint64_t seed = 0;
    std::string out = "runs";
    std::string degree_config = "deg1";
    int min_steps = 6;
    int jobs = 1;
    double noise = 0.0;
    int repeat = 1;
    std::string replay_dir;
    backends::RemoteConfig remote;
    std::string cassette;
    bool cassette_replay = false;
};

void add_run_options(CLI::App* app, RunOptions& o, bool with_mode_choices = true) {
    app->add_option("--map", o.maps, "Map bundle directory (repeatable; a directory of bundles also works)");
    app->add_option("--episodes", o.episodes, "Comma-separated episode ids (default: all)");
    auto* mode = app->add_option("--mode", o.mode, "Provider mode");
    if (with_mode_choices) mode->check(CLI::IsMember({"oracle", "remote", "replay"}));
    app->add_option("--views", o.views, "Panorama views per step");
    app->add_option("--perturb-magnitude", o.perturb_magnitude, "Mid-trajectory displacement in metres");
    app->add_option("--perturb-step", o.perturb_step, "Step after which to perturb (default: mid-episode)");
    app->add_option("--seed", o.seed, "Base seed");
    app->add_option("--out", o.out, "Output directory");
    app->add_option("--degree-config", o.degree_config, "Waypoint source nodes")
        ->check(CLI::IsMember({"deg1", "gt2", "ne2"}));
    app->add_option("--min-steps", o.min_steps, "Minimum step budget");
    app->add_option("--jobs", o.jobs, "Parallel episodes")->check(CLI::PositiveNumber);
    app->add_option("--noise", o.noise, "Random-choice rate of the scripted decision provider")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--repeat", o.repeat, "Runs per episode, seeds seed..seed+repeat-1")->check(CLI::PositiveNumber);
    app->add_option("--replay-dir", o.replay_dir, "Recorded episodes to replay");
    app->add_option("--endpoint", o.remote.endpoint, "Chat-completions endpoint");
    app->add_option("--model", o.remote.model, "Remote model name");
    app->add_option("--auth-env", o.remote.auth_env, "Environment variable holding the bearer token");
    app->add_option("--timeout", o.remote.timeout_s, "Remote timeout in seconds");
    app->add_option("--cassette", o.cassette, "Record remote exchanges to this file");
    app->add_flag("--cassette-replay", o.cassette_replay, "Serve remote exchanges from --cassette");
}

regulator::EpisodeConfig base_config(const RunOptions& o) {
    regulator::EpisodeConfig cfg;
    cfg.min_steps = o.min_steps;
    cfg.n_views = o.views;
    cfg.perturb_magnitude = o.perturb_magnitude;
    cfg.perturb_step = o.perturb_step;
    cfg.seed = o.seed;
    cfg.waypoint.degree_config = skeleton::parse_degree_config(o.degree_config);
    cfg.validate();
    return cfg;
}

struct Job {
    std::string episode_id;
    std::string file_stem;
    regulator::EpisodeConfig cfg;
    std::optional<regulator::EpisodeRecord> replay;
};

struct BatchResult {
    std::vector<regulator::EpisodeRecord> records;
    std::vector<fs::path> files;
};

std::vector<Job> plan_jobs(const Catalog& catalog, const RunOptions& o, const regulator::EpisodeConfig& cfg,
                           const fs::path& replay_dir) {
    std::vector<Job> jobs;
    if (o.mode == "replay") {
        if (replay_dir.empty()) throw InputError("replay mode needs --replay-dir");
        const auto wanted = split_list(o.episodes);
        for (const auto& file : list_records({replay_dir.string()})) {
            auto rec = regulator::read_record(file);
            if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), rec.episode_id) == wanted.end()) continue;
            catalog.world_for(rec.episode_id);
            jobs.push_back({rec.episode_id, file.stem().string(), rec.config, std::move(rec)});
        }
        if (jobs.empty()) throw InputError("no records to replay in " + replay_dir.string());
        return jobs;
    }
    auto ids = o.episodes.empty() ? catalog.order : split_list(o.episodes);
    if (ids.empty()) throw InputError("no episodes selected");
    for (const auto& id : ids) {
        catalog.world_for(id);
        for (int k = 0; k < o.repeat; ++k) {
            Job j{id, o.repeat > 1 ? id + "__r" + std::to_string(k) : id, cfg, std::nullopt};
            j.cfg.seed = cfg.seed + static_cast<std::uint64_t>(k);
            jobs.push_back(std::move(j));
        }
    }
    return jobs;
}

BatchResult run_batch(const Catalog& catalog, const RunOptions& o, const std::vector<Job>& jobs,
                      const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::shared_ptr<backends::Transport> transport;
    if (o.mode == "remote") {
        if (!o.cassette.empty() && o.cassette_replay) {
            transport = backends::CassetteTransport::replay(o.cassette);
        } else {
            transport = std::make_shared<backends::HttpTransport>();
            if (!o.cassette.empty()) transport = backends::CassetteTransport::record(transport, o.cassette);
        }
        // Fail fast on missing credentials, before any episode starts.
        backends::resolve_auth_token(o.remote);
    }

    BatchResult result;
    result.records.resize(jobs.size());
    result.files.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                const Job& job = jobs[i];
                const auto& world = catalog.world_for(job.episode_id);
                const auto& spec = world.episode(job.episode_id);
                std::unique_ptr<backends::DescriptionProvider> describer;
                std::unique_ptr<backends::DecisionProvider> decider;
                if (o.mode == "oracle") {
                    describer = std::make_unique<backends::OracleDescriptionProvider>(world);
                    if (o.noise > 0.0) {
                        decider = std::make_unique<backends::NoisyOracleDecisionProvider>(
                            world, o.noise, mix_seed(job.cfg.seed, job.episode_id));
                    } else {
                        decider = std::make_unique<backends::OracleDecisionProvider>(world);
                    }
                } else if (o.mode == "replay") {
                    auto tape = regulator::tape_from_record(*job.replay);
                    describer = std::make_unique<backends::ReplayDescriptionProvider>(tape);
                    decider = std::make_unique<backends::ReplayDecisionProvider>(tape);
                } else {
                    describer = std::make_unique<backends::RemoteDescriptionProvider>(transport, o.remote);
                    decider = std::make_unique<backends::RemoteDecisionProvider>(transport, o.remote);
                }
                auto rec = regulator::run_episode(world, spec, *describer, *decider, job.cfg);
                const auto file = out_dir / (job.file_stem + ".jsonl");
                regulator::write_record(file, rec);
                result.records[i] = std::move(rec);
                result.files[i] = file;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(jobs.size());
            }
        }
    };
    // Remote cassettes replay in call order, so they only work sequentially.
    const int n_threads = (o.mode == "remote" && !o.cassette.empty()) ? 1 : std::max(1, o.jobs);
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return result;
}

int report_failures(const BatchResult& batch, std::ostream& err) {
    int failed = 0;
    for (std::size_t i = 0; i < batch.records.size(); ++i) {
        if (batch.records[i].failed) {
            ++failed;
            err << "episode " << batch.records[i].episode_id << " failed: " << batch.records[i].failure_reason << "\n";
        }
    }
    return failed ? kExitBackend : kExitOk;
}

metrics::MetricReport evaluate_records(const Catalog& catalog, const std::vector<regulator::EpisodeRecord>& records,
                                       metrics::DtwCost cost) {
    std::vector<metrics::EpisodeMetrics> per;
    for (const auto& r : records) per.push_back(metrics::evaluate(catalog.world_for(r.episode_id), r, cost));
    return metrics::aggregate(std::move(per), cost);
}

// ---- plot ------------------------------------------------------------------

std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string render_svg(const sim::SimWorld& world, const regulator::EpisodeRecord& rec) {
    constexpr double kScale = 40.0;  // px per metre
    const double w = world.width_m() * kScale;
    const double h = world.height_m() * kScale;
    auto px = [&](Vec2 p) { return svg_num(p.x * kScale) + "," + svg_num(h - p.y * kScale); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg_num(w) << "\" height=\"" << svg_num(h)
      << "\" viewBox=\"0 0 " << svg_num(w) << " " << svg_num(h) << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g fill=\"#444\">\n";
    const auto& mask = world.free_cells();
    const double cs = world.cell_size() * kScale;
    for (int r = 0; r < mask.rows(); ++r) {
        int c = 0;
        while (c < mask.cols()) {
            if (mask(r, c)) {
                ++c;
                continue;
            }
            const int c0 = c;
            while (c < mask.cols() && !mask(r, c)) ++c;
            s << "<rect x=\"" << svg_num(c0 * cs) << "\" y=\"" << svg_num(r * cs) << "\" width=\""
              << svg_num((c - c0) * cs) << "\" height=\"" << svg_num(cs) << "\"/>\n";
        }
    }
    s << "</g>\n";
    if (rec.reference_path.size() > 1) {
        s << "<polyline fill=\"none\" stroke=\"green\" stroke-width=\"3\" points=\"";
        for (auto p : rec.reference_path) s << px(p) << " ";
        s << "\"/>\n";
    }
    for (const auto& step : rec.steps) {
        for (const auto& e : step.space.entries) {
            const Vec2 p = agent_to_world(step.pose, e.waypoint.local);
            const bool chosen = e.waypoint.id == step.chosen_id;
            s << "<circle cx=\"" << svg_num(p.x * kScale) << "\" cy=\"" << svg_num(h - p.y * kScale) << "\" r=\""
              << (chosen ? "4" : "3") << "\" fill=\"" << (chosen ? "orange" : "#aaa") << "\"/>\n";
        }
    }
    const auto path = regulator::trajectory(rec);
    if (path.size() > 1) {
        s << "<polyline fill=\"none\" stroke=\"blue\" stroke-width=\"2\" points=\"";
        for (auto p : path) s << px(p) << " ";
        s << "\"/>\n";
    }
    auto marker = [&](Vec2 p, const char* color, const char* label) {
        s << "<circle cx=\"" << svg_num(p.x * kScale) << "\" cy=\"" << svg_num(h - p.y * kScale)
          << "\" r=\"7\" fill=\"" << color << "\"><title>" << label << "</title></circle>\n";
    };
    marker(rec.start.position, "green", "start");
    marker(rec.goal, "red", "goal");
    s << "</svg>\n";
    return s.str();
}

// ---- commands --------------------------------------------------------------

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
    const auto catalog = load_catalog(o.maps);
    const auto cfg = base_config(o);
    const auto jobs = plan_jobs(catalog, o, cfg, o.replay_dir);
    const auto batch = run_batch(catalog, o, jobs, o.out);
    for (const auto& f : batch.files) out << f.string() << "\n";
    return report_failures(batch, err);
}

int cmd_eval(const std::vector<std::string>& maps, const std::vector<std::string>& inputs, const std::string& out_path,
             bool geodesic, std::ostream& out) {
    const auto catalog = load_catalog(maps);
    const auto files = list_records(inputs);
    if (files.empty()) throw InputError("no records to evaluate");
    std::vector<regulator::EpisodeRecord> records;
    for (const auto& f : files) records.push_back(regulator::read_record(f));
    const auto report =
        evaluate_records(catalog, records, geodesic ? metrics::DtwCost::Geodesic : metrics::DtwCost::Euclidean);
    const auto text = metrics::to_json(report).dump(2) + "\n";
    if (out_path.empty()) {
        out << text;
    } else {
        write_atomic(out_path, text);
        out << out_path << "\n";
    }
    return kExitOk;
}

int cmd_robustness(const RunOptions& o, const std::string& protocol, std::ostream& out, std::ostream& err) {
    if (protocol != "views6" && protocol != "perturb") throw InputError("unknown protocol '" + protocol + "'");
    if (o.mode == "remote") throw InputError("robustness runs need --mode oracle or replay");
    const auto catalog = load_catalog(o.maps);

    RunOptions base = o;
    RunOptions degraded = o;
    base.perturb_magnitude = 0.0;
    base.views = 12;
    if (protocol == "views6") {
        degraded.views = 6;
        degraded.perturb_magnitude = 0.0;
    } else {
        degraded.views = 12;
        degraded.perturb_magnitude = o.perturb_magnitude > 0.0 ? o.perturb_magnitude : 0.5;
    }
    const fs::path root = o.out;
    const fs::path replay = o.replay_dir;
    auto run_condition = [&](const RunOptions& opts, const char* name) {
        const auto cfg = base_config(opts);
        const auto jobs = plan_jobs(catalog, opts, cfg, replay.empty() ? fs::path() : replay / name);
        return run_batch(catalog, opts, jobs, root / name);
    };
    const auto b = run_condition(base, "baseline");
    const auto d = run_condition(degraded, "degraded");

    const auto rb = metrics::to_json(evaluate_records(catalog, b.records, metrics::DtwCost::Euclidean));
    const auto rd = metrics::to_json(evaluate_records(catalog, d.records, metrics::DtwCost::Euclidean));
    json change = json::object();
    for (const auto& [key, value] : rb["aggregate"].items()) {
        const auto& dv = rd["aggregate"][key];
        if (value.is_number() && dv.is_number() && value.get<double>() != 0.0) {
            change[key] = 100.0 * (dv.get<double>() - value.get<double>()) / value.get<double>();
        } else {
            change[key] = nullptr;
        }
    }
    json report = {{"protocol", protocol},
                   {"baseline", {{"n_views", base.views}, {"perturb_magnitude", 0.0}, {"report", rb}}},
                   {"degraded",
                    {{"n_views", degraded.views},
                     {"perturb_magnitude", degraded.perturb_magnitude},
                     {"report", rd}}},
                   {"relative_change_pct", change}};
    fs::create_directories(root);
    write_atomic(root / "robustness.json", report.dump(2) + "\n");

    out << "metric  baseline  degraded  change\n";
    for (const char* key : {"TL", "NE", "NDTW", "OSR", "SR", "SPL", "SDTW"}) {
        char line[128];
        const auto& c = change[key];
        std::snprintf(line, sizeof line, "%-6s %9.2f %9.2f  %s\n", key, rb["aggregate"].value(key, 0.0),
                      rd["aggregate"].value(key, 0.0),
                      c.is_null() ? "n/a" : (svg_num(c.get<double>()) + "%").c_str());
        out << line;
    }
    const int rc_b = report_failures(b, err);
    const int rc_d = report_failures(d, err);
    return std::max(rc_b, rc_d);
}

int cmd_plot(const std::vector<std::string>& maps, const std::string& record_path, const std::string& out_path,
             std::ostream& out) {
    const auto catalog = load_catalog(maps);
    const auto rec = regulator::read_record(record_path);
    const auto svg = render_svg(catalog.world_for(rec.episode_id), rec);
    if (out_path.empty()) {
        out << svg;
    } else {
        write_atomic(out_path, svg);
        out << out_path << "\n";
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Skeleton-waypoint instruction-following navigation", "skelnav"};
    app.require_subcommand(1);

    RunOptions run_opts;
    auto* run = app.add_subcommand("run", "Run episodes and write one JSONL record each");
    add_run_options(run, run_opts);

    std::vector<std::string> eval_maps, eval_records;
    std::string eval_out;
    bool eval_geodesic = false;
    auto* eval = app.add_subcommand("eval", "Compute a metric report from records");
    eval->add_option("--map", eval_maps, "Map bundle directory (repeatable)");
    eval->add_option("--records", eval_records, "Record files or directories")->required();
    eval->add_option("--out", eval_out, "Report path (default: stdout)");
    eval->add_flag("--geodesic-dtw", eval_geodesic, "Use geodesic point cost inside DTW");

    RunOptions rob_opts;
    std::string protocol;
    auto* rob = app.add_subcommand("robustness", "Paired baseline/degraded runs");
    add_run_options(rob, rob_opts, false);
    rob->add_option("--protocol", protocol, "views6 or perturb")->required();

    std::vector<std::string> plot_maps;
    std::string plot_record, plot_out;
    auto* plot = app.add_subcommand("plot", "Render a record as SVG");
    plot->add_option("--map", plot_maps, "Map bundle directory (repeatable)");
    plot->add_option("--record", plot_record, "Record file")->required();
    plot->add_option("--out", plot_out, "SVG path (default: stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return kExitBadInput;
    }

    try {
        if (*run) return cmd_run(run_opts, out, err);
        if (*eval) return cmd_eval(eval_maps, eval_records, eval_out, eval_geodesic, out);
        if (*rob) return cmd_robustness(rob_opts, protocol, out, err);
        if (*plot) return cmd_plot(plot_maps, plot_record, plot_out, out);
    } catch (const BackendError& e) {
        err << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    return kExitBadInput;
}

}  // namespace skelnav::cli
