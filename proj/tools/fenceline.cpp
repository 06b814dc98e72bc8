// fenceline: operator entry point.
//
//   fenceline serve --config <path> [--replay <dataset> [--speed <factor>]]
//   fenceline aqi <concentration>
//   fenceline import-hazards <csv> [--config <path>] [--data-dir <dir>]
//
// Exit codes: 0 success, 1 operational failure, 2 usage/config error,
// 3 environment error (e.g. port busy).

#include "fenceline/aqi.hpp"
#include "fenceline/api.hpp"
#include "fenceline/config.hpp"
#include "fenceline/http.hpp"
#include "fenceline/ingest.hpp"
#include "fenceline/journal.hpp"
#include "fenceline/reports.hpp"
#include "fenceline/timeseries.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <pthread.h>

namespace fs = std::filesystem;
using namespace fenceline;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kEnvironment = 3 };

std::optional<double> parse_double(const std::string& s) {
    std::size_t used = 0;
    try {
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

const AqiScale& load_scale(const std::optional<fs::path>& path, std::optional<AqiScale>& storage) {
    if (!path) return AqiScale::standard();
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read AQI scale " + path->string());
    std::stringstream buf;
    buf << in.rdbuf();
    storage.emplace(AqiScale::from_json_text(buf.str()));
    return *storage;
}

int cmd_aqi(const std::string& arg, const std::optional<fs::path>& scale_path) {
    const auto c = parse_double(arg);
    if (!c || !std::isfinite(*c) || *c < 0) {
        std::cerr << "error: concentration must be a non-negative number, got '" << arg << "'\n";
        return kUsage;
    }
    std::optional<AqiScale> storage;
    const AqiScale& scale = load_scale(scale_path, storage);
    const AqiValue aqi = scale.to_aqi(*c);
    const auto& cat = scale.category(aqi);
    std::cout << aqi << ' ' << to_string(cat.name) << ' ' << cat.guidance << ' ' << scale.color(aqi).hex() << '\n';
    return kOk;
}

int cmd_import(const fs::path& csv_path, const std::optional<fs::path>& config_path,
               const std::optional<std::string>& data_dir) {
    std::map<std::string, std::string> flags;
    if (data_dir) flags["DATA_DIR"] = *data_dir;
    const ServiceConfig cfg = load_config(config_path, process_env(), flags);
    SystemClock clock;
    CommunityStore store(cfg.data_dir, clock, cfg.service_area);
    store.recover();
    ImportResult result;
    try {
        result = store.import_hazard_csv(csv_path);
    } catch (const StorageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    for (const auto& e : result.errors)
        std::cerr << csv_path.string() << ":" << e.row << ": " << e.field << ": " << e.message << '\n';
    std::cout << "imported " << result.imported << ", errors " << result.errors.size() << '\n';
    return result.imported == 0 ? kFailure : kOk;
}

struct ServeOptions {
    fs::path config;
    std::optional<fs::path> replay;
    std::string speed = "inf";
    std::map<std::string, std::string> flags;
};

int cmd_serve(const ServeOptions& opts) {
    // Signals are consumed by a dedicated thread; block them everywhere else.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    ServiceConfig cfg;
    std::optional<AqiScale> scale_storage;
    const AqiScale* scale = nullptr;
    double speed = std::numeric_limits<double>::infinity();
    try {
        cfg = load_config(opts.config, process_env(), opts.flags);
        cfg.upstream.validate(/*require_sensors=*/!opts.replay);
        scale = &load_scale(cfg.aqi_scale_path, scale_storage);
        if (opts.speed != "inf" && opts.speed != "infinity") {
            const auto s = parse_double(opts.speed);
            if (!s || !(*s > 0) || !std::isfinite(*s)) throw ConfigError("--speed must be a positive number or 'inf'");
            speed = *s;
        }
    } catch (const ConfigError& e) {
        spdlog::error("configuration: {}", e.what());
        return kUsage;
    }
    spdlog::info("effective config: {}", redacted(cfg).dump());
    const BindAddress bind = parse_bind_addr(cfg.bind_addr);

    std::optional<ReplayDataset> dataset;
    if (opts.replay) {
        try {
            dataset = load_replay_dataset(*opts.replay);
        } catch (const StorageError& e) {
            spdlog::error("{}", e.what());
            return kUsage;
        }
    }

    std::unique_ptr<Clock> clock;
    if (dataset) {
        const Instant origin =
            dataset->readings.empty() ? SystemClock{}.now() : dataset->readings.front().timestamp;
        clock = make_replay_clock(speed, origin);
    } else {
        clock = std::make_unique<SystemClock>();
    }

    ReadingStore readings(cfg.retention);
    SensorRegistry registry(cfg.upstream.poll_interval);
    PollState poll_state;
    for (const auto& id : cfg.upstream.sensor_ids) {
        registry.add(id);
        readings.add_sensor(id);
    }
    for (const auto& d : cfg.sensors) registry.add(d.id, d.name, d.location);

    std::error_code ec;
    fs::create_directories(cfg.data_dir, ec);
    if (ec) {
        spdlog::error("cannot create data directory {}: {}", cfg.data_dir.string(), ec.message());
        return kEnvironment;
    }
    CommunityStore community(cfg.data_dir, *clock, cfg.service_area);
    JsonlJournal readings_journal(cfg.data_dir / "readings.jsonl");
    try {
        for (const auto& report : community.recover())
            for (const auto& w : report.warnings) spdlog::warn("{}", w);
        if (!dataset) {
            const Instant now = clock->now();
            readings_journal.recover([&](const nlohmann::json& j, std::size_t) {
                const Reading r = reading_from_json(j);
                readings.append(r, now);
            });
            if (readings.prune(now) > 0) {
                std::vector<nlohmann::json> kept;
                for (const auto& [_, seq] : readings.snapshot())
                    for (const auto& r : seq) kept.push_back(to_json(r));
                readings_journal.rewrite(kept);
            }
            spdlog::info("recovered {} readings", readings.size());
        }
    } catch (const StorageError& e) {
        spdlog::error("journal recovery failed: {}", e.what());
        return kFailure;
    }

    std::jthread ingest;
    std::unique_ptr<Poller> poller;
    if (dataset) {
        for (const auto& r : dataset->readings) {
            if (!registry.contains(r.sensor_id)) registry.add(r.sensor_id);
            readings.add_sensor(r.sensor_id);
        }
        poll_state.set_replay_mode();
        const auto on_reading = [&registry](const Reading& r) { registry.record_success(r.sensor_id, r.timestamp); };
        if (std::isinf(speed)) {
            const auto result = replay(*dataset, readings, *clock, {}, on_reading);
            spdlog::info("replay loaded {} readings ({} duplicates, {} skipped lines) from {}", result.loaded,
                         result.duplicates, result.skipped.size(), opts.replay->string());
        } else {
            ingest = std::jthread([&, on_reading](std::stop_token stop) {
                const auto result = replay(*dataset, readings, *clock, stop, on_reading);
                spdlog::info("replay finished: {} readings", result.loaded);
            });
        }
    } else {
        Fetcher fetcher = HttpFetcher(cfg.upstream, *clock);
        poller = std::make_unique<Poller>(cfg.upstream, *clock, std::move(fetcher), readings, registry);
        poller->on_reading([&readings_journal](const Reading& r) {
            try {
                readings_journal.append(to_json(r));
            } catch (const StorageError& e) {
                spdlog::error("{}", e.what());
            }
        });
        poller->on_cycle([&](const CycleReport&) {
            poll_state.record_cycle(clock->now());
            readings.prune(clock->now());
        });
        ingest = std::jthread([&poller](std::stop_token stop) { poller->run(stop); });
    }

    const ApiService api(ApiContext{*clock, *scale, readings, registry, community, poll_state, cfg.admin_token});
    httplib::Server server;
    // no SO_REUSEPORT: a second listener on a busy port must fail
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    mount(api, server);
    int port = bind.port;
    if (port == 0) {
        port = server.bind_to_any_port(bind.host);
        if (port < 0) port = 0;
    } else if (!server.bind_to_port(bind.host, port)) {
        port = 0;
    }
    if (port == 0) {
        spdlog::error("cannot listen on {}", cfg.bind_addr);
        ingest.request_stop();
        return kEnvironment;
    }
    spdlog::info("listening on http://{}:{}", bind.host, port);

    std::thread([&server, signals] {
        int sig = 0;
        sigwait(&signals, &sig);
        spdlog::info("signal {} received, shutting down", sig);
        server.stop();
    }).detach();

    server.listen_after_bind();
    ingest.request_stop();
    if (ingest.joinable()) ingest.join();
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("fenceline"));

    CLI::App app{"Community air-quality service"};
    app.require_subcommand(1);

    auto* serve = app.add_subcommand("serve", "Run the HTTP API with live polling or dataset replay");
    ServeOptions serve_opts;
    std::string bind, data_dir, sensor_ids, upstream_url, poll_interval;
    serve->add_option("--config", serve_opts.config, "JSON config file")->required();
    serve->add_option("--replay", serve_opts.replay, "Readings journal (JSONL) to replay instead of polling");
    serve->add_option("--speed", serve_opts.speed, "Replay speed factor, or 'inf' to load instantly")
        ->needs(serve->get_option("--replay"));
    serve->add_option("--bind", bind, "Listen address host:port (BIND_ADDR)");
    serve->add_option("--data-dir", data_dir, "Journal directory (DATA_DIR)");
    serve->add_option("--sensor-ids", sensor_ids, "Comma-separated upstream sensor ids (SENSOR_IDS)");
    serve->add_option("--upstream-url", upstream_url, "Upstream base URL (UPSTREAM_BASE_URL)");
    serve->add_option("--poll-interval", poll_interval, "Seconds between poll cycles (POLL_INTERVAL_SECS)");

    auto* aqi = app.add_subcommand("aqi", "Print AQI, category, guidance and color for a PM2.5 concentration");
    std::string concentration;
    std::optional<fs::path> scale_path;
    aqi->add_option("concentration", concentration, "PM2.5 in ug/m3")->required();
    aqi->add_option("--scale", scale_path, "Alternative AQI scale document");

    auto* import = app.add_subcommand("import-hazards", "Import hazardous-waste facilities from CSV");
    fs::path csv_path;
    std::optional<fs::path> import_config;
    std::optional<std::string> import_data_dir;
    import->add_option("csv", csv_path, "CSV with site_id,name,contact_name,address,latitude,longitude,epa_url")
        ->required();
    import->add_option("--config", import_config, "JSON config file");
    import->add_option("--data-dir", import_data_dir, "Journal directory (DATA_DIR)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*serve) {
            if (!bind.empty()) serve_opts.flags["BIND_ADDR"] = bind;
            if (!data_dir.empty()) serve_opts.flags["DATA_DIR"] = data_dir;
            if (!sensor_ids.empty()) serve_opts.flags["SENSOR_IDS"] = sensor_ids;
            if (!upstream_url.empty()) serve_opts.flags["UPSTREAM_BASE_URL"] = upstream_url;
            if (!poll_interval.empty()) serve_opts.flags["POLL_INTERVAL_SECS"] = poll_interval;
            return cmd_serve(serve_opts);
        }
        if (*aqi) return cmd_aqi(concentration, scale_path);
        if (*import) return cmd_import(csv_path, import_config, import_data_dir);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const StorageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}
