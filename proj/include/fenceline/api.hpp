#pragma once

// HTTP/JSON endpoints as a transport-independent request -> response
// function. http.hpp binds it to a cpp-httplib server.
//
// Handlers only read snapshots of the store and registry; nothing here can
// reach the upstream fetcher.

#include "fenceline/aqi.hpp"
#include "fenceline/errors.hpp"
#include "fenceline/geo.hpp"
#include "fenceline/ingest.hpp"
#include "fenceline/reports.hpp"
#include "fenceline/time.hpp"
#include "fenceline/timeseries.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <charconv>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fenceline {

/// Readiness shared between the ingest side and /healthz.
class PollState {
public:
    void set_replay_mode() { replay_.store(true); }
    bool replay_mode() const { return replay_.load(); }

    void record_cycle(Instant at) {
        std::scoped_lock lock(mu_);
        ++cycles_;
        last_poll_at_ = at;
    }
    std::size_t cycles() const {
        std::scoped_lock lock(mu_);
        return cycles_;
    }
    std::optional<Instant> last_poll_at() const {
        std::scoped_lock lock(mu_);
        return last_poll_at_;
    }
    bool ready() const { return replay_mode() || cycles() > 0; }

private:
    std::atomic<bool> replay_{false};
    mutable std::mutex mu_;
    std::size_t cycles_ = 0;
    std::optional<Instant> last_poll_at_;
};

struct ApiRequest {
    std::string method;
    std::string path;
    std::multimap<std::string, std::string> query;
    std::map<std::string, std::string> headers; // lower-case names
    std::string body;

    std::optional<std::string> param(const std::string& key) const {
        const auto it = query.find(key);
        if (it == query.end()) return std::nullopt;
        return it->second;
    }
    std::optional<std::string> header(const std::string& lower_name) const {
        const auto it = headers.find(lower_name);
        if (it == headers.end()) return std::nullopt;
        return it->second;
    }
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;

    std::optional<std::string> header(std::string_view name) const {
        for (const auto& [k, v] : headers)
            if (k == name) return v;
        return std::nullopt;
    }
};

struct ApiContext {
    Clock& clock;
    const AqiScale& scale;
    const ReadingStore& readings;
    const SensorRegistry& sensors;
    CommunityStore& community;
    const PollState& poll;
    std::optional<std::string> admin_token; // unset disables GET /api/reports
};

inline constexpr Window kDefaultMetric = Window::Min10;
inline constexpr std::size_t kDefaultMaxPoints = 500;

namespace api_detail {

class HttpError : public std::runtime_error {
public:
    HttpError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status(status), code(std::move(code)) {}
    int status;
    std::string code;
};

inline nlohmann::json error_body(int status, const std::string& code, const std::string& message) {
    return {{"status", status}, {"code", code}, {"message", message}};
}

inline ApiResponse json_response(int status, const nlohmann::json& body) {
    return {status, "application/json", body.dump(), {}};
}

inline std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        if (path[i] == '/') {
            ++i;
            continue;
        }
        const auto j = path.find('/', i);
        out.emplace_back(path.substr(i, j == std::string_view::npos ? path.npos : j - i));
        if (j == std::string_view::npos) break;
        i = j;
    }
    return out;
}

inline long long parse_int(const std::string& s, const char* field) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ValidationError(field, "expected an integer");
    return v;
}

} // namespace api_detail

class ApiService {
public:
    explicit ApiService(ApiContext ctx) : ctx_(ctx) {}

    ApiResponse handle(const ApiRequest& req) const {
        using namespace api_detail;
        ApiResponse res;
        try {
            res = route(req);
        } catch (const HttpError& e) {
            res = json_response(e.status, error_body(e.status, e.code, e.what()));
        } catch (const ValidationError& e) {
            auto body = error_body(400, "validation_error", e.what());
            if (!e.fields().empty()) {
                auto fields = nlohmann::json::array();
                for (const auto& f : e.fields()) fields.push_back({{"field", f.field}, {"message", f.message}});
                body["fields"] = fields;
            }
            res = json_response(400, body);
        } catch (const NotFoundError& e) {
            res = json_response(404, error_body(404, "not_found", e.what()));
        } catch (const DomainError& e) {
            res = json_response(400, error_body(400, "validation_error", e.what()));
        } catch (const std::exception& e) {
            res = json_response(500, error_body(500, "internal_error", e.what()));
        }
        res.headers.emplace_back("Access-Control-Allow-Origin", "*");
        res.headers.emplace_back("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.headers.emplace_back("Access-Control-Allow-Headers", "Content-Type, Authorization");
        res.headers.emplace_back("Access-Control-Expose-Headers", "X-Data-As-Of");
        return res;
    }

    /// Info-card payload for one sensor as of `now`.
    nlohmann::json sensor_summary(const SensorStatus& status, Instant now) const {
        const bool has_series = ctx_.readings.contains(status.sensor_id);
        nlohmann::json j{{"sensor_id", status.sensor_id},
                         {"name", status.name},
                         {"location", status.location ? to_json(*status.location) : nlohmann::json()},
                         {"online", status.online}};

        std::vector<WindowSummary> windows;
        std::optional<Reading> latest;
        if (has_series) {
            windows = ctx_.readings.window_summaries(status.sensor_id, now, ctx_.scale);
            latest = ctx_.readings.latest(status.sensor_id, now);
        } else {
            for (auto w : kAllWindows) windows.push_back({w, std::nullopt, std::nullopt, std::nullopt, 0});
        }

        if (latest) {
            const WindowSummary* metric = nullptr;
            for (const auto& w : windows)
                if (w.window == kDefaultMetric && w.mean_concentration) metric = &w;
            const Window metric_window = metric ? kDefaultMetric : Window::Realtime;
            const Concentration value = metric ? *metric->mean_concentration : latest->pm2_5;
            const AqiValue aqi = ctx_.scale.to_aqi(value);
            const auto& cat = ctx_.scale.category(aqi);
            j["current"] = {{"timestamp", format_iso8601(latest->timestamp)},
                            {"pm2_5", latest->pm2_5},
                            {"metric", to_string(metric_window)},
                            {"value", value},
                            {"aqi", aqi},
                            {"category", to_string(cat.name)},
                            {"guidance", cat.guidance},
                            {"color", ctx_.scale.color(aqi).hex()}};
        } else {
            j["current"] = nullptr;
        }

        auto arr = nlohmann::json::array();
        for (const auto& w : windows) arr.push_back(window_json(w));
        j["windows"] = arr;
        return j;
    }

private:
    static nlohmann::json window_json(const WindowSummary& w) {
        return {{"window", to_string(w.window)},
                {"mean_concentration", w.mean_concentration ? nlohmann::json(*w.mean_concentration) : nlohmann::json()},
                {"aqi", w.aqi ? nlohmann::json(*w.aqi) : nlohmann::json()},
                {"color", w.color ? nlohmann::json(w.color->hex()) : nlohmann::json()},
                {"sample_count", w.sample_count}};
    }

    ApiResponse route(const ApiRequest& req) const {
        using namespace api_detail;
        if (req.method == "OPTIONS") return {204, "text/plain", "", {}};
        const auto seg = split_path(req.path);
        const auto method_is = [&](std::string_view m) {
            if (req.method != m) throw HttpError(405, "method_not_allowed", req.method + " not allowed on " + req.path);
        };

        if (seg.size() == 1 && seg[0] == "healthz") {
            method_is("GET");
            return healthz();
        }
        if (seg.size() >= 2 && seg[0] == "api") {
            if (seg[1] == "sensors") {
                if (seg.size() == 2) {
                    method_is("GET");
                    return list_sensors();
                }
                if (seg.size() == 3) {
                    method_is("GET");
                    return get_sensor(seg[2]);
                }
                if (seg.size() == 4 && seg[3] == "timeseries") {
                    method_is("GET");
                    return timeseries(seg[2], req);
                }
            }
            if (seg.size() == 2 && seg[1] == "hazards") {
                method_is("GET");
                return hazards(req);
            }
            if (seg.size() == 2 && seg[1] == "reports") {
                if (req.method == "POST") return post_report(req);
                method_is("GET");
                return list_reports(req);
            }
            if (seg.size() == 3 && seg[1] == "meta" && seg[2] == "colorscale") {
                method_is("GET");
                return {200, "application/json", ctx_.scale.document(), {}};
            }
        }
        throw HttpError(404, "not_found", "no route for " + req.path);
    }

    ApiResponse healthz() const {
        using namespace api_detail;
        const Instant now = ctx_.clock.now();
        const auto last = ctx_.poll.last_poll_at();
        const nlohmann::json last_json = last ? nlohmann::json(format_iso8601(*last)) : nlohmann::json();
        const auto online = ctx_.sensors.online_count(now);
        const std::string mode = ctx_.poll.replay_mode() ? "replay" : "live";
        if (!ctx_.poll.ready()) {
            auto body = error_body(503, "not_ready", "no poll cycle has completed yet");
            body["sensors_online"] = online;
            body["last_poll_at"] = last_json;
            body["mode"] = mode;
            return json_response(503, body);
        }
        return json_response(200, {{"status", "ok"}, {"sensors_online", online}, {"last_poll_at", last_json},
                                   {"mode", mode}});
    }

    ApiResponse list_sensors() const {
        const Instant now = ctx_.clock.now();
        auto arr = nlohmann::json::array();
        for (const auto& s : ctx_.sensors.snapshot(now)) arr.push_back(sensor_summary(s, now));
        auto res = api_detail::json_response(200, arr);
        res.headers.emplace_back("X-Data-As-Of", format_iso8601(now));
        return res;
    }

    SensorStatus require_sensor(const std::string& id, Instant now) const {
        auto s = ctx_.sensors.get(id, now);
        if (!s) throw api_detail::HttpError(404, "sensor_not_found", "unknown sensor '" + id + "'");
        return *s;
    }

    ApiResponse get_sensor(const std::string& id) const {
        const Instant now = ctx_.clock.now();
        auto res = api_detail::json_response(200, sensor_summary(require_sensor(id, now), now));
        res.headers.emplace_back("X-Data-As-Of", format_iso8601(now));
        return res;
    }

    ApiResponse timeseries(const std::string& id, const ApiRequest& req) const {
        using namespace api_detail;
        const Instant now = ctx_.clock.now();
        require_sensor(id, now);
        const Instant to = req.param("to") ? parse_iso8601(*req.param("to")) : now;
        const Instant from = req.param("from") ? parse_iso8601(*req.param("from")) : to - Seconds{24 * 3600};
        if (!(from < to)) throw ValidationError("from", "range start must precede its end");
        std::size_t max_points = kDefaultMaxPoints;
        if (const auto mp = req.param("max_points")) {
            const auto v = parse_int(*mp, "max_points");
            if (v < 2) throw ValidationError("max_points", "must be at least 2");
            max_points = static_cast<std::size_t>(v);
        }

        auto points = nlohmann::json::array();
        if (ctx_.readings.contains(id))
            for (const auto& p : ctx_.readings.slice(id, from, to, max_points))
                points.push_back({{"timestamp", format_iso8601(p.timestamp)}, {"pm2_5", p.pm2_5}, {"count", p.count}});
        auto bands = nlohmann::json::array();
        for (const auto& b : ctx_.scale.bands())
            bands.push_back({{"category", to_string(b.category)},
                             {"conc_low", b.conc_low},
                             {"conc_high", b.conc_high},
                             {"index_low", b.index_low},
                             {"index_high", b.index_high},
                             {"color", b.color.hex()}});
        auto res = json_response(200, {{"sensor_id", id},
                                       {"from", format_iso8601(from)},
                                       {"to", format_iso8601(to)},
                                       {"max_points", max_points},
                                       {"points", points},
                                       {"bands", bands}});
        res.headers.emplace_back("X-Data-As-Of", format_iso8601(now));
        return res;
    }

    ApiResponse hazards(const ApiRequest& req) const {
        using namespace api_detail;
        const BoundingBox box = req.param("bbox") ? BoundingBox::parse(*req.param("bbox")) : BoundingBox::world();
        int zoom = 10;
        if (const auto z = req.param("zoom")) {
            const auto v = parse_int(*z, "zoom");
            if (v < 0 || v > kMaxZoom) throw ValidationError("zoom", "must be an integer within [0, 19]");
            zoom = static_cast<int>(v);
        }
        const auto all = ctx_.community.hazard_sites();
        std::vector<Site> sites;
        sites.reserve(all.size());
        for (const auto& h : all) sites.push_back({h.site_id, h.location});
        const auto visible = bbox_filter(std::span<const Site>(sites), box);

        auto arr = nlohmann::json::array();
        for (const auto& c : cluster_sites(visible, zoom)) {
            nlohmann::json j{{"centroid", to_json(c.centroid)}, {"count", c.count()}, {"member_ids", c.member_ids}};
            if (c.count() == 1)
                if (const auto site = ctx_.community.hazard(c.member_ids.front())) j["site"] = to_json(*site);
            arr.push_back(std::move(j));
        }
        return json_response(200, arr);
    }

    ApiResponse post_report(const ApiRequest& req) const {
        using namespace api_detail;
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            throw HttpError(400, "invalid_json", "request body is not valid JSON");
        }
        try {
            const auto report = ctx_.community.submit_report(ReportCandidate::from_json(body));
            return json_response(201, to_json(report));
        } catch (const CommunityStore::OutOfServiceArea& e) {
            auto err = error_body(400, "out_of_service_area", e.what());
            err["fields"] = nlohmann::json::array({{{"field", "location"}, {"message", e.fields().front().message}}});
            return json_response(400, err);
        }
    }

    ApiResponse list_reports(const ApiRequest& req) const {
        using namespace api_detail;
        if (!ctx_.admin_token) throw HttpError(403, "admin_disabled", "report listing is disabled (no ADMIN_TOKEN)");
        const auto auth = req.header("authorization");
        if (!auth || *auth != "Bearer " + *ctx_.admin_token)
            throw HttpError(401, "unauthorized", "missing or wrong bearer token");

        ReportFilter filter;
        if (const auto s = req.param("status")) filter.status = report_status_from_string(*s);
        if (const auto b = req.param("bbox")) filter.bbox = BoundingBox::parse(*b);
        if (const auto f = req.param("from")) filter.from = parse_iso8601(*f);
        if (const auto t = req.param("to")) filter.to = parse_iso8601(*t);
        const auto reports = ctx_.community.list_reports(filter);

        if (req.param("format") == std::optional<std::string>("csv"))
            return {200, "text/csv", reports_to_csv(reports), {}};
        auto arr = nlohmann::json::array();
        for (const auto& r : reports) arr.push_back(to_json(r));
        return json_response(200, arr);
    }

    ApiContext ctx_;
};

} // namespace fenceline
