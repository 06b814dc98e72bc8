#pragma once

// Upstream polling under a request budget, payload normalization, sensor
// status tracking, and replay of captured reading journals.

#include "fenceline/errors.hpp"
#include "fenceline/geo.hpp"
#include "fenceline/time.hpp"
#include "fenceline/timeseries.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fenceline {

struct UpstreamConfig {
    std::string base_url = "https://api.purpleair.com";
    std::optional<std::string> api_key;
    std::vector<std::string> sensor_ids;
    Seconds poll_interval{600};
    Seconds min_request_interval{60};
    Seconds request_timeout{10};

    /// `require_sensors` is false for replay-only deployments.
    void validate(bool require_sensors = true) const {
        if (require_sensors && sensor_ids.empty()) throw ConfigError("SENSOR_IDS must list at least one sensor");
        if (min_request_interval < Seconds{1}) throw ConfigError("MIN_REQUEST_INTERVAL_SECS must be >= 1");
        if (poll_interval < min_request_interval)
            throw ConfigError("POLL_INTERVAL_SECS must be >= MIN_REQUEST_INTERVAL_SECS");
        if (request_timeout < Seconds{1}) throw ConfigError("REQUEST_TIMEOUT_SECS must be >= 1");
    }
};

// ---- rate limiter --------------------------------------------------------

struct Allow {
    friend bool operator==(Allow, Allow) { return true; }
};
struct WaitUntil {
    Instant at;
    friend bool operator==(const WaitUntil&, const WaitUntil&) = default;
};
using PermitDecision = std::variant<Allow, WaitUntil>;

/// Grants at most one request per `min_interval`. A single gate shared by
/// every fetch against one upstream.
class RateLimiter {
public:
    explicit RateLimiter(Seconds min_interval) : min_interval_(min_interval) {
        if (min_interval < Seconds{1}) throw ConfigError("minimum request interval must be >= 1 s");
    }

    PermitDecision acquire(Instant now) {
        std::scoped_lock lock(mu_);
        if (last_ && now - *last_ < min_interval_) return WaitUntil{*last_ + min_interval_};
        last_ = now;
        return Allow{};
    }

    std::optional<Instant> last_permit_time() const {
        std::scoped_lock lock(mu_);
        return last_;
    }

    Seconds min_interval() const { return min_interval_; }

private:
    Seconds min_interval_;
    mutable std::mutex mu_;
    std::optional<Instant> last_;
};

// ---- payloads ------------------------------------------------------------

struct RawPayload {
    std::string body;
    Instant received_at;
};

struct ParsedPayload {
    std::vector<Reading> readings;
    std::optional<GeoPoint> location;
    std::optional<std::string> name;
};

inline double fahrenheit_to_celsius(double f) { return (f - 32.0) * 5.0 / 9.0; }

/// Maps a PurpleAir-style body (`{"sensor": {...}}` or the bare object) to a
/// normalized reading. Accepts both `pm2.5` and `pm2_5`.
inline ParsedPayload parse_payload(const RawPayload& raw, const std::string& sensor_id) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(raw.body);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(sensor_id, std::string("body is not JSON: ") + e.what());
    }
    const nlohmann::json* obj = &doc;
    if (doc.is_object() && doc.contains("sensor") && doc["sensor"].is_object()) obj = &doc["sensor"];
    if (!obj->is_object()) throw ParseError(sensor_id, "expected a JSON object");

    const auto number = [&](const char* key) -> std::optional<double> {
        const auto it = obj->find(key);
        if (it == obj->end() || it->is_null()) return std::nullopt;
        if (!it->is_number()) throw ParseError(sensor_id, std::string("field '") + key + "' is not numeric");
        return it->get<double>();
    };

    auto pm = number("pm2.5");
    if (!pm) pm = number("pm2_5");
    if (!pm) throw ParseError(sensor_id, "missing pm2.5");
    const auto seen = number("last_seen");
    if (!seen) throw ParseError(sensor_id, "missing last_seen");
    if (*pm < 0) throw ValidationError("pm2_5", sensor_id + ": negative concentration");

    ParsedPayload out;
    Reading r;
    r.sensor_id = sensor_id;
    r.timestamp = from_epoch(static_cast<std::int64_t>(*seen));
    r.pm2_5 = *pm;
    if (const auto f = number("temperature")) r.temperature = fahrenheit_to_celsius(*f);
    r.humidity = number("humidity");
    out.readings.push_back(std::move(r));

    const auto lat = number("latitude");
    const auto lon = number("longitude");
    if (lat && lon && is_valid({*lat, *lon})) out.location = GeoPoint{*lat, *lon};
    if (const auto it = obj->find("name"); it != obj->end() && it->is_string()) out.name = it->get<std::string>();
    return out;
}

// ---- sensor status -------------------------------------------------------

struct SensorStatus {
    std::string sensor_id;
    std::string name;
    std::optional<GeoPoint> location;
    std::optional<Instant> last_success;
    std::optional<std::pair<Instant, std::string>> last_error;
    bool online = false;
};

/// Online means a success within 2 x poll_interval of the queried instant.
class SensorRegistry {
public:
    explicit SensorRegistry(Seconds poll_interval = Seconds{600}) : poll_interval_(poll_interval) {}

    void add(const std::string& id, std::string name = {}, std::optional<GeoPoint> location = {}) {
        std::scoped_lock lock(mu_);
        auto& s = sensors_[id];
        s.sensor_id = id;
        if (!name.empty()) s.name = std::move(name);
        if (s.name.empty()) s.name = id;
        if (location) s.location = location;
    }

    bool contains(const std::string& id) const {
        std::scoped_lock lock(mu_);
        return sensors_.contains(id);
    }

    void record_success(const std::string& id, Instant at, std::optional<GeoPoint> location = {},
                        std::optional<std::string> name = {}) {
        std::scoped_lock lock(mu_);
        auto& s = entry(id);
        if (!s.last_success || at > *s.last_success) s.last_success = at;
        if (location) s.location = location;
        if (name && !name->empty()) s.name = *name;
    }

    void record_error(const std::string& id, Instant at, std::string message) {
        std::scoped_lock lock(mu_);
        entry(id).last_error = std::make_pair(at, std::move(message));
    }

    std::optional<SensorStatus> get(const std::string& id, Instant now) const {
        std::scoped_lock lock(mu_);
        const auto it = sensors_.find(id);
        if (it == sensors_.end()) return std::nullopt;
        return with_online(it->second, now);
    }

    /// Ordered by sensor id.
    std::vector<SensorStatus> snapshot(Instant now) const {
        std::scoped_lock lock(mu_);
        std::vector<SensorStatus> out;
        for (const auto& [_, s] : sensors_) out.push_back(with_online(s, now));
        return out;
    }

    std::size_t online_count(Instant now) const {
        std::size_t n = 0;
        for (const auto& s : snapshot(now)) n += s.online;
        return n;
    }

    Seconds poll_interval() const { return poll_interval_; }

private:
    SensorStatus& entry(const std::string& id) {
        auto& s = sensors_[id];
        if (s.sensor_id.empty()) s.sensor_id = s.name = id;
        return s;
    }

    SensorStatus with_online(SensorStatus s, Instant now) const {
        s.online = s.last_success && now - *s.last_success <= 2 * poll_interval_;
        return s;
    }

    Seconds poll_interval_;
    mutable std::mutex mu_;
    std::map<std::string, SensorStatus> sensors_;
};

// ---- polling -------------------------------------------------------------

/// Any transport: real HTTP or a test double. Throws TransportError.
using Fetcher = std::function<RawPayload(const std::string& sensor_id)>;

struct FetchOutcome {
    std::string sensor_id;
    Instant requested_at;
    bool ok = false;
    std::size_t appended = 0;
    std::string error;
};

struct CycleReport {
    Instant started;
    std::vector<FetchOutcome> outcomes;
};

/// The only code path that talks to the upstream. One cycle fetches every
/// configured sensor in id order, each behind a limiter permit; a failure is
/// recorded for that sensor and the cycle moves on.
class Poller {
public:
    Poller(UpstreamConfig config, Clock& clock, Fetcher fetcher, ReadingStore& store, SensorRegistry& registry)
        : config_(std::move(config)), clock_(clock), fetcher_(std::move(fetcher)), store_(store),
          registry_(registry), limiter_(config_.min_request_interval) {
        config_.validate();
        std::sort(config_.sensor_ids.begin(), config_.sensor_ids.end());
        config_.sensor_ids.erase(std::unique(config_.sensor_ids.begin(), config_.sensor_ids.end()),
                                 config_.sensor_ids.end());
        for (const auto& id : config_.sensor_ids) {
            registry_.add(id);
            store_.add_sensor(id);
        }
    }

    /// Called for every reading that made it into the store.
    void on_reading(std::function<void(const Reading&)> hook) { on_reading_ = std::move(hook); }
    /// Called after each completed cycle.
    void on_cycle(std::function<void(const CycleReport&)> hook) { on_cycle_ = std::move(hook); }

    /// Returns nullopt if `stop` fired while waiting for a permit.
    std::optional<CycleReport> poll_cycle(std::stop_token stop = {}) {
        CycleReport report{clock_.now(), {}};
        for (const auto& id : config_.sensor_ids) {
            for (;;) {
                const auto decision = limiter_.acquire(clock_.now());
                if (std::holds_alternative<Allow>(decision)) break;
                if (!clock_.sleep_until(std::get<WaitUntil>(decision).at, stop)) return std::nullopt;
            }
            const Instant at = clock_.now();
            {
                std::scoped_lock lock(mu_);
                permit_log_.push_back(at);
            }
            report.outcomes.push_back(fetch_one(id, at));
        }
        {
            std::scoped_lock lock(mu_);
            ++cycles_;
            last_poll_at_ = clock_.now();
        }
        if (on_cycle_) on_cycle_(report);
        return report;
    }

    /// Runs a cycle every poll_interval until `stop` fires or the next cycle
    /// would start at or after `until`. Returns the number of cycles run.
    std::size_t run(std::stop_token stop = {}, std::optional<Instant> until = {}) {
        std::size_t n = 0;
        Instant next = clock_.now();
        while (!stop.stop_requested()) {
            if (until && next >= *until) break;
            if (!clock_.sleep_until(next, stop)) break;
            if (!poll_cycle(stop)) break;
            ++n;
            next += config_.poll_interval;
        }
        return n;
    }

    std::vector<Instant> permit_log() const {
        std::scoped_lock lock(mu_);
        return permit_log_;
    }
    std::size_t cycles_completed() const {
        std::scoped_lock lock(mu_);
        return cycles_;
    }
    std::optional<Instant> last_poll_at() const {
        std::scoped_lock lock(mu_);
        return last_poll_at_;
    }
    const UpstreamConfig& config() const { return config_; }

private:
    FetchOutcome fetch_one(const std::string& id, Instant at) {
        FetchOutcome outcome{id, at, false, 0, {}};
        try {
            const RawPayload raw = fetcher_(id);
            ParsedPayload parsed = parse_payload(raw, id);
            const Instant now = clock_.now();
            for (const auto& r : parsed.readings) validate_reading(r, now);
            for (const auto& r : parsed.readings) {
                if (store_.append(r, now) == AppendResult::Appended) {
                    ++outcome.appended;
                    if (on_reading_) on_reading_(r);
                }
            }
            registry_.record_success(id, now, parsed.location, parsed.name);
            outcome.ok = true;
        } catch (const std::exception& e) {
            outcome.error = e.what();
            registry_.record_error(id, clock_.now(), outcome.error);
            spdlog::warn("fetch {} failed: {}", id, outcome.error);
        }
        return outcome;
    }

    UpstreamConfig config_;
    Clock& clock_;
    Fetcher fetcher_;
    ReadingStore& store_;
    SensorRegistry& registry_;
    RateLimiter limiter_;
    std::function<void(const Reading&)> on_reading_;
    std::function<void(const CycleReport&)> on_cycle_;
    mutable std::mutex mu_;
    std::vector<Instant> permit_log_;
    std::size_t cycles_ = 0;
    std::optional<Instant> last_poll_at_;
};

// ---- replay --------------------------------------------------------------

struct SkippedLine {
    std::size_t line;
    std::string reason;
};

struct ReplayDataset {
    std::vector<Reading> readings; // timestamp order (stable for ties)
    std::vector<SkippedLine> skipped;
};

/// Reads a readings-journal file. Malformed lines are skipped and reported
/// with their line number; a missing file is a StorageError.
inline ReplayDataset load_replay_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in || std::filesystem::is_directory(path)) throw StorageError("cannot open replay dataset " + path.string());
    ReplayDataset ds;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            Reading r = reading_from_json(nlohmann::json::parse(line));
            if (!std::isfinite(r.pm2_5) || r.pm2_5 < 0) throw ValidationError("pm2_5", "must be >= 0");
            ds.readings.push_back(std::move(r));
        } catch (const std::exception& e) {
            ds.skipped.push_back({n, e.what()});
            spdlog::warn("{}:{}: skipped malformed line: {}", path.string(), n, e.what());
        }
    }
    std::stable_sort(ds.readings.begin(), ds.readings.end(),
                     [](const Reading& a, const Reading& b) { return a.timestamp < b.timestamp; });
    return ds;
}

struct ReplayResult {
    std::size_t loaded = 0;
    std::size_t duplicates = 0;
    std::vector<SkippedLine> skipped;
};

/// Feeds a dataset through `clock`: each reading is appended once the clock
/// reaches its timestamp. A ManualClock makes this instantaneous; a
/// ScaledClock paces it at the clock's speed.
inline ReplayResult replay(const ReplayDataset& ds, ReadingStore& store, Clock& clock, std::stop_token stop = {},
                           const std::function<void(const Reading&)>& on_reading = {}) {
    ReplayResult result{0, 0, ds.skipped};
    for (const auto& r : ds.readings) {
        if (!clock.sleep_until(r.timestamp, stop)) break;
        try {
            if (store.append(r, clock.now()) == AppendResult::Duplicate) {
                ++result.duplicates;
                continue;
            }
        } catch (const ValidationError& e) {
            spdlog::warn("replay: dropped reading for {}: {}", r.sensor_id, e.what());
            continue;
        }
        ++result.loaded;
        if (on_reading) on_reading(r);
    }
    return result;
}

/// Infinite speed gives a ManualClock (load instantly, then time stands still
/// at the last reading); any finite speed gives a ScaledClock.
inline std::unique_ptr<Clock> make_replay_clock(double speed_factor, Instant origin) {
    if (std::isinf(speed_factor) && speed_factor > 0) return std::make_unique<ManualClock>(origin);
    return std::make_unique<ScaledClock>(origin, speed_factor);
}

inline ReplayResult replay(const std::filesystem::path& path, ReadingStore& store, Clock& clock,
                           std::stop_token stop = {}, const std::function<void(const Reading&)>& on_reading = {}) {
    return replay(load_replay_dataset(path), store, clock, stop, on_reading);
}

} // namespace fenceline
