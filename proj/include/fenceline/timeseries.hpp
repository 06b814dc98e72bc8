#pragma once

// Per-sensor reading store: ordered append, rolling-window means, chart
// slicing with bucket-mean downsampling, and retention pruning.

#include "fenceline/aqi.hpp"
#include "fenceline/errors.hpp"
#include "fenceline/time.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace fenceline {

struct Reading {
    std::string sensor_id;
    Instant timestamp;
    Concentration pm2_5 = 0;
    std::optional<double> temperature; // °C
    std::optional<double> humidity;    // %

    friend bool operator==(const Reading&, const Reading&) = default;
};

enum class Window { Realtime, Min10, Min30, Min60, Hour6, Hour24, Week1 };

inline constexpr std::array kAllWindows{
    Window::Realtime, Window::Min10, Window::Min30, Window::Min60,
    Window::Hour6,    Window::Hour24, Window::Week1,
};

inline std::string_view to_string(Window w) {
    switch (w) {
        case Window::Realtime: return "realtime";
        case Window::Min10: return "10min";
        case Window::Min30: return "30min";
        case Window::Min60: return "60min";
        case Window::Hour6: return "6hour";
        case Window::Hour24: return "24hour";
        case Window::Week1: return "1week";
    }
    return "?";
}

inline Window window_from_string(std::string_view s) {
    for (auto w : kAllWindows)
        if (to_string(w) == s) return w;
    throw ValidationError("window", "unknown window '" + std::string(s) + "'");
}

/// Zero for realtime, which means "latest single reading".
inline Seconds duration(Window w) {
    switch (w) {
        case Window::Realtime: return Seconds{0};
        case Window::Min10: return Seconds{600};
        case Window::Min30: return Seconds{1800};
        case Window::Min60: return Seconds{3600};
        case Window::Hour6: return Seconds{6 * 3600};
        case Window::Hour24: return Seconds{24 * 3600};
        case Window::Week1: return Seconds{7 * 24 * 3600};
    }
    return Seconds{0};
}

struct WindowSummary {
    Window window;
    std::optional<Concentration> mean_concentration;
    std::optional<AqiValue> aqi;
    std::optional<ColorRgb> color;
    std::size_t sample_count = 0;
};

/// One chart point. `count` is the number of raw readings it stands for.
struct SeriesPoint {
    Instant timestamp;
    Concentration pm2_5;
    std::size_t count;

    friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

enum class AppendResult { Appended, Duplicate };

inline constexpr Seconds kClockSkewAllowance{60};
inline constexpr Seconds kDefaultRetention{8 * 24 * 3600};

// ---- journal line format -------------------------------------------------

inline nlohmann::json to_json(const Reading& r) {
    nlohmann::json j{{"sensor_id", r.sensor_id}, {"timestamp", format_iso8601(r.timestamp)}, {"pm2_5", r.pm2_5}};
    if (r.temperature) j["temperature"] = *r.temperature;
    if (r.humidity) j["humidity"] = *r.humidity;
    return j;
}

inline Reading reading_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("reading", "expected a JSON object");
    const auto need = [&](const char* key) -> const nlohmann::json& {
        const auto it = j.find(key);
        if (it == j.end() || it->is_null()) throw ValidationError(key, "missing");
        return *it;
    };
    const auto number = [](const nlohmann::json& v, const char* key) {
        if (!v.is_number()) throw ValidationError(key, "expected a number");
        return v.get<double>();
    };
    Reading r;
    const auto& id = need("sensor_id");
    if (!id.is_string() || id.get<std::string>().empty()) throw ValidationError("sensor_id", "expected a non-empty string");
    r.sensor_id = id.get<std::string>();
    const auto& ts = need("timestamp");
    if (!ts.is_string()) throw ValidationError("timestamp", "expected an ISO-8601 string");
    r.timestamp = parse_iso8601(ts.get<std::string>());
    r.pm2_5 = number(need("pm2_5"), "pm2_5");
    if (auto it = j.find("temperature"); it != j.end() && !it->is_null()) r.temperature = number(*it, "temperature");
    if (auto it = j.find("humidity"); it != j.end() && !it->is_null()) r.humidity = number(*it, "humidity");
    return r;
}

/// Throws ValidationError if `r` breaks a Reading invariant at ingestion time `now`.
inline void validate_reading(const Reading& r, Instant now) {
    if (r.sensor_id.empty()) throw ValidationError("sensor_id", "must not be empty");
    if (!std::isfinite(r.pm2_5) || r.pm2_5 < 0) throw ValidationError("pm2_5", "must be a finite value >= 0");
    if (r.timestamp > now + kClockSkewAllowance)
        throw ValidationError("timestamp", "more than 60 s in the future: " + format_iso8601(r.timestamp));
    if (r.temperature && !std::isfinite(*r.temperature)) throw ValidationError("temperature", "must be finite");
    if (r.humidity && !std::isfinite(*r.humidity)) throw ValidationError("humidity", "must be finite");
}

// ---- store ---------------------------------------------------------------

/// Single writer, many readers. Every public read takes a shared lock for its
/// whole computation, so it observes either all or none of a concurrent
/// append/prune.
class ReadingStore {
public:
    using Snapshot = std::map<std::string, std::vector<Reading>>;

    explicit ReadingStore(Seconds retention = kDefaultRetention) : retention_(retention) {
        if (retention < duration(Window::Week1) + Seconds{24 * 3600})
            throw ConfigError("retention must cover at least one week plus one day");
    }

    Seconds retention() const { return retention_; }

    /// Makes a sensor known without data, so lookups return empty results
    /// rather than not-found.
    void add_sensor(const std::string& sensor_id) {
        std::unique_lock lock(mu_);
        series_.try_emplace(sensor_id);
    }

    AppendResult append(const Reading& r, Instant now) {
        validate_reading(r, now);
        std::unique_lock lock(mu_);
        auto& seq = series_[r.sensor_id];
        const auto it = std::lower_bound(seq.begin(), seq.end(), r.timestamp,
                                         [](const Reading& a, Instant t) { return a.timestamp < t; });
        if (it != seq.end() && it->timestamp == r.timestamp) return AppendResult::Duplicate;
        seq.insert(it, r);
        return AppendResult::Appended;
    }

    bool contains(const std::string& sensor_id) const {
        std::shared_lock lock(mu_);
        return series_.contains(sensor_id);
    }

    std::vector<std::string> sensor_ids() const {
        std::shared_lock lock(mu_);
        std::vector<std::string> ids;
        for (const auto& [id, _] : series_) ids.push_back(id);
        return ids;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        std::size_t n = 0;
        for (const auto& [_, seq] : series_) n += seq.size();
        return n;
    }

    std::vector<Reading> readings(const std::string& sensor_id) const {
        std::shared_lock lock(mu_);
        return series(sensor_id);
    }

    std::optional<Reading> latest(const std::string& sensor_id, std::optional<Instant> at_or_before = {}) const {
        std::shared_lock lock(mu_);
        const auto& seq = series(sensor_id);
        const auto end = at_or_before ? upper(seq, *at_or_before) : seq.end();
        if (end == seq.begin()) return std::nullopt;
        return *std::prev(end);
    }

    Snapshot snapshot() const {
        std::shared_lock lock(mu_);
        return series_;
    }

    /// Mean pm2_5 over readings with timestamp in (now - duration, now].
    /// Realtime yields the latest reading at or before `now`.
    std::optional<Concentration> window_average(const std::string& sensor_id, Window w, Instant now) const {
        std::shared_lock lock(mu_);
        return stats(series(sensor_id), w, now).mean;
    }

    std::vector<WindowSummary> window_summaries(const std::string& sensor_id, Instant now,
                                                const AqiScale& scale = AqiScale::standard()) const {
        std::shared_lock lock(mu_);
        const auto& seq = series(sensor_id);
        std::vector<WindowSummary> out;
        out.reserve(kAllWindows.size());
        for (auto w : kAllWindows) {
            const auto s = stats(seq, w, now);
            WindowSummary ws{w, s.mean, std::nullopt, std::nullopt, s.count};
            if (s.mean) {
                ws.aqi = scale.to_aqi(*s.mean);
                ws.color = scale.color(*ws.aqi);
            }
            out.push_back(ws);
        }
        return out;
    }

    /// Readings in [from, to]. Above `max_points`, the first and last raw
    /// readings are kept verbatim and the interior is averaged into
    /// max_points-2 equal-width time buckets (empty buckets dropped), each
    /// stamped at its bucket centre.
    std::vector<SeriesPoint> slice(const std::string& sensor_id, Instant from, Instant to,
                                   std::size_t max_points) const {
        if (!(from < to)) throw ValidationError("from", "range start must precede its end");
        if (max_points < 2) throw ValidationError("max_points", "must be at least 2");
        std::shared_lock lock(mu_);
        const auto& seq = series(sensor_id);
        const auto first = lower(seq, from);
        const auto last = upper(seq, to);
        const auto n = static_cast<std::size_t>(last - first);

        std::vector<SeriesPoint> out;
        if (n <= max_points) {
            out.reserve(n);
            for (auto it = first; it != last; ++it) out.push_back({it->timestamp, it->pm2_5, 1});
            return out;
        }

        if (max_points == 2)
            return {{first->timestamp, first->pm2_5, 1}, {std::prev(last)->timestamp, std::prev(last)->pm2_5, 1}};

        const Instant t0 = first->timestamp;
        const auto span = to_epoch(std::prev(last)->timestamp) - to_epoch(t0);
        const auto buckets = static_cast<std::int64_t>(max_points - 2);
        std::vector<double> sum(buckets, 0.0);
        std::vector<std::size_t> count(buckets, 0);
        for (auto it = std::next(first); it != std::prev(last); ++it) {
            const auto offset = to_epoch(it->timestamp) - to_epoch(t0);
            const auto b = std::min<std::int64_t>(offset * buckets / span, buckets - 1);
            sum[b] += it->pm2_5;
            ++count[b];
        }
        out.push_back({first->timestamp, first->pm2_5, 1});
        for (std::int64_t b = 0; b < buckets; ++b) {
            if (count[b] == 0) continue;
            const auto centre = to_epoch(t0) + (2 * b + 1) * span / (2 * buckets);
            out.push_back({from_epoch(centre), sum[b] / static_cast<double>(count[b]), count[b]});
        }
        out.push_back({std::prev(last)->timestamp, std::prev(last)->pm2_5, 1});
        return out;
    }

    /// Drops readings older than now - retention. Returns how many went.
    std::size_t prune(Instant now) {
        std::unique_lock lock(mu_);
        const Instant horizon = now - retention_;
        std::size_t removed = 0;
        for (auto& [_, seq] : series_) {
            const auto keep = lower(seq, horizon);
            removed += static_cast<std::size_t>(keep - seq.begin());
            seq.erase(seq.begin(), keep);
        }
        return removed;
    }

private:
    using Seq = std::vector<Reading>;

    struct Stats {
        std::optional<Concentration> mean;
        std::size_t count = 0;
    };

    static Seq::const_iterator lower(const Seq& seq, Instant t) {
        return std::lower_bound(seq.begin(), seq.end(), t,
                                [](const Reading& a, Instant x) { return a.timestamp < x; });
    }
    static Seq::const_iterator upper(const Seq& seq, Instant t) {
        return std::upper_bound(seq.begin(), seq.end(), t,
                                [](Instant x, const Reading& a) { return x < a.timestamp; });
    }

    static Stats stats(const Seq& seq, Window w, Instant now) {
        const auto end = upper(seq, now);
        if (w == Window::Realtime) {
            if (end == seq.begin()) return {};
            return {std::prev(end)->pm2_5, 1};
        }
        const auto begin = upper(seq, now - duration(w));
        if (begin == end) return {};
        double sum = 0;
        for (auto it = begin; it != end; ++it) sum += it->pm2_5;
        const auto n = static_cast<std::size_t>(end - begin);
        return {sum / static_cast<double>(n), n};
    }

    const Seq& series(const std::string& sensor_id) const {
        const auto it = series_.find(sensor_id);
        if (it == series_.end()) throw NotFoundError("unknown sensor '" + sensor_id + "'");
        return it->second;
    }

    Seconds retention_;
    mutable std::shared_mutex mu_;
    Snapshot series_;
};

} // namespace fenceline
