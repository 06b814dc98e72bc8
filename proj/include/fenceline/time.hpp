#pragma once

#include "fenceline/errors.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <stop_token>
#include <string>
#include <string_view>

namespace fenceline {

using Seconds = std::chrono::seconds;
/// UTC instant at one-second resolution.
using Instant = std::chrono::sys_seconds;

inline Instant from_epoch(std::int64_t secs) { return Instant{Seconds{secs}}; }
inline std::int64_t to_epoch(Instant t) { return t.time_since_epoch().count(); }

/// "YYYY-MM-DDTHH:MM:SSZ"
inline std::string format_iso8601(Instant t) {
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                  static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

namespace detail {

inline bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    for (std::size_t i = pos; i < pos + n; ++i)
        if (s[i] < '0' || s[i] > '9') return false;
    auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + n, out);
    return ec == std::errc{} && p == s.data() + pos + n;
}

} // namespace detail

/// Accepts "YYYY-MM-DDTHH:MM:SS", optional fractional seconds (truncated),
/// then "Z" or a "+HH:MM"/"-HH:MM" offset. Throws ValidationError.
inline Instant parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    int y, mo, d, h, mi, se;
    const auto bad = [&] { return ValidationError("timestamp", "not an ISO-8601 UTC instant: '" + std::string(s) + "'"); };
    if (!detail::read_digits(s, 0, 4, y) || s.size() < 19 || s[4] != '-' ||
        !detail::read_digits(s, 5, 2, mo) || s[7] != '-' || !detail::read_digits(s, 8, 2, d) ||
        (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || !detail::read_digits(s, 11, 2, h) ||
        s[13] != ':' || !detail::read_digits(s, 14, 2, mi) || s[16] != ':' ||
        !detail::read_digits(s, 17, 2, se))
        throw bad();
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        const auto start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) throw bad();
    }
    int offset_secs = 0;
    if (pos == s.size()) throw bad();
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        int oh, om;
        if (!detail::read_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
            !detail::read_digits(s, pos + 4, 2, om))
            throw bad();
        offset_secs = (oh * 3600 + om * 60) * (s[pos] == '-' ? -1 : 1);
        pos += 6;
    } else {
        throw bad();
    }
    if (pos != s.size()) throw bad();

    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 60) throw bad();
    return Instant{sys_days{ymd}} + hours{h} + minutes{mi} + Seconds{se} - Seconds{offset_secs};
}

/// Source of "now" for everything time-dependent. Injected so polling, rate
/// limiting and replay run identically against wall time or simulated time.
class Clock {
public:
    virtual ~Clock() = default;
    virtual Instant now() const = 0;
    /// Blocks until now() >= t. Returns false if `stop` fired first.
    virtual bool sleep_until(Instant t, std::stop_token stop = {}) = 0;
};

class SystemClock final : public Clock {
public:
    Instant now() const override {
        return std::chrono::floor<Seconds>(std::chrono::system_clock::now());
    }

    bool sleep_until(Instant t, std::stop_token stop = {}) override {
        std::mutex m;
        std::unique_lock lock(m);
        std::condition_variable_any cv;
        cv.wait_until(lock, stop, std::chrono::system_clock::time_point{t}, [] { return false; });
        return !stop.stop_requested();
    }
};

/// Simulated clock: sleeping jumps time forward instantly.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Instant start = Instant{}) : secs_(to_epoch(start)) {}

    Instant now() const override { return from_epoch(secs_.load()); }

    bool sleep_until(Instant t, std::stop_token stop = {}) override {
        if (stop.stop_requested()) return false;
        advance_to(t);
        return true;
    }

    void advance_to(Instant t) {
        auto cur = secs_.load();
        while (to_epoch(t) > cur && !secs_.compare_exchange_weak(cur, to_epoch(t))) {}
    }
    void advance(Seconds d) { secs_ += d.count(); }
    void set(Instant t) { secs_ = to_epoch(t); }

private:
    std::atomic<std::int64_t> secs_;
};

/// Virtual time running `speed` times faster than the wall clock, anchored at
/// `origin` when constructed.
class ScaledClock final : public Clock {
public:
    ScaledClock(Instant origin, double speed)
        : origin_(origin), real_origin_(std::chrono::steady_clock::now()), speed_(speed) {
        if (!(speed > 0)) throw ConfigError("replay speed must be positive");
    }

    Instant now() const override {
        const std::chrono::duration<double> real = std::chrono::steady_clock::now() - real_origin_;
        return origin_ + Seconds{static_cast<std::int64_t>(real.count() * speed_)};
    }

    bool sleep_until(Instant t, std::stop_token stop = {}) override {
        const auto target_real = real_origin_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                    std::chrono::duration<double>((t - origin_).count() / speed_)) +
                                 std::chrono::milliseconds{1};
        std::mutex m;
        std::unique_lock lock(m);
        std::condition_variable_any cv;
        cv.wait_until(lock, stop, target_real, [] { return false; });
        return !stop.stop_requested();
    }

private:
    Instant origin_;
    std::chrono::steady_clock::time_point real_origin_;
    double speed_;
};

} // namespace fenceline
