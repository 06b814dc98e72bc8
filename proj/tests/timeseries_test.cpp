#include "fenceline/timeseries.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <set>
#include <thread>

using namespace fenceline;

namespace {

constexpr std::int64_t kT0 = 1'700'000'000;

Reading reading(const std::string& id, std::int64_t t, double pm) { return {id, from_epoch(t), pm, {}, {}}; }

std::vector<Reading> random_readings(std::mt19937_64& rng, std::size_t n, int sensors, std::int64_t span) {
    std::uniform_int_distribution<std::int64_t> t(kT0, kT0 + span);
    std::uniform_real_distribution<double> pm(0.0, 300.0);
    std::vector<Reading> out;
    std::set<std::pair<std::string, std::int64_t>> used;
    while (out.size() < n) {
        const auto id = "s" + std::to_string(rng() % sensors);
        const auto ts = t(rng);
        if (!used.insert({id, ts}).second) continue;
        out.push_back(reading(id, ts, pm(rng)));
    }
    return out;
}

} // namespace

TEST(Append, SizeAndDuplicate) {
    ReadingStore store;
    const Instant now = from_epoch(kT0);
    EXPECT_EQ(store.append(reading("a", kT0, 10), now), AppendResult::Appended);
    EXPECT_EQ(store.size(), 1u);
    EXPECT_EQ(store.append(reading("a", kT0, 10), now), AppendResult::Duplicate);
    EXPECT_EQ(store.size(), 1u);
}

TEST(Append, RejectsInvariantViolations) {
    ReadingStore store;
    const Instant now = from_epoch(kT0);
    EXPECT_THROW(store.append(reading("a", kT0, -1), now), ValidationError);
    EXPECT_THROW(store.append(reading("a", kT0, std::nan("")), now), ValidationError);
    EXPECT_THROW(store.append(reading("", kT0, 1), now), ValidationError);
    EXPECT_THROW(store.append(reading("a", kT0 + 61, 1), now), ValidationError);
    EXPECT_NO_THROW(store.append(reading("a", kT0 + 60, 1), now));
    EXPECT_EQ(store.size(), 1u);
}

TEST(Append, ShuffledArrivalEndsSorted) {
    std::mt19937_64 rng(1);
    auto rs = random_readings(rng, 1000, 1, 86400);
    ReadingStore store;
    const Instant now = from_epoch(kT0 + 86400);
    for (const auto& r : rs) store.append(r, now);
    std::sort(rs.begin(), rs.end(), [](const Reading& a, const Reading& b) { return a.timestamp < b.timestamp; });
    EXPECT_EQ(store.readings("s0"), rs);
}

TEST(Store, RetentionBelowWeekPlusDayIsRejected) {
    EXPECT_THROW(ReadingStore(Seconds{7 * 86400}), ConfigError);
    EXPECT_NO_THROW(ReadingStore(Seconds{8 * 86400}));
}

TEST(WindowAverage, Examples) {
    ReadingStore store;
    const Instant now = from_epoch(kT0);
    store.append(reading("a", kT0 - 300, 10), now);
    store.append(reading("a", kT0 - 200, 20), now);
    store.append(reading("a", kT0 - 100, 30), now);
    EXPECT_DOUBLE_EQ(*store.window_average("a", Window::Min10, now), 20.0);
    EXPECT_DOUBLE_EQ(*store.window_average("a", Window::Realtime, now), 30.0);
    EXPECT_FALSE(store.window_average("a", Window::Min10, now + Seconds{3600}).has_value());
    EXPECT_THROW(store.window_average("zz", Window::Min10, now), NotFoundError);
}

TEST(WindowAverage, BoundaryIsOpenOnTheLeft) {
    ReadingStore store;
    const Instant now = from_epoch(kT0);
    store.append(reading("a", kT0 - 600, 100), now);
    store.append(reading("a", kT0 - 599, 10), now);
    store.append(reading("a", kT0, 20), now);
    EXPECT_DOUBLE_EQ(*store.window_average("a", Window::Min10, now), 15.0);
}

TEST(WindowAverage, MatchesFilterAndMeanOracle) {
    std::mt19937_64 rng(2);
    const auto rs = random_readings(rng, 500, 1, 2 * 3600);
    ReadingStore store;
    for (const auto& r : rs) store.append(r, from_epoch(kT0 + 2 * 3600));
    std::uniform_int_distribution<std::int64_t> q(kT0 - 600, kT0 + 3 * 3600);
    for (int i = 0; i < 300; ++i) {
        const auto now = q(rng);
        for (auto w : kAllWindows) {
            const auto got = store.window_average("s0", w, from_epoch(now));
            const auto want = w == Window::Realtime ? oracle::realtime(rs, "s0", now)
                                                    : oracle::window_mean(rs, "s0", duration(w).count(), now).mean;
            ASSERT_EQ(got.has_value(), want.has_value()) << to_string(w) << " @" << now;
            if (got) {
                ASSERT_LE(oracle::rel_err(*got, *want), 1e-9);
            }
        }
    }
}

TEST(WindowSummaries, Examples) {
    ReadingStore store;
    store.add_sensor("empty");
    const Instant now = from_epoch(kT0);
    const auto none = store.window_summaries("empty", now);
    ASSERT_EQ(none.size(), 7u);
    for (const auto& s : none) {
        EXPECT_FALSE(s.mean_concentration);
        EXPECT_FALSE(s.aqi);
        EXPECT_EQ(s.sample_count, 0u);
    }

    store.append(reading("one", kT0, 20.0), now);
    const auto one = store.window_summaries("one", now);
    for (std::size_t i = 0; i < one.size(); ++i) {
        EXPECT_EQ(one[i].window, kAllWindows[i]);
        EXPECT_DOUBLE_EQ(*one[i].mean_concentration, 20.0);
        EXPECT_EQ(*one[i].aqi, 68);
        EXPECT_EQ(one[i].color->hex(), "#ADF600");
        EXPECT_EQ(one[i].sample_count, 1u);
    }
    EXPECT_THROW(store.window_summaries("nope", now), NotFoundError);
}

TEST(WindowSummaries, TwoDayTraceMatchesOracle) {
    const auto rs = oracle::synthetic_two_day(4, kT0);
    ReadingStore store;
    const std::int64_t end = kT0 + 600 * 287;
    for (const auto& r : rs) store.append(r, from_epoch(end));
    for (std::int64_t now : {kT0, kT0 + 3000, end - 1, end, end + 7200}) {
        for (int s = 0; s < 8; ++s) {
            const auto id = "kc-" + std::to_string(100 + s);
            const auto sums = store.window_summaries(id, from_epoch(now));
            for (const auto& ws : sums) {
                std::optional<double> want;
                std::size_t count = 0;
                if (ws.window == Window::Realtime) {
                    want = oracle::realtime(rs, id, now);
                    count = want ? 1 : 0;
                } else {
                    const auto m = oracle::window_mean(rs, id, duration(ws.window).count(), now);
                    want = m.mean;
                    count = m.count;
                }
                ASSERT_EQ(ws.mean_concentration.has_value(), want.has_value());
                EXPECT_EQ(ws.sample_count, count);
                if (!want) continue;
                EXPECT_LE(oracle::rel_err(*ws.mean_concentration, *want), 1e-9);
                EXPECT_EQ(*ws.aqi, oracle::epa_aqi(std::floor(*want * 10.0L + 1e-9L) / 10.0L));
            }
        }
    }
}

TEST(Slice, Examples) {
    ReadingStore store;
    store.add_sensor("e");
    const Instant now = from_epoch(kT0 + 1000);
    for (int i = 0; i < 10; ++i) store.append(reading("a", kT0 + i * 60, i), now);
    const auto all = store.slice("a", from_epoch(kT0), from_epoch(kT0 + 1000), 100);
    ASSERT_EQ(all.size(), 10u);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(all[i], (SeriesPoint{from_epoch(kT0 + i * 60), double(i), 1}));

    EXPECT_TRUE(store.slice("e", from_epoch(kT0), from_epoch(kT0 + 10), 100).empty());
    EXPECT_TRUE(store.slice("a", from_epoch(kT0 - 100), from_epoch(kT0 - 1), 100).empty());
    EXPECT_THROW(store.slice("a", from_epoch(kT0 + 5), from_epoch(kT0), 100), ValidationError);
    EXPECT_THROW(store.slice("a", from_epoch(kT0), from_epoch(kT0 + 5), 1), ValidationError);
    EXPECT_THROW(store.slice("zz", from_epoch(kT0), from_epoch(kT0 + 5), 100), NotFoundError);
}

TEST(Slice, DownsamplingMatchesBucketOracle) {
    std::mt19937_64 rng(6);
    const auto rs = random_readings(rng, 10000, 1, 7 * 86400);
    ReadingStore store;
    for (const auto& r : rs) store.append(r, from_epoch(kT0 + 7 * 86400));

    for (std::size_t max_points : {500u, 100u, 3u, 2u}) {
        const std::int64_t from = kT0 + 3600, to = kT0 + 6 * 86400;
        const auto got = store.slice("s0", from_epoch(from), from_epoch(to), max_points);
        std::vector<std::pair<std::int64_t, double>> in;
        for (const auto& r : store.readings("s0")) {
            const auto t = to_epoch(r.timestamp);
            if (t >= from && t <= to) in.emplace_back(t, r.pm2_5);
        }
        ASSERT_LE(got.size(), max_points);
        ASSERT_GE(got.size(), 2u);
        EXPECT_EQ(to_epoch(got.front().timestamp), in.front().first);
        EXPECT_EQ(got.front().pm2_5, in.front().second);
        EXPECT_EQ(to_epoch(got.back().timestamp), in.back().first);
        EXPECT_EQ(got.back().pm2_5, in.back().second);

        const auto buckets = oracle::interior_buckets(in, max_points);
        ASSERT_EQ(got.size(), buckets.size() + 2);
        std::size_t total = 0;
        auto it = buckets.begin();
        for (std::size_t i = 1; i + 1 < got.size(); ++i, ++it) {
            EXPECT_EQ(got[i].count, it->second.count);
            EXPECT_LE(oracle::rel_err(got[i].pm2_5, it->second.sum / double(it->second.count)), 1e-9);
            EXPECT_GE(got[i].timestamp, got[i - 1].timestamp);
            total += got[i].count;
        }
        if (max_points > 2) {
            EXPECT_EQ(total + 2, in.size());
        }
    }
}

TEST(Prune, Examples) {
    ReadingStore store;
    const Instant now = from_epoch(kT0 + 10 * 86400);
    for (int i = 0; i < 5; ++i) store.append(reading("a", kT0 + 10 * 86400 - i * 60, 1), now);
    EXPECT_EQ(store.prune(now), 0u);
    ReadingStore old;
    for (int i = 0; i < 5; ++i) old.append(reading("a", kT0 + i * 60, 1), now);
    EXPECT_EQ(old.prune(from_epoch(kT0 + 9 * 86400 + 300)), 5u);
    EXPECT_EQ(old.size(), 0u);
}

TEST(Prune, MatchesAgeFilter) {
    std::mt19937_64 rng(7);
    const auto rs = random_readings(rng, 3000, 4, 12 * 86400);
    ReadingStore store;
    const std::int64_t now = kT0 + 12 * 86400;
    for (const auto& r : rs) store.append(r, from_epoch(now));
    std::size_t want_removed = 0;
    for (const auto& r : rs) want_removed += to_epoch(r.timestamp) < now - 8 * 86400;
    EXPECT_EQ(store.prune(from_epoch(now)), want_removed);
    EXPECT_EQ(store.size(), rs.size() - want_removed);
    for (const auto& [_, seq] : store.snapshot())
        for (const auto& r : seq) EXPECT_GE(to_epoch(r.timestamp), now - 8 * 86400);
}

TEST(Store, ArrivalOrderDoesNotChangeResults) {
    std::mt19937_64 rng(8);
    auto rs = random_readings(rng, 2000, 3, 86400);
    const Instant now = from_epoch(kT0 + 86400);
    ReadingStore a, b;
    for (const auto& r : rs) a.append(r, now);
    std::shuffle(rs.begin(), rs.end(), rng);
    for (const auto& r : rs) b.append(r, now);
    EXPECT_EQ(a.snapshot(), b.snapshot());
    for (const auto& id : a.sensor_ids())
        for (auto w : kAllWindows) EXPECT_EQ(a.window_average(id, w, now), b.window_average(id, w, now));
}

TEST(Store, ReadersSeeConsistentStateDuringAppends) {
    ReadingStore store;
    store.add_sensor("a");
    const Instant now = from_epoch(kT0 + 100000);
    std::atomic<bool> done{false};
    std::atomic<int> bad{0};
    std::thread reader([&] {
        while (!done) {
            // every reading holds its own index as value, so the mean of the
            // first n is (n-1)/2 whatever n the reader happens to observe
            const auto seq = store.readings("a");
            if (seq.empty()) continue;
            double sum = 0;
            for (const auto& r : seq) sum += r.pm2_5;
            if (std::abs(sum / seq.size() - (seq.size() - 1) / 2.0) > 1e-9) ++bad;
        }
    });
    for (int i = 0; i < 5000; ++i) store.append(reading("a", kT0 + i, i), now);
    done = true;
    reader.join();
    EXPECT_EQ(bad.load(), 0);
    EXPECT_EQ(store.size(), 5000u);
}

TEST(ReadingJson, RoundTripAndErrors) {
    Reading r{"kc-1", from_epoch(1600000000), 12.5, 20.0, 41.0};
    EXPECT_EQ(reading_from_json(to_json(r)), r);
    Reading bare{"kc-1", from_epoch(1600000000), 3.0, {}, {}};
    EXPECT_EQ(reading_from_json(to_json(bare)), bare);
    EXPECT_THROW(reading_from_json(nlohmann::json{{"sensor_id", "a"}}), ValidationError);
    EXPECT_THROW(reading_from_json(nlohmann::json{{"sensor_id", "a"}, {"timestamp", "x"}, {"pm2_5", 1}}),
                 ValidationError);
    EXPECT_THROW(reading_from_json(nlohmann::json::array()), ValidationError);
}

TEST(Window, Names) {
    for (auto w : kAllWindows) EXPECT_EQ(window_from_string(to_string(w)), w);
    EXPECT_THROW(window_from_string("5min"), ValidationError);
}
