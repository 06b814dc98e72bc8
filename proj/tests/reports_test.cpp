#include "fenceline/csv.hpp"
#include "fenceline/journal.hpp"
#include "fenceline/reports.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace fenceline;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kT0 = 1'700'000'000;

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("fenceline-reports-" + std::to_string(std::random_device{}()));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

ReportCandidate candidate(double lat, double lon, std::string category = "smoke",
                          std::string description = "haze near the rail yard") {
    return {GeoPoint{lat, lon}, std::move(category), std::move(description), std::nullopt};
}

ReportCandidate random_candidate(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> lat(38.8, 39.4), lon(-94.95, -94.35);
    static const char* cats[] = {"smoke", "odor", "dust", "industrial_emission", "other"};
    auto c = candidate(lat(rng), lon(rng), cats[rng() % 5], "report #" + std::to_string(rng() % 100000));
    if (rng() % 3 == 0) c.reporter_contact = "resident@example.org";
    return c;
}

std::string hazard_row(const std::string& id, const std::string& lat, const std::string& lon) {
    return id + ",\"Facility " + id + "\",Pat Doe,\"12 Industrial Rd, Kansas City, KS\"," + lat + "," + lon +
           ",https://example.gov/" + id;
}

const std::string kHeader = "site_id,name,contact_name,address,latitude,longitude,epa_url";

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(Submit, ValidReportIsStoredAsNew) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    const auto r = store.submit_report(candidate(39.08, -94.64));
    EXPECT_EQ(r.status, ReportStatus::New);
    EXPECT_EQ(r.category, ReportCategory::Smoke);
    EXPECT_EQ(r.created_at, from_epoch(kT0));
    EXPECT_EQ(r.id.size(), 32u);
    EXPECT_EQ(store.report_count(), 1u);
}

TEST(Submit, Rejections) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    try {
        store.submit_report(candidate(0, 0));
        FAIL();
    } catch (const CommunityStore::OutOfServiceArea& e) {
        EXPECT_NE(std::string(e.what()).find("service area"), std::string::npos);
    }
    try {
        store.submit_report(candidate(39.08, -94.64, "smoke", "   "));
        FAIL();
    } catch (const ValidationError& e) {
        ASSERT_EQ(e.fields().size(), 1u);
        EXPECT_EQ(e.fields()[0].field, "description");
    }
    try {
        store.submit_report(candidate(95, -94.64, "fog", ""));
        FAIL();
    } catch (const ValidationError& e) {
        std::set<std::string> fields;
        for (const auto& f : e.fields()) fields.insert(f.field);
        EXPECT_EQ(fields, (std::set<std::string>{"category", "description", "location.lat"}));
    }
    EXPECT_THROW(store.submit_report(candidate(39.08, -94.64, "smoke", std::string(2001, 'x'))), ValidationError);
    EXPECT_NO_THROW(store.submit_report(candidate(39.08, -94.64, "smoke", std::string(2000, 'x'))));
    EXPECT_EQ(store.report_count(), 1u);
}

TEST(Submit, HundredDistinctIds) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    std::mt19937_64 rng(41);
    std::set<std::string> ids;
    for (int i = 0; i < 100; ++i) ids.insert(store.submit_report(random_candidate(rng)).id);
    EXPECT_EQ(ids.size(), 100u);
    EXPECT_EQ(store.list_reports().size(), 100u);
}

TEST(Candidate, FromJsonCollectsFieldErrors) {
    try {
        ReportCandidate::from_json({{"location", {{"lat", "x"}}}, {"category", 3}});
        FAIL();
    } catch (const ValidationError& e) {
        std::set<std::string> fields;
        for (const auto& f : e.fields()) fields.insert(f.field);
        EXPECT_EQ(fields, (std::set<std::string>{"location.lat", "location.lon", "category", "description"}));
    }
    const auto c = ReportCandidate::from_json(
        {{"location", {{"lat", 39.1}, {"lon", -94.6}}}, {"category", "dust"}, {"description", "d"}});
    EXPECT_EQ(c.location, (GeoPoint{39.1, -94.6}));
    // client-supplied created_at is ignored by construction
    EXPECT_NO_THROW(ReportCandidate::from_json({{"location", {{"lat", 39.1}, {"lon", -94.6}}},
                                                {"category", "dust"},
                                                {"description", "d"},
                                                {"created_at", "1999-01-01T00:00:00Z"}}));
}

TEST(ListReports, OrderAndFilters) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    EXPECT_TRUE(store.list_reports().empty());

    std::mt19937_64 rng(42);
    for (int i = 0; i < 60; ++i) {
        clock.advance(Seconds{static_cast<std::int64_t>(rng() % 3) * 60});
        const auto r = store.submit_report(random_candidate(rng));
        if (rng() % 2) store.mark_reviewed(r.id);
    }
    const auto all = store.list_reports();
    ASSERT_EQ(all.size(), 60u);
    for (std::size_t i = 1; i < all.size(); ++i) {
        EXPECT_GE(all[i - 1].created_at, all[i].created_at);
        if (all[i - 1].created_at == all[i].created_at) {
            EXPECT_LT(all[i - 1].id, all[i].id);
        }
    }

    ReportFilter only_new;
    only_new.status = ReportStatus::New;
    for (const auto& r : store.list_reports(only_new)) EXPECT_EQ(r.status, ReportStatus::New);

    std::uniform_real_distribution<double> lat(38.8, 39.4), lon(-94.95, -94.35);
    for (int q = 0; q < 100; ++q) {
        ReportFilter f;
        if (rng() % 2) f.status = rng() % 2 ? ReportStatus::New : ReportStatus::Reviewed;
        if (rng() % 2) {
            const double a = lat(rng), b = lat(rng), c = lon(rng), d = lon(rng);
            f.bbox = BoundingBox{std::min(c, d), std::min(a, b), std::max(c, d), std::max(a, b)};
        }
        if (rng() % 2) f.from = from_epoch(kT0 + static_cast<std::int64_t>(rng() % 7200));
        if (rng() % 2) f.to = from_epoch(kT0 + static_cast<std::int64_t>(rng() % 7200));
        std::set<std::string> want;
        for (const auto& r : all) {
            bool ok = true;
            if (f.status && r.status != *f.status) ok = false;
            if (f.bbox && !(r.location.lat >= f.bbox->min_lat && r.location.lat <= f.bbox->max_lat &&
                            r.location.lon >= f.bbox->min_lon && r.location.lon <= f.bbox->max_lon))
                ok = false;
            if (f.from && r.created_at < *f.from) ok = false;
            if (f.to && r.created_at > *f.to) ok = false;
            if (ok) want.insert(r.id);
        }
        std::set<std::string> got;
        for (const auto& r : store.list_reports(f)) got.insert(r.id);
        EXPECT_EQ(got, want);
    }
}

TEST(MarkReviewed, Transitions) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    const auto r = store.submit_report(candidate(39.08, -94.64));
    EXPECT_EQ(store.mark_reviewed(r.id).status, ReportStatus::Reviewed);
    EXPECT_EQ(store.mark_reviewed(r.id).status, ReportStatus::Reviewed);
    EXPECT_THROW(store.mark_reviewed("missing"), NotFoundError);
}

TEST(ImportHazards, ThreeValidRows) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    const auto csv = dir.path() / "h.csv";
    write_file(csv, kHeader + "\n" + hazard_row("KSD001", "39.10", "-94.62") + "\n" +
                        hazard_row("KSD002", "39.05", "-94.70") + "\r\n" + hazard_row("MOD003", "39.00", "-94.50"));
    const auto result = store.import_hazard_csv(csv);
    EXPECT_EQ(result.imported, 3u);
    EXPECT_TRUE(result.errors.empty());
    const auto site = store.hazard("KSD001");
    ASSERT_TRUE(site);
    EXPECT_EQ(site->address, "12 Industrial Rd, Kansas City, KS");
    EXPECT_EQ(site->contact_name, "Pat Doe");
    EXPECT_EQ(site->location, (GeoPoint{39.10, -94.62}));
}

TEST(ImportHazards, BadLatitudeNamesRowAndField) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    const auto csv = dir.path() / "h.csv";
    write_file(csv, kHeader + "\n" + hazard_row("A", "39.1", "-94.6") + "\n" + hazard_row("B", "95", "-94.6") + "\n");
    const auto result = store.import_hazard_csv(csv);
    EXPECT_EQ(result.imported, 1u);
    ASSERT_EQ(result.errors.size(), 1u);
    EXPECT_EQ(result.errors[0].row, 3u);
    EXPECT_EQ(result.errors[0].field, "latitude");
    EXPECT_FALSE(store.hazard("B"));
}

TEST(ImportHazards, GeneratedFileWithCorruptRows) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> lat(38.8, 39.4), lon(-94.95, -94.35);
    std::string text = kHeader + "\n";
    std::size_t want_bad = 0, want_good = 0;
    std::set<std::size_t> bad_lines;
    for (int i = 0; i < 500; ++i) {
        const std::string id = "S" + std::to_string(1000 + i);
        const std::size_t line = static_cast<std::size_t>(i) + 2;
        if (i % 20 == 7) {
            ++want_bad;
            bad_lines.insert(line);
            switch ((i / 20) % 4) {
                case 0: text += hazard_row(id, "north", "-94.6") + "\n"; break;
                case 1: text += hazard_row(id, "39.1", "-194.6") + "\n"; break;
                case 2: text += hazard_row("", "39.1", "-94.6") + "\n"; break;
                default: text += id + ",too,few\n"; break;
            }
        } else {
            ++want_good;
            text += hazard_row(id, std::to_string(lat(rng)), std::to_string(lon(rng))) + "\n";
        }
    }
    const auto csv = dir.path() / "gen.csv";
    write_file(csv, text);
    const auto result = store.import_hazard_csv(csv);
    EXPECT_EQ(want_bad, 25u);
    EXPECT_EQ(result.imported, want_good);
    EXPECT_EQ(result.errors.size(), want_bad);
    std::set<std::size_t> got_lines;
    for (const auto& e : result.errors) got_lines.insert(e.row);
    EXPECT_EQ(got_lines, bad_lines);
    EXPECT_EQ(store.hazard_sites().size(), want_good);
}

TEST(ImportHazards, DuplicateIdLastRowWinsWithWarning) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    const auto csv = dir.path() / "h.csv";
    write_file(csv, kHeader + "\n" + hazard_row("A", "39.1", "-94.6") + "\n" + hazard_row("A", "39.2", "-94.7") + "\n");
    const auto result = store.import_hazard_csv(csv);
    EXPECT_EQ(result.imported, 1u);
    ASSERT_EQ(result.warnings.size(), 1u);
    EXPECT_NE(result.warnings[0].find("duplicate"), std::string::npos);
    EXPECT_EQ(store.hazard("A")->location, (GeoPoint{39.2, -94.7}));
}

TEST(ImportHazards, IdempotentAndColumnOrderFree) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    const auto csv = dir.path() / "h.csv";
    write_file(csv, "Latitude,longitude,site_id,name,contact_name,address,epa_url\n"
                    "39.1,-94.6,A,Plant,Pat,1 Main,https://x\n");
    store.import_hazard_csv(csv);
    const auto before = store.hazard_sites();
    store.import_hazard_csv(csv);
    EXPECT_EQ(store.hazard_sites(), before);
    EXPECT_EQ(before.size(), 1u);
}

TEST(ImportHazards, UnreadableOrHeaderless) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    EXPECT_THROW(store.import_hazard_csv(dir.path() / "missing.csv"), StorageError);
    const auto csv = dir.path() / "h.csv";
    write_file(csv, "site_id,name\nA,B\n");
    EXPECT_THROW(store.import_hazard_csv(csv), StorageError);
    write_file(csv, "");
    EXPECT_EQ(store.import_hazard_csv(csv).imported, 0u);
}

TEST(Persistence, TenReportsSurviveRestart) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    std::mt19937_64 rng(44);
    std::vector<PollutionReport> before;
    {
        CommunityStore store(dir.path(), clock);
        for (int i = 0; i < 10; ++i) store.submit_report(random_candidate(rng));
        before = store.list_reports();
    }
    CommunityStore again(dir.path(), clock);
    const auto reports = again.recover();
    EXPECT_EQ(reports[0].records, 10u);
    EXPECT_EQ(again.list_reports(), before);
}

TEST(Persistence, TornTailIsDiscardedWithWarning) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    std::mt19937_64 rng(45);
    {
        CommunityStore store(dir.path(), clock);
        for (int i = 0; i < 10; ++i) store.submit_report(random_candidate(rng));
    }
    const auto path = dir.path() / "reports.jsonl";
    auto text = read_file(path);
    text.resize(text.size() - 25);
    write_file(path, text);

    CommunityStore again(dir.path(), clock);
    const auto reports = again.recover();
    EXPECT_TRUE(reports[0].torn_tail_discarded);
    ASSERT_EQ(reports[0].warnings.size(), 1u);
    EXPECT_EQ(again.report_count(), 9u);
    // the file was cut back so further appends start on a clean line
    again.submit_report(random_candidate(rng));
    CommunityStore third(dir.path(), clock);
    EXPECT_FALSE(third.recover()[0].torn_tail_discarded);
    EXPECT_EQ(third.report_count(), 10u);
}

TEST(Persistence, MidFileCorruptionIsFatal) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    std::mt19937_64 rng(46);
    {
        CommunityStore store(dir.path(), clock);
        for (int i = 0; i < 5; ++i) store.submit_report(random_candidate(rng));
    }
    const auto path = dir.path() / "reports.jsonl";
    auto text = read_file(path);
    text.insert(text.find('\n') + 1, "{\"id\": broken\n");
    write_file(path, text);
    CommunityStore again(dir.path(), clock);
    EXPECT_THROW(again.recover(), StorageError);
}

TEST(Persistence, ReviewAndHazardsRecover) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    std::mt19937_64 rng(47);
    std::vector<PollutionReport> reports;
    std::vector<HazardSite> sites;
    {
        CommunityStore store(dir.path(), clock);
        for (int i = 0; i < 20; ++i) {
            clock.advance(Seconds{30});
            const auto r = store.submit_report(random_candidate(rng));
            if (i % 3 == 0) store.mark_reviewed(r.id);
        }
        const auto csv = dir.path() / "h.csv";
        write_file(csv, kHeader + "\n" + hazard_row("A", "39.1", "-94.6") + "\n" + hazard_row("B", "39.2", "-94.5"));
        store.import_hazard_csv(csv);
        write_file(csv, kHeader + "\n" + hazard_row("A", "39.15", "-94.65") + "\n");
        store.import_hazard_csv(csv);
        reports = store.list_reports();
        sites = store.hazard_sites();
    }
    CommunityStore again(dir.path(), clock);
    again.recover();
    EXPECT_EQ(again.list_reports(), reports);
    EXPECT_EQ(again.hazard_sites(), sites);
    EXPECT_EQ(again.hazard("A")->location, (GeoPoint{39.15, -94.65}));
}

TEST(Journal, MissingNewlineOnCompleteRecordIsRepaired) {
    TempDir dir;
    const auto path = dir.path() / "j.jsonl";
    write_file(path, "{\"a\":1}\n{\"a\":2}");
    JsonlJournal j(path);
    std::vector<int> seen;
    const auto report = j.recover([&](const nlohmann::json& rec, std::size_t) { seen.push_back(rec["a"]); });
    EXPECT_EQ(seen, (std::vector<int>{1, 2}));
    EXPECT_FALSE(report.torn_tail_discarded);
    j.append({{"a", 3}});
    EXPECT_EQ(read_file(path), "{\"a\":1}\n{\"a\":2}\n{\"a\":3}\n");
}

TEST(Journal, RewriteReplacesContent) {
    TempDir dir;
    const auto path = dir.path() / "j.jsonl";
    JsonlJournal j(path);
    j.append({{"a", 1}});
    j.rewrite({{{"b", 2}}});
    EXPECT_EQ(read_file(path), "{\"b\":2}\n");
    j.append({{"c", 3}});
    EXPECT_EQ(read_file(path), "{\"b\":2}\n{\"c\":3}\n");
}

TEST(Csv, QuotingAndLineNumbers) {
    const auto recs = csv::parse("a,b\r\n\"x, y\",\"say \"\"hi\"\"\"\n\n\"multi\nline\",z\nlast,1");
    ASSERT_EQ(recs.size(), 4u);
    EXPECT_EQ(recs[1].fields, (std::vector<std::string>{"x, y", "say \"hi\""}));
    EXPECT_EQ(recs[2].line, 4u);
    EXPECT_EQ(recs[2].fields[0], "multi\nline");
    EXPECT_EQ(recs[3].line, 6u);
    EXPECT_THROW(csv::parse("a,\"open\n"), ValidationError);
}

TEST(Csv, ExportRoundTrips) {
    TempDir dir;
    ManualClock clock(from_epoch(kT0));
    CommunityStore store(dir.path(), clock);
    auto c = candidate(39.08, -94.64, "odor", "smells like \"rotten eggs\", strong\nat night");
    c.reporter_contact = "a@b.c";
    store.submit_report(c);
    const auto reports = store.list_reports();
    const auto recs = csv::parse(reports_to_csv(reports));
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].fields, report_csv_columns());
    EXPECT_EQ(recs[1].fields[0], reports[0].id);
    EXPECT_EQ(std::stod(recs[1].fields[1]), 39.08);
    EXPECT_EQ(recs[1].fields[4], c.description);
    EXPECT_EQ(recs[1].fields[5], "a@b.c");
    EXPECT_EQ(recs[1].fields[6], format_iso8601(from_epoch(kT0)));
}
