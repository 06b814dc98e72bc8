#pragma once

// Community pollution reports and hazardous-waste facility records, both kept
// in memory and journaled to JSONL files under a data directory.

#include "fenceline/csv.hpp"
#include "fenceline/errors.hpp"
#include "fenceline/geo.hpp"
#include "fenceline/journal.hpp"
#include "fenceline/time.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fenceline {

enum class ReportCategory { Smoke, Odor, Dust, IndustrialEmission, Other };
enum class ReportStatus { New, Reviewed };

inline constexpr std::array kReportCategories{ReportCategory::Smoke, ReportCategory::Odor, ReportCategory::Dust,
                                              ReportCategory::IndustrialEmission, ReportCategory::Other};

inline std::string_view to_string(ReportCategory c) {
    switch (c) {
        case ReportCategory::Smoke: return "smoke";
        case ReportCategory::Odor: return "odor";
        case ReportCategory::Dust: return "dust";
        case ReportCategory::IndustrialEmission: return "industrial_emission";
        case ReportCategory::Other: return "other";
    }
    return "?";
}

inline ReportCategory report_category_from_string(std::string_view s) {
    for (auto c : kReportCategories)
        if (to_string(c) == s) return c;
    throw ValidationError("category", "must be one of smoke, odor, dust, industrial_emission, other");
}

inline std::string_view to_string(ReportStatus s) { return s == ReportStatus::New ? "new" : "reviewed"; }

inline ReportStatus report_status_from_string(std::string_view s) {
    if (s == "new") return ReportStatus::New;
    if (s == "reviewed") return ReportStatus::Reviewed;
    throw ValidationError("status", "must be 'new' or 'reviewed'");
}

inline constexpr std::size_t kMaxDescriptionChars = 2000;

/// Kansas City, KS/MO metro.
inline constexpr BoundingBox kDefaultServiceArea{-94.95, 38.8, -94.35, 39.4};

struct PollutionReport {
    std::string id;
    GeoPoint location;
    ReportCategory category = ReportCategory::Other;
    std::string description;
    std::optional<std::string> reporter_contact;
    Instant created_at;
    ReportStatus status = ReportStatus::New;

    friend bool operator==(const PollutionReport&, const PollutionReport&) = default;
};

struct HazardSite {
    std::string site_id;
    std::string name;
    std::string contact_name;
    std::string address;
    GeoPoint location;
    std::string epa_url;

    friend bool operator==(const HazardSite&, const HazardSite&) = default;
};

/// Client-supplied report fields, before validation.
struct ReportCandidate {
    std::optional<GeoPoint> location;
    std::string category;
    std::string description;
    std::optional<std::string> reporter_contact;

    /// Collects every type problem into one ValidationError.
    static ReportCandidate from_json(const nlohmann::json& j) {
        if (!j.is_object()) throw ValidationError("body", "expected a JSON object");
        ReportCandidate c;
        std::vector<FieldError> errors;
        const auto loc = j.find("location");
        if (loc == j.end() || !loc->is_object()) {
            errors.push_back({"location", "expected an object with numeric lat and lon"});
        } else {
            const auto lat = loc->find("lat");
            const auto lon = loc->find("lon");
            if (lat == loc->end() || !lat->is_number()) errors.push_back({"location.lat", "expected a number"});
            if (lon == loc->end() || !lon->is_number()) errors.push_back({"location.lon", "expected a number"});
            if (errors.empty()) c.location = GeoPoint{lat->get<double>(), lon->get<double>()};
        }
        const auto string_field = [&](const char* key, std::string& out, bool required) {
            const auto it = j.find(key);
            if (it == j.end() || it->is_null()) {
                if (required) errors.push_back({key, "required"});
                return false;
            }
            if (!it->is_string()) {
                errors.push_back({key, "expected a string"});
                return false;
            }
            out = it->get<std::string>();
            return true;
        };
        string_field("category", c.category, true);
        string_field("description", c.description, true);
        std::string contact;
        if (string_field("reporter_contact", contact, false)) c.reporter_contact = contact;
        if (!errors.empty()) throw ValidationError("invalid report", std::move(errors));
        return c;
    }
};

struct ReportFilter {
    std::optional<ReportStatus> status;
    std::optional<BoundingBox> bbox;
    std::optional<Instant> from; // inclusive, on created_at
    std::optional<Instant> to;   // inclusive

    bool matches(const PollutionReport& r) const {
        return (!status || r.status == *status) && (!bbox || bbox->contains(r.location)) &&
               (!from || r.created_at >= *from) && (!to || r.created_at <= *to);
    }
};

struct RowError {
    std::size_t row; // physical CSV line, header is line 1
    std::string field;
    std::string message;
};

struct ImportResult {
    std::size_t imported = 0;
    std::vector<RowError> errors;
    std::vector<std::string> warnings;
};

// ---- JSON mapping --------------------------------------------------------

inline nlohmann::json to_json(const GeoPoint& p) { return {{"lat", p.lat}, {"lon", p.lon}}; }

inline nlohmann::json to_json(const PollutionReport& r) {
    return {{"id", r.id},
            {"location", to_json(r.location)},
            {"category", to_string(r.category)},
            {"description", r.description},
            {"reporter_contact", r.reporter_contact ? nlohmann::json(*r.reporter_contact) : nlohmann::json()},
            {"created_at", format_iso8601(r.created_at)},
            {"status", to_string(r.status)}};
}

inline nlohmann::json to_json(const HazardSite& s) {
    return {{"site_id", s.site_id}, {"name", s.name},         {"contact_name", s.contact_name},
            {"address", s.address}, {"location", to_json(s.location)}, {"epa_url", s.epa_url}};
}

inline PollutionReport report_from_json(const nlohmann::json& j) {
    PollutionReport r;
    r.id = j.at("id").get<std::string>();
    r.location = {j.at("location").at("lat").get<double>(), j.at("location").at("lon").get<double>()};
    r.category = report_category_from_string(j.at("category").get<std::string>());
    r.description = j.at("description").get<std::string>();
    if (const auto& c = j.at("reporter_contact"); !c.is_null()) r.reporter_contact = c.get<std::string>();
    r.created_at = parse_iso8601(j.at("created_at").get<std::string>());
    r.status = report_status_from_string(j.at("status").get<std::string>());
    if (r.id.empty()) throw ValidationError("id", "empty");
    return r;
}

inline HazardSite hazard_from_json(const nlohmann::json& j) {
    HazardSite s{j.at("site_id").get<std::string>(),
                 j.at("name").get<std::string>(),
                 j.at("contact_name").get<std::string>(),
                 j.at("address").get<std::string>(),
                 {j.at("location").at("lat").get<double>(), j.at("location").at("lon").get<double>()},
                 j.at("epa_url").get<std::string>()};
    if (s.site_id.empty()) throw ValidationError("site_id", "empty");
    validated(s.location);
    return s;
}

inline const std::vector<std::string>& report_csv_columns() {
    static const std::vector<std::string> cols{"id",          "lat",              "lon",        "category",
                                               "description", "reporter_contact", "created_at", "status"};
    return cols;
}

/// Evidence export; columns mirror PollutionReport.
inline std::string reports_to_csv(const std::vector<PollutionReport>& reports) {
    std::string out = csv::format_row(report_csv_columns());
    for (const auto& r : reports) {
        std::ostringstream lat, lon;
        lat.precision(17);
        lon.precision(17);
        lat << r.location.lat;
        lon << r.location.lon;
        out += csv::format_row({r.id, lat.str(), lon.str(), std::string(to_string(r.category)), r.description,
                                r.reporter_contact.value_or(""), format_iso8601(r.created_at),
                                std::string(to_string(r.status))});
    }
    return out;
}

namespace detail {

inline std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::size_t used = 0;
    double v;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (used != s.size()) return std::nullopt;
    return v;
}

} // namespace detail

inline const std::array<const char*, 7>& hazard_csv_columns() {
    static const std::array<const char*, 7> cols{"site_id",  "name",      "contact_name", "address",
                                                 "latitude", "longitude", "epa_url"};
    return cols;
}

// ---- store ---------------------------------------------------------------

class CommunityStore {
public:
    CommunityStore(const std::filesystem::path& data_dir, Clock& clock,
                   BoundingBox service_area = kDefaultServiceArea)
        : reports_journal_(data_dir / "reports.jsonl"), hazards_journal_(data_dir / "hazards.jsonl"),
          clock_(clock), service_area_(service_area.validate()), rng_(std::random_device{}()) {}

    const BoundingBox& service_area() const { return service_area_; }

    /// Rebuilds state from both journals. Throws StorageError on mid-file damage.
    std::vector<RecoveryReport> recover() {
        std::unique_lock lock(mu_);
        reports_.clear();
        hazards_.clear();
        auto r = reports_journal_.recover([&](const nlohmann::json& j, std::size_t) {
            auto rep = report_from_json(j);
            reports_[rep.id] = std::move(rep);
        });
        auto h = hazards_journal_.recover([&](const nlohmann::json& j, std::size_t) {
            auto site = hazard_from_json(j);
            hazards_[site.site_id] = std::move(site);
        });
        return {std::move(r), std::move(h)};
    }

    PollutionReport submit_report(const ReportCandidate& c) {
        std::vector<FieldError> errors;
        std::optional<ReportCategory> category;
        try {
            category = report_category_from_string(c.category);
        } catch (const ValidationError& e) {
            errors.insert(errors.end(), e.fields().begin(), e.fields().end());
        }
        const std::string trimmed = detail::trim(c.description);
        if (trimmed.empty())
            errors.push_back({"description", "must not be empty"});
        else if (detail::utf8_length(c.description) > kMaxDescriptionChars)
            errors.push_back({"description", "must be at most 2000 characters"});
        if (!c.location) {
            errors.push_back({"location", "required"});
        } else {
            try {
                validated(*c.location);
            } catch (const ValidationError& e) {
                errors.insert(errors.end(), e.fields().begin(), e.fields().end());
            }
        }
        if (!errors.empty()) throw ValidationError("invalid report", std::move(errors));
        if (!service_area_.contains(*c.location)) throw OutOfServiceArea(service_area_);

        std::unique_lock lock(mu_);
        PollutionReport r{new_id(), *c.location, *category, c.description, c.reporter_contact, clock_.now(),
                          ReportStatus::New};
        reports_journal_.append(to_json(r));
        reports_[r.id] = r;
        return r;
    }

    /// new -> reviewed; reviewing twice is a no-op.
    PollutionReport mark_reviewed(const std::string& id) {
        std::unique_lock lock(mu_);
        const auto it = reports_.find(id);
        if (it == reports_.end()) throw NotFoundError("unknown report '" + id + "'");
        if (it->second.status == ReportStatus::Reviewed) return it->second;
        PollutionReport updated = it->second;
        updated.status = ReportStatus::Reviewed;
        reports_journal_.append(to_json(updated));
        it->second = updated;
        return updated;
    }

    /// Newest first; equal timestamps ordered by id.
    std::vector<PollutionReport> list_reports(const ReportFilter& filter = {}) const {
        std::shared_lock lock(mu_);
        std::vector<PollutionReport> out;
        for (const auto& [_, r] : reports_)
            if (filter.matches(r)) out.push_back(r);
        std::sort(out.begin(), out.end(), [](const PollutionReport& a, const PollutionReport& b) {
            return a.created_at != b.created_at ? a.created_at > b.created_at : a.id < b.id;
        });
        return out;
    }

    std::size_t report_count() const {
        std::shared_lock lock(mu_);
        return reports_.size();
    }

    /// Ordered by site_id.
    std::vector<HazardSite> hazard_sites() const {
        std::shared_lock lock(mu_);
        std::vector<HazardSite> out;
        for (const auto& [_, s] : hazards_) out.push_back(s);
        return out;
    }

    std::optional<HazardSite> hazard(const std::string& site_id) const {
        std::shared_lock lock(mu_);
        const auto it = hazards_.find(site_id);
        if (it == hazards_.end()) return std::nullopt;
        return it->second;
    }

    /// Header-first CSV: site_id,name,contact_name,address,latitude,longitude,epa_url
    /// (any column order). Bad rows are reported and skipped; good rows are
    /// upserted by site_id, the last occurrence in the file winning.
    ImportResult import_hazard_csv(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in || std::filesystem::is_directory(path)) throw StorageError("cannot read " + path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        std::vector<csv::Record> records;
        try {
            records = csv::parse(buf.str());
        } catch (const ValidationError& e) {
            throw StorageError(path.string() + ": " + e.what());
        }

        ImportResult result;
        if (records.empty()) return result;

        std::map<std::string, std::size_t> col;
        for (std::size_t i = 0; i < records[0].fields.size(); ++i) {
            std::string name = detail::trim(records[0].fields[i]);
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
            col[name] = i;
        }
        for (const char* required : hazard_csv_columns())
            if (!col.contains(required))
                throw StorageError(path.string() + ": header lacks column '" + required + "'");

        std::map<std::string, HazardSite> batch;
        for (std::size_t k = 1; k < records.size(); ++k) {
            const auto& rec = records[k];
            if (rec.fields.size() != records[0].fields.size()) {
                result.errors.push_back({rec.line, "row",
                                         "expected " + std::to_string(records[0].fields.size()) + " fields, got " +
                                             std::to_string(rec.fields.size())});
                continue;
            }
            const auto field = [&](const char* name) { return detail::trim(rec.fields[col.at(name)]); };
            const std::size_t before = result.errors.size();
            HazardSite site{field("site_id"), field("name"), field("contact_name"), field("address"), {},
                            field("epa_url")};
            if (site.site_id.empty()) result.errors.push_back({rec.line, "site_id", "missing"});
            const auto lat = detail::parse_number(field("latitude"));
            const auto lon = detail::parse_number(field("longitude"));
            if (!lat || !std::isfinite(*lat) || *lat < -90 || *lat > 90)
                result.errors.push_back({rec.line, "latitude", "must be a number within [-90, 90]"});
            if (!lon || !std::isfinite(*lon) || *lon < -180 || *lon > 180)
                result.errors.push_back({rec.line, "longitude", "must be a number within [-180, 180]"});
            if (result.errors.size() != before) continue;
            site.location = {*lat, *lon};
            if (batch.contains(site.site_id))
                result.warnings.push_back("line " + std::to_string(rec.line) + ": duplicate site_id '" +
                                          site.site_id + "', later row wins");
            batch[site.site_id] = std::move(site);
        }
        for (const auto& w : result.warnings) spdlog::warn("{}: {}", path.string(), w);

        std::unique_lock lock(mu_);
        for (auto& [id, site] : batch) {
            hazards_journal_.append(to_json(site));
            hazards_[id] = std::move(site);
        }
        result.imported = batch.size();
        return result;
    }

    class OutOfServiceArea : public ValidationError {
    public:
        explicit OutOfServiceArea(const BoundingBox& area)
            : ValidationError("location", describe(area)) {}

    private:
        static std::string describe(const BoundingBox& a) {
            std::ostringstream s;
            s << "outside the service area (lat " << a.min_lat << " to " << a.max_lat << ", lon " << a.min_lon
              << " to " << a.max_lon << ")";
            return s.str();
        }
    };

private:
    std::string new_id() {
        static constexpr char kHex[] = "0123456789abcdef";
        for (;;) {
            std::string id;
            for (int w = 0; w < 2; ++w) {
                auto v = rng_();
                for (int i = 0; i < 16; ++i, v >>= 4) id += kHex[v & 0xF];
            }
            if (!reports_.contains(id)) return id;
        }
    }

    JsonlJournal reports_journal_;
    JsonlJournal hazards_journal_;
    Clock& clock_;
    BoundingBox service_area_;
    std::mt19937_64 rng_;
    mutable std::shared_mutex mu_;
    std::map<std::string, PollutionReport> reports_;
    std::map<std::string, HazardSite> hazards_;
};

} // namespace fenceline
