#pragma once

// PM2.5 -> AQI conversion, health categories and the green/yellow/red marker
// scale. Everything is driven by an AqiScale so the breakpoint vintage can be
// swapped by loading another JSON document.

#include "fenceline/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fenceline {

/// Mass density of PM2.5 in µg/m³.
using Concentration = double;
/// EPA index value, 0..500 with the default scale.
using AqiValue = int;

enum class Category {
    Good,
    Moderate,
    UnhealthyForSensitiveGroups,
    Unhealthy,
    VeryUnhealthy,
    Hazardous,
};

inline constexpr std::array kAllCategories{
    Category::Good,      Category::Moderate,      Category::UnhealthyForSensitiveGroups,
    Category::Unhealthy, Category::VeryUnhealthy, Category::Hazardous,
};

inline std::string_view to_string(Category c) {
    switch (c) {
        case Category::Good: return "Good";
        case Category::Moderate: return "Moderate";
        case Category::UnhealthyForSensitiveGroups: return "UnhealthyForSensitiveGroups";
        case Category::Unhealthy: return "Unhealthy";
        case Category::VeryUnhealthy: return "VeryUnhealthy";
        case Category::Hazardous: return "Hazardous";
    }
    return "?";
}

inline Category category_from_string(std::string_view s) {
    for (auto c : kAllCategories)
        if (to_string(c) == s) return c;
    throw ValidationError("category", "unknown AQI category '" + std::string(s) + "'");
}

struct ColorRgb {
    int r = 0;
    int g = 0;
    int b = 0;

    friend bool operator==(const ColorRgb&, const ColorRgb&) = default;

    /// "#RRGGBB", uppercase.
    std::string hex() const {
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02X%02X%02X", r, g, b);
        return buf;
    }

    static ColorRgb from_hex(std::string_view s) {
        const auto nibble = [&](char ch) -> int {
            if (ch >= '0' && ch <= '9') return ch - '0';
            if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
            if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
            throw ValidationError("color", "bad hex color '" + std::string(s) + "'");
        };
        if (s.size() != 7 || s[0] != '#') throw ValidationError("color", "bad hex color '" + std::string(s) + "'");
        return {nibble(s[1]) * 16 + nibble(s[2]), nibble(s[3]) * 16 + nibble(s[4]),
                nibble(s[5]) * 16 + nibble(s[6])};
    }
};

struct Breakpoint {
    Concentration conc_low;
    Concentration conc_high;
    AqiValue index_low;
    AqiValue index_high;
    Category category;
};

struct CategoryInfo {
    Category name;
    AqiValue index_low;
    AqiValue index_high;
    std::string guidance;
    ColorRgb reference_color;
};

struct ColorAnchor {
    AqiValue aqi;
    ColorRgb color;
};

/// A category's extent in concentration space, used for chart background bands.
struct Band {
    Category category;
    Concentration conc_low;
    Concentration conc_high;
    AqiValue index_low;
    AqiValue index_high;
    ColorRgb color;
};

namespace detail {

inline std::int64_t to_tenths(Concentration c) {
    return static_cast<std::int64_t>(std::floor(c * 10.0 + 1e-9));
}

} // namespace detail

/// Discards digits beyond the first decimal place. The 1e-9 slack absorbs
/// binary representation error so that e.g. 36.3 stays 36.3.
inline Concentration truncate_concentration(Concentration c) {
    if (std::isnan(c) || c < 0) throw DomainError("concentration must be >= 0");
    return static_cast<double>(detail::to_tenths(c)) / 10.0;
}

class AqiScale {
public:
    AqiScale(std::vector<Breakpoint> breakpoints, std::vector<CategoryInfo> categories,
             std::vector<ColorAnchor> anchors)
        : breakpoints_(std::move(breakpoints)), categories_(std::move(categories)),
          anchors_(std::move(anchors)) {
        validate();
        document_ = to_json().dump(2);
    }

    /// Pre-2024 EPA PM2.5 breakpoints.
    static const AqiScale& standard() {
        static const AqiScale scale{
            {
                {0.0, 12.0, 0, 50, Category::Good},
                {12.1, 35.4, 51, 100, Category::Moderate},
                {35.5, 55.4, 101, 150, Category::UnhealthyForSensitiveGroups},
                {55.5, 150.4, 151, 200, Category::Unhealthy},
                {150.5, 250.4, 201, 300, Category::VeryUnhealthy},
                {250.5, 350.4, 301, 400, Category::Hazardous},
                {350.5, 500.4, 401, 500, Category::Hazardous},
            },
            {
                {Category::Good, 0, 50,
                 "Air quality is satisfactory, and air pollution poses little or no risk.",
                 {0, 228, 0}},
                {Category::Moderate, 51, 100,
                 "Air quality is acceptable. However, there may be a risk for some people, particularly "
                 "those who are unusually sensitive to air pollution.",
                 {255, 255, 0}},
                {Category::UnhealthyForSensitiveGroups, 101, 150,
                 "Members of sensitive groups may experience health effects. The general public is less "
                 "likely to be affected.",
                 {255, 126, 0}},
                {Category::Unhealthy, 151, 200,
                 "Some members of the general public may experience health effects; members of sensitive "
                 "groups may experience more serious health effects.",
                 {255, 0, 0}},
                {Category::VeryUnhealthy, 201, 300,
                 "Health alert: The risk of health effects is increased for everyone.",
                 {143, 63, 151}},
                {Category::Hazardous, 301, 500,
                 "Health warning of emergency conditions: everyone is more likely to be affected.",
                 {126, 0, 35}},
            },
            {{0, {0, 228, 0}}, {100, {255, 255, 0}}, {200, {255, 0, 0}}},
        };
        return scale;
    }

    /// Parses a scale document. The text is kept so it can be served verbatim.
    static AqiScale from_json_text(std::string text) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("AQI scale is not valid JSON: ") + e.what());
        }
        AqiScale scale = from_json(doc);
        scale.document_ = std::move(text);
        return scale;
    }

    static AqiScale from_json(const nlohmann::json& doc) {
        try {
            std::vector<Breakpoint> bps;
            for (const auto& row : doc.at("breakpoints"))
                bps.push_back({row.at("conc_low").get<double>(), row.at("conc_high").get<double>(),
                               row.at("index_low").get<int>(), row.at("index_high").get<int>(),
                               category_from_string(row.at("category").get<std::string>())});
            std::vector<CategoryInfo> cats;
            for (const auto& c : doc.at("categories"))
                cats.push_back({category_from_string(c.at("name").get<std::string>()),
                                c.at("index_low").get<int>(), c.at("index_high").get<int>(),
                                c.at("guidance").get<std::string>(),
                                ColorRgb::from_hex(c.at("color").get<std::string>())});
            std::vector<ColorAnchor> anchors;
            for (const auto& a : doc.at("color_anchors"))
                anchors.push_back({a.at("aqi").get<int>(), ColorRgb::from_hex(a.at("color").get<std::string>())});
            return AqiScale(std::move(bps), std::move(cats), std::move(anchors));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("malformed AQI scale: ") + e.what());
        } catch (const ValidationError& e) {
            throw ConfigError(std::string("malformed AQI scale: ") + e.what());
        }
    }

    nlohmann::json to_json() const {
        auto bps = nlohmann::json::array();
        for (const auto& b : breakpoints_)
            bps.push_back({{"conc_low", b.conc_low},
                           {"conc_high", b.conc_high},
                           {"index_low", b.index_low},
                           {"index_high", b.index_high},
                           {"category", to_string(b.category)}});
        auto cats = nlohmann::json::array();
        for (const auto& c : categories_)
            cats.push_back({{"name", to_string(c.name)},
                            {"index_low", c.index_low},
                            {"index_high", c.index_high},
                            {"guidance", c.guidance},
                            {"color", c.reference_color.hex()}});
        auto anchors = nlohmann::json::array();
        for (const auto& a : anchors_) anchors.push_back({{"aqi", a.aqi}, {"color", a.color.hex()}});
        return {{"breakpoints", bps}, {"categories", cats}, {"color_anchors", anchors}};
    }

    /// The document this scale was loaded from (or the serialized default).
    const std::string& document() const { return document_; }

    const std::vector<Breakpoint>& breakpoints() const { return breakpoints_; }
    const std::vector<CategoryInfo>& categories() const { return categories_; }
    const std::vector<ColorAnchor>& color_anchors() const { return anchors_; }
    AqiValue max_aqi() const { return breakpoints_.back().index_high; }

    /// Truncate, locate the breakpoint row, interpolate, round half-up.
    /// Values above the top row clamp to its index_high.
    AqiValue to_aqi(Concentration c) const {
        if (std::isnan(c) || c < 0) throw DomainError("concentration must be >= 0");
        const std::int64_t t = detail::to_tenths(c);
        for (const auto& row : breakpoints_) {
            const auto lo = detail::to_tenths(row.conc_low);
            const auto hi = detail::to_tenths(row.conc_high);
            if (t < lo || t > hi) continue;
            if (hi == lo) return row.index_low;
            const std::int64_t num = static_cast<std::int64_t>(row.index_high - row.index_low) * (t - lo);
            const std::int64_t den = hi - lo;
            return row.index_low + static_cast<AqiValue>((2 * num + den) / (2 * den));
        }
        return max_aqi();
    }

    const CategoryInfo& category(AqiValue aqi) const {
        check_range(aqi);
        for (const auto& c : categories_)
            if (aqi >= c.index_low && aqi <= c.index_high) return c;
        throw DomainError("no category covers AQI " + std::to_string(aqi));
    }

    /// Piecewise-linear over the anchors, each channel rounded half-up;
    /// clamped to the end anchors.
    ColorRgb color(AqiValue aqi) const {
        check_range(aqi);
        if (aqi <= anchors_.front().aqi) return anchors_.front().color;
        if (aqi >= anchors_.back().aqi) return anchors_.back().color;
        const auto hi_it = std::upper_bound(anchors_.begin(), anchors_.end(), aqi,
                                            [](int a, const ColorAnchor& anchor) { return a < anchor.aqi; });
        const auto& lo = *(hi_it - 1);
        const auto& hi = *hi_it;
        const std::int64_t d = hi.aqi - lo.aqi;
        const std::int64_t x = aqi - lo.aqi;
        const auto lerp = [&](int a, int b) {
            const std::int64_t num = static_cast<std::int64_t>(a) * d + static_cast<std::int64_t>(b - a) * x;
            return static_cast<int>((2 * num + d) / (2 * d));
        };
        return {lerp(lo.color.r, hi.color.r), lerp(lo.color.g, hi.color.g), lerp(lo.color.b, hi.color.b)};
    }

    std::vector<Band> bands() const {
        std::vector<Band> out;
        for (const auto& c : categories_) {
            std::optional<Band> band;
            for (const auto& row : breakpoints_) {
                if (row.category != c.name) continue;
                if (!band)
                    band = Band{c.name, row.conc_low, row.conc_high, c.index_low, c.index_high, c.reference_color};
                band->conc_low = std::min(band->conc_low, row.conc_low);
                band->conc_high = std::max(band->conc_high, row.conc_high);
            }
            if (band) out.push_back(*band);
        }
        return out;
    }

private:
    void check_range(AqiValue aqi) const {
        if (aqi < 0 || aqi > max_aqi())
            throw DomainError("AQI " + std::to_string(aqi) + " outside [0, " + std::to_string(max_aqi()) + "]");
    }

    void validate() const {
        const auto fail = [](const std::string& m) { throw ConfigError("AQI scale: " + m); };
        if (breakpoints_.empty()) fail("no breakpoints");
        if (categories_.empty()) fail("no categories");
        if (anchors_.size() < 2) fail("need at least two color anchors");
        if (detail::to_tenths(breakpoints_.front().conc_low) != 0 || breakpoints_.front().index_low != 0)
            fail("first breakpoint must start at 0");
        for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
            const auto& b = breakpoints_[i];
            if (b.conc_low > b.conc_high || b.index_low > b.index_high) fail("inverted breakpoint row");
            if (i > 0) {
                const auto& p = breakpoints_[i - 1];
                if (detail::to_tenths(b.conc_low) != detail::to_tenths(p.conc_high) + 1 ||
                    b.index_low != p.index_high + 1)
                    fail("breakpoints must be contiguous");
            }
        }
        if (categories_.front().index_low != 0) fail("categories must start at 0");
        for (std::size_t i = 0; i < categories_.size(); ++i) {
            const auto& c = categories_[i];
            if (c.index_low > c.index_high) fail("inverted category range");
            if (c.guidance.empty()) fail("empty guidance for " + std::string(to_string(c.name)));
            if (i > 0 && c.index_low != categories_[i - 1].index_high + 1) fail("categories must tile the index");
        }
        if (categories_.back().index_high != breakpoints_.back().index_high)
            fail("categories must end at the top breakpoint index");
        for (std::size_t i = 1; i < anchors_.size(); ++i)
            if (anchors_[i].aqi <= anchors_[i - 1].aqi) fail("color anchors must ascend");
        for (const auto& a : anchors_)
            for (int ch : {a.color.r, a.color.g, a.color.b})
                if (ch < 0 || ch > 255) fail("color channel out of range");
    }

    std::vector<Breakpoint> breakpoints_;
    std::vector<CategoryInfo> categories_;
    std::vector<ColorAnchor> anchors_;
    std::string document_;
};

inline AqiValue pm25_to_aqi(Concentration c) { return AqiScale::standard().to_aqi(c); }
inline const CategoryInfo& aqi_category(AqiValue aqi) { return AqiScale::standard().category(aqi); }
inline ColorRgb marker_color(AqiValue aqi) { return AqiScale::standard().color(aqi); }

} // namespace fenceline
