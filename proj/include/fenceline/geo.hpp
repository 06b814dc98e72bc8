#pragma once

#include "fenceline/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fenceline {

struct GeoPoint {
    double lat = 0;
    double lon = 0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
    friend auto operator<=>(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid(const GeoPoint& p) {
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90 && p.lat <= 90 && p.lon >= -180 &&
           p.lon <= 180;
}

/// Throws ValidationError naming `field` when the point is out of range.
inline const GeoPoint& validated(const GeoPoint& p, const std::string& field = "location") {
    if (!std::isfinite(p.lat) || p.lat < -90 || p.lat > 90)
        throw ValidationError(field + ".lat", "latitude must be within [-90, 90]");
    if (!std::isfinite(p.lon) || p.lon < -180 || p.lon > 180)
        throw ValidationError(field + ".lon", "longitude must be within [-180, 180]");
    return p;
}

/// Web-Mercator pixel coordinates at a zoom level (256 px tiles).
struct PixelPoint {
    double x = 0;
    double y = 0;
    int zoom = 0;
};

struct BoundingBox {
    double min_lon = -180;
    double min_lat = -90;
    double max_lon = 180;
    double max_lat = 90;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

    static BoundingBox world() { return {}; }

    bool contains(const GeoPoint& p) const {
        return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
    }

    /// Antimeridian-crossing boxes (min_lon > max_lon) are rejected.
    const BoundingBox& validate() const {
        const bool finite = std::isfinite(min_lon) && std::isfinite(min_lat) && std::isfinite(max_lon) &&
                            std::isfinite(max_lat);
        if (!finite || min_lat > max_lat || min_lon > max_lon || min_lat < -90 || max_lat > 90 ||
            min_lon < -180 || max_lon > 180)
            throw ValidationError("bbox", "expected min_lon<=max_lon and min_lat<=max_lat within world bounds");
        return *this;
    }

    /// "min_lon,min_lat,max_lon,max_lat"
    static BoundingBox parse(std::string_view s) {
        double v[4];
        std::size_t start = 0;
        for (int i = 0; i < 4; ++i) {
            const auto comma = s.find(',', start);
            if ((i < 3) == (comma == std::string_view::npos))
                throw ValidationError("bbox", "expected four comma-separated numbers");
            const std::string part(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
            std::size_t used = 0;
            try {
                v[i] = std::stod(part, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != part.size())
                throw ValidationError("bbox", "expected four comma-separated numbers");
            start = comma + 1;
        }
        BoundingBox box{v[0], v[1], v[2], v[3]};
        box.validate();
        return box;
    }
};

inline constexpr double kEarthRadiusMeters = 6'371'000.0;
inline constexpr double kMercatorMaxLat = 85.05113;
inline constexpr double kTileSize = 256.0;
inline constexpr int kMaxZoom = 19;

namespace detail {

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

inline double world_size(int zoom) {
    if (zoom < 0 || zoom > kMaxZoom) throw DomainError("zoom must be within [0, 19]");
    return kTileSize * std::ldexp(1.0, zoom);
}

} // namespace detail

/// Great-circle distance in meters on a sphere of radius 6,371 km.
inline double haversine(GeoPoint a, GeoPoint b) {
    if (b < a) std::swap(a, b); // exact symmetry
    const double phi1 = detail::deg2rad(a.lat);
    const double phi2 = detail::deg2rad(b.lat);
    const double dphi = detail::deg2rad(b.lat - a.lat);
    const double dlambda = detail::deg2rad(b.lon - a.lon);
    const double s1 = std::sin(dphi / 2);
    const double s2 = std::sin(dlambda / 2);
    const double h = std::clamp(s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2, 0.0, 1.0);
    return 2 * kEarthRadiusMeters * std::asin(std::sqrt(h));
}

struct SensorLocation {
    std::string sensor_id;
    GeoPoint location;
};

struct NearestSensor {
    std::string sensor_id;
    double meters;
};

/// Closest sensor by haversine distance; ties go to the smallest id.
inline NearestSensor nearest_sensor(GeoPoint p, std::span<const SensorLocation> sensors) {
    if (sensors.empty()) throw NotFoundError("no sensors to search");
    const SensorLocation* best = nullptr;
    double best_d = 0;
    for (const auto& s : sensors) {
        const double d = haversine(p, s.location);
        if (!best || d < best_d || (d == best_d && s.sensor_id < best->sensor_id)) {
            best = &s;
            best_d = d;
        }
    }
    return {best->sensor_id, best_d};
}

inline PixelPoint project(GeoPoint p, int zoom) {
    const double size = detail::world_size(zoom);
    if (!(std::abs(p.lat) <= kMercatorMaxLat)) throw DomainError("latitude beyond the Web-Mercator limit");
    const double phi = detail::deg2rad(p.lat);
    const double x = (p.lon + 180.0) / 360.0 * size;
    const double y = (1.0 - std::log(std::tan(phi) + 1.0 / std::cos(phi)) / std::numbers::pi) / 2.0 * size;
    return {x, y, zoom};
}

inline GeoPoint unproject(PixelPoint px) {
    const double size = detail::world_size(px.zoom);
    const double lon = px.x / size * 360.0 - 180.0;
    const double lat = detail::rad2deg(std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * px.y / size))));
    return {lat, lon};
}

struct Site {
    std::string id;
    GeoPoint location;
};

struct Cluster {
    GeoPoint centroid;
    std::vector<std::string> member_ids; // seed first, then absorbed ids ascending

    std::size_t count() const { return member_ids.size(); }
};

inline constexpr double kDefaultClusterRadiusPx = 80.0;

/// Greedy seed absorption in pixel space. Sites are visited in ascending id
/// order; each unassigned site seeds a cluster and absorbs every unassigned
/// site within `radius_px` of the seed. Output is ordered by seed id.
inline std::vector<Cluster> cluster_sites(std::span<const Site> sites, int zoom,
                                          double radius_px = kDefaultClusterRadiusPx) {
    if (!(radius_px > 0)) throw DomainError("cluster radius must be positive");
    std::vector<std::size_t> order(sites.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sites[a].id < sites[b].id; });

    std::vector<PixelPoint> px(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
        GeoPoint p = sites[i].location;
        p.lat = std::clamp(p.lat, -kMercatorMaxLat, kMercatorMaxLat);
        px[i] = project(p, zoom);
    }

    const double r2 = radius_px * radius_px;
    std::vector<bool> assigned(sites.size(), false);
    std::vector<Cluster> out;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t seed = order[oi];
        if (assigned[seed]) continue;
        assigned[seed] = true;
        Cluster c;
        c.member_ids.push_back(sites[seed].id);
        double sum_lat = sites[seed].location.lat;
        double sum_lon = sites[seed].location.lon;
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (assigned[j]) continue;
            const double dx = px[j].x - px[seed].x;
            const double dy = px[j].y - px[seed].y;
            if (dx * dx + dy * dy <= r2) {
                assigned[j] = true;
                c.member_ids.push_back(sites[j].id);
                sum_lat += sites[j].location.lat;
                sum_lon += sites[j].location.lon;
            }
        }
        const auto n = static_cast<double>(c.member_ids.size());
        c.centroid = {sum_lat / n, sum_lon / n};
        out.push_back(std::move(c));
    }
    return out;
}

/// Items whose location (via `loc`) lies inside `box`, input order preserved.
template <class T, class LocationOf>
std::vector<T> bbox_filter(std::span<const T> items, const BoundingBox& box, LocationOf loc) {
    box.validate();
    std::vector<T> out;
    for (const auto& item : items)
        if (box.contains(loc(item))) out.push_back(item);
    return out;
}

inline std::vector<Site> bbox_filter(std::span<const Site> sites, const BoundingBox& box) {
    return bbox_filter(sites, box, [](const Site& s) { return s.location; });
}

} // namespace fenceline
