#pragma once

// Operator configuration: a JSON file mirroring the environment keys,
// overridden by environment variables, overridden by command-line flags.

#include "fenceline/errors.hpp"
#include "fenceline/geo.hpp"
#include "fenceline/ingest.hpp"
#include "fenceline/reports.hpp"
#include "fenceline/timeseries.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fenceline {

inline constexpr std::array<const char*, 13> kConfigKeys{
    "UPSTREAM_BASE_URL", "UPSTREAM_API_KEY",  "SENSOR_IDS", "POLL_INTERVAL_SECS", "MIN_REQUEST_INTERVAL_SECS",
    "REQUEST_TIMEOUT_SECS", "ADMIN_TOKEN",    "BIND_ADDR",  "DATA_DIR",           "RETENTION_SECS",
    "AQI_SCALE_PATH",    "SERVICE_BBOX",      "SENSORS",
};

struct SensorDescriptor {
    std::string id;
    std::string name;
    std::optional<GeoPoint> location;
};

struct BindAddress {
    std::string host;
    int port;
};

struct ServiceConfig {
    UpstreamConfig upstream;
    std::vector<SensorDescriptor> sensors; // display metadata, optional
    std::string bind_addr = "127.0.0.1:8080";
    std::optional<std::string> admin_token;
    std::filesystem::path data_dir = "data";
    Seconds retention = kDefaultRetention;
    std::optional<std::filesystem::path> aqi_scale_path;
    BoundingBox service_area = kDefaultServiceArea;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline EnvLookup process_env() {
    return [](const std::string& key) -> std::optional<std::string> {
        if (const char* v = std::getenv(key.c_str())) return std::string(v);
        return std::nullopt;
    };
}

inline BindAddress parse_bind_addr(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ConfigError("BIND_ADDR must be host:port, got '" + s + "'");
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(s.substr(colon + 1), &used);
        if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("BIND_ADDR port is not a number: '" + s + "'");
    }
    if (port < 0 || port > 65535) throw ConfigError("BIND_ADDR port out of range");
    return {s.substr(0, colon), port};
}

namespace config_detail {

inline std::int64_t as_int(const nlohmann::json& v, const char* key) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_string()) {
        try {
            std::size_t used = 0;
            const auto s = v.get<std::string>();
            const auto n = std::stoll(s, &used);
            if (used == s.size()) return n;
        } catch (const std::exception&) {
        }
    }
    throw ConfigError(std::string(key) + " must be an integer");
}

inline std::string as_string(const nlohmann::json& v, const char* key) {
    if (!v.is_string()) throw ConfigError(std::string(key) + " must be a string");
    return v.get<std::string>();
}

inline std::vector<std::string> as_list(const nlohmann::json& v, const char* key) {
    std::vector<std::string> out;
    if (v.is_array()) {
        for (const auto& e : v) out.push_back(as_string(e, key));
    } else {
        std::stringstream ss(as_string(v, key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) out.push_back(item);
        }
    }
    return out;
}

} // namespace config_detail

/// Merges the three sources (flags > env > file) and validates the result.
/// Throws ConfigError; a missing or unparseable file is a ConfigError too.
inline ServiceConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                                 const std::map<std::string, std::string>& flags = {}) {
    using namespace config_detail;
    std::map<std::string, nlohmann::json> merged;
    if (file) {
        std::ifstream in(*file);
        if (!in || std::filesystem::is_directory(*file)) throw ConfigError("cannot read config file " + file->string());
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file " + file->string() + " is not valid JSON: " + e.what());
        }
        if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
        for (const auto& [k, v] : doc.items()) {
            if (std::find_if(kConfigKeys.begin(), kConfigKeys.end(), [&](const char* key) { return k == key; }) ==
                kConfigKeys.end())
                throw ConfigError("unknown config key '" + k + "'");
            merged[k] = v;
        }
    }
    for (const char* key : kConfigKeys)
        if (const auto v = env(key)) merged[key] = *v;
    for (const auto& [k, v] : flags) merged[k] = v;

    ServiceConfig cfg;
    const auto get = [&](const char* key) -> const nlohmann::json* {
        const auto it = merged.find(key);
        return it == merged.end() || it->second.is_null() ? nullptr : &it->second;
    };
    if (auto v = get("UPSTREAM_BASE_URL")) cfg.upstream.base_url = as_string(*v, "UPSTREAM_BASE_URL");
    if (auto v = get("UPSTREAM_API_KEY")) cfg.upstream.api_key = as_string(*v, "UPSTREAM_API_KEY");
    if (auto v = get("SENSOR_IDS")) cfg.upstream.sensor_ids = as_list(*v, "SENSOR_IDS");
    if (auto v = get("POLL_INTERVAL_SECS")) cfg.upstream.poll_interval = Seconds{as_int(*v, "POLL_INTERVAL_SECS")};
    if (auto v = get("MIN_REQUEST_INTERVAL_SECS"))
        cfg.upstream.min_request_interval = Seconds{as_int(*v, "MIN_REQUEST_INTERVAL_SECS")};
    if (auto v = get("REQUEST_TIMEOUT_SECS"))
        cfg.upstream.request_timeout = Seconds{as_int(*v, "REQUEST_TIMEOUT_SECS")};
    if (auto v = get("ADMIN_TOKEN")) {
        auto token = as_string(*v, "ADMIN_TOKEN");
        if (!token.empty()) cfg.admin_token = std::move(token);
    }
    if (auto v = get("BIND_ADDR")) cfg.bind_addr = as_string(*v, "BIND_ADDR");
    if (auto v = get("DATA_DIR")) cfg.data_dir = as_string(*v, "DATA_DIR");
    if (auto v = get("RETENTION_SECS")) cfg.retention = Seconds{as_int(*v, "RETENTION_SECS")};
    if (auto v = get("AQI_SCALE_PATH")) cfg.aqi_scale_path = as_string(*v, "AQI_SCALE_PATH");
    if (auto v = get("SERVICE_BBOX")) {
        try {
            if (v->is_array() && v->size() == 4)
                cfg.service_area = BoundingBox{(*v)[0].get<double>(), (*v)[1].get<double>(), (*v)[2].get<double>(),
                                               (*v)[3].get<double>()}.validate();
            else
                cfg.service_area = BoundingBox::parse(as_string(*v, "SERVICE_BBOX"));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("SERVICE_BBOX: ") + e.what());
        }
    }
    if (auto v = get("SENSORS")) {
        if (!v->is_array()) throw ConfigError("SENSORS must be an array of {id, name, lat, lon}");
        for (const auto& s : *v) {
            try {
                SensorDescriptor d{s.at("id").get<std::string>(), s.value("name", std::string{}), std::nullopt};
                if (s.contains("lat") && s.contains("lon"))
                    d.location = validated(GeoPoint{s.at("lat").get<double>(), s.at("lon").get<double>()});
                if (std::find(cfg.upstream.sensor_ids.begin(), cfg.upstream.sensor_ids.end(), d.id) ==
                    cfg.upstream.sensor_ids.end())
                    cfg.upstream.sensor_ids.push_back(d.id);
                cfg.sensors.push_back(std::move(d));
            } catch (const std::exception& e) {
                throw ConfigError(std::string("SENSORS entry invalid: ") + e.what());
            }
        }
    }

    cfg.upstream.validate(/*require_sensors=*/false);
    parse_bind_addr(cfg.bind_addr);
    if (cfg.retention < duration(Window::Week1) + Seconds{24 * 3600})
        throw ConfigError("RETENTION_SECS must be at least 691200 (one week plus one day)");
    return cfg;
}

/// Effective settings for the startup banner, secrets replaced by "***".
inline nlohmann::json redacted(const ServiceConfig& c) {
    const auto secret = [](const std::optional<std::string>& s) { return s ? nlohmann::json("***") : nlohmann::json(); };
    return {{"UPSTREAM_BASE_URL", c.upstream.base_url},
            {"UPSTREAM_API_KEY", secret(c.upstream.api_key)},
            {"SENSOR_IDS", c.upstream.sensor_ids},
            {"POLL_INTERVAL_SECS", c.upstream.poll_interval.count()},
            {"MIN_REQUEST_INTERVAL_SECS", c.upstream.min_request_interval.count()},
            {"REQUEST_TIMEOUT_SECS", c.upstream.request_timeout.count()},
            {"ADMIN_TOKEN", secret(c.admin_token)},
            {"BIND_ADDR", c.bind_addr},
            {"DATA_DIR", c.data_dir.string()},
            {"RETENTION_SECS", c.retention.count()},
            {"AQI_SCALE_PATH", c.aqi_scale_path ? nlohmann::json(c.aqi_scale_path->string()) : nlohmann::json()},
            {"SERVICE_BBOX", {c.service_area.min_lon, c.service_area.min_lat, c.service_area.max_lon,
                              c.service_area.max_lat}}};
}

} // namespace fenceline
