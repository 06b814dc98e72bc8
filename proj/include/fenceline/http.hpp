#pragma once

#include "fenceline/api.hpp"
#include "fenceline/errors.hpp"
#include "fenceline/ingest.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <memory>
#include <string>

namespace fenceline {

/// Routes every request on `server` through `api`.
inline void mount(const ApiService& api, httplib::Server& server) {
    const auto dispatch = [&api](const httplib::Request& req, httplib::Response& res) {
        ApiRequest in;
        in.method = req.method;
        in.path = req.path;
        for (const auto& [k, v] : req.params) in.query.emplace(k, v);
        for (const auto& [k, v] : req.headers) {
            std::string name = k;
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
            in.headers[name] = v;
        }
        in.body = req.body;
        const ApiResponse out = api.handle(in);
        res.status = out.status;
        for (const auto& [k, v] : out.headers) res.set_header(k, v);
        if (out.status != 204) res.set_content(out.body, out.content_type);
    };
    server.Get(".*", dispatch);
    server.Post(".*", dispatch);
    server.Options(".*", dispatch);
    server.Put(".*", dispatch);
    server.Delete(".*", dispatch);
    server.Patch(".*", dispatch);
}

/// GET {base_url}/v1/sensors/{id} with the X-API-Key header, PurpleAir style.
class HttpFetcher {
public:
    HttpFetcher(const UpstreamConfig& config, Clock& clock)
        : base_url_(config.base_url), api_key_(config.api_key), timeout_(config.request_timeout), clock_(clock) {}

    RawPayload operator()(const std::string& sensor_id) const {
        httplib::Client client(base_url_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        httplib::Headers headers;
        if (api_key_) headers.emplace("X-API-Key", *api_key_);
        const auto res = client.Get("/v1/sensors/" + sensor_id, headers);
        if (!res) throw TransportError(sensor_id + ": " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw TransportError(sensor_id + ": upstream answered HTTP " + std::to_string(res->status));
        return {res->body, clock_.now()};
    }

private:
    std::string base_url_;
    std::optional<std::string> api_key_;
    Seconds timeout_;
    Clock& clock_;
};

} // namespace fenceline
