#include "sofa/transport.hpp"

#include "httplib.h"

#include <cmath>

namespace sofa {

std::chrono::milliseconds retry_policy::delay_before(int attempt) const {
    double ms = static_cast<double>(base_delay.count()) * std::pow(multiplier, std::max(0, attempt - 1));
    ms        = std::min(ms, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<long long>(ms));
}

http_endpoint parse_http_url(const std::string & url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0) {
        fail(error_kind::usage, "expected an http:// URL, got '" + url + "'");
    }
    auto path_start = url.find('/', scheme_end + 3);
    http_endpoint ep;
    if (path_start == std::string::npos) {
        ep.origin = url;
    } else {
        ep.origin    = url.substr(0, path_start);
        ep.base_path = url.substr(path_start);
        while (!ep.base_path.empty() && ep.base_path.back() == '/') {
            ep.base_path.pop_back();
        }
    }
    if (ep.origin.size() <= scheme_end + 3) {
        fail(error_kind::usage, "URL has no host: '" + url + "'");
    }
    return ep;
}

nlohmann::json post_json(const http_endpoint & endpoint, const std::string & path, const nlohmann::json & body,
                         const std::string & auth_token, std::chrono::seconds timeout) {
    httplib::Client cli(endpoint.origin);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + auth_token);
    }
    const std::string target = endpoint.base_path + path;
    auto res = cli.Post(target, headers, body.dump(), "application/json");
    if (!res) {
        throw transport_error("POST " + endpoint.origin + target + ": " + httplib::to_string(res.error()), true);
    }
    if (res->status == 429 || res->status == 503) {
        throw transport_error("POST " + endpoint.origin + target + ": HTTP " + std::to_string(res->status), true);
    }
    if (res->status < 200 || res->status >= 300) {
        throw transport_error("POST " + endpoint.origin + target + ": HTTP " + std::to_string(res->status) + ": " +
                                  res->body.substr(0, 200),
                              false);
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error & e) {
        throw transport_error("POST " + endpoint.origin + target + ": malformed JSON response: " + e.what(), false);
    }
}

}  // namespace sofa
