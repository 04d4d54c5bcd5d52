#pragma once

#include "sofa/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <string>
#include <thread>

namespace sofa {

struct retry_policy {
    int                       max_attempts = 4;
    std::chrono::milliseconds base_delay{200};
    double                    multiplier = 2.0;
    std::chrono::milliseconds max_delay{5000};

    std::chrono::milliseconds delay_before(int attempt) const;  // attempt >= 1
};

// Runs fn until it succeeds, a non-retryable error escapes, or attempts run out.
// The final retryable failure is rethrown unchanged.
template <typename Fn>
auto with_retry(const retry_policy & policy, Fn && fn) -> decltype(fn()) {
    for (int attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const transport_error & e) {
            if (!e.retryable() || attempt + 1 >= std::max(1, policy.max_attempts)) {
                throw;
            }
            std::this_thread::sleep_for(policy.delay_before(attempt + 1));
        }
    }
}

struct http_endpoint {
    std::string origin;     // scheme://host[:port]
    std::string base_path;  // "" or "/prefix"
};

http_endpoint parse_http_url(const std::string & url);

// One POST attempt. 429/503 and connection failures raise a retryable
// transport_error; other non-2xx statuses a non-retryable one.
nlohmann::json post_json(const http_endpoint & endpoint, const std::string & path, const nlohmann::json & body,
                         const std::string & auth_token = {},
                         std::chrono::seconds timeout = std::chrono::seconds(120));

}  // namespace sofa
