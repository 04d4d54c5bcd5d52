#pragma once

#include <stdexcept>
#include <string>

namespace sofa {

// Exit-code mapping in the CLI is driven by `kind`: validation-like kinds exit 1,
// io/transport exit 2, usage exits 64.
enum class error_kind {
    format,      // input does not parse
    validation,  // parses but violates a domain invariant
    schema,      // structurally valid input missing a required field/column
    usage,       // bad flag, unknown format tag
    config,      // inconsistent configuration (e.g. tagger required but absent)
    io,
    transport,
};

const char * to_string(error_kind kind);

class error : public std::runtime_error {
  public:
    error(error_kind kind, const std::string & what) : std::runtime_error(what), kind_(kind) {}

    error_kind kind() const noexcept { return kind_; }

  private:
    error_kind kind_;
};

// Transport failures carry whether the caller may retry (429/503, connection reset).
class transport_error : public error {
  public:
    transport_error(const std::string & what, bool retryable)
        : error(error_kind::transport, what), retryable_(retryable) {}

    bool retryable() const noexcept { return retryable_; }

  private:
    bool retryable_;
};

[[noreturn]] inline void fail(error_kind kind, const std::string & what) {
    throw error(kind, what);
}

}  // namespace sofa
