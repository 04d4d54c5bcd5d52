#pragma once

#include "sofa/transport.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sofa {

// Natural-log probability of one token given its prefix; always <= 0.
struct token_logprob {
    std::string token;
    double      logprob = 0;
};

struct ppl_value {
    double avg_nll = 0;  // -(1/t) * sum(logprob)
    double ppl     = 1;  // exp(avg_nll)
};

// Sums log-probabilities first, then exponentiates once.
ppl_value compute_ppl(std::span<const token_logprob> tokens);

struct sequence_score {
    std::string                model_id;
    std::string                text;
    std::vector<token_logprob> tokens;  // empty when served from the cache
    size_t                     n_tokens = 0;
    double                     avg_nll  = 0;
    double                     ppl      = 1;
    bool                       from_cache = false;
};

// A backend returns one logprob per token for every text, conditioning the first
// token on its own sequence-start context. Tokenization is the backend's business.
// Implementations must tolerate concurrent calls.
class scorer {
  public:
    virtual ~scorer() = default;
    virtual std::string tag() const = 0;
    virtual std::vector<std::vector<token_logprob>> logprobs(const std::string & model_id,
                                                             std::span<const std::string> texts) = 0;
};

// Whitespace tokens, each at ln(1/V). V >= 2.
std::vector<token_logprob> uniform_logprobs(std::string_view text, std::int64_t vocab_size);

// Whitespace tokens; token d gets -(1 + 4u), u in [0,1) drawn from a 64-bit
// FNV-1a/splitmix hash of (seed, model_id, tokens[0..d]).
std::vector<token_logprob> hash_logprobs(std::string_view text, std::string_view model_id, std::int64_t seed);

class uniform_scorer final : public scorer {
  public:
    explicit uniform_scorer(std::int64_t vocab_size);
    std::string tag() const override;
    std::vector<std::vector<token_logprob>> logprobs(const std::string & model_id,
                                                     std::span<const std::string> texts) override;

  private:
    std::int64_t vocab_size_;
};

class hash_scorer final : public scorer {
  public:
    explicit hash_scorer(std::int64_t seed) : seed_(seed) {}
    std::string tag() const override;
    std::vector<std::vector<token_logprob>> logprobs(const std::string & model_id,
                                                     std::span<const std::string> texts) override;

  private:
    std::int64_t seed_;
};

// POST {base}/v1/logprobs {"model", "texts"} -> {"results": [{"text", "tokens", "logprobs"}]}.
// One attempt per call; retries belong to the caller.
class http_scorer final : public scorer {
  public:
    explicit http_scorer(const std::string & url, std::string auth_token = {});
    std::string tag() const override;
    std::vector<std::vector<token_logprob>> logprobs(const std::string & model_id,
                                                     std::span<const std::string> texts) override;

  private:
    std::string   url_;
    http_endpoint endpoint_;
    std::string   auth_token_;
};

// "uniform:V" | "hash:SEED" | "http:URL" (the URL keeps its own scheme, e.g. http:http://host:8000).
std::unique_ptr<scorer> make_scorer(const std::string & spec, const std::string & auth_token = {});

// Wire-protocol helpers, shared with the tests' mock server.
nlohmann::json                          logprobs_response_json(std::span<const std::string> texts,
                                                               const std::vector<std::vector<token_logprob>> & results);
std::vector<std::vector<token_logprob>> parse_logprobs_response(const nlohmann::json & resp,
                                                                std::span<const std::string> texts);

struct cache_record {
    std::string model_id;
    std::string text_digest;
    double      ppl      = 1;
    double      avg_nll  = 0;
    size_t      n_tokens = 0;
    std::string backend_tag;
    std::string created_at;

    nlohmann::ordered_json to_json() const;
};

// SHA-256 of the NFC-normalized text.
std::string text_digest(std::string_view text);

// Append-only JSONL cache keyed by (model_id, text_digest). Safe for concurrent use;
// appends go through one mutex-guarded writer.
class score_cache {
  public:
    score_cache() = default;  // in-memory only
    explicit score_cache(const std::filesystem::path & path);

    std::optional<cache_record> find(const std::string & model_id, const std::string & digest) const;
    void                        insert(const cache_record & rec);
    size_t                      size() const;

  private:
    mutable std::mutex                                            mu_;
    std::map<std::pair<std::string, std::string>, cache_record>   records_;
    std::filesystem::path                                         path_;
    std::ofstream                                                 out_;
};

sequence_score score_text(scorer & backend, const std::string & model_id, const std::string & text,
                          score_cache * cache, const retry_policy & retry = {});

struct scoring_options {
    size_t       parallel   = 0;  // 0: hardware concurrency
    size_t       batch_size = 16;
    retry_policy retry;
};

// Scores every text; output order matches input order whatever the parallelism.
// Duplicate texts are scored once.
std::vector<sequence_score> score_batch(scorer & backend, const std::string & model_id,
                                        std::span<const std::string> texts, score_cache * cache,
                                        const scoring_options & options = {});

}  // namespace sofa
