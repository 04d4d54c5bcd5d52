#include "sofa/scoring.hpp"

#include "sofa/error.hpp"
#include "sofa/util.hpp"

#include <atomic>
#include <cmath>
#include <ctime>
#include <exception>
#include <thread>
#include <unordered_map>

namespace sofa {

namespace {

constexpr std::uint64_t k_fnv_offset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t k_fnv_prime  = 0x100000001b3ULL;

std::uint64_t fnv_byte(std::uint64_t h, unsigned char b) {
    return (h ^ b) * k_fnv_prime;
}

std::uint64_t fnv_bytes(std::uint64_t h, std::string_view s) {
    for (unsigned char c : s) {
        h = fnv_byte(h, c);
    }
    return h;
}

std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

std::string utc_now() {
    auto        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm     tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::int64_t parse_int(const std::string & s, const std::string & what) {
    try {
        size_t pos = 0;
        auto   v   = std::stoll(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::logic_error &) {
        fail(error_kind::usage, what + ": expected an integer, got '" + s + "'");
    }
}

void check_text(const std::string & text) {
    if (collapse_whitespace(text).empty()) {
        fail(error_kind::validation, "cannot score an empty text");
    }
}

}  // namespace

ppl_value compute_ppl(std::span<const token_logprob> tokens) {
    if (tokens.empty()) {
        fail(error_kind::validation, "perplexity of a zero-token sequence is undefined");
    }
    double sum = 0;
    for (const auto & t : tokens) {
        if (!std::isfinite(t.logprob) || t.logprob > 0) {
            fail(error_kind::validation, "token '" + t.token + "' has invalid log-probability " +
                                             std::to_string(t.logprob));
        }
        sum += t.logprob;
    }
    ppl_value v;
    v.avg_nll = -sum / static_cast<double>(tokens.size());
    v.ppl     = std::exp(v.avg_nll);
    return v;
}

std::vector<token_logprob> uniform_logprobs(std::string_view text, std::int64_t vocab_size) {
    if (vocab_size < 2) {
        fail(error_kind::validation, "uniform backend needs a vocabulary of at least 2");
    }
    double lp = -std::log(static_cast<double>(vocab_size));
    std::vector<token_logprob> out;
    for (auto & tok : split_whitespace(text)) {
        out.push_back({std::move(tok), lp});
    }
    return out;
}

std::vector<token_logprob> hash_logprobs(std::string_view text, std::string_view model_id, std::int64_t seed) {
    std::uint64_t h = k_fnv_offset;
    auto          s = static_cast<std::uint64_t>(seed);
    for (int i = 0; i < 8; ++i) {
        h = fnv_byte(h, static_cast<unsigned char>((s >> (8 * i)) & 0xff));
    }
    h = fnv_bytes(h, model_id);
    h = fnv_byte(h, 0x00);

    std::vector<token_logprob> out;
    for (auto & tok : split_whitespace(text)) {
        h = fnv_bytes(h, tok);
        h = fnv_byte(h, 0x1f);
        double u = static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
        out.push_back({std::move(tok), -(1.0 + 4.0 * u)});
    }
    return out;
}

uniform_scorer::uniform_scorer(std::int64_t vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size < 2) {
        fail(error_kind::config, "uniform backend needs a vocabulary of at least 2");
    }
}

std::string uniform_scorer::tag() const {
    return "uniform:" + std::to_string(vocab_size_);
}

std::vector<std::vector<token_logprob>> uniform_scorer::logprobs(const std::string &,
                                                                 std::span<const std::string> texts) {
    std::vector<std::vector<token_logprob>> out;
    for (const auto & t : texts) {
        out.push_back(uniform_logprobs(t, vocab_size_));
    }
    return out;
}

std::string hash_scorer::tag() const {
    return "hash:" + std::to_string(seed_);
}

std::vector<std::vector<token_logprob>> hash_scorer::logprobs(const std::string & model_id,
                                                              std::span<const std::string> texts) {
    std::vector<std::vector<token_logprob>> out;
    for (const auto & t : texts) {
        out.push_back(hash_logprobs(t, model_id, seed_));
    }
    return out;
}

http_scorer::http_scorer(const std::string & url, std::string auth_token)
    : url_(url), endpoint_(parse_http_url(url)), auth_token_(std::move(auth_token)) {}

std::string http_scorer::tag() const {
    return "http:" + url_;
}

std::vector<std::vector<token_logprob>> http_scorer::logprobs(const std::string & model_id,
                                                              std::span<const std::string> texts) {
    nlohmann::json body = {{"model", model_id}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    auto resp = post_json(endpoint_, "/v1/logprobs", body, auth_token_);
    return parse_logprobs_response(resp, texts);
}

nlohmann::json logprobs_response_json(std::span<const std::string> texts,
                                      const std::vector<std::vector<token_logprob>> & results) {
    nlohmann::json arr = nlohmann::json::array();
    for (size_t i = 0; i < texts.size(); ++i) {
        nlohmann::json toks = nlohmann::json::array();
        nlohmann::json lps  = nlohmann::json::array();
        for (const auto & t : results.at(i)) {
            toks.push_back(t.token);
            lps.push_back(t.logprob);
        }
        arr.push_back({{"text", texts[i]}, {"tokens", toks}, {"logprobs", lps}});
    }
    return {{"results", arr}};
}

std::vector<std::vector<token_logprob>> parse_logprobs_response(const nlohmann::json & resp,
                                                                std::span<const std::string> texts) {
    auto bad = [](const std::string & msg) { return transport_error("logprobs response: " + msg, false); };
    if (!resp.is_object() || !resp.contains("results") || !resp.at("results").is_array()) {
        throw bad("missing 'results' array");
    }
    const auto & results = resp.at("results");
    if (results.size() != texts.size()) {
        throw bad(std::to_string(results.size()) + " results for " + std::to_string(texts.size()) + " texts");
    }
    std::vector<std::vector<token_logprob>> out;
    out.reserve(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) {
        const auto & r = results[i];
        try {
            if (r.contains("text") && r.at("text").get<std::string>() != texts[i]) {
                throw bad("result " + std::to_string(i) + " echoes a different text");
            }
            const auto & toks = r.at("tokens");
            const auto & lps  = r.at("logprobs");
            if (!toks.is_array() || !lps.is_array() || toks.size() != lps.size()) {
                throw bad("result " + std::to_string(i) + ": tokens and logprobs differ in length");
            }
            std::vector<token_logprob> seq;
            for (size_t k = 0; k < toks.size(); ++k) {
                double lp = lps[k].get<double>();
                if (!std::isfinite(lp) || lp > 0) {
                    throw bad("result " + std::to_string(i) + ": log-probability must be finite and <= 0");
                }
                seq.push_back({toks[k].get<std::string>(), lp});
            }
            out.push_back(std::move(seq));
        } catch (const nlohmann::json::exception & e) {
            throw bad("result " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::unique_ptr<scorer> make_scorer(const std::string & spec, const std::string & auth_token) {
    auto colon = spec.find(':');
    if (colon == std::string::npos) {
        fail(error_kind::usage, "backend '" + spec + "': expected uniform:V, hash:SEED or http:URL");
    }
    auto kind = spec.substr(0, colon);
    auto arg  = spec.substr(colon + 1);
    if (kind == "uniform") {
        return std::make_unique<uniform_scorer>(parse_int(arg, "uniform backend"));
    }
    if (kind == "hash") {
        return std::make_unique<hash_scorer>(parse_int(arg, "hash backend"));
    }
    if (kind == "http") {
        return std::make_unique<http_scorer>(arg, auth_token);
    }
    fail(error_kind::usage, "unknown backend kind '" + kind + "' (uniform | hash | http)");
}

nlohmann::ordered_json cache_record::to_json() const {
    return {
        {"model_id", model_id}, {"text_digest", text_digest}, {"ppl", ppl},
        {"avg_nll", avg_nll},   {"n_tokens", n_tokens},       {"backend_tag", backend_tag},
        {"created_at", created_at},
    };
}

std::string text_digest(std::string_view text) {
    return sha256_hex(nfc(text));
}

score_cache::score_cache(const std::filesystem::path & path) : path_(path) {
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) {
        auto content = read_file(path);
        auto lines   = split_lines(content);
        for (size_t n = 0; n < lines.size(); ++n) {
            if (lines[n].empty()) {
                continue;
            }
            auto where = path.string() + ":" + std::to_string(n + 1);
            cache_record rec;
            try {
                auto j          = nlohmann::json::parse(lines[n]);
                rec.model_id    = j.at("model_id").get<std::string>();
                rec.text_digest = j.at("text_digest").get<std::string>();
                rec.ppl         = j.at("ppl").get<double>();
                rec.avg_nll     = j.value("avg_nll", std::log(rec.ppl));
                rec.n_tokens    = j.at("n_tokens").get<size_t>();
                rec.backend_tag = j.value("backend_tag", std::string());
                rec.created_at  = j.value("created_at", std::string());
            } catch (const nlohmann::json::exception & e) {
                fail(error_kind::format, "cache corrupt at " + where + ": " + e.what());
            }
            if (!std::isfinite(rec.ppl) || rec.ppl < 1 || rec.n_tokens == 0) {
                fail(error_kind::format, "cache corrupt at " + where + ": ppl must be >= 1 with n_tokens >= 1");
            }
            auto key = std::make_pair(rec.model_id, rec.text_digest);
            auto it  = records_.find(key);
            if (it != records_.end() && it->second.ppl != rec.ppl) {
                fail(error_kind::format, "cache corrupt at " + where + ": conflicting ppl for an existing key");
            }
            records_.insert_or_assign(key, std::move(rec));
        }
    } else if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    out_.open(path, std::ios::app | std::ios::binary);
    if (!out_) {
        fail(error_kind::io, "cannot open cache for appending: " + path.string());
    }
}

std::optional<cache_record> score_cache::find(const std::string & model_id, const std::string & digest) const {
    std::lock_guard lock(mu_);
    auto it = records_.find({model_id, digest});
    if (it == records_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void score_cache::insert(const cache_record & rec) {
    std::lock_guard lock(mu_);
    auto [it, fresh] = records_.try_emplace({rec.model_id, rec.text_digest}, rec);
    if (!fresh) {
        return;
    }
    if (out_.is_open()) {
        out_ << rec.to_json().dump() << '\n';
        out_.flush();
        if (!out_) {
            fail(error_kind::io, "failed writing cache " + path_.string());
        }
    }
}

size_t score_cache::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

namespace {

sequence_score from_record(const std::string & model_id, const std::string & text, const cache_record & rec) {
    sequence_score s;
    s.model_id   = model_id;
    s.text       = text;
    s.n_tokens   = rec.n_tokens;
    s.avg_nll    = rec.avg_nll;
    s.ppl        = rec.ppl;
    s.from_cache = true;
    return s;
}

sequence_score from_tokens(const std::string & model_id, const std::string & text, std::vector<token_logprob> toks) {
    auto v = compute_ppl(toks);
    sequence_score s;
    s.model_id = model_id;
    s.text     = text;
    s.n_tokens = toks.size();
    s.tokens   = std::move(toks);
    s.avg_nll  = v.avg_nll;
    s.ppl      = v.ppl;
    return s;
}

cache_record to_record(const sequence_score & s, const std::string & digest, const std::string & tag) {
    return {s.model_id, digest, s.ppl, s.avg_nll, s.n_tokens, tag, utc_now()};
}

}  // namespace

sequence_score score_text(scorer & backend, const std::string & model_id, const std::string & text,
                          score_cache * cache, const retry_policy & retry) {
    std::string texts[] = {text};
    scoring_options opts;
    opts.parallel   = 1;
    opts.batch_size = 1;
    opts.retry      = retry;
    return std::move(score_batch(backend, model_id, texts, cache, opts).front());
}

std::vector<sequence_score> score_batch(scorer & backend, const std::string & model_id,
                                        std::span<const std::string> texts, score_cache * cache,
                                        const scoring_options & options) {
    std::vector<std::string>                     digests(texts.size());
    std::unordered_map<std::string, size_t>      first_index;
    std::vector<size_t>                          misses;
    std::vector<std::optional<sequence_score>>   unique_results(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) {
        check_text(texts[i]);
        digests[i] = text_digest(texts[i]);
        if (!first_index.emplace(digests[i], i).second) {
            continue;
        }
        if (cache) {
            if (auto rec = cache->find(model_id, digests[i])) {
                unique_results[i] = from_record(model_id, texts[i], *rec);
                continue;
            }
        }
        misses.push_back(i);
    }

    size_t batch     = std::max<size_t>(1, options.batch_size);
    size_t n_chunks  = (misses.size() + batch - 1) / batch;
    size_t n_workers = options.parallel ? options.parallel : std::max(1u, std::thread::hardware_concurrency());
    n_workers        = std::min(n_workers, n_chunks);

    std::atomic<size_t> next{0};
    std::atomic<bool>   stop{false};
    std::mutex          err_mu;
    std::exception_ptr  first_error;
    const auto          tag = backend.tag();

    auto work = [&] {
        while (!stop.load()) {
            size_t c = next.fetch_add(1);
            if (c >= n_chunks) {
                return;
            }
            size_t begin = c * batch;
            size_t end   = std::min(misses.size(), begin + batch);
            std::vector<std::string> chunk;
            for (size_t k = begin; k < end; ++k) {
                chunk.push_back(texts[misses[k]]);
            }
            try {
                std::vector<std::vector<token_logprob>> lps;
                try {
                    lps = with_retry(options.retry, [&] { return backend.logprobs(model_id, chunk); });
                } catch (const transport_error & e) {
                    throw transport_error("scoring failed for text " + digests[misses[begin]] +
                                              (end - begin > 1 ? " (and " + std::to_string(end - begin - 1) + " more)" : "") +
                                              ": " + e.what(),
                                          e.retryable());
                }
                if (lps.size() != chunk.size()) {
                    throw transport_error("backend returned " + std::to_string(lps.size()) + " results for " +
                                              std::to_string(chunk.size()) + " texts",
                                          false);
                }
                for (size_t k = begin; k < end; ++k) {
                    size_t i = misses[k];
                    auto   s = from_tokens(model_id, texts[i], std::move(lps[k - begin]));
                    if (cache) {
                        cache->insert(to_record(s, digests[i], tag));
                    }
                    unique_results[i] = std::move(s);
                }
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) {
                    first_error = std::current_exception();
                }
                stop = true;
                return;
            }
        }
    };

    if (n_workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back(work);
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }

    std::vector<sequence_score> out;
    out.reserve(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) {
        size_t src = first_index.at(digests[i]);
        out.push_back(*unique_results[src]);
        out.back().text = texts[i];
    }
    return out;
}

}  // namespace sofa
