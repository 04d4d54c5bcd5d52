#include "doctest.h"
#include "helpers.hpp"

#include "sofa/scoring.hpp"
#include "sofa/util.hpp"

#include <atomic>
#include <cmath>

using namespace sofa;

namespace {

std::vector<token_logprob> lps(std::initializer_list<double> v) {
    std::vector<token_logprob> out;
    int                        i = 0;
    for (double x : v) {
        out.push_back({"t" + std::to_string(i++), x});
    }
    return out;
}

// Counts texts sent to the wrapped backend.
class counting_scorer final : public scorer {
  public:
    explicit counting_scorer(scorer & inner) : inner_(inner) {}
    std::string tag() const override { return inner_.tag(); }
    std::vector<std::vector<token_logprob>> logprobs(const std::string & model,
                                                     std::span<const std::string> texts) override {
        texts_sent += texts.size();
        ++calls;
        return inner_.logprobs(model, texts);
    }
    std::atomic<size_t> texts_sent{0};
    std::atomic<size_t> calls{0};

  private:
    scorer & inner_;
};

// Fails the first `failures` calls with the given retryability.
class flaky_scorer final : public scorer {
  public:
    flaky_scorer(int failures, bool retryable) : failures_(failures), retryable_(retryable) {}
    std::string tag() const override { return "flaky"; }
    std::vector<std::vector<token_logprob>> logprobs(const std::string & model,
                                                     std::span<const std::string> texts) override {
        if (attempts++ < failures_) {
            throw transport_error("503 busy", retryable_);
        }
        return uniform_scorer(10).logprobs(model, texts);
    }
    std::atomic<int> attempts{0};

  private:
    int  failures_;
    bool retryable_;
};

retry_policy fast_retry(int attempts) {
    retry_policy r;
    r.max_attempts = attempts;
    r.base_delay   = std::chrono::milliseconds(1);
    r.max_delay    = std::chrono::milliseconds(2);
    return r;
}

struct golden {
    const char *        text;
    const char *        model;
    std::int64_t        seed;
    std::vector<double> logprobs;
    double              ppl;
};

// Produced by tests/oracles/hash_oracle.py.
const std::vector<golden> k_hash_golden = {
    {"catholics are lazy", "toy", 42, {-2.503190232195856, -4.87205163206918, -1.155504220428973}, 17.177184629289897},
    {"women", "toy", 42, {-2.658110171672314}, 14.269297079732532},
    {"korean people have no manners", "gpt2", 7,
     {-4.374003442098458, -3.997885408418482, -4.960386747862843, -1.7619037941166735, -4.524571352123422},
     50.58980880153376},
    {"deaf people", "gpt2", -1, {-3.6664596033813694, -2.498202879772176}, 21.809185659535434},
};

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("compute_ppl hand-derived fixtures") {
    CHECK(std::abs(compute_ppl(lps({-1, -2, -3})).ppl - std::exp(2.0)) <= 1e-12 * std::exp(2.0));
    CHECK(std::abs(compute_ppl(lps({-0.5})).ppl - std::exp(0.5)) <= 1e-12);
    CHECK(compute_ppl(lps({0, 0})).ppl == 1.0);
    CHECK(compute_ppl(lps({-1, -2, -3})).avg_nll == doctest::Approx(2.0));
}

TEST_CASE("compute_ppl rejects invalid input") {
    CHECK(testing::kind_of([] { compute_ppl({}); }) == error_kind::validation);
    CHECK(testing::kind_of([] { compute_ppl(lps({-1, 0.1})); }) == error_kind::validation);
    CHECK(testing::kind_of([] { compute_ppl(lps({-INFINITY})); }) == error_kind::validation);
    CHECK(testing::kind_of([] { compute_ppl(lps({NAN})); }) == error_kind::validation);
}

TEST_CASE("compute_ppl stays finite for long sequences of tiny probabilities") {
    std::vector<token_logprob> t(5000, {"x", -700.0});
    auto                       v = compute_ppl(t);
    CHECK(std::isfinite(v.ppl));
    CHECK(v.avg_nll == doctest::Approx(700.0));
}

TEST_CASE("uniform backend yields PPL = V") {
    for (std::int64_t V : {2, 10, 1000}) {
        for (std::string text : {"a", "Catholics are all terrorists", "x y z w v u t s r q p"}) {
            auto v = compute_ppl(uniform_logprobs(text, V));
            CHECK(std::abs(v.ppl - static_cast<double>(V)) <= 1e-9 * static_cast<double>(V));
        }
    }
    CHECK(testing::kind_of([] { uniform_scorer(1); }) == error_kind::config);
}

TEST_CASE("hash backend matches the Python oracle bit for bit") {
    for (const auto & g : k_hash_golden) {
        auto got = hash_logprobs(g.text, g.model, g.seed);
        REQUIRE(got.size() == g.logprobs.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].logprob == g.logprobs[i]);
        }
        CHECK(std::abs(compute_ppl(got).ppl - g.ppl) <= 1e-12 * g.ppl);
    }
}

TEST_CASE("hash backend: range, prefix dependence, model dependence") {
    auto a = hash_logprobs("one two three four", "m", 42);
    for (const auto & t : a) {
        CHECK(t.logprob <= -1.0);
        CHECK(t.logprob > -5.0);
    }
    // Token d depends only on tokens[0..d].
    auto b = hash_logprobs("one two five", "m", 42);
    CHECK(a[0].logprob == b[0].logprob);
    CHECK(a[1].logprob == b[1].logprob);
    CHECK(a[2].logprob != b[2].logprob);
    CHECK(hash_logprobs("one", "m", 42)[0].logprob != hash_logprobs("one", "n", 42)[0].logprob);
    CHECK(hash_logprobs("one", "m", 42)[0].logprob != hash_logprobs("one", "m", 43)[0].logprob);
}

TEST_CASE("make_scorer parses backend specs") {
    CHECK(make_scorer("uniform:10")->tag() == "uniform:10");
    CHECK(make_scorer("hash:42")->tag() == "hash:42");
    CHECK(make_scorer("http:http://127.0.0.1:9")->tag() == "http:http://127.0.0.1:9");
    CHECK(testing::kind_of([] { make_scorer("hash:abc"); }) == error_kind::usage);
    CHECK(testing::kind_of([] { make_scorer("gpu:1"); }) == error_kind::usage);
    CHECK(testing::kind_of([] { make_scorer("uniform"); }) == error_kind::usage);
}

TEST_CASE("score_batch keeps input order under any parallelism") {
    hash_scorer              h(42);
    std::vector<std::string> texts;
    for (int i = 0; i < 97; ++i) {
        texts.push_back("text number " + std::to_string(i) + " with words");
    }
    scoring_options one;
    one.parallel   = 1;
    one.batch_size = 5;
    auto ref       = score_batch(h, "m", texts, nullptr, one);
    for (size_t par : {2u, 4u, 16u}) {
        scoring_options o;
        o.parallel   = par;
        o.batch_size = 3;
        auto got     = score_batch(h, "m", texts, nullptr, o);
        REQUIRE(got.size() == ref.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].text == texts[i]);
            CHECK(got[i].ppl == ref[i].ppl);
        }
    }
}

TEST_CASE("duplicate texts are scored once") {
    hash_scorer              h(1);
    counting_scorer          c(h);
    std::vector<std::string> texts = {"a b", "c d", "a b", "a b"};
    auto                     out   = score_batch(c, "m", texts, nullptr);
    CHECK(c.texts_sent == 2);
    CHECK(out[0].ppl == out[2].ppl);
    CHECK(out.size() == 4);
}

TEST_CASE("the cache is transparent and avoids repeat calls") {
    testing::temp_dir        dir;
    hash_scorer              h(42);
    std::vector<std::string> texts = {"Catholics are lazy", "women", "deaf people are x"};
    std::vector<sequence_score> fresh;
    {
        counting_scorer c(h);
        score_cache     cache(dir / "cache.jsonl");
        fresh = score_batch(c, "m", texts, &cache);
        CHECK(c.texts_sent == 3);
        CHECK(cache.size() == 3);
    }
    counting_scorer c(h);
    score_cache     cache(dir / "cache.jsonl");
    auto            again = score_batch(c, "m", texts, &cache);
    CHECK(c.texts_sent == 0);
    for (size_t i = 0; i < texts.size(); ++i) {
        CHECK(again[i].from_cache);
        CHECK(again[i].ppl == fresh[i].ppl);
        CHECK(again[i].avg_nll == fresh[i].avg_nll);
        CHECK(again[i].n_tokens == fresh[i].n_tokens);
    }
    // Another model is a different key.
    score_batch(c, "other", texts, &cache);
    CHECK(c.texts_sent == 3);
}

TEST_CASE("cache keys use the NFC form") {
    CHECK(text_digest("caf\x65\xcc\x81") == text_digest("caf\xc3\xa9"));
    CHECK(text_digest("a") != text_digest("b"));
}

TEST_CASE("cache corruption is reported with its line") {
    testing::temp_dir dir;
    cache_record      rec{"m", text_digest("x"), 2.0, std::log(2.0), 1, "hash:1", "t"};
    write_file(dir / "c.jsonl", rec.to_json().dump() + "\n{broken\n");
    auto msg = testing::message_of([&] { score_cache(dir / "c.jsonl"); });
    CHECK(msg.find("c.jsonl:2") != std::string::npos);

    auto other = rec;
    other.ppl  = 3.0;
    write_file(dir / "d.jsonl", rec.to_json().dump() + "\n" + other.to_json().dump() + "\n");
    CHECK(testing::kind_of([&] { score_cache(dir / "d.jsonl"); }) == error_kind::format);

    auto low = rec;
    low.ppl  = 0.5;
    write_file(dir / "e.jsonl", low.to_json().dump() + "\n");
    CHECK(testing::kind_of([&] { score_cache(dir / "e.jsonl"); }) == error_kind::format);
}

TEST_CASE("cache records round-trip doubles exactly") {
    testing::temp_dir dir;
    double            ppl = std::exp(1.0 / 3.0);
    {
        score_cache c(dir / "c.jsonl");
        c.insert({"m", "d", ppl, 1.0 / 3.0, 3, "x", "t"});
    }
    score_cache c(dir / "c.jsonl");
    auto        r = c.find("m", "d");
    REQUIRE(r);
    CHECK(r->ppl == ppl);
    CHECK(r->avg_nll == 1.0 / 3.0);
}

TEST_CASE("retryable failures are retried, then surface with the text digest") {
    flaky_scorer ok(2, true);
    auto         s = score_text(ok, "m", "a b c", nullptr, fast_retry(4));
    CHECK(ok.attempts == 3);
    CHECK(s.ppl == doctest::Approx(10.0));

    flaky_scorer never(100, true);
    try {
        score_text(never, "m", "a b c", nullptr, fast_retry(3));
        FAIL("expected failure");
    } catch (const transport_error & e) {
        CHECK(std::string(e.what()).find(text_digest("a b c")) != std::string::npos);
    }
    CHECK(never.attempts == 3);

    flaky_scorer fatal(1, false);
    CHECK(testing::kind_of([&] { score_text(fatal, "m", "a", nullptr, fast_retry(5)); }) == error_kind::transport);
    CHECK(fatal.attempts == 1);
}

TEST_CASE("empty texts are refused before any backend call") {
    hash_scorer     h(1);
    counting_scorer c(h);
    CHECK(testing::kind_of([&] { score_text(c, "m", "   ", nullptr); }) == error_kind::validation);
    CHECK(c.calls == 0);
}

TEST_CASE("retry delays grow geometrically and cap") {
    retry_policy r;
    CHECK(r.delay_before(1) == std::chrono::milliseconds(200));
    CHECK(r.delay_before(2) == std::chrono::milliseconds(400));
    CHECK(r.delay_before(3) == std::chrono::milliseconds(800));
    CHECK(r.delay_before(10) == std::chrono::milliseconds(5000));
}

TEST_CASE("logprobs response parsing enforces the wire schema") {
    std::vector<std::string> texts = {"a b", "c"};
    auto                     ok    = logprobs_response_json(texts, {lps({-1, -2}), lps({-0.5})});
    auto                     back  = parse_logprobs_response(ok, texts);
    REQUIRE(back.size() == 2);
    CHECK(back[0][1].logprob == -2);

    auto too_few = ok;
    too_few["results"].erase(1);
    CHECK(testing::kind_of([&] { parse_logprobs_response(too_few, texts); }) == error_kind::transport);
    auto positive                    = ok;
    positive["results"][0]["logprobs"][0] = 0.3;
    CHECK(testing::kind_of([&] { parse_logprobs_response(positive, texts); }) == error_kind::transport);
    auto ragged = ok;
    ragged["results"][0]["tokens"].push_back("x");
    CHECK(testing::kind_of([&] { parse_logprobs_response(ragged, texts); }) == error_kind::transport);
    auto swapped                 = ok;
    swapped["results"][0]["text"] = "c";
    CHECK(testing::kind_of([&] { parse_logprobs_response(swapped, texts); }) == error_kind::transport);
    CHECK(testing::kind_of([&] { parse_logprobs_response(nlohmann::json::object(), texts); }) ==
          error_kind::transport);
}

}
