#include "doctest.h"
#include "helpers.hpp"

#include "sofa/normalize.hpp"

#include <variant>

using namespace sofa;

namespace {

const morphology_rules & R() {
    return morphology_rules::defaults();
}

std::string accepted(std::string_view raw) {
    auto res = normalize_stereotype(raw, R());
    REQUIRE_MESSAGE(std::holds_alternative<std::string>(res), "rejected: " << raw);
    return std::get<std::string>(res);
}

rejection_reason rejected(std::string_view raw) {
    auto res = normalize_stereotype(raw, R());
    REQUIRE_MESSAGE(std::holds_alternative<rejection>(res), "accepted: " << raw);
    return std::get<rejection>(res).reason;
}

bool ends_with(const std::string & s, std::string_view suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

bool vowel(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

// Hand-written reading of the shipped suffix table, without regexes.
std::string oracle_strip_3sg(const std::string & w) {
    for (std::string_view sib : {"shes", "ches", "xes", "zzes"}) {
        if (ends_with(w, sib) && w.size() > sib.size()) {
            return w.substr(0, w.size() - 2);
        }
    }
    if (ends_with(w, "oes")) {
        return w.substr(0, w.size() - 2);
    }
    if (ends_with(w, "ies") && w.size() > 3 && !vowel(w[w.size() - 4])) {
        return w.substr(0, w.size() - 3) + "y";
    }
    if (ends_with(w, "s") && w.size() > 1) {
        char prev = w[w.size() - 2];
        if (prev != 's' && prev != 'u' && prev != '\'') {
            return w.substr(0, w.size() - 1);
        }
    }
    return w;
}

class always_verb final : public pos_tagger {
  public:
    bool is_verb(std::string_view, std::string_view) const override { return true; }
};

}  // namespace

TEST_SUITE("normalize") {

TEST_CASE("pluralize_verb: map, lexicon, suffix rules") {
    CHECK(pluralize_verb("is", R()).form == "are");
    CHECK(pluralize_verb("is", R()).known);
    CHECK(pluralize_verb("watches", R()).form == "watch");
    CHECK(pluralize_verb("run", R()).form == "run");
    CHECK(pluralize_verb("run", R()).known);
    CHECK(pluralize_verb("has", R()).form == "have");
    CHECK(pluralize_verb("doesn't", R()).form == "don't");
}

TEST_CASE("pluralize_verb agrees with the hand-written suffix oracle") {
    for (std::string w : {"complains", "watches", "fixes", "buzzes", "echoes", "cries", "worries", "runs", "hates",
                          "thinks", "wishes", "teaches", "relaxes", "marries", "steals", "smells", "whines"}) {
        auto got = pluralize_verb(w, R());
        CHECK_MESSAGE(got.form == oracle_strip_3sg(w), w);
        CHECK(got.known);
    }
}

TEST_CASE("pluralize_verb flags unknown forms unchanged") {
    auto v = pluralize_verb("xyzzq", R());
    CHECK(v.form == "xyzzq");
    CHECK_FALSE(v.known);
}

TEST_CASE("normalize_stereotype examples") {
    CHECK(accepted("Complains about everything") == "complain about everything");
    CHECK(accepted("are all terrorists") == "are all terrorists");
    CHECK(accepted("STIR UP DRAMA") == "stir up drama");
    CHECK(accepted("  is   lazy ") == "are lazy");
    CHECK(accepted("always complains") == "always complain");
    CHECK(accepted("doesn't work") == "don't work");
}

TEST_CASE("normalize_stereotype rejections carry one reason") {
    CHECK(rejected("women are bad drivers") == rejection_reason::already_targeted);
    CHECK(rejected("they are lazy") == rejection_reason::already_targeted);
    CHECK(rejected("caused the holocaust") == rejection_reason::historical_reference);
    CHECK(rejected("are called a slur") == rejection_reason::terminological);
    CHECK(rejected("make fun of people") == rejection_reason::joke_or_offense);
    CHECK(rejected("being lazy") == rejection_reason::gerund_only);
    CHECK(rejected("lazy and dumb") == rejection_reason::no_verb);
    CHECK(rejected("   ") == rejection_reason::no_verb);
}

TEST_CASE("exclusion keywords match whole words only") {
    // "funny" is a joke keyword; "funnyish" is not a whole-word hit.
    CHECK(accepted("are funnyish") == "are funnyish");
}

TEST_CASE("rejection reasons round-trip through their names") {
    for (auto r : {rejection_reason::already_targeted, rejection_reason::no_verb, rejection_reason::gerund_only,
                   rejection_reason::historical_reference, rejection_reason::terminological,
                   rejection_reason::joke_or_offense}) {
        CHECK(rejection_reason_from_string(to_string(r)) == r);
    }
    CHECK_FALSE(rejection_reason_from_string("nope").has_value());
}

TEST_CASE("normalize_stereotype is idempotent on accepted inputs") {
    for (std::string raw : {"Complains about everything", "is bad at math", "Have No Manners", "always lies",
                            "cries a lot", "fixes nothing", "goes to church", "does not listen",
                            "Caf\x65\xcc\x81 owners? no: own cafés"}) {
        auto first = normalize_stereotype(raw, R());
        if (auto * s = std::get_if<std::string>(&first)) {
            CHECK(accepted(*s) == *s);
        }
    }
}

TEST_CASE("accepted statements start with a plural verb") {
    for (std::string raw : {"complains", "is", "has kids", "always cries", "prays daily", "eats rice"}) {
        auto s     = accepted(raw);
        auto words = s.substr(0, s.find(' '));
        if (R().leading_adverbs.count(words)) {
            auto rest = s.substr(s.find(' ') + 1);
            words     = rest.substr(0, rest.find(' '));
        }
        CHECK_MESSAGE(R().is_plural_verb(words), s);
    }
}

TEST_CASE("NFC is applied before the rules") {
    CHECK(accepted("are cafe\xcc\x81 owners") == "are caf\xc3\xa9 owners");
}

TEST_CASE("a rule set that requires a tagger fails without one") {
    auto j              = nlohmann::json::parse(default_rules_json());
    j["verb_detection"] = "tagger";
    auto rules          = morphology_rules::from_json(j);
    CHECK(rules.requires_tagger);
    CHECK(testing::kind_of([&] { normalize_stereotype("are lazy", rules); }) == error_kind::config);
    always_verb tagger;
    CHECK(std::holds_alternative<std::string>(normalize_stereotype("are lazy", rules, &tagger)));
}

TEST_CASE("normalize_identity examples") {
    CHECK(normalize_identity("Korean", R()) == "Korean people");
    CHECK(normalize_identity("Women", R()) == "Women");
    CHECK(normalize_identity("trans man", R()) == "trans men");
    CHECK(normalize_identity("Catholic", R()) == "Catholics");
    CHECK(normalize_identity("Catholics", R()) == "Catholics");
    CHECK(normalize_identity("British", R()) == "British people");
    CHECK(normalize_identity("Japanese", R()) == "Japanese");
    CHECK(normalize_identity("person with a disability", R()) == "people with a disability");
    CHECK(normalize_identity("wheelchair user", R()) == "wheelchair users");
    CHECK(normalize_identity("German", R()) == "Germans");
    CHECK(normalize_identity("child", R()) == "children");
    CHECK(normalize_identity("deaf", R()) == "deaf people");
}

TEST_CASE("normalize_identity is idempotent") {
    for (std::string raw : {"Korean", "trans man", "Catholic", "person with a disability", "British", "lady",
                            "Swiss", "elf", "Christian", "atheist", "deaf", "child", "wheelchair user"}) {
        auto once = normalize_identity(raw, R());
        CHECK_MESSAGE(normalize_identity(once, R()) == once, raw << " -> " << once);
    }
}

TEST_CASE("rule files load and reject malformed tables") {
    testing::temp_dir dir;
    CHECK(testing::kind_of([&] { morphology_rules::load(dir / "absent.json"); }) == error_kind::io);
    auto bad = nlohmann::json::parse(default_rules_json());
    bad["suffix_rules"] = nlohmann::json::array({nlohmann::json::array({"(unclosed", "$1"})});
    CHECK(testing::kind_of([&] { morphology_rules::from_json(bad); }).has_value());
}

}
