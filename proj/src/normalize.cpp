#include "sofa/normalize.hpp"

#include "sofa/error.hpp"
#include "sofa/util.hpp"

#include <algorithm>

namespace sofa {

namespace {

constexpr rejection_reason k_all_reasons[] = {
    rejection_reason::already_targeted,     rejection_reason::no_verb,
    rejection_reason::gerund_only,          rejection_reason::historical_reference,
    rejection_reason::terminological,       rejection_reason::joke_or_offense,
};

std::vector<rewrite_rule> parse_rules(const nlohmann::json & arr, const char * section, bool icase) {
    std::vector<rewrite_rule> out;
    if (!arr.is_array()) {
        fail(error_kind::schema, std::string("rules: section '") + section + "' must be an array");
    }
    auto flags = std::regex::ECMAScript | (icase ? std::regex::icase : std::regex::flag_type{});
    for (const auto & item : arr) {
        rewrite_rule r;
        if (item.is_string()) {
            r.pattern = item.get<std::string>();
        } else if (item.is_array() && item.size() == 2) {
            r.pattern     = item[0].get<std::string>();
            r.replacement = item[1].get<std::string>();
        } else {
            fail(error_kind::schema, std::string("rules: malformed entry in '") + section + "'");
        }
        try {
            r.compiled = std::regex(r.pattern, flags);
        } catch (const std::regex_error & e) {
            fail(error_kind::format, std::string("rules: bad pattern '") + r.pattern + "' in '" + section + "': " + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::set<std::string> parse_word_set(const nlohmann::json & j, const char * key) {
    std::set<std::string> out;
    if (!j.contains(key)) {
        return out;
    }
    for (const auto & w : j.at(key)) {
        out.insert(to_lower(w.get<std::string>()));
    }
    return out;
}

// First rule whose pattern matches the whole word rewrites it.
std::optional<std::string> apply_first(const std::vector<rewrite_rule> & rules, const std::string & word) {
    for (const auto & r : rules) {
        if (std::regex_match(word, r.compiled)) {
            return std::regex_replace(word, r.compiled, r.replacement, std::regex_constants::format_first_only);
        }
    }
    return std::nullopt;
}

bool matches_any(const std::vector<rewrite_rule> & rules, const std::string & word) {
    return std::any_of(rules.begin(), rules.end(),
                       [&](const rewrite_rule & r) { return std::regex_match(word, r.compiled); });
}

// Whole-word (space-delimited) containment.
bool contains_phrase(const std::string & padded_text, const std::string & phrase) {
    return padded_text.find(" " + phrase + " ") != std::string::npos;
}

std::string join(const std::vector<std::string> & words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) {
            out.push_back(' ');
        }
        out += words[i];
    }
    return out;
}

}  // namespace

const char * to_string(rejection_reason reason) {
    switch (reason) {
        case rejection_reason::already_targeted:     return "already_targeted";
        case rejection_reason::no_verb:              return "no_verb";
        case rejection_reason::gerund_only:          return "gerund_only";
        case rejection_reason::historical_reference: return "historical_reference";
        case rejection_reason::terminological:       return "terminological";
        case rejection_reason::joke_or_offense:      return "joke_or_offense";
    }
    return "unknown";
}

std::optional<rejection_reason> rejection_reason_from_string(std::string_view name) {
    for (auto r : k_all_reasons) {
        if (name == to_string(r)) {
            return r;
        }
    }
    return std::nullopt;
}

bool morphology_rules::is_plural_verb(std::string_view token) const {
    std::string t(token);
    if (plural_verbs.count(t)) {
        return true;
    }
    return std::any_of(verb_plural_map.begin(), verb_plural_map.end(),
                       [&](const auto & kv) { return kv.second == t; });
}

morphology_rules morphology_rules::from_json(const nlohmann::json & j) {
    if (!j.is_object()) {
        fail(error_kind::format, "rules: top level must be a JSON object");
    }
    for (const char * key : {"verb_plural_map", "suffix_rules", "noun_plural_rules", "adjective_markers"}) {
        if (!j.contains(key)) {
            fail(error_kind::schema, std::string("rules: missing section '") + key + "'");
        }
    }
    morphology_rules r;
    for (const auto & [k, v] : j.at("verb_plural_map").items()) {
        r.verb_plural_map[to_lower(k)] = to_lower(v.get<std::string>());
    }
    r.suffix_rules      = parse_rules(j.at("suffix_rules"), "suffix_rules", false);
    r.noun_plural_rules = parse_rules(j.at("noun_plural_rules"), "noun_plural_rules", true);
    r.adjective_markers = parse_rules(j.at("adjective_markers"), "adjective_markers", true);
    r.plural_verbs      = parse_word_set(j, "plural_verbs");
    r.leading_adverbs   = parse_word_set(j, "leading_adverbs");
    r.subject_markers   = parse_word_set(j, "subject_markers");
    if (j.contains("head_delimiters")) {
        for (const auto & w : j.at("head_delimiters")) {
            r.head_delimiters.push_back(to_lower(w.get<std::string>()));
        }
    }
    if (j.contains("exclusions")) {
        // Fixed evaluation order regardless of key order in the file.
        for (auto reason : {rejection_reason::historical_reference, rejection_reason::terminological,
                            rejection_reason::joke_or_offense}) {
            const char * name = to_string(reason);
            if (!j.at("exclusions").contains(name)) {
                continue;
            }
            std::vector<std::string> kws;
            for (const auto & w : j.at("exclusions").at(name)) {
                kws.push_back(to_lower(w.get<std::string>()));
            }
            r.exclusions.emplace_back(reason, std::move(kws));
        }
        for (const auto & [k, _] : j.at("exclusions").items()) {
            auto reason = rejection_reason_from_string(k);
            if (!reason || *reason == rejection_reason::no_verb || *reason == rejection_reason::gerund_only ||
                *reason == rejection_reason::already_targeted) {
                fail(error_kind::schema, "rules: unknown exclusion reason '" + k + "'");
            }
        }
    }
    auto detection = j.value("verb_detection", std::string("lexicon"));
    if (detection == "tagger") {
        r.requires_tagger = true;
    } else if (detection != "lexicon") {
        fail(error_kind::schema, "rules: verb_detection must be 'lexicon' or 'tagger'");
    }
    return r;
}

morphology_rules morphology_rules::load(const std::filesystem::path & path) {
    auto text = read_file(path);
    try {
        return from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception & e) {
        fail(error_kind::format, path.string() + ": " + e.what());
    }
}

const morphology_rules & morphology_rules::defaults() {
    static const morphology_rules rules = from_json(nlohmann::json::parse(default_rules_json()));
    return rules;
}

verb_form pluralize_verb(std::string_view verb, const morphology_rules & rules) {
    std::string v(verb);
    if (auto it = rules.verb_plural_map.find(v); it != rules.verb_plural_map.end()) {
        return {it->second, true};
    }
    if (rules.is_plural_verb(v)) {
        return {v, true};
    }
    if (auto rewritten = apply_first(rules.suffix_rules, v)) {
        return {*rewritten, true};
    }
    return {v, false};
}

normalized_statement normalize_stereotype(std::string_view raw, const morphology_rules & rules,
                                          const pos_tagger * tagger) {
    if (rules.requires_tagger && tagger == nullptr) {
        fail(error_kind::config, "rule set requires a part-of-speech tagger but none is configured");
    }
    std::string text = to_lower(collapse_whitespace(nfc(raw)));
    auto words = split_whitespace(text);
    if (words.empty()) {
        return rejection{rejection_reason::no_verb, "empty statement"};
    }
    if (rules.subject_markers.count(words.front())) {
        return rejection{rejection_reason::already_targeted, "leading subject '" + words.front() + "'"};
    }
    std::string padded = " " + text + " ";
    for (const auto & [reason, keywords] : rules.exclusions) {
        for (const auto & kw : keywords) {
            if (contains_phrase(padded, kw)) {
                return rejection{reason, "keyword '" + kw + "'"};
            }
        }
    }

    size_t i = 0;
    while (i < words.size() && rules.leading_adverbs.count(words[i]) && !rules.is_plural_verb(words[i])) {
        ++i;
    }
    if (i == words.size()) {
        return rejection{rejection_reason::no_verb, "only adverbs"};
    }
    const std::string & head = words[i];
    auto vf = pluralize_verb(head, rules);
    bool is_verb = false;
    if (rules.requires_tagger) {
        is_verb = tagger->is_verb(head, text);
    } else {
        is_verb = rules.is_plural_verb(vf.form);
    }
    if (!is_verb) {
        if (head.size() > 4 && head.ends_with("ing")) {
            return rejection{rejection_reason::gerund_only, "leading gerund '" + head + "'"};
        }
        return rejection{rejection_reason::no_verb, "no leading verb at '" + head + "'"};
    }
    words[i] = vf.form;
    return join(words);
}

std::string normalize_identity(std::string_view raw, const morphology_rules & rules) {
    auto words = split_whitespace(collapse_whitespace(nfc(raw)));
    if (words.empty()) {
        fail(error_kind::validation, "identity: empty term");
    }
    // The head noun is the last word before a post-modifier ("people with depression").
    size_t end = words.size();
    for (size_t k = 1; k < words.size(); ++k) {
        auto lw = to_lower(words[k]);
        if (std::find(rules.head_delimiters.begin(), rules.head_delimiters.end(), lw) != rules.head_delimiters.end()) {
            end = k;
            break;
        }
    }
    size_t head = end - 1;
    if (matches_any(rules.adjective_markers, words[head])) {
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(head) + 1, "people");
        return join(words);
    }
    if (auto plural = apply_first(rules.noun_plural_rules, words[head])) {
        words[head] = *plural;
    }
    return join(words);
}

}  // namespace sofa
