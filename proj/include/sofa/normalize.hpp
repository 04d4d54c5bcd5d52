#pragma once

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sofa {

// One ordered rewrite. `pattern` is an ECMAScript regex applied to a single word;
// `replacement` uses $1-style back-references.
struct rewrite_rule {
    std::string pattern;
    std::string replacement;
    std::regex  compiled;
};

enum class rejection_reason {
    already_targeted,
    no_verb,
    gerund_only,
    historical_reference,
    terminological,
    joke_or_offense,
};

const char * to_string(rejection_reason reason);
std::optional<rejection_reason> rejection_reason_from_string(std::string_view name);

struct rejection {
    rejection_reason reason;
    std::string      detail;
};

// Rule tables driving stereotype and identity normalization. Rules are applied
// in declared order and the first match wins. Map keys are lowercase.
//
// The four morphology sections (verb_plural_map, suffix_rules, noun_plural_rules,
// adjective_markers) are joined by the lexicons the tagger-free verb check needs:
// a base-form verb list, skippable leading adverbs, subject markers that signal a
// statement still names its target, and keyword lists for the exclusion reasons.
struct morphology_rules {
    std::map<std::string, std::string> verb_plural_map;
    std::vector<rewrite_rule>          suffix_rules;       // lowercase verbs
    std::vector<rewrite_rule>          noun_plural_rules;  // identity head word, case-insensitive
    std::vector<rewrite_rule>          adjective_markers;  // head word receiving " people"

    std::set<std::string>    plural_verbs;
    std::set<std::string>    leading_adverbs;
    std::set<std::string>    subject_markers;
    std::vector<std::string> head_delimiters;
    // Keyword lists, checked in this order after the subject-marker test.
    std::vector<std::pair<rejection_reason, std::vector<std::string>>> exclusions;

    bool requires_tagger = false;

    // The shipped tagger-free table.
    static const morphology_rules & defaults();
    static morphology_rules from_json(const nlohmann::json & j);
    static morphology_rules load(const std::filesystem::path & path);

    // Verbs accepted as plural present forms: plural_verbs plus map values.
    bool is_plural_verb(std::string_view token) const;
};

// Raw JSON text of the shipped rule table.
std::string_view default_rules_json();

// Part-of-speech hook for rule sets that ask for one (`"verb_detection": "tagger"`).
class pos_tagger {
  public:
    virtual ~pos_tagger() = default;
    virtual bool is_verb(std::string_view token, std::string_view sentence) const = 0;
};

struct verb_form {
    std::string form;
    bool        known = false;  // false: no map entry, lexicon hit or rule fired
};

verb_form pluralize_verb(std::string_view verb, const morphology_rules & rules);

using normalized_statement = std::variant<std::string, rejection>;

// Lowercased, NFC, whitespace-collapsed statement starting with a plural present verb,
// or a single reason-coded rejection. Throws error_kind::config when the rules need a
// tagger and none is given.
normalized_statement normalize_stereotype(std::string_view raw, const morphology_rules & rules,
                                          const pos_tagger * tagger = nullptr);

// Plural-subject noun phrase. Proper-noun casing is kept.
std::string normalize_identity(std::string_view raw, const morphology_rules & rules);

}  // namespace sofa
