#pragma once

#include "sofa/normalize.hpp"

#include "json.hpp"

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sofa {

// Lowercase category name. Ordering follows the reporting column order
// (religion, gender, disability, nationality), then any extra categories by name.
class category_id {
  public:
    category_id() = default;
    explicit category_id(std::string_view name);

    const std::string & str() const noexcept { return name_; }
    int                 canonical_rank() const noexcept;

    friend bool operator==(const category_id & a, const category_id & b) { return a.name_ == b.name_; }
    friend std::strong_ordering operator<=>(const category_id & a, const category_id & b);

  private:
    std::string name_;
};

struct identity {
    std::string id;  // "<category>-<slug(normalized_form)>"
    category_id category;
    std::string raw_form;
    std::string normalized_form;
};

// A statement as read from a source file, before normalization.
struct raw_stereotype {
    std::string id;
    category_id category;
    std::string text;
};

struct stereotype {
    std::string id;
    category_id category;
    std::string text;  // lowercase, subject-free, trimmed
};

// Throw error_kind::validation on invariant violations.
void validate(const identity & i);
void validate(const stereotype & s);

std::string make_identity_id(const category_id & category, std::string_view normalized_form);

// Source group (lexicon file key or SBIC targetCategory) -> category.
// A group mapped to null is deliberately dropped.
class category_mapping {
  public:
    static const category_mapping & defaults();
    static category_mapping          from_json(const nlohmann::json & j);
    static category_mapping          load(const std::filesystem::path & path);

    // nullopt when the group is dropped or unknown. Groups named like a target
    // category map to themselves.
    std::optional<category_id> resolve(std::string_view group) const;
    bool                       knows(std::string_view group) const;

  private:
    std::map<std::string, std::optional<category_id>> groups_;
};

std::string_view default_mapping_json();

// Per-input accounting: rows_in == kept + sum(skipped).
struct skip_report {
    size_t                        rows_in = 0;
    size_t                        kept    = 0;
    std::map<std::string, size_t> skipped;  // reason -> count

    size_t         total_skipped() const;
    nlohmann::json to_json() const;
};

class lexicon {
  public:
    void add(identity i);

    const std::map<category_id, std::vector<identity>> & entries() const noexcept { return entries_; }
    const std::vector<identity> &                          identities(const category_id & c) const;
    bool                                                   has(const category_id & c) const;
    size_t                                                 size() const;

  private:
    std::map<category_id, std::vector<identity>> entries_;
};

struct lexicon_load_result {
    lexicon     lex;
    skip_report skips;  // counted in identities
};

lexicon_load_result load_lexicon(const std::filesystem::path & path, const category_mapping & mapping,
                                 const morphology_rules & rules = morphology_rules::defaults());
lexicon_load_result parse_lexicon(std::string_view json_text, const category_mapping & mapping,
                                  const morphology_rules & rules = morphology_rules::defaults());

enum class stereotype_format { jsonl, sbic_csv };

stereotype_format parse_stereotype_format(std::string_view tag);

struct sbic_columns {
    std::string text     = "targetStereotype";
    std::string category = "targetCategory";
};

struct ingest_result {
    std::vector<raw_stereotype> stereotypes;
    skip_report                 skips;
};

ingest_result ingest_stereotypes(const std::filesystem::path & path, stereotype_format format,
                                 const category_mapping & mapping, const sbic_columns & columns = {});
ingest_result ingest_jsonl(std::string_view content, const category_mapping & mapping);
ingest_result ingest_delimited(std::string_view content, char delimiter, const category_mapping & mapping,
                               const sbic_columns & columns = {});

// Reads curated stereotypes in the stereotypes_to_jsonl layout (ids preserved, no mapping).
std::vector<stereotype> read_stereotypes(const std::filesystem::path & path);
std::string             stereotypes_to_jsonl(const std::vector<stereotype> & items);

}  // namespace sofa
