#include "sofa/corpus.hpp"

#include "sofa/error.hpp"
#include "sofa/util.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace sofa {

namespace {

constexpr std::string_view k_canonical[] = {"religion", "gender", "disability", "nationality"};

std::string ordinal_id(size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06zu", n);
    return buf;
}

size_t line_of_byte(std::string_view text, size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

std::string trim(std::string_view s) {
    return collapse_whitespace(s);
}

// Applies the mapping to one source category, recording the skip reason on failure.
std::optional<category_id> map_category(const category_mapping & mapping, std::string_view raw_group,
                                        skip_report & skips) {
    std::string group = to_lower(trim(raw_group));
    if (group.empty()) {
        ++skips.skipped["missing_category"];
        return std::nullopt;
    }
    auto cat = mapping.resolve(group);
    if (!cat) {
        ++skips.skipped[mapping.knows(group) ? "excluded_category" : "unmapped_category"];
    }
    return cat;
}

}  // namespace

category_id::category_id(std::string_view name) : name_(to_lower(trim(name))) {
    if (name_.empty()) {
        fail(error_kind::validation, "category id must be non-empty");
    }
}

int category_id::canonical_rank() const noexcept {
    for (size_t i = 0; i < std::size(k_canonical); ++i) {
        if (name_ == k_canonical[i]) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(std::size(k_canonical));
}

std::strong_ordering operator<=>(const category_id & a, const category_id & b) {
    if (auto c = a.canonical_rank() <=> b.canonical_rank(); c != 0) {
        return c;
    }
    return a.name_.compare(b.name_) <=> 0;
}

void validate(const identity & i) {
    if (i.normalized_form.empty()) {
        fail(error_kind::validation, "identity '" + i.id + "': empty normalized form");
    }
    if (collapse_whitespace(i.normalized_form) != i.normalized_form) {
        fail(error_kind::validation, "identity '" + i.id + "': untrimmed normalized form");
    }
    if (i.id.empty() || i.category.str().empty()) {
        fail(error_kind::validation, "identity: missing id or category");
    }
}

void validate(const stereotype & s) {
    if (s.text.empty()) {
        fail(error_kind::validation, "stereotype '" + s.id + "': empty text");
    }
    if (collapse_whitespace(s.text) != s.text) {
        fail(error_kind::validation, "stereotype '" + s.id + "': untrimmed text");
    }
    if (to_lower(s.text) != s.text) {
        fail(error_kind::validation, "stereotype '" + s.id + "': text not lowercase");
    }
    if (s.id.empty() || s.category.str().empty()) {
        fail(error_kind::validation, "stereotype: missing id or category");
    }
}

std::string make_identity_id(const category_id & category, std::string_view normalized_form) {
    return category.str() + "-" + slugify(normalized_form);
}

// ---- category_mapping ------------------------------------------------------

const category_mapping & category_mapping::defaults() {
    static const category_mapping m = from_json(nlohmann::json::parse(default_mapping_json()));
    return m;
}

category_mapping category_mapping::from_json(const nlohmann::json & j) {
    if (!j.is_object()) {
        fail(error_kind::format, "category mapping must be a JSON object");
    }
    category_mapping m;
    for (const auto & [group, target] : j.items()) {
        if (target.is_null()) {
            m.groups_[to_lower(group)] = std::nullopt;
        } else if (target.is_string()) {
            m.groups_[to_lower(group)] = category_id(target.get<std::string>());
        } else {
            fail(error_kind::schema, "category mapping: value for '" + group + "' must be a string or null");
        }
    }
    return m;
}

category_mapping category_mapping::load(const std::filesystem::path & path) {
    auto text = read_file(path);
    try {
        return from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error & e) {
        fail(error_kind::format, path.string() + ":" + std::to_string(line_of_byte(text, e.byte)) + ": " + e.what());
    }
}

bool category_mapping::knows(std::string_view group) const {
    return groups_.count(to_lower(group)) > 0;
}

std::optional<category_id> category_mapping::resolve(std::string_view group) const {
    auto g = to_lower(group);
    if (auto it = groups_.find(g); it != groups_.end()) {
        return it->second;
    }
    for (const auto & [_, target] : groups_) {
        if (target && target->str() == g) {
            return target;
        }
    }
    return std::nullopt;
}

// ---- skip_report -----------------------------------------------------------

size_t skip_report::total_skipped() const {
    size_t n = 0;
    for (const auto & [_, c] : skipped) {
        n += c;
    }
    return n;
}

nlohmann::json skip_report::to_json() const {
    return {{"rows_in", rows_in}, {"kept", kept}, {"skipped", skipped}};
}

// ---- lexicon ---------------------------------------------------------------

void lexicon::add(identity i) {
    entries_[i.category].push_back(std::move(i));
}

const std::vector<identity> & lexicon::identities(const category_id & c) const {
    auto it = entries_.find(c);
    if (it == entries_.end()) {
        fail(error_kind::validation, "lexicon has no category '" + c.str() + "'");
    }
    return it->second;
}

bool lexicon::has(const category_id & c) const {
    return entries_.count(c) > 0;
}

size_t lexicon::size() const {
    size_t n = 0;
    for (const auto & [_, v] : entries_) {
        n += v.size();
    }
    return n;
}

lexicon_load_result parse_lexicon(std::string_view json_text, const category_mapping & mapping,
                                  const morphology_rules & rules) {
    if (trim(json_text).empty()) {
        fail(error_kind::format, "lexicon: empty file (line 1)");
    }
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(json_text);
    } catch (const nlohmann::json::parse_error & e) {
        fail(error_kind::format, "lexicon: parse failure at line " + std::to_string(line_of_byte(json_text, e.byte)) +
                                     ": " + e.what());
    }
    if (!j.is_object()) {
        fail(error_kind::format, "lexicon: top level must be an object {group: [terms]} (line 1)");
    }

    lexicon_load_result res;
    std::map<category_id, std::map<std::string, std::vector<std::string>>> by_form;  // form -> raw terms
    std::set<std::string> ids;
    std::vector<std::string> duplicates;
    for (const auto & [group, terms] : j.items()) {
        if (!terms.is_array()) {
            fail(error_kind::format, "lexicon: group '" + group + "' must map to an array of strings");
        }
        res.skips.rows_in += terms.size();
        auto cat = mapping.resolve(group);
        if (!cat) {
            res.skips.skipped[mapping.knows(group) ? "excluded_category" : "unmapped_category"] += terms.size();
            continue;
        }
        for (const auto & t : terms) {
            if (!t.is_string()) {
                fail(error_kind::format, "lexicon: non-string term in group '" + group + "'");
            }
            auto raw = trim(t.get<std::string>());
            if (raw.empty()) {
                ++res.skips.skipped["empty_term"];
                continue;
            }
            identity id;
            id.category        = *cat;
            id.raw_form        = raw;
            id.normalized_form = normalize_identity(raw, rules);
            id.id              = make_identity_id(*cat, id.normalized_form);
            auto & seen        = by_form[*cat][id.normalized_form];
            seen.push_back(raw);
            if (seen.size() == 2) {
                duplicates.push_back(cat->str() + ": '" + id.normalized_form + "'");
            }
            if (seen.size() > 1) {
                continue;
            }
            if (!ids.insert(id.id).second) {
                duplicates.push_back(cat->str() + ": id '" + id.id + "'");
                continue;
            }
            validate(id);
            res.lex.add(std::move(id));
            ++res.skips.kept;
        }
    }
    if (!duplicates.empty()) {
        std::string msg = "lexicon: duplicate normalized identities:";
        for (const auto & d : duplicates) {
            msg += " " + d + ";";
        }
        fail(error_kind::validation, msg);
    }
    return res;
}

lexicon_load_result load_lexicon(const std::filesystem::path & path, const category_mapping & mapping,
                                 const morphology_rules & rules) {
    auto text = read_file(path);
    try {
        return parse_lexicon(text, mapping, rules);
    } catch (const error & e) {
        throw error(e.kind(), path.string() + ": " + e.what());
    }
}

// ---- stereotype ingestion ---------------------------------------------------

stereotype_format parse_stereotype_format(std::string_view tag) {
    if (tag == "jsonl") {
        return stereotype_format::jsonl;
    }
    if (tag == "sbic-csv" || tag == "sbic_csv") {
        return stereotype_format::sbic_csv;
    }
    fail(error_kind::usage, "unknown stereotype format '" + std::string(tag) + "' (expected jsonl or sbic-csv)");
}

ingest_result ingest_jsonl(std::string_view content, const category_mapping & mapping) {
    ingest_result res;
    std::set<std::string> explicit_ids;
    auto lines = split_lines(content);
    for (size_t line_no = 1; line_no <= lines.size(); ++line_no) {
        auto line = lines[line_no - 1];
        if (trim(line).empty()) {
            continue;
        }
        ++res.skips.rows_in;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error & e) {
            fail(error_kind::format, "stereotypes: line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object()) {
            fail(error_kind::format, "stereotypes: line " + std::to_string(line_no) + ": expected an object");
        }
        for (const char * field : {"category", "text"}) {
            if (!j.contains(field) || !j.at(field).is_string()) {
                fail(error_kind::schema, "stereotypes: line " + std::to_string(line_no) + ": missing string field '" +
                                             field + "'");
            }
        }
        auto text = trim(j.at("text").get<std::string>());
        if (text.empty()) {
            ++res.skips.skipped["empty_text"];
            continue;
        }
        auto cat = map_category(mapping, j.at("category").get<std::string>(), res.skips);
        if (!cat) {
            continue;
        }
        raw_stereotype s;
        if (j.contains("id")) {
            s.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            if (!explicit_ids.insert(s.id).second) {
                fail(error_kind::validation, "stereotypes: line " + std::to_string(line_no) + ": duplicate id '" + s.id + "'");
            }
        } else {
            s.id = ordinal_id(res.skips.rows_in);
        }
        s.category = *cat;
        s.text     = std::move(text);
        res.stereotypes.push_back(std::move(s));
        ++res.skips.kept;
    }
    return res;
}

ingest_result ingest_delimited(std::string_view content, char delimiter, const category_mapping & mapping,
                               const sbic_columns & columns) {
    auto rows = parse_delimited(content, delimiter);
    if (rows.empty()) {
        fail(error_kind::schema, "stereotypes: missing header row");
    }
    const auto & header = rows.front();
    auto col = [&](const std::string & name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            fail(error_kind::schema, "stereotypes: missing required column '" + name + "'");
        }
        return static_cast<size_t>(it - header.begin());
    };
    size_t text_col = col(columns.text);
    size_t cat_col  = col(columns.category);

    ingest_result res;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto & row = rows[r];
        if (row.size() == 1 && trim(row[0]).empty()) {
            continue;  // blank line
        }
        ++res.skips.rows_in;
        std::string text = text_col < row.size() ? trim(row[text_col]) : std::string{};
        if (text.empty()) {
            ++res.skips.skipped["empty_text"];
            continue;
        }
        auto cat = map_category(mapping, cat_col < row.size() ? row[cat_col] : std::string{}, res.skips);
        if (!cat) {
            continue;
        }
        res.stereotypes.push_back({ordinal_id(res.skips.rows_in), *cat, std::move(text)});
        ++res.skips.kept;
    }
    return res;
}

ingest_result ingest_stereotypes(const std::filesystem::path & path, stereotype_format format,
                                 const category_mapping & mapping, const sbic_columns & columns) {
    auto content = read_file(path);
    try {
        if (format == stereotype_format::jsonl) {
            return ingest_jsonl(content, mapping);
        }
        auto ext = to_lower(path.extension().string());
        char delim = (ext == ".tsv" || ext == ".tab") ? '\t' : ',';
        return ingest_delimited(content, delim, mapping, columns);
    } catch (const error & e) {
        throw error(e.kind(), path.string() + ": " + e.what());
    }
}

// ---- curated stereotype files ----------------------------------------------

std::string stereotypes_to_jsonl(const std::vector<stereotype> & items) {
    std::string out;
    for (const auto & s : items) {
        nlohmann::ordered_json j = {{"id", s.id}, {"category", s.category.str()}, {"text", s.text}};
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<stereotype> read_stereotypes(const std::filesystem::path & path) {
    auto content = read_file(path);
    std::vector<stereotype> out;
    auto lines = split_lines(content);
    for (size_t line_no = 1; line_no <= lines.size(); ++line_no) {
        auto line = lines[line_no - 1];
        if (trim(line).empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            stereotype s{j.at("id").get<std::string>(), category_id(j.at("category").get<std::string>()),
                         j.at("text").get<std::string>()};
            validate(s);
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception & e) {
            fail(error_kind::format, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace sofa
