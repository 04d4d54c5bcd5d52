#include "sofa/probegen.hpp"

#include "sofa/error.hpp"
#include "sofa/util.hpp"

#include <algorithm>
#include <set>

namespace sofa {

namespace {

constexpr const char * k_columns[] = {"probe_id", "stereotype_id", "category", "identity", "stereotype", "probe_text"};

probe make_probe(const stereotype & s, const identity & i) {
    probe p;
    p.stereotype_id = s.id;
    p.identity_id   = i.id;
    p.probe_id      = s.id + ":" + i.id;
    p.category      = s.category;
    p.identity      = i.normalized_form;
    p.stereotype    = s.text;
    p.text          = i.normalized_form + " " + s.text;
    return p;
}

}  // namespace

std::vector<probe> generate_probes(const std::vector<stereotype> & stereotypes, const lexicon & lex) {
    std::map<category_id, std::vector<const stereotype *>> by_category;
    std::set<std::string> ids;
    for (const auto & s : stereotypes) {
        validate(s);
        if (!ids.insert(s.id).second) {
            fail(error_kind::validation, "generate_probes: duplicate stereotype id '" + s.id + "'");
        }
        by_category[s.category].push_back(&s);
    }
    size_t total = 0;
    for (const auto & [cat, group] : by_category) {
        if (!lex.has(cat)) {
            fail(error_kind::validation, "generate_probes: category '" + cat.str() + "' has no identities in the lexicon");
        }
        size_t n_ids = lex.identities(cat).size();
        if (n_ids < 2) {
            fail(error_kind::validation, "generate_probes: category '" + cat.str() + "' has " + std::to_string(n_ids) +
                                             " identity; at least 2 are needed");
        }
        total += n_ids * group.size();
    }

    std::vector<probe> out;
    out.reserve(total);
    for (auto & [cat, group] : by_category) {
        std::sort(group.begin(), group.end(), [](const stereotype * a, const stereotype * b) { return a->id < b->id; });
        const auto & idents = lex.identities(cat);
        for (const stereotype * s : group) {
            for (const auto & i : idents) {
                out.push_back(make_probe(*s, i));
            }
        }
    }
    return out;
}

dataset_format parse_dataset_format(std::string_view tag) {
    if (tag == "jsonl") {
        return dataset_format::jsonl;
    }
    if (tag == "csv") {
        return dataset_format::csv;
    }
    fail(error_kind::usage, "unknown dataset format '" + std::string(tag) + "' (jsonl | csv)");
}

nlohmann::ordered_json dataset_manifest::to_json() const {
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    for (const auto & [k, v] : counts) {
        c[k] = v;
    }
    return {{"counts", c}, {"total", total}, {"digest", digest}};
}

std::string serialize_probes(const std::vector<probe> & probes, dataset_format format) {
    std::string out;
    if (format == dataset_format::csv) {
        for (size_t c = 0; c < std::size(k_columns); ++c) {
            out += (c ? "," : "");
            out += k_columns[c];
        }
        out += "\n";
        for (const auto & p : probes) {
            out += csv_field(p.probe_id) + "," + csv_field(p.stereotype_id) + "," + csv_field(p.category.str()) + "," +
                   csv_field(p.identity) + "," + csv_field(p.stereotype) + "," + csv_field(p.text) + "\n";
        }
        return out;
    }
    for (const auto & p : probes) {
        nlohmann::ordered_json j = {
            {"probe_id", p.probe_id},     {"stereotype_id", p.stereotype_id}, {"identity_id", p.identity_id},
            {"category", p.category.str()}, {"identity", p.identity},         {"stereotype", p.stereotype},
            {"probe_text", p.text},
        };
        out += j.dump() + "\n";
    }
    return out;
}

std::filesystem::path manifest_path_for(const std::filesystem::path & dataset_path) {
    auto p = dataset_path;
    p += ".manifest.json";
    return p;
}

dataset_manifest emit_dataset(const std::vector<probe> & probes, const std::filesystem::path & path,
                              dataset_format format) {
    auto bytes = serialize_probes(probes, format);
    write_file(path, bytes);
    dataset_manifest m;
    for (const auto & p : probes) {
        ++m.counts[p.category.str()];
    }
    m.total  = probes.size();
    m.digest = sha256_hex(bytes);
    write_file(manifest_path_for(path), m.to_json().dump(2) + "\n");
    return m;
}

std::vector<probe> read_probes(const std::filesystem::path & path) {
    auto content = read_file(path);
    std::vector<probe> out;
    auto ext = to_lower(path.extension().string());
    if (ext == ".csv") {
        auto rows = parse_delimited(content, ',');
        if (rows.empty()) {
            fail(error_kind::schema, path.string() + ": missing header");
        }
        std::map<std::string, size_t> col;
        for (size_t c = 0; c < rows[0].size(); ++c) {
            col[rows[0][c]] = c;
        }
        for (const char * name : k_columns) {
            if (!col.count(name)) {
                fail(error_kind::schema, path.string() + ": missing column '" + std::string(name) + "'");
            }
        }
        for (size_t r = 1; r < rows.size(); ++r) {
            const auto & row = rows[r];
            if (row.size() < std::size(k_columns)) {
                fail(error_kind::format, path.string() + ": short row " + std::to_string(r + 1));
            }
            probe p;
            p.probe_id      = row[col["probe_id"]];
            p.stereotype_id = row[col["stereotype_id"]];
            p.category      = category_id(row[col["category"]]);
            p.identity      = row[col["identity"]];
            p.stereotype    = row[col["stereotype"]];
            p.text          = row[col["probe_text"]];
            auto colon      = p.probe_id.find(':');
            p.identity_id   = colon == std::string::npos ? make_identity_id(p.category, p.identity)
                                                         : p.probe_id.substr(colon + 1);
            out.push_back(std::move(p));
        }
        return out;
    }
    auto lines = split_lines(content);
    for (size_t n = 0; n < lines.size(); ++n) {
        if (lines[n].empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(lines[n]);
            probe p;
            p.probe_id      = j.at("probe_id").get<std::string>();
            p.stereotype_id = j.at("stereotype_id").get<std::string>();
            p.identity_id   = j.at("identity_id").get<std::string>();
            p.category      = category_id(j.at("category").get<std::string>());
            p.identity      = j.at("identity").get<std::string>();
            p.stereotype    = j.at("stereotype").get<std::string>();
            p.text          = j.at("probe_text").get<std::string>();
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception & e) {
            fail(error_kind::format, path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace sofa
