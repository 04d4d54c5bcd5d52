#include "sofa/report.hpp"

#include "sofa/error.hpp"
#include "sofa/util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace sofa {

namespace {

const char * k_sofa_benchmark = "SoFa";

std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::map<std::string, const rank_entry *> by_model(const rank_list & l) {
    std::map<std::string, const rank_entry *> m;
    for (const auto & e : l.entries) {
        m[e.model_id] = &e;
    }
    return m;
}

bool same_models(const rank_list & a, const rank_list & b) {
    auto ma = by_model(a);
    auto mb = by_model(b);
    if (ma.size() != mb.size()) {
        return false;
    }
    return std::equal(ma.begin(), ma.end(), mb.begin(), [](const auto & x, const auto & y) { return x.first == y.first; });
}

bool parse_bool(const std::string & s, const std::string & where) {
    auto v = to_lower(s);
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    fail(error_kind::format, where + ": expected a boolean, got '" + s + "'");
}

double parse_double(const std::string & s, const std::string & where) {
    double v   = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        fail(error_kind::format, where + ": expected a number, got '" + s + "'");
    }
    return v;
}

// Header-checked CSV reader: returns rows as column-name -> value maps.
std::vector<std::map<std::string, std::string>> read_table(std::string_view content, const std::string & source,
                                                           std::initializer_list<const char *> required) {
    auto rows = parse_delimited(content, ',');
    if (rows.empty()) {
        fail(error_kind::schema, source + ": missing header");
    }
    std::vector<std::string> header;
    for (const auto & h : rows[0]) {
        header.push_back(to_lower(collapse_whitespace(h)));
    }
    for (const char * name : required) {
        if (std::find(header.begin(), header.end(), name) == header.end()) {
            fail(error_kind::schema, source + ": missing column '" + std::string(name) + "'");
        }
    }
    std::vector<std::map<std::string, std::string>> out;
    for (size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() == 1 && rows[r][0].empty()) {
            continue;
        }
        if (rows[r].size() != header.size()) {
            fail(error_kind::format, source + ": row " + std::to_string(r + 1) + " has " +
                                         std::to_string(rows[r].size()) + " fields, expected " +
                                         std::to_string(header.size()));
        }
        std::map<std::string, std::string> row;
        for (size_t c = 0; c < header.size(); ++c) {
            row[header[c]] = collapse_whitespace(rows[r][c]);
        }
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace

nlohmann::ordered_json rank_list::to_json() const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto & e : entries) {
        arr.push_back({{"model_id", e.model_id}, {"score", e.score}, {"rank", e.rank}});
    }
    return {{"benchmark", benchmark}, {"higher_is_more_biased", higher_is_more_biased}, {"entries", arr}};
}

void validate(const rank_list & list) {
    std::set<std::string> models;
    std::vector<int>      ranks;
    for (const auto & e : list.entries) {
        if (!models.insert(e.model_id).second) {
            fail(error_kind::validation, "ranking '" + list.benchmark + "' lists model '" + e.model_id + "' twice");
        }
        if (!std::isfinite(e.score)) {
            fail(error_kind::validation, "ranking '" + list.benchmark + "': non-finite score for '" + e.model_id + "'");
        }
        ranks.push_back(e.rank);
    }
    std::sort(ranks.begin(), ranks.end());
    for (size_t i = 0; i < ranks.size(); ++i) {
        if (ranks[i] != static_cast<int>(i + 1)) {
            fail(error_kind::validation, "ranking '" + list.benchmark + "': ranks are not a permutation of 1.." +
                                             std::to_string(ranks.size()));
        }
    }
}

rank_list rank_models(const std::string & benchmark, const std::map<std::string, double> & scores,
                      bool higher_is_more_biased) {
    if (scores.size() < 2) {
        fail(error_kind::validation, "ranking '" + benchmark + "' needs at least 2 models");
    }
    rank_list l;
    l.benchmark             = benchmark;
    l.higher_is_more_biased = higher_is_more_biased;
    for (const auto & [m, s] : scores) {
        if (!std::isfinite(s)) {
            fail(error_kind::validation, "ranking '" + benchmark + "': non-finite score for '" + m + "'");
        }
        l.entries.push_back({m, s, 0});
    }
    // std::map iteration is already model_id-ordered, so a stable sort settles ties.
    std::stable_sort(l.entries.begin(), l.entries.end(),
                     [&](const rank_entry & a, const rank_entry & b) { return l.bias_key(a) > l.bias_key(b); });
    for (size_t i = 0; i < l.entries.size(); ++i) {
        l.entries[i].rank = static_cast<int>(i + 1);
    }
    return l;
}

rank_list rank_list_from_ranks(const std::string & benchmark, const std::vector<std::pair<std::string, int>> & ranks) {
    rank_list l;
    l.benchmark = benchmark;
    int n       = static_cast<int>(ranks.size());
    for (const auto & [m, r] : ranks) {
        l.entries.push_back({m, static_cast<double>(n + 1 - r), r});
    }
    std::sort(l.entries.begin(), l.entries.end(), [](const rank_entry & a, const rank_entry & b) {
        return a.rank != b.rank ? a.rank < b.rank : a.model_id < b.model_id;
    });
    validate(l);
    return l;
}

double kendall_tau(const rank_list & a, const rank_list & b) {
    auto ma = by_model(a);
    auto mb = by_model(b);
    std::vector<std::string> only_a, only_b;
    for (const auto & [m, e] : ma) {
        if (!mb.count(m)) {
            only_a.push_back(m);
        }
    }
    for (const auto & [m, e] : mb) {
        if (!ma.count(m)) {
            only_b.push_back(m);
        }
    }
    if (!only_a.empty() || !only_b.empty()) {
        std::string msg = "kendall_tau: model sets differ between '" + a.benchmark + "' and '" + b.benchmark + "';";
        for (const auto & m : only_a) {
            msg += " only in '" + a.benchmark + "': " + m + ";";
        }
        for (const auto & m : only_b) {
            msg += " only in '" + b.benchmark + "': " + m + ";";
        }
        fail(error_kind::validation, msg);
    }
    std::vector<double> xa, xb;
    for (const auto & [m, e] : ma) {
        xa.push_back(a.bias_key(*e));
        xb.push_back(b.bias_key(*mb.at(m)));
    }
    size_t    n = xa.size();
    long long concordant_minus_discordant = 0, ties_a = 0, ties_b = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            int sa = (xa[i] > xa[j]) - (xa[i] < xa[j]);
            int sb = (xb[i] > xb[j]) - (xb[i] < xb[j]);
            ties_a += sa == 0;
            ties_b += sb == 0;
            concordant_minus_discordant += sa * sb;
        }
    }
    auto   n0    = static_cast<long long>(n * (n - 1) / 2);
    double denom = std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
    if (denom == 0) {
        fail(error_kind::validation, "kendall_tau undefined for '" + a.benchmark + "' vs '" + b.benchmark +
                                         "': a ranking is constant or has fewer than 2 models");
    }
    return static_cast<double>(concordant_minus_discordant) / denom;
}

nlohmann::ordered_json tau_matrix::to_json() const {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto & r : values) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (const auto & v : r) {
            row.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
        }
        rows.push_back(row);
    }
    return {{"benchmarks", benchmarks}, {"values", rows}};
}

std::string tau_matrix::to_csv() const {
    std::string out = "benchmark";
    for (const auto & b : benchmarks) {
        out += "," + csv_field(b);
    }
    out += "\n";
    for (size_t i = 0; i < benchmarks.size(); ++i) {
        out += csv_field(benchmarks[i]);
        for (const auto & v : values[i]) {
            out += "," + (v ? format_number(*v) : std::string());
        }
        out += "\n";
    }
    return out;
}

tau_matrix compute_tau_matrix(const std::vector<rank_list> & lists, bool strict) {
    tau_matrix t;
    for (const auto & l : lists) {
        t.benchmarks.push_back(l.benchmark);
    }
    size_t n = lists.size();
    t.values.assign(n, std::vector<std::optional<double>>(n));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i; j < n; ++j) {
            if (!strict && !same_models(lists[i], lists[j])) {
                continue;
            }
            double v     = i == j ? 1.0 : kendall_tau(lists[i], lists[j]);
            t.values[i][j] = v;
            t.values[j][i] = v;
        }
    }
    return t;
}

std::vector<rank_list> parse_external_scores(std::string_view content, const std::string & source) {
    auto rows = read_table(content, source, {"benchmark", "model_id", "score", "higher_is_more_biased"});
    std::vector<std::string>                                   order;
    std::map<std::string, std::map<std::string, double>>       scores;
    std::map<std::string, bool>                                direction;
    for (size_t r = 0; r < rows.size(); ++r) {
        auto        where = source + ": row " + std::to_string(r + 2);
        const auto & row  = rows[r];
        const auto & b    = row.at("benchmark");
        bool        hi    = parse_bool(row.at("higher_is_more_biased"), where);
        if (!scores.count(b)) {
            order.push_back(b);
            direction[b] = hi;
        } else if (direction[b] != hi) {
            fail(error_kind::validation, where + ": inconsistent higher_is_more_biased for benchmark '" + b + "'");
        }
        if (!scores[b].emplace(row.at("model_id"), parse_double(row.at("score"), where)).second) {
            fail(error_kind::validation, where + ": duplicate model '" + row.at("model_id") + "' in '" + b + "'");
        }
    }
    std::vector<rank_list> out;
    for (const auto & b : order) {
        out.push_back(rank_models(b, scores.at(b), direction.at(b)));
    }
    return out;
}

std::vector<rank_list> parse_rank_csv(std::string_view content, const std::string & source) {
    auto rows = read_table(content, source, {"benchmark", "model_id", "rank"});
    std::vector<std::string>                                             order;
    std::map<std::string, std::vector<std::pair<std::string, int>>>     ranks;
    for (size_t r = 0; r < rows.size(); ++r) {
        auto         where = source + ": row " + std::to_string(r + 2);
        const auto & row   = rows[r];
        const auto & b     = row.at("benchmark");
        double       v     = parse_double(row.at("rank"), where);
        if (v != std::floor(v) || v < 1) {
            fail(error_kind::format, where + ": rank must be a positive integer");
        }
        if (!ranks.count(b)) {
            order.push_back(b);
        }
        ranks[b].emplace_back(row.at("model_id"), static_cast<int>(v));
    }
    std::vector<rank_list> out;
    for (const auto & b : order) {
        out.push_back(rank_list_from_ranks(b, ranks.at(b)));
    }
    return out;
}

std::vector<rank_list> load_external_scores(const std::filesystem::path & path) {
    return parse_external_scores(read_file(path), path.string());
}

std::vector<rank_list> load_rank_csv(const std::filesystem::path & path) {
    return parse_rank_csv(read_file(path), path.string());
}

report_format parse_report_format(std::string_view tag) {
    if (tag == "json") {
        return report_format::json;
    }
    if (tag == "csv") {
        return report_format::csv;
    }
    if (tag == "md") {
        return report_format::md;
    }
    fail(error_kind::usage, "unknown report format '" + std::string(tag) + "' (json | csv | md)");
}

std::string format_number(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

report_bundle build_report_bundle(const std::vector<model_report> & reports, const std::vector<rank_list> & external) {
    if (reports.empty()) {
        fail(error_kind::validation, "a report needs at least one model report");
    }
    report_bundle b;
    b.reports = reports;
    std::set<std::string> names;
    if (reports.size() >= 2) {
        std::map<std::string, double> global;
        for (const auto & r : reports) {
            if (!global.emplace(r.model_id, r.global_score).second) {
                fail(error_kind::validation, "duplicate model report '" + r.model_id + "'");
            }
        }
        b.rankings.push_back(rank_models(k_sofa_benchmark, global));
        names.insert(k_sofa_benchmark);
    }
    for (const auto & l : external) {
        validate(l);
        if (!names.insert(l.benchmark).second) {
            fail(error_kind::validation, "benchmark '" + l.benchmark + "' appears twice");
        }
        b.rankings.push_back(l);
    }
    b.tau = compute_tau_matrix(b.rankings, false);
    return b;
}

namespace {

std::vector<category_id> report_categories(const std::vector<model_report> & reports) {
    std::set<category_id> cats;
    for (const auto & r : reports) {
        for (const auto & [c, s] : r.per_category) {
            cats.insert(c);
        }
    }
    return {cats.begin(), cats.end()};
}

// Models from the reports first, then any extra ones the rankings mention.
std::vector<std::string> table1_models(const report_bundle & b) {
    std::vector<std::string> models;
    std::set<std::string>    seen;
    for (const auto & r : b.reports) {
        if (seen.insert(r.model_id).second) {
            models.push_back(r.model_id);
        }
    }
    for (const auto & l : b.rankings) {
        for (const auto & e : l.entries) {
            if (seen.insert(e.model_id).second) {
                models.push_back(e.model_id);
            }
        }
    }
    return models;
}

struct table {
    std::vector<std::string>              header;
    std::vector<std::vector<std::string>> rows;
};

table table1(const report_bundle & b, bool pretty) {
    table t;
    t.header = {"model_id", "sofa_score"};
    for (const auto & l : b.rankings) {
        if (l.benchmark != k_sofa_benchmark) {
            t.header.push_back(l.benchmark + "_score");
        }
        t.header.push_back(l.benchmark + "_rank");
    }
    std::map<std::string, double> global;
    for (const auto & r : b.reports) {
        global[r.model_id] = r.global_score;
    }
    for (const auto & m : table1_models(b)) {
        std::vector<std::string> row = {m};
        auto                     g   = global.find(m);
        row.push_back(g == global.end() ? "" : (pretty ? fixed3(g->second) : format_number(g->second)));
        for (const auto & l : b.rankings) {
            auto idx = by_model(l);
            auto it  = idx.find(m);
            if (l.benchmark != k_sofa_benchmark) {
                row.push_back(it == idx.end() ? "" : format_number(it->second->score));
            }
            row.push_back(it == idx.end() ? "" : std::to_string(it->second->rank));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

table table2(const report_bundle & b, bool pretty) {
    table t;
    auto  cats = report_categories(b.reports);
    t.header   = {"model_id"};
    for (const auto & c : cats) {
        t.header.push_back(c.str());
    }
    for (const auto & r : b.reports) {
        std::vector<std::string> row = {r.model_id};
        for (const auto & c : cats) {
            auto it = r.per_category.find(c);
            row.push_back(it == r.per_category.end() ? ""
                                                     : (pretty ? fixed3(it->second.score) : format_number(it->second.score)));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

table rates_table(const report_bundle & b, bool pretty) {
    table t;
    t.header = {"model_id", "category", "identity_id", "rate"};
    for (const auto & r : b.reports) {
        for (const auto & [c, rates] : r.identity_rates) {
            for (const auto & [id, v] : rates) {
                t.rows.push_back({r.model_id, c.str(), id, pretty ? fixed3(v) : format_number(v)});
            }
        }
    }
    return t;
}

table dds_table(const report_bundle & b, bool pretty) {
    table t;
    t.header = {"model_id", "category", "position", "stereotype_id", "dds", "argmin_identity"};
    for (const auto & r : b.reports) {
        for (const auto & [c, list] : r.top_dds) {
            for (size_t i = 0; i < list.size(); ++i) {
                t.rows.push_back({r.model_id, c.str(), std::to_string(i + 1), list[i].stereotype_id,
                                  pretty ? fixed3(list[i].dds) : format_number(list[i].dds),
                                  list[i].argmin_identity});
            }
        }
    }
    return t;
}

std::string to_csv(const table & t) {
    std::string out;
    for (size_t c = 0; c < t.header.size(); ++c) {
        out += (c ? "," : "") + csv_field(t.header[c]);
    }
    out += "\n";
    for (const auto & row : t.rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            out += (c ? "," : "") + csv_field(row[c]);
        }
        out += "\n";
    }
    return out;
}

std::string md_cell(const std::string & s) {
    std::string out;
    for (char ch : s) {
        if (ch == '|') {
            out += "\\|";
        } else {
            out += ch;
        }
    }
    return out;
}

std::string to_md(const table & t) {
    std::string out = "|";
    for (const auto & h : t.header) {
        out += " " + md_cell(h) + " |";
    }
    out += "\n|";
    for (size_t c = 0; c < t.header.size(); ++c) {
        out += " --- |";
    }
    out += "\n";
    for (const auto & row : t.rows) {
        out += "|";
        for (const auto & cell : row) {
            out += " " + md_cell(cell) + " |";
        }
        out += "\n";
    }
    return out;
}

}  // namespace

std::string render_report_json(const report_bundle & b) {
    nlohmann::ordered_json models   = nlohmann::ordered_json::array();
    nlohmann::ordered_json rankings = nlohmann::ordered_json::array();
    for (const auto & r : b.reports) {
        models.push_back(r.to_json());
    }
    for (const auto & l : b.rankings) {
        rankings.push_back(l.to_json());
    }
    nlohmann::ordered_json j = {
        {"schema_version", k_report_schema_version},
        {"models", models},
        {"rankings", rankings},
        {"kendall_tau", b.tau.to_json()},
    };
    return j.dump(2) + "\n";
}

std::string render_report_md(const report_bundle & b) {
    std::string out = "# Fairness report\n\n";
    out += "## Global scores and ranks\n\n" + to_md(table1(b, true)) + "\n";
    out += "## Scores by category\n\n" + to_md(table2(b, true)) + "\n";
    if (b.tau.benchmarks.size() >= 2) {
        table t;
        t.header = {"benchmark"};
        for (const auto & n : b.tau.benchmarks) {
            t.header.push_back(n);
        }
        for (size_t i = 0; i < b.tau.benchmarks.size(); ++i) {
            std::vector<std::string> row = {b.tau.benchmarks[i]};
            for (const auto & v : b.tau.values[i]) {
                row.push_back(v ? fixed3(*v) : "n/a");
            }
            t.rows.push_back(std::move(row));
        }
        out += "## Kendall's tau between rankings\n\n" + to_md(t) + "\n";
    }
    out += "## Identity association rates\n\n" + to_md(rates_table(b, true)) + "\n";
    out += "## Lowest-DDS stereotypes\n\n" + to_md(dds_table(b, true));
    return out;
}

std::map<std::string, std::string> render_report_csv(const report_bundle & b) {
    std::map<std::string, std::string> files;
    files["table1.csv"]         = to_csv(table1(b, false));
    files["table2.csv"]         = to_csv(table2(b, false));
    files["identity_rates.csv"] = to_csv(rates_table(b, false));
    files["lowest_dds.csv"]     = to_csv(dds_table(b, false));
    if (b.tau.benchmarks.size() >= 2) {
        files["kendall_tau.csv"] = b.tau.to_csv();
    }
    return files;
}

std::vector<std::filesystem::path> emit_report(const std::vector<model_report> & reports,
                                               const std::vector<rank_list> & rank_lists,
                                               const std::filesystem::path & dir, report_format format) {
    auto                               bundle = build_report_bundle(reports, rank_lists);
    std::vector<std::filesystem::path> written;
    switch (format) {
        case report_format::json:
            written.push_back(dir / "report.json");
            write_file(written.back(), render_report_json(bundle));
            break;
        case report_format::md:
            written.push_back(dir / "report.md");
            write_file(written.back(), render_report_md(bundle));
            break;
        case report_format::csv:
            for (const auto & [name, content] : render_report_csv(bundle)) {
                written.push_back(dir / name);
                write_file(written.back(), content);
            }
            break;
    }
    return written;
}

}  // namespace sofa
