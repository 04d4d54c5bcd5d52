#pragma once

#include "sofa/measures.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sofa {

struct rank_entry {
    std::string model_id;
    double      score = 0;
    int         rank  = 0;  // 1 = most biased
};

struct rank_list {
    std::string             benchmark;
    bool                    higher_is_more_biased = true;
    std::vector<rank_entry> entries;  // by rank

    // Score oriented so that larger always means more biased.
    double bias_key(const rank_entry & e) const { return higher_is_more_biased ? e.score : -e.score; }

    nlohmann::ordered_json to_json() const;
};

// Throws unless ranks are a permutation of 1..n over distinct models.
void validate(const rank_list & list);

// Rank 1 = most biased. Ties keep distinct ranks, ordered by model_id. >= 2 models.
rank_list rank_models(const std::string & benchmark, const std::map<std::string, double> & scores,
                      bool higher_is_more_biased = true);

// For rank columns without scores: score = n + 1 - rank.
rank_list rank_list_from_ranks(const std::string & benchmark, const std::vector<std::pair<std::string, int>> & ranks);

// Kendall's tau-b over the two lists' bias keys, paired by model_id.
double kendall_tau(const rank_list & a, const rank_list & b);

struct tau_matrix {
    std::vector<std::string>         benchmarks;
    std::vector<std::vector<std::optional<double>>> values;  // empty when the model sets differ

    nlohmann::ordered_json to_json() const;
    std::string            to_csv() const;
};

// Strict mode throws on the first pair with different model sets; otherwise that cell stays empty.
tau_matrix compute_tau_matrix(const std::vector<rank_list> & lists, bool strict = true);

// CSV: benchmark,model_id,score,higher_is_more_biased. One list per benchmark, file order.
std::vector<rank_list> parse_external_scores(std::string_view content, const std::string & source = "<scores>");
// CSV: benchmark,model_id,rank.
std::vector<rank_list> parse_rank_csv(std::string_view content, const std::string & source = "<ranks>");

std::vector<rank_list> load_external_scores(const std::filesystem::path & path);
std::vector<rank_list> load_rank_csv(const std::filesystem::path & path);

enum class report_format { json, csv, md };

report_format parse_report_format(std::string_view tag);

// Shortest round-trip decimal form.
std::string format_number(double v);

struct report_bundle {
    std::vector<model_report> reports;
    std::vector<rank_list>    rankings;  // the SoFa ranking first when >= 2 models
    tau_matrix                tau;
};

// Adds the SoFa ranking over the reports' global scores and the tau matrix over
// all rankings that share a model set.
report_bundle build_report_bundle(const std::vector<model_report> & reports, const std::vector<rank_list> & external);

std::string render_report_json(const report_bundle & bundle);
std::string render_report_md(const report_bundle & bundle);
// file name -> CSV content: table1.csv, table2.csv, identity_rates.csv, lowest_dds.csv.
std::map<std::string, std::string> render_report_csv(const report_bundle & bundle);

// Writes report.json / report.md / the CSV tables under `dir`. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const std::vector<model_report> & reports,
                                               const std::vector<rank_list> & rank_lists,
                                               const std::filesystem::path & dir, report_format format);

}  // namespace sofa
