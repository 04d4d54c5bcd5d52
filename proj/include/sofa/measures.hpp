#pragma once

#include "sofa/corpus.hpp"
#include "sofa/probegen.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sofa {

inline constexpr int k_report_schema_version = 1;

struct probe_score {
    std::string probe_id;
    std::string model_id;
    std::string stereotype_id;
    std::string identity_id;
    category_id category;
    double      ppl_probe    = 1;
    double      ppl_identity = 1;
    double      ppl_star     = 1;  // ppl_probe / ppl_identity
    double      log_ppl_star = 0;  // log10(ppl_star)

    nlohmann::ordered_json to_json() const;
    static probe_score     from_json(const nlohmann::json & j);
};

struct ppl_star_value {
    double ppl_star     = 1;
    double log_ppl_star = 0;
};

// Both inputs finite and >= 1.
ppl_star_value ppl_star_log(double ppl_probe, double ppl_identity);

probe_score make_probe_score(const probe & p, const std::string & model_id, double ppl_probe, double ppl_identity);

std::string              scores_to_jsonl(std::span<const probe_score> scores);
std::vector<probe_score> parse_scores(std::string_view content, const std::string & source = "<scores>");
std::vector<probe_score> read_scores(const std::filesystem::path & path);

enum class variance_kind { population, sample };
enum class dds_basis { log, ratio };

variance_kind parse_variance_kind(std::string_view tag);
dds_basis     parse_dds_basis(std::string_view tag);
const char *  to_string(variance_kind v);
const char *  to_string(dds_basis b);

struct aggregate_options {
    variance_kind variance = variance_kind::population;
    dds_basis     dds      = dds_basis::log;
};

struct stereotype_aggregate {
    std::string stereotype_id;
    std::string model_id;
    category_id category;
    size_t      n_probes = 0;
    double      variance = 0;
    double      dds      = 0;  // max_log - min_log, or the raw-ratio spread under dds_basis::ratio
    std::string argmin_identity;
    double      min_log = 0;
    double      max_log = 0;
};

// One stereotype's probe group: >= 2 scores, one stereotype and model, distinct identities.
// Argmin ties go to the lexicographically smallest identity_id.
stereotype_aggregate aggregate_stereotype(std::span<const probe_score> scores, const aggregate_options & options = {});

struct category_score {
    category_id category;
    std::string model_id;
    size_t      n_stereotypes = 0;
    double      score         = 0;  // mean of the stereotype variances
};

category_score sofa_category_score(std::span<const stereotype_aggregate> aggregates);

// Unweighted mean over categories.
double global_sofa_score(const std::map<category_id, double> & per_category);

// Share of stereotypes whose argmin is each identity. Every identity in `universe`
// appears, winners or not.
std::map<std::string, double> identity_association_rates(std::span<const stereotype_aggregate> aggregates,
                                                          const std::vector<std::string> & universe = {});

enum class dds_direction { lowest, highest };

std::vector<stereotype_aggregate> top_stereotypes_by_dds(std::span<const stereotype_aggregate> aggregates, size_t k,
                                                         dds_direction direction = dds_direction::lowest);

struct model_report {
    std::string                                                model_id;
    aggregate_options                                          options;
    std::map<category_id, category_score>                      per_category;
    double                                                     global_score = 0;
    std::map<category_id, std::map<std::string, double>>       identity_rates;
    std::map<category_id, std::vector<stereotype_aggregate>>   top_dds;  // lowest DDS first

    nlohmann::ordered_json to_json() const;
    static model_report    from_json(const nlohmann::json & j);
};

struct analysis_options {
    aggregate_options aggregate;
    size_t            top_k = 10;
    // category -> identity ids that should appear in the rates even without a win.
    std::map<category_id, std::vector<std::string>> identity_universe;
};

// One report per model, in order of first appearance in `scores`.
std::vector<model_report> analyze(std::span<const probe_score> scores, const analysis_options & options = {});

std::string               analysis_to_json(const std::vector<model_report> & reports);
std::vector<model_report> parse_analysis(std::string_view content, const std::string & source = "<analysis>");

}  // namespace sofa
