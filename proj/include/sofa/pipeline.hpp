#pragma once

#include "sofa/curate.hpp"
#include "sofa/measures.hpp"
#include "sofa/probegen.hpp"
#include "sofa/report.hpp"
#include "sofa/scoring.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sofa {

const char * tool_version();

// Environment variable holding the bearer token for HTTP backends and judges.
inline constexpr const char * k_token_env = "SOFA_BACKEND_TOKEN";

struct run_config {
    // inputs
    std::string stereotypes;
    std::string stereotype_format = "jsonl";
    std::string lexicon;
    std::string mapping;  // empty: built-in mapping
    std::string rules;    // empty: built-in morphology rules
    std::string mean_ppl;  // optional CSV stereotype_id,mean_ppl; replaces backend scoring in build
    std::vector<std::string> ranks;            // rank CSVs (benchmark,model_id,rank)
    std::vector<std::string> external_scores;  // score CSVs (benchmark,model_id,score,higher_is_more_biased)

    std::string workdir = "work";
    std::string cache;

    // scoring
    std::string              backend;
    std::vector<std::string> models;
    size_t                   parallel   = 0;
    size_t                   batch_size = 16;
    int                      retries    = 3;  // extra attempts after a retryable failure

    // curation
    double      threshold  = 150.0;
    double      bin_width  = 10.0;
    bool        ppl_filter = true;
    std::string judge      = "none";
    std::string stage_order    = "ppl-first";
    std::string dataset_format = "jsonl";

    // measures and report
    std::string              variance  = "population";
    std::string              dds_basis = "log";
    size_t                   top_k     = 10;
    std::vector<std::string> report_formats = {"json", "csv", "md"};

    nlohmann::ordered_json to_json() const;
    // Overrides fields present in `j`; unknown keys are a config error.
    void apply_json(const nlohmann::json & j);
    static run_config load(const std::filesystem::path & path);
};

// Reproducibility record written as manifest.<subcommand>.json next to the outputs.
struct run_manifest {
    std::string                        subcommand;
    nlohmann::ordered_json             config;
    std::map<std::string, std::string> inputs;   // path -> sha256
    std::map<std::string, std::string> outputs;  // path -> sha256

    void add_input(const std::filesystem::path & p);
    void add_output(const std::filesystem::path & p);
    nlohmann::ordered_json to_json() const;
    std::filesystem::path  write(const std::filesystem::path & dir) const;
};

struct stage_log {
    std::ostream * out = nullptr;
    void           line(const std::string & s) const;
};

// Scores every probe under every model. Identity perplexity is computed once per
// (model, identity) and reused for all of that identity's probes.
std::vector<probe_score> score_probes(scorer & backend, const std::vector<std::string> & models,
                                      const std::vector<probe> & probes, score_cache * cache,
                                      const scoring_options & options);

// Arithmetic mean over models of each stereotype text's perplexity.
std::map<std::string, double> mean_stereotype_ppl(scorer & backend, const std::vector<std::string> & models,
                                                  const std::vector<stereotype> & stereotypes, score_cache * cache,
                                                  const scoring_options & options);

std::map<std::string, double> load_mean_ppl(const std::filesystem::path & path);

// Stage drivers. Each writes its artifacts and manifest and returns the manifest path.
std::filesystem::path run_build(const run_config & cfg, const std::filesystem::path & out_dir, const stage_log & log);
std::filesystem::path run_score(const run_config & cfg, const std::filesystem::path & probes_path,
                                const std::filesystem::path & out_path, const stage_log & log);
std::filesystem::path run_analyze(const run_config & cfg, const std::filesystem::path & scores_path,
                                  const std::filesystem::path & out_path, const std::filesystem::path & probes_path,
                                  const stage_log & log);
std::filesystem::path run_compare(const run_config & cfg, const std::optional<std::filesystem::path> & analysis_path,
                                  const std::filesystem::path & out_path, const stage_log & log);
std::filesystem::path run_report(const run_config & cfg, const std::filesystem::path & analysis_path,
                                 const std::filesystem::path & out_dir, const stage_log & log);
std::filesystem::path run_all(const run_config & cfg, const std::filesystem::path & out_dir, const stage_log & log);

}  // namespace sofa
