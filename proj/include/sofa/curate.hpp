#pragma once

#include "sofa/corpus.hpp"
#include "sofa/transport.hpp"

#include "json.hpp"

#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sofa {

struct histogram_bin {
    double lower = 0;
    double upper = 0;
    size_t count = 0;
};

// Counts for one or more chained filter stages.
// Invariant: input == kept + dropped_by_ppl + dropped_by_acceptability + dropped_duplicates.
struct curation_report {
    size_t input                    = 0;
    size_t kept                     = 0;
    size_t dropped_by_ppl           = 0;
    size_t dropped_by_acceptability = 0;
    size_t dropped_duplicates       = 0;

    bool                       ppl_filter_applied = false;
    double                     threshold          = std::numeric_limits<double>::infinity();
    double                     bin_width          = 10.0;
    std::vector<histogram_bin> histogram;  // over the ppl stage's input

    bool           conserved() const;
    nlohmann::ordered_json to_json() const;

    // Chains `next` after this report: next.input must equal this->kept.
    curation_report & then(const curation_report & next);
};

struct filter_result {
    std::vector<stereotype> kept;
    curation_report         report;
};

// Fixed-width bins over [0, max]; the max value lands in the last bin.
std::vector<histogram_bin> ppl_histogram(std::span<const double> values, double bin_width);

// Keeps stereotypes whose mean perplexity is <= threshold (inclusive). Order is
// preserved. A stereotype without a score is a hard error.
filter_result perplexity_filter(const std::vector<stereotype> & stereotypes,
                                const std::map<std::string, double> & mean_ppl, double threshold,
                                double bin_width = 10.0);

class acceptability_judge {
  public:
    virtual ~acceptability_judge() = default;
    // One verdict per text, in order.
    virtual std::vector<bool> judge(std::span<const std::string> texts) = 0;
};

class pass_through_judge final : public acceptability_judge {
  public:
    std::vector<bool> judge(std::span<const std::string> texts) override;
};

class predicate_judge final : public acceptability_judge {
  public:
    explicit predicate_judge(std::function<bool(const std::string &)> accept) : accept_(std::move(accept)) {}
    std::vector<bool> judge(std::span<const std::string> texts) override;

  private:
    std::function<bool(const std::string &)> accept_;
};

// POST {base}/v1/acceptability {"texts": [...]} -> {"accept": [bool, ...]}
class http_acceptability_judge final : public acceptability_judge {
  public:
    http_acceptability_judge(const std::string & url, retry_policy retry = {}, size_t batch_size = 64,
                             std::string auth_token = {});
    std::vector<bool> judge(std::span<const std::string> texts) override;

  private:
    http_endpoint endpoint_;
    retry_policy  retry_;
    size_t        batch_size_;
    std::string   auth_token_;
};

// Transport failures surface as transport_error naming the affected stereotype ids.
filter_result acceptability_filter(const std::vector<stereotype> & stereotypes, acceptability_judge & judge,
                                   size_t batch_size = 256);

// First occurrence per (category, text) wins.
filter_result dedup_stereotypes(const std::vector<stereotype> & stereotypes);

enum class stage_order { ppl_first, acceptability_first };

stage_order parse_stage_order(std::string_view tag);

struct curation_config {
    double      threshold = 150.0;
    double      bin_width = 10.0;
    stage_order order     = stage_order::ppl_first;
};

// ppl filter and acceptability in the configured order, then dedup. When
// `mean_ppl` is null the ppl stage is skipped (report.ppl_filter_applied = false).
filter_result curate(const std::vector<stereotype> & stereotypes, const std::map<std::string, double> * mean_ppl,
                     acceptability_judge & judge, const curation_config & config);

}  // namespace sofa
