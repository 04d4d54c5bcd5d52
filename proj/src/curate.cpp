#include "sofa/curate.hpp"

#include "sofa/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace sofa {

bool curation_report::conserved() const {
    return input == kept + dropped_by_ppl + dropped_by_acceptability + dropped_duplicates;
}

nlohmann::ordered_json curation_report::to_json() const {
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (const auto & b : histogram) {
        hist.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
    }
    nlohmann::ordered_json j = {
        {"input", input},
        {"kept", kept},
        {"dropped_by_ppl", dropped_by_ppl},
        {"dropped_by_acceptability", dropped_by_acceptability},
        {"dropped_duplicates", dropped_duplicates},
        {"ppl_filter_applied", ppl_filter_applied},
        {"threshold", std::isinf(threshold) ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(threshold)},
        {"bin_width", bin_width},
        {"histogram", hist},
    };
    return j;
}

curation_report & curation_report::then(const curation_report & next) {
    if (next.input != kept) {
        throw std::logic_error("curation_report::then: stage input does not match previous output");
    }
    kept = next.kept;
    dropped_by_ppl += next.dropped_by_ppl;
    dropped_by_acceptability += next.dropped_by_acceptability;
    dropped_duplicates += next.dropped_duplicates;
    if (next.ppl_filter_applied) {
        ppl_filter_applied = true;
        threshold          = next.threshold;
        bin_width          = next.bin_width;
        histogram          = next.histogram;
    }
    return *this;
}

std::vector<histogram_bin> ppl_histogram(std::span<const double> values, double bin_width) {
    if (!(bin_width > 0) || !std::isfinite(bin_width)) {
        fail(error_kind::validation, "histogram bin width must be positive and finite");
    }
    if (values.empty()) {
        return {};
    }
    double max_v = *std::max_element(values.begin(), values.end());
    auto   n_bins = static_cast<size_t>(std::floor(max_v / bin_width)) + 1;
    std::vector<histogram_bin> bins(n_bins);
    for (size_t b = 0; b < n_bins; ++b) {
        bins[b].lower = static_cast<double>(b) * bin_width;
        bins[b].upper = static_cast<double>(b + 1) * bin_width;
    }
    for (double v : values) {
        auto b = std::min(static_cast<size_t>(std::floor(v / bin_width)), n_bins - 1);
        ++bins[b].count;
    }
    return bins;
}

filter_result perplexity_filter(const std::vector<stereotype> & stereotypes,
                                const std::map<std::string, double> & mean_ppl, double threshold, double bin_width) {
    if (std::isnan(threshold) || threshold <= 0) {
        fail(error_kind::validation, "perplexity threshold must be > 0");
    }
    filter_result res;
    res.report.input              = stereotypes.size();
    res.report.ppl_filter_applied = true;
    res.report.threshold          = threshold;
    res.report.bin_width          = bin_width;

    std::vector<double> values;
    values.reserve(stereotypes.size());
    for (const auto & s : stereotypes) {
        auto it = mean_ppl.find(s.id);
        if (it == mean_ppl.end()) {
            fail(error_kind::validation, "perplexity filter: no mean perplexity for stereotype '" + s.id + "'");
        }
        if (!std::isfinite(it->second) || it->second <= 0) {
            fail(error_kind::validation, "perplexity filter: invalid mean perplexity for stereotype '" + s.id + "'");
        }
        values.push_back(it->second);
        if (it->second <= threshold) {
            res.kept.push_back(s);
        } else {
            ++res.report.dropped_by_ppl;
        }
    }
    res.report.kept      = res.kept.size();
    res.report.histogram = ppl_histogram(values, bin_width);
    return res;
}

std::vector<bool> pass_through_judge::judge(std::span<const std::string> texts) {
    return std::vector<bool>(texts.size(), true);
}

std::vector<bool> predicate_judge::judge(std::span<const std::string> texts) {
    std::vector<bool> out;
    out.reserve(texts.size());
    for (const auto & t : texts) {
        out.push_back(accept_(t));
    }
    return out;
}

http_acceptability_judge::http_acceptability_judge(const std::string & url, retry_policy retry, size_t batch_size,
                                                   std::string auth_token)
    : endpoint_(parse_http_url(url)), retry_(retry), batch_size_(std::max<size_t>(1, batch_size)),
      auth_token_(std::move(auth_token)) {}

std::vector<bool> http_acceptability_judge::judge(std::span<const std::string> texts) {
    std::vector<bool> out;
    out.reserve(texts.size());
    for (size_t start = 0; start < texts.size(); start += batch_size_) {
        auto chunk = texts.subspan(start, std::min(batch_size_, texts.size() - start));
        nlohmann::json body = {{"texts", std::vector<std::string>(chunk.begin(), chunk.end())}};
        auto resp = with_retry(retry_, [&] { return post_json(endpoint_, "/v1/acceptability", body, auth_token_); });
        if (!resp.contains("accept") || !resp.at("accept").is_array() || resp.at("accept").size() != chunk.size()) {
            throw transport_error("acceptability response must carry one 'accept' boolean per text", false);
        }
        for (const auto & v : resp.at("accept")) {
            if (!v.is_boolean()) {
                throw transport_error("acceptability response: non-boolean verdict", false);
            }
            out.push_back(v.get<bool>());
        }
    }
    return out;
}

filter_result acceptability_filter(const std::vector<stereotype> & stereotypes, acceptability_judge & judge,
                                   size_t batch_size) {
    batch_size = std::max<size_t>(1, batch_size);
    filter_result res;
    res.report.input = stereotypes.size();
    for (size_t start = 0; start < stereotypes.size(); start += batch_size) {
        size_t end = std::min(stereotypes.size(), start + batch_size);
        std::vector<std::string> texts;
        for (size_t i = start; i < end; ++i) {
            texts.push_back(stereotypes[i].text);
        }
        std::vector<bool> verdicts;
        try {
            verdicts = judge.judge(texts);
        } catch (const transport_error & e) {
            std::string ids = stereotypes[start].id;
            if (end - start > 1) {
                ids += ".." + stereotypes[end - 1].id;
            }
            throw transport_error("acceptability judge failed for stereotype(s) " + ids + ": " + e.what(),
                                  e.retryable());
        }
        if (verdicts.size() != texts.size()) {
            fail(error_kind::validation, "acceptability judge returned " + std::to_string(verdicts.size()) +
                                             " verdicts for " + std::to_string(texts.size()) + " texts");
        }
        for (size_t i = start; i < end; ++i) {
            if (verdicts[i - start]) {
                res.kept.push_back(stereotypes[i]);
            } else {
                ++res.report.dropped_by_acceptability;
            }
        }
    }
    res.report.kept = res.kept.size();
    return res;
}

filter_result dedup_stereotypes(const std::vector<stereotype> & stereotypes) {
    filter_result res;
    res.report.input = stereotypes.size();
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto & s : stereotypes) {
        if (seen.emplace(s.category.str(), s.text).second) {
            res.kept.push_back(s);
        } else {
            ++res.report.dropped_duplicates;
        }
    }
    res.report.kept = res.kept.size();
    return res;
}

stage_order parse_stage_order(std::string_view tag) {
    if (tag == "ppl-first") {
        return stage_order::ppl_first;
    }
    if (tag == "acceptability-first") {
        return stage_order::acceptability_first;
    }
    fail(error_kind::usage, "unknown stage order '" + std::string(tag) + "' (ppl-first | acceptability-first)");
}

filter_result curate(const std::vector<stereotype> & stereotypes, const std::map<std::string, double> * mean_ppl,
                     acceptability_judge & judge, const curation_config & config) {
    filter_result cur;
    cur.kept         = stereotypes;
    cur.report.input = stereotypes.size();
    cur.report.kept  = stereotypes.size();
    cur.report.threshold = config.threshold;
    cur.report.bin_width = config.bin_width;

    auto run_ppl = [&] {
        if (mean_ppl == nullptr) {
            return;
        }
        auto r = perplexity_filter(cur.kept, *mean_ppl, config.threshold, config.bin_width);
        cur.report.then(r.report);
        cur.kept = std::move(r.kept);
    };
    auto run_acceptability = [&] {
        auto r = acceptability_filter(cur.kept, judge);
        cur.report.then(r.report);
        cur.kept = std::move(r.kept);
    };
    if (config.order == stage_order::ppl_first) {
        run_ppl();
        run_acceptability();
    } else {
        run_acceptability();
        run_ppl();
    }
    auto d = dedup_stereotypes(cur.kept);
    cur.report.then(d.report);
    cur.kept = std::move(d.kept);
    return cur;
}

}  // namespace sofa
