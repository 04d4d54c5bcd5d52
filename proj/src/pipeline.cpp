#include "sofa/pipeline.hpp"

#include "sofa/error.hpp"
#include "sofa/normalize.hpp"
#include "sofa/util.hpp"

#include <cstdlib>
#include <ostream>
#include <set>

namespace sofa {

const char * tool_version() {
    return SOFA_VERSION;
}

namespace {

template <typename T>
void take(const nlohmann::json & j, const char * key, T & field) {
    if (!j.contains(key)) {
        return;
    }
    try {
        field = j.at(key).get<T>();
    } catch (const nlohmann::json::exception & e) {
        fail(error_kind::config, std::string("config key '") + key + "': " + e.what());
    }
}

std::string auth_token() {
    const char * v = std::getenv(k_token_env);
    return v ? v : "";
}

retry_policy make_retry(const run_config & cfg) {
    retry_policy r;
    r.max_attempts = std::max(0, cfg.retries) + 1;
    return r;
}

scoring_options make_scoring_options(const run_config & cfg) {
    scoring_options o;
    o.parallel   = cfg.parallel;
    o.batch_size = cfg.batch_size;
    o.retry      = make_retry(cfg);
    return o;
}

void require(bool ok, const std::string & msg) {
    if (!ok) {
        fail(error_kind::config, msg);
    }
}

std::string key_of(const std::filesystem::path & p) {
    return p.lexically_normal().generic_string();
}

std::unique_ptr<score_cache> open_cache(const run_config & cfg) {
    if (cfg.cache.empty()) {
        return std::make_unique<score_cache>();
    }
    return std::make_unique<score_cache>(cfg.cache);
}

std::string dataset_file_name(const run_config & cfg) {
    return parse_dataset_format(cfg.dataset_format) == dataset_format::csv ? "probes.csv" : "probes.jsonl";
}

std::vector<rank_list> external_rankings(const run_config & cfg, run_manifest & m) {
    std::vector<rank_list> out;
    for (const auto & p : cfg.ranks) {
        m.add_input(p);
        for (auto & l : load_rank_csv(p)) {
            out.push_back(std::move(l));
        }
    }
    for (const auto & p : cfg.external_scores) {
        m.add_input(p);
        for (auto & l : load_external_scores(p)) {
            out.push_back(std::move(l));
        }
    }
    return out;
}

}  // namespace

nlohmann::ordered_json run_config::to_json() const {
    return {
        {"stereotypes", stereotypes},
        {"stereotype_format", stereotype_format},
        {"lexicon", lexicon},
        {"mapping", mapping},
        {"rules", rules},
        {"mean_ppl", mean_ppl},
        {"ranks", ranks},
        {"external_scores", external_scores},
        {"workdir", workdir},
        {"cache", cache},
        {"backend", backend},
        {"models", models},
        {"parallel", parallel},
        {"batch_size", batch_size},
        {"retries", retries},
        {"threshold", threshold},
        {"bin_width", bin_width},
        {"ppl_filter", ppl_filter},
        {"judge", judge},
        {"stage_order", stage_order},
        {"dataset_format", dataset_format},
        {"variance", variance},
        {"dds_basis", dds_basis},
        {"top_k", top_k},
        {"report_formats", report_formats},
    };
}

void run_config::apply_json(const nlohmann::json & j) {
    if (!j.is_object()) {
        fail(error_kind::config, "config must be a JSON object");
    }
    static const std::set<std::string> known = {
        "stereotypes", "stereotype_format", "lexicon", "mapping", "rules", "mean_ppl", "ranks",
        "external_scores", "workdir", "cache", "backend", "models", "parallel", "batch_size", "retries",
        "threshold", "bin_width", "ppl_filter", "judge", "stage_order", "dataset_format", "variance",
        "dds_basis", "top_k", "report_formats",
    };
    for (const auto & [k, v] : j.items()) {
        if (!known.count(k)) {
            fail(error_kind::config, "unknown config key '" + k + "'");
        }
    }
    take(j, "stereotypes", stereotypes);
    take(j, "stereotype_format", stereotype_format);
    take(j, "lexicon", lexicon);
    take(j, "mapping", mapping);
    take(j, "rules", rules);
    take(j, "mean_ppl", mean_ppl);
    take(j, "ranks", ranks);
    take(j, "external_scores", external_scores);
    take(j, "workdir", workdir);
    take(j, "cache", cache);
    take(j, "backend", backend);
    take(j, "models", models);
    take(j, "parallel", parallel);
    take(j, "batch_size", batch_size);
    take(j, "retries", retries);
    take(j, "threshold", threshold);
    take(j, "bin_width", bin_width);
    take(j, "ppl_filter", ppl_filter);
    take(j, "judge", judge);
    take(j, "stage_order", stage_order);
    take(j, "dataset_format", dataset_format);
    take(j, "variance", variance);
    take(j, "dds_basis", dds_basis);
    take(j, "top_k", top_k);
    take(j, "report_formats", report_formats);
}

run_config run_config::load(const std::filesystem::path & path) {
    run_config cfg;
    try {
        cfg.apply_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception & e) {
        fail(error_kind::config, path.string() + ": " + e.what());
    }
    return cfg;
}

void run_manifest::add_input(const std::filesystem::path & p) {
    inputs[key_of(p)] = sha256_file(p);
}

void run_manifest::add_output(const std::filesystem::path & p) {
    outputs[key_of(p)] = sha256_file(p);
}

nlohmann::ordered_json run_manifest::to_json() const {
    auto                   cfg_text = config.dump();
    nlohmann::ordered_json in       = nlohmann::ordered_json::object();
    nlohmann::ordered_json out      = nlohmann::ordered_json::object();
    for (const auto & [p, d] : inputs) {
        in[p] = d;
    }
    for (const auto & [p, d] : outputs) {
        out[p] = d;
    }
    return {
        {"tool", "sofa"},           {"version", tool_version()}, {"subcommand", subcommand},
        {"config", config},         {"config_digest", sha256_hex(cfg_text)},
        {"inputs", in},             {"outputs", out},
    };
}

std::filesystem::path run_manifest::write(const std::filesystem::path & dir) const {
    auto path = dir / ("manifest." + subcommand + ".json");
    write_file(path, to_json().dump(2) + "\n");
    return path;
}

void stage_log::line(const std::string & s) const {
    if (out) {
        *out << s << '\n';
    }
}

std::vector<probe_score> score_probes(scorer & backend, const std::vector<std::string> & models,
                                      const std::vector<probe> & probes, score_cache * cache,
                                      const scoring_options & options) {
    // Identity texts first (deduplicated), then one text per probe, in one batch
    // so both share the worker pool.
    std::vector<std::string>      texts;
    std::map<std::string, size_t> identity_slot;
    for (const auto & p : probes) {
        if (identity_slot.emplace(p.identity, texts.size()).second) {
            texts.push_back(p.identity);
        }
    }
    size_t first_probe = texts.size();
    for (const auto & p : probes) {
        texts.push_back(p.text);
    }

    std::vector<probe_score> out;
    out.reserve(models.size() * probes.size());
    for (const auto & model : models) {
        auto scored = score_batch(backend, model, texts, cache, options);
        for (size_t i = 0; i < probes.size(); ++i) {
            const auto & p = probes[i];
            out.push_back(make_probe_score(p, model, scored[first_probe + i].ppl, scored[identity_slot.at(p.identity)].ppl));
        }
    }
    return out;
}

std::map<std::string, double> mean_stereotype_ppl(scorer & backend, const std::vector<std::string> & models,
                                                  const std::vector<stereotype> & stereotypes, score_cache * cache,
                                                  const scoring_options & options) {
    if (models.empty()) {
        fail(error_kind::config, "mean perplexity needs at least one model");
    }
    std::vector<std::string> texts;
    for (const auto & s : stereotypes) {
        texts.push_back(s.text);
    }
    std::vector<double> sums(texts.size(), 0.0);
    for (const auto & model : models) {
        auto scored = score_batch(backend, model, texts, cache, options);
        for (size_t i = 0; i < texts.size(); ++i) {
            sums[i] += scored[i].ppl;
        }
    }
    std::map<std::string, double> out;
    for (size_t i = 0; i < stereotypes.size(); ++i) {
        out[stereotypes[i].id] = sums[i] / static_cast<double>(models.size());
    }
    return out;
}

std::map<std::string, double> load_mean_ppl(const std::filesystem::path & path) {
    auto rows = parse_delimited(read_file(path), ',');
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "stereotype_id" || rows[0][1] != "mean_ppl") {
        fail(error_kind::schema, path.string() + ": expected header 'stereotype_id,mean_ppl'");
    }
    std::map<std::string, double> out;
    for (size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() == 1 && rows[r][0].empty()) {
            continue;
        }
        auto where = path.string() + ": row " + std::to_string(r + 1);
        if (rows[r].size() < 2) {
            fail(error_kind::format, where + ": missing mean_ppl");
        }
        try {
            size_t pos = 0;
            double v   = std::stod(rows[r][1], &pos);
            if (pos != rows[r][1].size()) {
                throw std::invalid_argument(rows[r][1]);
            }
            if (!out.emplace(rows[r][0], v).second) {
                fail(error_kind::validation, where + ": duplicate stereotype id '" + rows[r][0] + "'");
            }
        } catch (const std::logic_error &) {
            fail(error_kind::format, where + ": mean_ppl is not a number");
        }
    }
    return out;
}

std::filesystem::path run_build(const run_config & cfg, const std::filesystem::path & out_dir, const stage_log & log) {
    require(!cfg.stereotypes.empty(), "build: --stereotypes is required");
    require(!cfg.lexicon.empty(), "build: --lexicon is required");

    run_manifest m;
    m.subcommand = "build";
    m.config     = cfg.to_json();

    auto mapping = cfg.mapping.empty() ? category_mapping::defaults() : category_mapping::load(cfg.mapping);
    auto rules   = cfg.rules.empty() ? morphology_rules::defaults() : morphology_rules::load(cfg.rules);
    if (!cfg.mapping.empty()) {
        m.add_input(cfg.mapping);
    }
    if (!cfg.rules.empty()) {
        m.add_input(cfg.rules);
    }
    m.add_input(cfg.lexicon);
    m.add_input(cfg.stereotypes);

    auto lex    = load_lexicon(cfg.lexicon, mapping, rules);
    auto ingest = ingest_stereotypes(cfg.stereotypes, parse_stereotype_format(cfg.stereotype_format), mapping);

    std::vector<stereotype>        normalized;
    std::map<std::string, size_t>  rejected_counts;
    std::string                    rejected_lines;
    for (const auto & raw : ingest.stereotypes) {
        auto res = normalize_stereotype(raw.text, rules);
        if (auto * text = std::get_if<std::string>(&res)) {
            normalized.push_back({raw.id, raw.category, *text});
            continue;
        }
        const auto & rej = std::get<rejection>(res);
        ++rejected_counts[to_string(rej.reason)];
        nlohmann::ordered_json j = {{"id", raw.id},
                                    {"category", raw.category.str()},
                                    {"reason", to_string(rej.reason)},
                                    {"detail", rej.detail},
                                    {"text", raw.text}};
        rejected_lines += j.dump() + "\n";
    }
    log.line("build: " + std::to_string(ingest.stereotypes.size()) + " statements ingested, " +
             std::to_string(normalized.size()) + " normalized");

    std::unique_ptr<score_cache>  cache;
    std::unique_ptr<scorer>       backend;
    std::map<std::string, double> mean_ppl;
    bool                          have_ppl = false;
    if (cfg.ppl_filter && !cfg.mean_ppl.empty()) {
        m.add_input(cfg.mean_ppl);
        mean_ppl = load_mean_ppl(cfg.mean_ppl);
        have_ppl = true;
    } else if (cfg.ppl_filter && !cfg.backend.empty()) {
        require(!cfg.models.empty(), "build: the perplexity filter needs at least one --model");
        backend  = make_scorer(cfg.backend, auth_token());
        cache    = open_cache(cfg);
        mean_ppl = mean_stereotype_ppl(*backend, cfg.models, normalized, cache.get(), make_scoring_options(cfg));
        have_ppl = true;
    } else {
        log.line("build: perplexity filter skipped (no backend or mean-ppl table)");
    }

    std::unique_ptr<acceptability_judge> judge;
    if (cfg.judge.empty() || cfg.judge == "none") {
        judge = std::make_unique<pass_through_judge>();
    } else {
        judge = std::make_unique<http_acceptability_judge>(cfg.judge, make_retry(cfg), 64, auth_token());
    }

    curation_config cc;
    cc.threshold = cfg.threshold;
    cc.bin_width = cfg.bin_width;
    cc.order     = parse_stage_order(cfg.stage_order);
    auto curated = curate(normalized, have_ppl ? &mean_ppl : nullptr, *judge, cc);

    auto probes = generate_probes(curated.kept, lex.lex);

    std::filesystem::create_directories(out_dir);
    auto stereo_path   = out_dir / "stereotypes.jsonl";
    auto rejected_path = out_dir / "rejected.jsonl";
    auto report_path   = out_dir / "curation_report.json";
    auto probes_path   = out_dir / dataset_file_name(cfg);
    write_file(stereo_path, stereotypes_to_jsonl(curated.kept));
    write_file(rejected_path, rejected_lines);

    nlohmann::ordered_json rej = nlohmann::ordered_json::object();
    for (const auto & [k, v] : rejected_counts) {
        rej[k] = v;
    }
    nlohmann::ordered_json report = {
        {"lexicon", lex.skips.to_json()},
        {"ingest", ingest.skips.to_json()},
        {"normalization", {{"input", ingest.stereotypes.size()}, {"kept", normalized.size()}, {"rejected", rej}}},
        {"curation", curated.report.to_json()},
        {"probes", probes.size()},
    };
    write_file(report_path, report.dump(2) + "\n");
    auto manifest = emit_dataset(probes, probes_path, parse_dataset_format(cfg.dataset_format));

    for (const auto & p : {stereo_path, rejected_path, report_path, probes_path, manifest_path_for(probes_path)}) {
        m.add_output(p);
    }
    log.line("build: " + std::to_string(curated.kept.size()) + " stereotypes kept, " + std::to_string(manifest.total) +
             " probes -> " + probes_path.string());
    return m.write(out_dir);
}

std::filesystem::path run_score(const run_config & cfg, const std::filesystem::path & probes_path,
                                const std::filesystem::path & out_path, const stage_log & log) {
    require(!cfg.backend.empty(), "score: --backend is required");
    require(!cfg.models.empty(), "score: at least one --model is required");
    auto backend = make_scorer(cfg.backend, auth_token());

    run_manifest m;
    m.subcommand = "score";
    m.config     = cfg.to_json();
    m.add_input(probes_path);

    auto probes  = read_probes(probes_path);
    auto cache   = open_cache(cfg);
    auto scores  = score_probes(*backend, cfg.models, probes, cache.get(), make_scoring_options(cfg));
    write_file(out_path, scores_to_jsonl(scores));
    m.add_output(out_path);
    log.line("score: " + std::to_string(scores.size()) + " probe scores under " + backend->tag() + " -> " +
             out_path.string());
    auto dir = out_path.has_parent_path() ? out_path.parent_path() : std::filesystem::path(".");
    return m.write(dir);
}

std::filesystem::path run_analyze(const run_config & cfg, const std::filesystem::path & scores_path,
                                  const std::filesystem::path & out_path, const std::filesystem::path & probes_path,
                                  const stage_log & log) {
    run_manifest m;
    m.subcommand = "analyze";
    m.config     = cfg.to_json();
    m.add_input(scores_path);

    analysis_options opts;
    opts.aggregate.variance = parse_variance_kind(cfg.variance);
    opts.aggregate.dds      = parse_dds_basis(cfg.dds_basis);
    opts.top_k              = cfg.top_k;
    if (!probes_path.empty()) {
        m.add_input(probes_path);
        for (const auto & p : read_probes(probes_path)) {
            auto & ids = opts.identity_universe[p.category];
            if (std::find(ids.begin(), ids.end(), p.identity_id) == ids.end()) {
                ids.push_back(p.identity_id);
            }
        }
    }
    auto reports = analyze(read_scores(scores_path), opts);
    write_file(out_path, analysis_to_json(reports));
    m.add_output(out_path);
    for (const auto & r : reports) {
        log.line("analyze: " + r.model_id + " global score " + format_number(r.global_score));
    }
    auto dir = out_path.has_parent_path() ? out_path.parent_path() : std::filesystem::path(".");
    return m.write(dir);
}

std::filesystem::path run_compare(const run_config & cfg, const std::optional<std::filesystem::path> & analysis_path,
                                  const std::filesystem::path & out_path, const stage_log & log) {
    run_manifest m;
    m.subcommand = "compare";
    m.config     = cfg.to_json();

    std::vector<rank_list> lists;
    if (analysis_path) {
        m.add_input(*analysis_path);
        std::map<std::string, double> global;
        for (const auto & r : parse_analysis(read_file(*analysis_path), analysis_path->string())) {
            global[r.model_id] = r.global_score;
        }
        lists.push_back(rank_models("SoFa", global));
    }
    for (auto & l : external_rankings(cfg, m)) {
        lists.push_back(std::move(l));
    }
    if (lists.size() < 2) {
        fail(error_kind::config, "compare: needs at least two rankings");
    }
    auto tau = compute_tau_matrix(lists, true);
    nlohmann::ordered_json rankings = nlohmann::ordered_json::array();
    for (const auto & l : lists) {
        rankings.push_back(l.to_json());
    }
    nlohmann::ordered_json j = {{"rankings", rankings}, {"kendall_tau", tau.to_json()}};
    write_file(out_path, j.dump(2) + "\n");
    m.add_output(out_path);
    if (log.out) {
        *log.out << tau.to_csv();
    }
    auto dir = out_path.has_parent_path() ? out_path.parent_path() : std::filesystem::path(".");
    return m.write(dir);
}

std::filesystem::path run_report(const run_config & cfg, const std::filesystem::path & analysis_path,
                                 const std::filesystem::path & out_dir, const stage_log & log) {
    run_manifest m;
    m.subcommand = "report";
    m.config     = cfg.to_json();
    m.add_input(analysis_path);
    auto reports  = parse_analysis(read_file(analysis_path), analysis_path.string());
    auto external = external_rankings(cfg, m);
    require(!cfg.report_formats.empty(), "report: no output format selected");
    for (const auto & f : cfg.report_formats) {
        for (const auto & p : emit_report(reports, external, out_dir, parse_report_format(f))) {
            m.add_output(p);
        }
    }
    log.line("report: " + std::to_string(m.outputs.size()) + " files -> " + out_dir.string());
    return m.write(out_dir);
}

std::filesystem::path run_all(const run_config & cfg, const std::filesystem::path & out_dir, const stage_log & log) {
    auto probes   = out_dir / dataset_file_name(cfg);
    auto scores   = out_dir / "scores.jsonl";
    auto analysis = out_dir / "analysis.json";

    run_manifest m;
    m.subcommand = "all";
    m.config     = cfg.to_json();
    for (const auto & stage : {run_build(cfg, out_dir, log), run_score(cfg, probes, scores, log),
                               run_analyze(cfg, scores, analysis, probes, log), run_report(cfg, analysis, out_dir, log)}) {
        m.add_output(stage);
    }
    return m.write(out_dir);
}

}  // namespace sofa
