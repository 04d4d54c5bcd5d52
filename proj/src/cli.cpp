#include "sofa/cli.hpp"

#include "sofa/error.hpp"
#include "sofa/pipeline.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <ostream>
#include <string_view>

namespace sofa {

namespace {

namespace fs = std::filesystem;

// --config is read before the flags so that flags bound to the same fields win.
std::optional<std::string> find_config_arg(int argc, const char * const * argv) {
    for (int i = 1; i < argc; ++i) {
        std::string_view a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            return std::string(argv[i + 1]);
        }
        if (a.rfind("--config=", 0) == 0) {
            return std::string(a.substr(9));
        }
    }
    return std::nullopt;
}

int exit_code_for(error_kind k) {
    switch (k) {
        case error_kind::io:
        case error_kind::transport:
            return k_exit_io;
        case error_kind::usage:
            return k_exit_usage;
        default:
            return k_exit_validation;
    }
}

struct scoring_flags {
    static void add(CLI::App * app, run_config & cfg) {
        app->add_option("--backend", cfg.backend, "uniform:V | hash:SEED | http:URL");
        app->add_option("--model", cfg.models, "Model id (repeatable)");
        app->add_option("--cache", cfg.cache, "JSONL score cache");
        app->add_option("--parallel", cfg.parallel, "Concurrent backend requests (0: hardware threads)");
        app->add_option("--batch-size", cfg.batch_size, "Texts per backend request")->check(CLI::PositiveNumber);
        app->add_option("--retries", cfg.retries, "Extra attempts after a retryable backend failure")
            ->check(CLI::NonNegativeNumber);
    }
};

void add_build_flags(CLI::App * app, run_config & cfg) {
    app->add_option("--stereotypes", cfg.stereotypes, "Stereotype source file");
    app->add_option("--format", cfg.stereotype_format, "jsonl | sbic-csv");
    app->add_option("--lexicon", cfg.lexicon, "Identity lexicon JSON");
    app->add_option("--mapping", cfg.mapping, "Category mapping JSON (default: built-in)");
    app->add_option("--rules", cfg.rules, "Morphology rules JSON (default: built-in)");
    app->add_option("--threshold", cfg.threshold, "Mean-perplexity cut (inclusive)");
    app->add_option("--bin-width", cfg.bin_width, "Perplexity histogram bin width");
    app->add_option("--mean-ppl", cfg.mean_ppl, "CSV stereotype_id,mean_ppl used instead of backend scoring");
    app->add_flag("!--no-ppl-filter", cfg.ppl_filter, "Skip the perplexity filter");
    app->add_option("--judge", cfg.judge, "Acceptability judge URL, or none");
    app->add_option("--stage-order", cfg.stage_order, "ppl-first | acceptability-first");
    app->add_option("--dataset-format", cfg.dataset_format, "jsonl | csv");
}

void add_analyze_flags(CLI::App * app, run_config & cfg) {
    app->add_option("--variance", cfg.variance, "population | sample");
    app->add_option("--dds-basis", cfg.dds_basis, "log | ratio");
    app->add_option("--top-k", cfg.top_k, "Lowest-DDS stereotypes kept per category")->check(CLI::PositiveNumber);
}

void add_ranking_flags(CLI::App * app, run_config & cfg) {
    app->add_option("--ranks", cfg.ranks, "CSV benchmark,model_id,rank (repeatable)");
    app->add_option("--external-scores", cfg.external_scores,
                    "CSV benchmark,model_id,score,higher_is_more_biased (repeatable)");
}

fs::path in_workdir(const run_config & cfg, const std::string & given, const char * name) {
    return given.empty() ? fs::path(cfg.workdir) / name : fs::path(given);
}

}  // namespace

int dispatch(int argc, const char * const * argv, std::ostream & out, std::ostream & err) {
    run_config cfg;
    try {
        if (auto path = find_config_arg(argc, argv)) {
            cfg = run_config::load(*path);
        }
    } catch (const error & e) {
        err << "sofa: " << e.what() << '\n';
        return exit_code_for(e.kind());
    }

    CLI::App app{"Stereotype-probing fairness engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version());

    std::string config_path, out_path, probes_path, scores_path, analysis_path;
    bool        quiet = false;

    auto common = [&](CLI::App * sub) {
        sub->add_option("--config", config_path, "RunConfig JSON (flags override it)");
        sub->add_flag("--quiet,-q", quiet, "Suppress progress lines");
    };

    auto * build = app.add_subcommand("build", "Curate stereotypes and emit the probe dataset");
    common(build);
    add_build_flags(build, cfg);
    scoring_flags::add(build, cfg);
    build->add_option("--out", out_path, "Output directory (default: workdir)");

    auto * score = app.add_subcommand("score", "Score probes and identities under each model");
    common(score);
    scoring_flags::add(score, cfg);
    score->add_option("--probes", probes_path, "Probe dataset (default: <workdir>/probes.jsonl)");
    score->add_option("--out", out_path, "scores.jsonl path (default: <workdir>/scores.jsonl)");

    auto * analyze = app.add_subcommand("analyze", "Compute variance, DDS and SoFa scores");
    common(analyze);
    add_analyze_flags(analyze, cfg);
    analyze->add_option("--scores", scores_path, "Probe scores (default: <workdir>/scores.jsonl)");
    analyze->add_option("--probes", probes_path, "Probe dataset, to list identities that never win");
    analyze->add_option("--out", out_path, "analysis.json path (default: <workdir>/analysis.json)");

    auto * compare = app.add_subcommand("compare", "Kendall's tau between model rankings");
    common(compare);
    add_ranking_flags(compare, cfg);
    compare->add_option("--analysis", analysis_path, "analysis.json contributing the SoFa ranking");
    compare->add_option("--out", out_path, "Output JSON (default: <workdir>/compare.json)");

    auto * report = app.add_subcommand("report", "Render tables from an analysis");
    common(report);
    add_ranking_flags(report, cfg);
    report->add_option("--analysis", analysis_path, "analysis.json (default: <workdir>/analysis.json)");
    report->add_option("--report-format", cfg.report_formats, "json | csv | md (repeatable)");
    report->add_option("--out", out_path, "Output directory (default: workdir)");

    auto * all = app.add_subcommand("all", "build, score, analyze and report in one run");
    common(all);
    add_build_flags(all, cfg);
    scoring_flags::add(all, cfg);
    add_analyze_flags(all, cfg);
    add_ranking_flags(all, cfg);
    all->add_option("--report-format", cfg.report_formats, "json | csv | md (repeatable)");
    all->add_option("--out", out_path, "Output directory (default: workdir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
            app.exit(e, out, err);
            return k_exit_ok;
        }
        err << "sofa: " << e.what() << '\n';
        return k_exit_usage;
    }

    stage_log log{quiet ? nullptr : &out};
    try {
        if (*build) {
            run_build(cfg, out_path.empty() ? fs::path(cfg.workdir) : fs::path(out_path), log);
        } else if (*score) {
            run_score(cfg, in_workdir(cfg, probes_path, "probes.jsonl"), in_workdir(cfg, out_path, "scores.jsonl"), log);
        } else if (*analyze) {
            run_analyze(cfg, in_workdir(cfg, scores_path, "scores.jsonl"), in_workdir(cfg, out_path, "analysis.json"),
                        probes_path, log);
        } else if (*compare) {
            std::optional<fs::path> a;
            if (!analysis_path.empty()) {
                a = analysis_path;
            }
            // compare writes its tau table to stdout even when quiet.
            run_compare(cfg, a, in_workdir(cfg, out_path, "compare.json"), stage_log{&out});
        } else if (*report) {
            run_report(cfg, in_workdir(cfg, analysis_path, "analysis.json"),
                       out_path.empty() ? fs::path(cfg.workdir) : fs::path(out_path), log);
        } else if (*all) {
            run_all(cfg, out_path.empty() ? fs::path(cfg.workdir) : fs::path(out_path), log);
        }
    } catch (const error & e) {
        err << "sofa: " << to_string(e.kind()) << " error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error & e) {
        err << "sofa: io error: " << e.what() << '\n';
        return k_exit_io;
    } catch (const std::exception & e) {
        err << "sofa: " << e.what() << '\n';
        return k_exit_validation;
    }
    return k_exit_ok;
}

}  // namespace sofa
