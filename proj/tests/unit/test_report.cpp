#include "doctest.h"
#include "helpers.hpp"

#include "oracles/oracles.hpp"
#include "sofa/report.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

using namespace sofa;

namespace {

const std::vector<std::string> k_models = {"BLOOM-560m", "BLOOM-3b",    "GPT2-base", "GPT2-medium", "XLNET-base",
                                           "XLNET-large", "BART-base",  "BART-large", "LLAMA2-7b", "LLAMA2-13b"};
const std::vector<int> k_sofa_ranks      = {1, 9, 7, 8, 4, 2, 10, 3, 6, 5};
const std::vector<int> k_stereoset_ranks = {6, 4, 5, 3, 8, 7, 10, 9, 2, 1};
const std::vector<int> k_crows_ranks     = {5, 4, 6, 3, 7, 8, 10, 9, 2, 1};

rank_list from_ranks(const std::string & name, const std::vector<int> & ranks) {
    std::vector<std::pair<std::string, int>> v;
    for (size_t i = 0; i < ranks.size(); ++i) {
        v.emplace_back(k_models[i], ranks[i]);
    }
    return rank_list_from_ranks(name, v);
}

model_report fake_report(const std::string & model, std::vector<double> cat_scores) {
    static const char * cats[] = {"religion", "gender", "disability", "nationality"};
    model_report        r;
    r.model_id = model;
    double sum = 0;
    for (size_t i = 0; i < cat_scores.size(); ++i) {
        category_score s;
        s.category      = category_id(cats[i]);
        s.score         = cat_scores[i];
        s.n_stereotypes = 1;
        r.per_category[s.category] = s;
        r.identity_rates[s.category]["x"] = 1.0;
        sum += cat_scores[i];
    }
    r.global_score = sum / static_cast<double>(cat_scores.size());
    return r;
}

std::string slurp(const std::filesystem::path & p) {
    std::ifstream     in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("rank_models orders by descending score") {
    auto l = rank_models("b", {{"A", 0.30}, {"B", 0.10}, {"C", 0.20}});
    REQUIRE(l.entries.size() == 3);
    CHECK(l.entries[0].model_id == "A");
    CHECK(l.entries[1].model_id == "C");
    CHECK(l.entries[2].model_id == "B");
    CHECK(l.entries[2].rank == 3);
}

TEST_CASE("rank_models ties break on model_id") {
    auto l = rank_models("b", {{"Z", 0.5}, {"A", 0.5}, {"M", 0.9}});
    CHECK(l.entries[0].model_id == "M");
    CHECK(l.entries[1].model_id == "A");
    CHECK(l.entries[2].model_id == "Z");
}

TEST_CASE("rank_models with lower-is-more-biased") {
    auto l = rank_models("b", {{"A", 0.30}, {"B", 0.10}}, false);
    CHECK(l.entries[0].model_id == "B");
    CHECK(l.bias_key(l.entries[0]) == -0.10);
}

TEST_CASE("rank_models rejects degenerate input") {
    CHECK(testing::kind_of([] { rank_models("b", {{"A", 1.0}}); }) == error_kind::validation);
    CHECK(testing::kind_of([] { rank_models("b", {{"A", 1.0}, {"B", NAN}}); }) == error_kind::validation);
}

TEST_CASE("ranking is invariant under positive scaling of scores") {
    std::mt19937                           rng(21);
    std::uniform_real_distribution<double> d(0, 3);
    for (int round = 0; round < 100; ++round) {
        std::map<std::string, double> s, scaled;
        for (int i = 0; i < 8; ++i) {
            double v                             = d(rng);
            s["m" + std::to_string(i)]      = v;
            scaled["m" + std::to_string(i)] = v * 7.3;
        }
        auto a = rank_models("b", s), b = rank_models("b", scaled);
        for (size_t i = 0; i < a.entries.size(); ++i) {
            CHECK(a.entries[i].model_id == b.entries[i].model_id);
        }
    }
}

TEST_CASE("global scores from reference category scores reproduce the reference ranking") {
    std::vector<std::vector<double>> table2 = {
        {3.216, 2.903, 1.889, 1.292}, {.376, .483, .301, .162}, {.826, .340, .161, .116}, {.839, .304, .164, .091},
        {.929, .803, .846, .601},     {2.044, 1.080, 1.554, 1.012}, {.031, .080, .107, .071}, {1.762, 1.124, .582, .442},
        {.612, .422, .324, .138},     {.740, .372, .312, .123}};
    std::map<std::string, double> global;
    for (size_t i = 0; i < k_models.size(); ++i) {
        global[k_models[i]] = fake_report(k_models[i], table2[i]).global_score;
    }
    auto l = rank_models("SoFa", global);
    for (const auto & e : l.entries) {
        auto i = std::find(k_models.begin(), k_models.end(), e.model_id) - k_models.begin();
        CHECK(e.rank == k_sofa_ranks[static_cast<size_t>(i)]);
    }
}

TEST_CASE("kendall tau on the reference rankings matches brute-force counting") {
    auto sofa  = from_ranks("SoFa", k_sofa_ranks);
    auto ss    = from_ranks("StereoSet", k_stereoset_ranks);
    auto crows = from_ranks("CrowS-Pairs", k_crows_ranks);
    double t_ss_cr = kendall_tau(ss, crows);
    CHECK(std::abs(t_ss_cr - oracle::brute_force_tau(k_stereoset_ranks, k_crows_ranks)) <= 1e-12);
    CHECK(std::abs(t_ss_cr - 0.9111111111111111) <= 1e-12);
    CHECK(std::abs(kendall_tau(sofa, ss) - oracle::brute_force_tau(k_sofa_ranks, k_stereoset_ranks)) <= 1e-12);
    CHECK(std::abs(kendall_tau(sofa, crows) - oracle::brute_force_tau(k_sofa_ranks, k_crows_ranks)) <= 1e-12);
    CHECK(std::abs(kendall_tau(sofa, ss) - (-0.022222222222222223)) <= 1e-12);
}

TEST_CASE("kendall tau properties") {
    std::mt19937 rng(4);
    for (int round = 0; round < 200; ++round) {
        std::vector<int> a(10), b(10);
        std::iota(a.begin(), a.end(), 1);
        std::iota(b.begin(), b.end(), 1);
        std::shuffle(a.begin(), a.end(), rng);
        std::shuffle(b.begin(), b.end(), rng);
        auto la = from_ranks("a", a), lb = from_ranks("b", b);
        double t = kendall_tau(la, lb);
        CHECK(t == kendall_tau(lb, la));
        CHECK(t >= -1.0);
        CHECK(t <= 1.0);
        CHECK(std::abs(t - oracle::brute_force_tau(a, b)) <= 1e-12);
        CHECK(kendall_tau(la, la) == 1.0);
        std::vector<int> rev(a.size());
        std::transform(a.begin(), a.end(), rev.begin(), [](int r) { return 11 - r; });
        CHECK(kendall_tau(la, from_ranks("r", rev)) == -1.0);
    }
}

TEST_CASE("kendall tau-b handles ties in scores") {
    auto a = rank_models("a", {{"A", 1}, {"B", 1}, {"C", 2}});
    auto b = rank_models("b", {{"A", 1}, {"B", 2}, {"C", 3}});
    // pairs: AB tied in a; AC, BC concordant. tau-b = 2 / sqrt(2 * 3)
    CHECK(std::abs(kendall_tau(a, b) - 2.0 / std::sqrt(6.0)) <= 1e-12);
    auto flat = rank_models("f", {{"A", 1}, {"B", 1}, {"C", 1}});
    CHECK(testing::kind_of([&] { kendall_tau(flat, b); }) == error_kind::validation);
}

TEST_CASE("kendall tau requires the same model set") {
    auto a   = rank_models("a", {{"A", 1}, {"B", 2}, {"C", 3}});
    auto b   = rank_models("b", {{"A", 1}, {"B", 2}, {"D", 3}});
    auto msg = testing::message_of([&] { kendall_tau(a, b); });
    CHECK(msg.find("C") != std::string::npos);
    CHECK(msg.find("D") != std::string::npos);
    CHECK(testing::kind_of([&] { compute_tau_matrix({a, b}); }) == error_kind::validation);
    auto m = compute_tau_matrix({a, b}, false);
    CHECK(!m.values[0][1].has_value());
    CHECK(m.values[0][0] == 1.0);
    CHECK(m.to_json()["values"][0][1].is_null());
}

TEST_CASE("rank and score CSVs") {
    auto ranks = parse_rank_csv("benchmark,model_id,rank\nX,a,1\nX,b,2\nY,a,2\nY,b,1\n");
    REQUIRE(ranks.size() == 2);
    CHECK(ranks[0].benchmark == "X");
    CHECK(kendall_tau(ranks[0], ranks[1]) == -1.0);
    auto scores = parse_external_scores(
        "benchmark,model_id,score,higher_is_more_biased\nP,a,0.9,false\nP,b,0.1,false\nP,c,0.5,false\n");
    REQUIRE(scores.size() == 1);
    CHECK(!scores[0].higher_is_more_biased);
    CHECK(scores[0].entries[0].model_id == "b");
    CHECK(testing::kind_of([] { parse_rank_csv("benchmark,model,rank\nX,a,1\n"); }) == error_kind::schema);
    CHECK(testing::kind_of([] { parse_rank_csv("benchmark,model_id,rank\nX,a,1\nX,b,1\n"); }) ==
          error_kind::validation);

    auto table1 = load_rank_csv(testing::source_path("data/table1_ranks.csv"));
    REQUIRE(table1.size() == 3);
    auto m = compute_tau_matrix(table1);
    CHECK(std::abs(*m.values[1][2] - 0.9111111111111111) <= 1e-12);
}

TEST_CASE("format_number round-trips") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(2.325) == "2.325");
    for (double v : {1.0 / 3.0, 2.0 / 7.0, 1e-300, 123456.789}) {
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK(parse_report_format("md") == report_format::md);
    CHECK(testing::kind_of([] { parse_report_format("xml"); }) == error_kind::usage);
}

TEST_CASE("report tables have one row per model and one column per category") {
    std::vector<model_report> reports = {fake_report("m-a", {0.5, 0.25, 0.125, 1.0}),
                                         fake_report("m-b", {0.1, 0.2, 0.3, 0.4})};
    testing::temp_dir dir;
    auto              files = emit_report(reports, {}, dir.path(), report_format::csv);
    CHECK(files.size() == 4);
    auto t2 = slurp(dir / "table2.csv");
    CHECK(t2 == "model_id,religion,gender,disability,nationality\n"
                "m-a,0.5,0.25,0.125,1\n"
                "m-b,0.1,0.2,0.3,0.4\n");
    auto t1 = slurp(dir / "table1.csv");
    CHECK(t1 == "model_id,sofa_score,SoFa_rank\nm-a,0.46875,1\nm-b,0.25,2\n");

    emit_report(reports, {}, dir.path(), report_format::md);
    auto md = slurp(dir / "report.md");
    CHECK(md.find("| model_id | religion | gender | disability | nationality |") != std::string::npos);
    CHECK(md.find("| m-a | 0.500 | 0.250 | 0.125 | 1.000 |") != std::string::npos);

    emit_report(reports, {}, dir.path(), report_format::json);
    auto first = slurp(dir / "report.json");
    emit_report(reports, {}, dir.path(), report_format::json);
    CHECK(slurp(dir / "report.json") == first);
    auto j = nlohmann::json::parse(first);
    CHECK(j["schema_version"] == k_report_schema_version);
    CHECK(j["rankings"].size() == 1);
}

TEST_CASE("report bundle adds external rankings and the tau table") {
    std::vector<model_report> reports = {fake_report("a", {1, 1, 1, 1}), fake_report("b", {2, 2, 2, 2}),
                                         fake_report("c", {3, 3, 3, 3})};
    auto ext    = parse_rank_csv("benchmark,model_id,rank\nX,a,3\nX,b,2\nX,c,1\n");
    auto bundle = build_report_bundle(reports, ext);
    REQUIRE(bundle.rankings.size() == 2);
    CHECK(bundle.rankings[0].benchmark == "SoFa");
    CHECK(bundle.tau.values[0][1] == 1.0);
    auto csv = render_report_csv(bundle);
    CHECK(csv.count("kendall_tau.csv") == 1);

    auto single = build_report_bundle({fake_report("a", {1, 1, 1, 1})}, {});
    CHECK(single.rankings.empty());
}

}
