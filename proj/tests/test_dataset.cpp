#include <doctest.h>

#include <cmath>
#include <regex>

#include "debias/dataset.hpp"
#include "debias/error.hpp"
#include "debias/experiment.hpp"
#include "debias/returns.hpp"
#include "debias/util.hpp"
#include "support.hpp"

using namespace debias;

namespace {

std::string golden(const std::string& name) { return read_file(std::string(DEBIAS_TEST_DATA_DIR) + "/golden/" + name); }

// Payloads the golden files were rendered from.
std::vector<double> golden_ar1_payload() {
    std::vector<double> a(40);
    for (int i = 0; i < 40; ++i) a[static_cast<std::size_t>(i)] = -25.0 + 0.93 * i - (i % 3) * 1.5;
    a.back() = 12.34;
    return a;
}

std::vector<double> golden_stock_payload() {
    std::vector<double> s(12);
    for (int i = 0; i < 12; ++i) s[static_cast<std::size_t>(i)] = 0.0123 * (i - 6) + 0.0007 * (i % 2);
    return s;
}

double parse_labeled(const std::string& target, const std::string& key) {
    const auto pos = target.find(key + ": ");
    REQUIRE(pos != std::string::npos);
    return std::stod(target.substr(pos + key.size() + 2));
}

PromptRow stock_row(const std::string& firm, YearMonth formation, double target = 0.0123) {
    PromptRow r;
    r.firm_key = firm;
    r.formation = formation;
    for (int i = 0; i < 12; ++i) r.window.push_back(0.01 * (i - 5) + 0.0001 * (formation.index() % 50 + i % 2));
    r.target = target;
    return r;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("golden prompts for every variant") {
    const auto a = golden_ar1_payload();
    const auto s = golden_stock_payload();
    for (auto k : {PromptKind::Baseline, PromptKind::RationalInvestor, PromptKind::ExtrapolationWarning}) {
        CAPTURE(to_string(k));
        const auto ar1 = render_prompt({k, Task::Ar1}, a);
        REQUIRE(ar1.size() == 1);
        CHECK(ar1[0].role == "user");
        CHECK(ar1[0].content == golden("ar1_" + to_string(k) + ".txt"));
        CHECK(render_prompt({k, Task::Ar1}, a) == ar1);
        const auto st = render_prompt({k, Task::Stock}, s);
        CHECK(st[0].content == golden("stock_" + to_string(k) + ".txt"));
    }
}

TEST_CASE("debiasing prefixes are verbatim") {
    CHECK(golden("ar1_rational_investor.txt").rfind("You are a sophisticated rational investor.\n\n", 0) == 0);
    const std::string warn =
        "Extrapolation bias refers to the cognitive tendency to assume recent trends will continue into the future, "
        "giving disproportionate weight to the most recent data points while underweighting longer-term patterns, "
        "base rates, or the possibility of reversion. Avoid extrapolation bias when creating your response.";
    CHECK(golden("ar1_extrapolation_warning.txt").rfind(warn + "\n\n", 0) == 0);
    CHECK(golden("stock_extrapolation_warning.txt").rfind(warn + "\n\n", 0) == 0);
    CHECK(golden("ar1_baseline.txt").find("rational") == std::string::npos);
}

TEST_CASE("ar1 prompt shows the latest value and both answer keys") {
    const auto text = golden("ar1_baseline.txt");
    CHECK(text.find("12.34") != std::string::npos);
    CHECK(text.find("change_1") != std::string::npos);
    CHECK(text.find("change_2") != std::string::npos);
    const auto v = prompt_values(text);
    CHECK(v.size() == 40);
    CHECK(v.back() == 12.34);
}

TEST_CASE("wrong payload length is a data error") {
    const std::vector<double> short_payload(39, 1.0);
    CHECK_THROWS_AS(render_prompt({PromptKind::Baseline, Task::Ar1}, short_payload), DataError);
    CHECK_THROWS_AS(render_prompt({PromptKind::Baseline, Task::Stock}, short_payload), DataError);
}

TEST_CASE("target formatting") {
    CHECK(format_ar1_target({-3.456, 1.0}) == "change_1: -3.46\nchange_2: 1.00");
    CHECK(format_stock_target(0.0123) == "0.0123");
    CHECK(format_stock_target(-0.05) == "-0.0500");
}

TEST_CASE("default plan: counts, targets and hygiene") {
    const SplitPlan plan;
    const auto d = build_ar1_instruction_set(plan);
    CHECK(d.train.size() == 30720);
    CHECK(d.val.size() == 6 * 32 * 40);
    CHECK(d.test.size() == 6 * 1280);
    CHECK(d.dropped == 0);
    CHECK(split_guard(d).empty());

    // Every target is the rational formula applied to the prompt's own last value.
    for (const auto* v : {&d.train, &d.test}) {
        for (const auto& ex : *v) {
            const double rho = *ex.meta.rho;
            const double x = prompt_values(ex.user_content()).back();
            CHECK(std::abs(parse_labeled(ex.target(), "change_1") - (rho - 1.0) * x) <= 0.005 + 1e-9);
            CHECK(std::abs(parse_labeled(ex.target(), "change_2") - (rho * rho - 1.0) * x) <= 0.005 + 1e-9);
            if (rho == 1.0) {
                CHECK(ex.target() == "change_1: 0.00\nchange_2: 0.00");
            }
        }
    }
}

TEST_CASE("test split yields 1,248 regression rows per rho") {
    const Ar1Plan plan;
    const auto cells = evaluate_ar1(plan, rational_targets());
    REQUIRE(cells.size() == 6);
    for (const auto& c : cells) {
        CHECK(c.panel.rows.size() == 1248);
        CHECK(c.fit.n == 1248);
    }
}

TEST_CASE("JSONL round-trips byte-exactly") {
    SplitPlan plan;
    plan.ar1.train_series_per_rho = 2;
    plan.ar1.val_series_per_rho = 1;
    plan.ar1.test_series_per_rho = 1;
    const auto d = build_ar1_instruction_set(plan, rational_targets(), PromptKind::RationalInvestor);
    const auto text = export_jsonl(d.train);
    const auto back = parse_jsonl(text);
    CHECK(back == d.train);
    CHECK(export_jsonl(back) == text);

    test::TempDir dir;
    export_jsonl(d.test, dir.file("test.jsonl"));
    CHECK(import_jsonl(dir.file("test.jsonl")) == d.test);
    CHECK_THROWS_AS(export_jsonl(std::vector<InstructionExample>{}, dir.file("empty.jsonl")), EmptyInputError);
}

TEST_CASE("JSONL: three examples make three lines; a truncated line names its number") {
    SplitPlan plan;
    plan.ar1.rhos = {0.4};
    plan.ar1.train_series_per_rho = 1;
    plan.ar1.rounds = 3;
    const auto d = build_ar1_instruction_set(plan);
    REQUIRE(d.train.size() == 3);
    const auto text = export_jsonl(d.train);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    const auto second_nl = text.find('\n', text.find('\n') + 1);
    const std::string broken = text.substr(0, second_nl - 5) + "\n" + text.substr(second_nl + 1);
    try {
        parse_jsonl(broken, "x.jsonl");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("x.jsonl: line 2") != std::string::npos);
    }
}

TEST_CASE("schema: one trailing assistant message required") {
    nlohmann::json j = {{"messages", {{{"role", "user"}, {"content", "hi"}}}},
                        {"meta", {{"split", "train"}, {"task", "ar1"}, {"t", 1}}}};
    CHECK_THROWS_AS(example_from_json(j), DataError);
    j["messages"].push_back({{"role", "assistant"}, {"content", "change_1: 0.00\nchange_2: 0.00"}});
    const auto ex = example_from_json(j);
    CHECK(ex.meta.variant == "baseline");
    CHECK(ex.target() == "change_1: 0.00\nchange_2: 0.00");
}

TEST_CASE("split guard flags a test prompt copied into train") {
    SplitPlan plan;
    plan.ar1.train_series_per_rho = 2;
    plan.ar1.val_series_per_rho = 1;
    plan.ar1.test_series_per_rho = 1;
    auto d = build_ar1_instruction_set(plan);
    REQUIRE(split_guard(d).empty());
    d.train[5].messages = d.test[7].messages;
    const auto v = split_guard(d);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == "duplicate_prompt");
    CHECK(v[0].detail.find("train[5]") != std::string::npos);
    CHECK(v[0].detail.find("test[7]") != std::string::npos);
}

TEST_CASE("split guard flags shared seed lineage") {
    SplitPlan plan;
    plan.ar1.rhos = {0.2};
    plan.ar1.train_series_per_rho = plan.ar1.val_series_per_rho = plan.ar1.test_series_per_rho = 1;
    auto d = build_ar1_instruction_set(plan);
    d.val[0].meta.seed = d.train[0].meta.seed;
    const auto v = split_guard(d);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == "seed_overlap");
}

TEST_CASE("plan validation rejects overlapping blocks and date ranges") {
    SplitPlan plan;
    CHECK_NOTHROW(plan.validate());
    CHECK(plan_guard(plan).empty());
    SplitPlan same_block = plan;
    same_block.ar1.test_block = same_block.ar1.train_block;
    CHECK_THROWS_AS(same_block.validate(), SplitViolationError);

    SplitPlan overlap = plan;
    overlap.stock.val = MonthRange{{2012, 1}, {2016, 6}};
    CHECK(plan_guard(overlap).size() == 1);
    CHECK(plan_guard(overlap)[0].kind == "month_overlap");
    CHECK_THROWS_AS(overlap.validate(), SplitViolationError);

    SplitPlan bad_rho = plan;
    bad_rho.ar1.rhos = {1.2};
    CHECK_THROWS_AS(bad_rho.validate(), ConfigError);
}

TEST_CASE("plan JSON round trip") {
    SplitPlan plan;
    plan.ar1.rhos = {0.1, 0.9};
    plan.ar1.master_seed = 99;
    plan.stock.val = std::nullopt;
    const auto back = SplitPlan::from_json(plan.to_json());
    CHECK(back.to_json() == plan.to_json());
    CHECK_FALSE(back.stock.val.has_value());
    CHECK_THROWS_AS(SplitPlan::from_json({{"stock", {{"train", "2001-01"}}}}), ConfigError);
}

TEST_CASE("stock examples: boundaries, target text, anonymization") {
    const std::vector<PromptRow> rows{stock_row("PERMNO10107", {2011, 12}), stock_row("PERMNO10107", {2012, 1}),
                                      stock_row("PERMNO14593", {2016, 1}), stock_row("PERMNO14593", {2000, 6})};
    const auto d = build_stock_instruction_set(rows, SplitPlan{});
    REQUIRE(d.train.size() == 1);
    REQUIRE(d.val.size() == 1);
    REQUIRE(d.test.size() == 1);
    CHECK(d.dropped == 1);
    CHECK(*d.train[0].meta.formation == "2011-12");
    CHECK(*d.val[0].meta.formation == "2012-01");
    CHECK(d.train[0].target() == "0.0123");
    for (const auto* v : {&d.train, &d.val, &d.test}) {
        for (const auto& ex : *v) {
            CHECK_FALSE(contains_date_token(ex.user_content()));
            CHECK(ex.user_content().find("PERMNO") == std::string::npos);
            CHECK(ex.user_content().find(*ex.meta.firm_key) == std::string::npos);
        }
    }
    CHECK(split_guard(d).empty());

    auto bad = rows;
    bad[0].window[3] = std::nan("");
    CHECK(build_stock_instruction_set(bad, SplitPlan{}).dropped == 2);
}

TEST_CASE("anonymization on a synthetic panel") {
    SynthPanelConfig cfg;
    cfg.n_firms = 20;
    cfg.start = {2010, 1};
    const auto d = build_stock_instruction_set(build_windows(synth_reversal_panel(cfg)), SplitPlan{});
    REQUIRE(d.train.size() + d.val.size() + d.test.size() > 0);
    const std::regex year(R"((^|[^0-9.])(19|20)[0-9]{2}([^0-9]|$))");
    for (const auto* v : {&d.train, &d.val, &d.test}) {
        for (const auto& ex : *v) {
            CHECK_FALSE(std::regex_search(ex.user_content(), year));
        }
    }
    CHECK(split_guard(d).empty());
}

TEST_CASE("date token detector") {
    CHECK(contains_date_token("returns since 2015"));
    CHECK(contains_date_token("as of 2015-06"));
    CHECK(contains_date_token("In March the stock"));
    CHECK_FALSE(contains_date_token("0.2015, -0.0123"));
    CHECK_FALSE(contains_date_token("12345"));
}

}  // TEST_SUITE
