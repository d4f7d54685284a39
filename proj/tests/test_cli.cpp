#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "debias/cli.hpp"
#include "debias/lora.hpp"
#include "debias/util.hpp"
#include "support.hpp"

using namespace debias;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "debias");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

const nlohmann::json kTinyPlan = {{"ar1",
                                   {{"rhos", {0.0, 0.6}},
                                    {"train_series_per_rho", 2},
                                    {"val_series_per_rho", 1},
                                    {"test_series_per_rho", 2}}}};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
    test::TempDir dir;
    CHECK(cli({}).code == 2);
    CHECK(cli({"simulate"}).code == 2);  // --config is required
    CHECK(cli({"no-such-command"}).code == 2);
    const auto missing = cli({"simulate", "--config", dir.file("absent.json")});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("absent.json") != std::string::npos);
    CHECK(cli({"report", "--run-dir", dir.file("nope")}).code == 2);
    CHECK(cli({"run", "--task", "weather", "--out-dir", dir.file("o")}).code == 2);
}

TEST_CASE("malformed and invalid configs exit 2") {
    test::TempDir dir;
    write_file(dir.file("bad.json"), "{not json");
    CHECK(cli({"simulate", "--config", dir.file("bad.json")}).code == 2);
    write_file(dir.file("rho.json"), R"({"plan": {"ar1": {"rhos": [1.5]}}})");
    const auto r = cli({"simulate", "--config", dir.file("rho.json"), "--out-dir", dir.file("o")});
    CHECK(r.code == 2);
    CHECK(r.err.find("rhos") != std::string::npos);
    write_file(dir.file("type.json"), R"({"task": "stock", "checkpoints": {"x": 3}})");
    CHECK(cli({"evaluate", "--config", dir.file("type.json"), "--out-dir", dir.file("t")}).code == 2);
}

TEST_CASE("simulate with the rational agent writes six panels of 1,248 rows") {
    test::TempDir dir;
    write_file(dir.file("sim.json"), R"({"agent": {"kind": "rational"}})");
    const auto r = cli({"simulate", "--config", dir.file("sim.json"), "--out-dir", dir.file("out")});
    REQUIRE(r.code == 0);
    for (const char* rho : {"0.0", "0.2", "0.4", "0.6", "0.8", "1.0"}) {
        const auto text = read_file(dir.file(std::string("out/panel_rho_") + rho + ".csv"));
        CHECK(line_count(text) == 1249);
    }
    const auto manifest = nlohmann::json::parse(read_file(dir.file("out/manifest.json")));
    CHECK(manifest.at("outputs").size() == 6);
    CHECK(manifest.at("config_hash").get<std::string>().size() == 64);

    // The panels feed evaluate directly.
    nlohmann::json ev = {{"task", "ar1"}, {"panels", nlohmann::json::array()}};
    for (const char* rho : {"0.0", "0.2", "0.4", "0.6", "0.8", "1.0"}) {
        ev["panels"].push_back({{"rho", std::stod(rho)}, {"path", dir.file(std::string("out/panel_rho_") + rho + ".csv")}});
    }
    write_file(dir.file("ev.json"), ev.dump());
    const auto e = cli({"evaluate", "--config", dir.file("ev.json"), "--out-dir", dir.file("ev")});
    REQUIRE(e.code == 0);
    const auto plot = read_file(dir.file("ev/eq2_plot.csv"));
    CHECK(plot.rfind("rho,b,ci_low,ci_high\n", 0) == 0);
    CHECK(line_count(plot) == 7);
    CHECK(read_file(dir.file("ev/eq2_table.csv")).find("1248") != std::string::npos);

    const auto rep = cli({"report", "--run-dir", dir.file("ev")});
    CHECK(rep.code == 0);
    CHECK(rep.out.find("eq2_table.csv") != std::string::npos);
    CHECK(std::filesystem::exists(dir.file("ev/summary.txt")));
}

TEST_CASE("simulate with an unreachable model endpoint exits 5") {
    test::TempDir dir;
    nlohmann::json cfg = {{"agent", {{"kind", "llm"}, {"model", "m"}}},
                          {"client", {{"endpoint", "http://127.0.0.1:1"}, {"max_retries", 0}, {"timeout_s", 2}}},
                          {"plan", kTinyPlan}};
    write_file(dir.file("llm.json"), cfg.dump());
    const auto r = cli({"simulate", "--config", dir.file("llm.json"), "--out-dir", dir.file("o")});
    CHECK(r.code == 5);
    CHECK(r.err.find("no usable rounds") != std::string::npos);
}

TEST_CASE("build-dataset: clean plan, overlapping plan, print-config") {
    test::TempDir dir;
    write_file(dir.file("ok.json"), nlohmann::json{{"plan", kTinyPlan}}.dump());
    const auto ok = cli({"build-dataset", "--config", dir.file("ok.json"), "--out-dir", dir.file("ds")});
    REQUIRE(ok.code == 0);
    CHECK(line_count(read_file(dir.file("ds/train.jsonl"))) == 2 * 2 * 40);
    const auto hygiene = nlohmann::json::parse(read_file(dir.file("ds/hygiene.json")));
    CHECK(hygiene.at("violations").empty());

    nlohmann::json bad = {{"plan", {{"stock", {{"val", {"2012-01", "2016-06"}}}}}}};
    write_file(dir.file("bad.json"), bad.dump());
    const auto b = cli({"build-dataset", "--config", dir.file("bad.json"), "--out-dir", dir.file("bad")});
    CHECK(b.code == 3);
    CHECK(b.err.find("month_overlap") != std::string::npos);

    const auto p = cli({"build-dataset", "--config", dir.file("ok.json"), "--print-config", "--seed", "5"});
    CHECK(p.code == 0);
    const auto effective = nlohmann::json::parse(p.out);
    CHECK(effective.at("plan").at("ar1").at("master_seed") == 5);
    CHECK(effective.at("task") == "ar1");
}

TEST_CASE("train: pretrain and fine-tune are deterministic") {
    test::TempDir dir;
    write_file(dir.file("ds.json"), nlohmann::json{{"plan", kTinyPlan}, {"targets", "extrapolative"}}.dump());
    REQUIRE(cli({"build-dataset", "--config", dir.file("ds.json"), "--out-dir", dir.file("ds")}).code == 0);
    write_file(dir.file("tr.json"), R"({"train_config": {"max_epochs": 2, "eval_every": 20, "batch_size": 16},
                                        "net": {"hidden": [8]}})");
    const std::vector<std::string> common{"--config", dir.file("tr.json"), "--train", dir.file("ds/train.jsonl"),
                                          "--val", dir.file("ds/val.jsonl")};
    auto args_for = [&](const std::string& out) {
        auto a = common;
        a.insert(a.begin(), "train");
        a.push_back("--out-dir");
        a.push_back(out);
        return a;
    };
    REQUIRE(cli(args_for(dir.file("a"))).code == 0);
    REQUIRE(cli(args_for(dir.file("b"))).code == 0);
    CHECK(read_file(dir.file("a/checkpoint.txt")) == read_file(dir.file("b/checkpoint.txt")));
    CHECK(read_file(dir.file("a/train_report.csv")) == read_file(dir.file("b/train_report.csv")));

    auto ft = args_for(dir.file("ft"));
    ft.push_back("--base");
    ft.push_back(dir.file("a/checkpoint.txt"));
    const auto r = cli(ft);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("trainable parameters") != std::string::npos);
    const auto tuned = load_checkpoint(dir.file("ft/checkpoint.txt"));
    CHECK(tuned.adapted());
    CHECK(tuned.base.checksum() == load_checkpoint(dir.file("a/checkpoint.txt")).base.checksum());

    auto missing = args_for(dir.file("m"));
    missing[missing.size() - 3] = dir.file("ds/absent.jsonl");  // --val path
    CHECK(cli(missing).code == 3);
}

TEST_CASE("evaluate the stock path from checkpoints") {
    test::TempDir dir;
    Checkpoint ckpt;
    ckpt.base = DenseNet::random({12, 4, 1}, 9);
    ckpt.normalizer = InputNormalizer{12, false, 0.01, 0.08, {0.08}};
    save_checkpoint(ckpt, dir.file("net.txt"));
    write_file(dir.file("ev.json"), nlohmann::json{{"task", "stock"}, {"checkpoints", {{"toy", dir.file("net.txt")}}}}.dump());
    const auto r = cli({"evaluate", "--config", dir.file("ev.json"), "--out-dir", dir.file("o")});
    REQUIRE(r.code == 0);
    const auto table = read_file(dir.file("o/eq3_table.csv"));
    CHECK(table.rfind(",toy,realized\n", 0) == 0);
    CHECK(table.find("r_{t-0}") != std::string::npos);
}

}  // TEST_SUITE
