#include "debias/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "debias/experiment.hpp"
#include "debias/inference.hpp"
#include "debias/report.hpp"
#include "debias/util.hpp"

namespace debias {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    bool print_config = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
    auto* opt = cmd->add_option("--config", c.config, "JSON config file");
    if (config_required) {
        opt->required();
    }
    cmd->add_option("--seed", c.seed, "master seed override");
    cmd->add_option("--out-dir", c.out_dir, "output directory");
    cmd->add_flag("--print-config", c.print_config, "echo the effective config and exit");
}

json load_config(const std::string& path) {
    if (path.empty()) {
        return json::object();
    }
    if (!fs::exists(path)) {
        throw UsageError("config file '" + path + "' does not exist");
    }
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config", "'" + path + "' is not valid JSON: " + e.what());
    }
}

template <typename T>
T value_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, e.what());
    }
}

std::string out_path(const Common& c, const std::string& name) {
    return (fs::path(c.out_dir) / name).string();
}

void emit(const Common& c, RunManifest& m, const std::string& name, std::string_view contents) {
    write_file(out_path(c, name), contents);
    m.add_output(name);
}

SeMode se_mode_of(const json& j) {
    const auto s = value_or<std::string>(j, "se_mode", "classical");
    if (s == "classical") return SeMode::Classical;
    if (s == "hc1") return SeMode::Hc1;
    throw ConfigError("se_mode", "expected classical or hc1");
}

std::string rho_tag(double rho) { return format_fixed(rho, 1); }

// ---------------------------------------------------------------- agents

struct AgentSpec {
    std::string kind = "rational";
    double theta = 0.5;
    std::string checkpoint;
    std::string model;
    PromptKind prompt = PromptKind::Baseline;
};

AgentSpec agent_spec(const json& j) {
    AgentSpec a;
    a.kind = value_or<std::string>(j, "kind", a.kind);
    a.theta = value_or(j, "theta", a.theta);
    a.checkpoint = value_or<std::string>(j, "checkpoint", "");
    a.model = value_or<std::string>(j, "model", "");
    try {
        a.prompt = prompt_kind_from_string(value_or<std::string>(j, "prompt", "baseline"));
    } catch (const Error& e) {
        throw ConfigError("agent.prompt", e.what());
    }
    if (a.kind != "rational" && a.kind != "extrapolative" && a.kind != "checkpoint" && a.kind != "llm") {
        throw ConfigError("agent.kind", "expected rational, extrapolative, checkpoint or llm");
    }
    if (a.kind == "checkpoint" && a.checkpoint.empty()) throw ConfigError("agent.checkpoint", "path required");
    if (a.kind == "llm" && a.model.empty()) throw ConfigError("agent.model", "model name required");
    return a;
}

json to_json(const AgentSpec& a) {
    return {{"kind", a.kind},   {"theta", a.theta}, {"checkpoint", a.checkpoint},
            {"model", a.model}, {"prompt", to_string(a.prompt)}};
}

ClientConfig client_config(const json& j) {
    ClientConfig c = ClientConfig::from_env();
    if (j.contains("client")) {
        c = ClientConfig::from_json(j.at("client"), c);
    }
    return c;
}

struct AgentHandle {
    AgentFactory factory;
    std::shared_ptr<InferenceClient> client;  // llm agents only
    std::vector<LlmAgent*> llm_agents;
};

AgentHandle make_agents(const AgentSpec& a, const json& cfg, RunManifest& m) {
    AgentHandle h;
    if (a.kind == "rational") {
        h.factory = rational_targets();
    } else if (a.kind == "extrapolative") {
        h.factory = extrapolative_targets(a.theta);
    } else if (a.kind == "checkpoint") {
        m.add_input(a.checkpoint);
        const auto ckpt = load_checkpoint(a.checkpoint);
        const AnyNet net = ckpt.adapted() ? AnyNet(ckpt.adapted_net()) : AnyNet(ckpt.base);
        h.factory = net_agents(net, ckpt.normalizer);
    } else {
        h.client = std::make_shared<InferenceClient>(client_config(cfg));
        auto client = h.client;
        auto* log = &h.llm_agents;
        h.factory = [client, a, log](double, double) {
            auto agent = std::make_unique<LlmAgent>(*client, PromptVariant{a.prompt, Task::Ar1}, a.model);
            log->push_back(agent.get());
            return agent;
        };
    }
    return h;
}

// --------------------------------------------------------------- commands

int cmd_simulate(const Common& c, std::ostream& out) {
    json cfg = load_config(c.config);
    SplitPlan plan = cfg.contains("plan") ? SplitPlan::from_json(cfg.at("plan")) : SplitPlan{};
    if (c.seed) plan.ar1.master_seed = *c.seed;
    const auto agent = agent_spec(cfg.value("agent", json::object()));
    const Split split = split_from_string(value_or<std::string>(cfg, "split", "test"));
    const json effective = {{"plan", plan.to_json()}, {"agent", to_json(agent)}, {"split", to_string(split)}};
    if (c.print_config) {
        out << effective.dump(2) << "\n";
        return kExitOk;
    }
    plan.validate();
    RunManifest m("simulate", effective, plan.ar1.master_seed);
    if (!c.config.empty()) m.add_input(c.config);
    Stopwatch sw;
    auto handle = make_agents(agent, cfg, m);
    for (std::size_t r = 0; r < plan.ar1.rhos.size(); ++r) {
        const double rho = plan.ar1.rhos[r];
        auto forecaster = handle.factory(rho, plan.ar1.mean);
        const auto sessions = run_sessions(ar1_configs(plan.ar1, split, r), *forecaster);
        std::size_t failures = 0;
        for (const auto& s : sessions) failures += s.failures.size();
        const auto panel = build_forecast_panel(sessions);
        if (panel.rows.empty() && failures > 0) {
            throw AgentFailure("no usable rounds at rho " + rho_tag(rho) + "; first failure: " + sessions.front().failures.front());
        }
        std::ostringstream csv;
        write_panel_csv(panel, csv);
        const auto name = "panel_rho_" + rho_tag(rho) + ".csv";
        emit(c, m, name, csv.str());
        out << name << ": " << panel.rows.size() << " rows, " << failures << " failed rounds\n";
    }
    for (const auto* llm : handle.llm_agents) {
        for (const auto& line : llm->failure_log()) out << "parse failure: " << line << "\n";
    }
    m.time_stage("simulate", sw.seconds());
    m.finish(c.out_dir);
    return kExitOk;
}

int cmd_build_dataset(const Common& c, std::ostream& out, std::ostream& err) {
    json cfg = load_config(c.config);
    SplitPlan plan = cfg.contains("plan") ? SplitPlan::from_json(cfg.at("plan")) : SplitPlan{};
    if (c.seed) plan.ar1.master_seed = *c.seed;
    const auto task = task_from_string(value_or<std::string>(cfg, "task", "ar1"));
    const auto targets = value_or<std::string>(cfg, "targets", task == Task::Ar1 ? "rational" : "realized");
    const double theta = value_or(cfg, "theta", 0.5);
    const auto kind = prompt_kind_from_string(value_or<std::string>(cfg, "prompt", "baseline"));
    const auto returns = value_or<std::string>(cfg, "returns", "");
    json effective = {{"plan", plan.to_json()}, {"task", to_string(task)}, {"targets", targets},
                      {"theta", theta},         {"prompt", to_string(kind)}, {"returns", returns}};
    if (c.print_config) {
        out << effective.dump(2) << "\n";
        return kExitOk;
    }

    auto violations = plan_guard(plan);
    if (violations.empty()) {
        try {
            plan.validate();
        } catch (const SplitViolationError& e) {
            violations.push_back({"seed_overlap", e.what()});
        }
    }
    if (!violations.empty()) {
        for (const auto& v : violations) err << "violation " << v.kind << ": " << v.detail << "\n";
        return kExitData;
    }

    RunManifest m("build-dataset", effective, plan.ar1.master_seed);
    if (!c.config.empty()) m.add_input(c.config);
    Stopwatch sw;
    SplitDatasets data;
    if (task == Task::Ar1) {
        if (targets != "rational" && targets != "extrapolative") {
            throw ConfigError("targets", "ar1 targets are rational or extrapolative");
        }
        data = build_ar1_instruction_set(plan, targets == "rational" ? rational_targets() : extrapolative_targets(theta), kind);
    } else {
        if (targets != "realized") throw ConfigError("targets", "stock targets are realized returns");
        ReturnsPanel panel;
        if (returns.empty()) {
            SynthPanelConfig sc;
            if (c.seed) sc.seed = *c.seed;
            panel = synth_reversal_panel(sc);
        } else {
            m.add_input(returns);
            panel = load_returns_csv(returns);
        }
        data = build_stock_instruction_set(build_windows(panel), plan, kind);
    }
    violations = split_guard(data);
    json hygiene = {{"violations", json::array()},
                    {"counts", {{"train", data.train.size()}, {"val", data.val.size()}, {"test", data.test.size()}}},
                    {"dropped", data.dropped}};
    for (const auto& v : violations) hygiene["violations"].push_back({{"kind", v.kind}, {"detail", v.detail}});
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
        const auto name = to_string(s) + ".jsonl";
        if (data.of(s).empty()) {
            out << name << ": empty, not written\n";
            continue;
        }
        emit(c, m, name, export_jsonl(data.of(s)));
        out << name << ": " << data.of(s).size() << " examples\n";
    }
    emit(c, m, "hygiene.json", hygiene.dump(2) + "\n");
    m.time_stage("build", sw.seconds());
    m.finish(c.out_dir);
    if (!violations.empty()) {
        for (const auto& v : violations) err << "violation " << v.kind << ": " << v.detail << "\n";
        return kExitData;
    }
    out << "split guard: no violations\n";
    return kExitOk;
}

int cmd_train(const Common& c, const std::string& train_flag, const std::string& val_flag, const std::string& base_flag,
              std::ostream& out) {
    json cfg = load_config(c.config);
    const auto train_path = train_flag.empty() ? value_or<std::string>(cfg, "train", "") : train_flag;
    const auto val_path = val_flag.empty() ? value_or<std::string>(cfg, "val", "") : val_flag;
    const auto base_path = base_flag.empty() ? value_or<std::string>(cfg, "base", "") : base_flag;
    if (train_path.empty() || val_path.empty()) {
        throw UsageError("train and val JSONL paths are required (--train/--val or config keys)");
    }
    TrainConfig tc;
    tc.optimizer = Optimizer::Adam;
    tc.learning_rate = 1e-3;
    tc.eval_every = 480;
    tc.max_epochs = 60;
    tc.patience = 8;
    if (cfg.contains("train_config")) tc = train_config_from_json(cfg.at("train_config"), tc);
    if (c.seed) tc.seed = *c.seed;
    const NetSpec spec = cfg.contains("net") ? net_spec_from_json(cfg.at("net")) : NetSpec{};
    const int rank = value_or(cfg, "rank", 4);
    const double alpha = value_or(cfg, "alpha", static_cast<double>(rank));
    json effective = {{"train", train_path}, {"val", val_path},   {"base", base_path}, {"train_config", to_json(tc)},
                      {"net", to_json(spec)}, {"rank", rank},     {"alpha", alpha}};
    if (c.print_config) {
        out << effective.dump(2) << "\n";
        return kExitOk;
    }
    tc.validate();
    RunManifest m("train", effective, tc.seed);
    m.add_input(train_path);
    m.add_input(val_path);
    Stopwatch sw;
    const auto train_set = import_jsonl(train_path);
    const auto val_set = import_jsonl(val_path);
    Checkpoint ckpt;
    TrainReport report;
    if (base_path.empty()) {
        auto fit = pretrain_base(raw_from_examples(train_set, spec.window), raw_from_examples(val_set, spec.window), spec, tc);
        ckpt = std::move(fit.checkpoint);
        report = std::move(fit.report);
    } else {
        m.add_input(base_path);
        const auto base = load_checkpoint(base_path);
        const int window = base.normalizer.window;
        auto fit = fine_tune(base, raw_from_examples(train_set, window), raw_from_examples(val_set, window), rank, alpha, tc);
        ckpt = std::move(fit.checkpoint);
        report = std::move(fit.report);
        out << "trainable parameters: " << ckpt.adapted_net().trainable_parameters() << " ("
            << format_fixed(100.0 * ckpt.adapted_net().trainable_fraction(), 1) << "% of base weights)\n";
    }
    ckpt.config_hash = m.config_hash();
    save_checkpoint(ckpt, out_path(c, "checkpoint.txt"));
    m.add_output("checkpoint.txt");
    write_train_report_csv(report, out_path(c, "train_report.csv"));
    m.add_output("train_report.csv");
    m.time_stage("train", sw.seconds());
    m.finish(c.out_dir);
    out << "val loss " << format_full(report.initial_val_loss()) << " -> " << format_full(report.best_val_loss())
        << " (best step " << report.best_step << (report.stopped_early ? ", stopped early" : "") << ")\n";
    return kExitOk;
}

void write_ar1_tables(const Common& c, RunManifest& m, const std::vector<Ar1Cell>& cells, const std::string& prefix,
                      std::ostream& out) {
    emit(c, m, prefix + "eq2_table.csv", eq2_table_csv(cells));
    emit(c, m, prefix + "eq2_plot.csv", eq2_plot_csv(cells));
    std::vector<LabeledSeries> series;
    for (const auto& cell : cells) {
        LabeledSeries err{"error_rho_" + rho_tag(cell.rho), {}};
        LabeledSeries rev{"revision_rho_" + rho_tag(cell.rho), {}};
        for (const auto& row : cell.panel.rows) {
            err.values.push_back(row.error());
            rev.values.push_back(row.revision());
        }
        series.push_back(std::move(err));
        series.push_back(std::move(rev));
    }
    emit(c, m, prefix + "descriptive.csv", descriptive_table_csv(series));
    out << eq2_table_csv(cells);
}

int cmd_evaluate(const Common& c, std::ostream& out) {
    json cfg = load_config(c.config);
    const auto task = task_from_string(value_or<std::string>(cfg, "task", "ar1"));
    if (c.print_config) {
        out << cfg.dump(2) << "\n";
        return kExitOk;
    }
    RunManifest m("evaluate", cfg, c.seed.value_or(0));
    if (!c.config.empty()) m.add_input(c.config);
    Stopwatch sw;
    if (task == Task::Ar1) {
        const SeMode mode = se_mode_of(cfg);
        const bool subject_fe = value_or(cfg, "subject_fe", false);
        std::vector<Ar1Cell> cells;
        if (cfg.contains("panels")) {
            for (const auto& p : cfg.at("panels")) {
                const auto path = p.at("path").get<std::string>();
                m.add_input(path);
                Ar1Cell cell;
                cell.rho = p.at("rho").get<double>();
                cell.panel = read_panel_csv(path);
                cell.fit = error_revision_regression(cell.panel, mode, subject_fe);
                cells.push_back(std::move(cell));
            }
        } else {
            SplitPlan plan = cfg.contains("plan") ? SplitPlan::from_json(cfg.at("plan")) : SplitPlan{};
            if (c.seed) plan.ar1.master_seed = *c.seed;
            plan.validate();
            auto handle = make_agents(agent_spec(cfg.value("agent", json::object())), cfg, m);
            cells = evaluate_ar1(plan.ar1, handle.factory, mode, subject_fe);
            for (const auto* llm : handle.llm_agents) {
                for (const auto& line : llm->failure_log()) out << "parse failure: " << line << "\n";
            }
        }
        if (cells.empty()) throw EmptyInputError("nothing to evaluate");
        write_ar1_tables(c, m, cells, "", out);
    } else {
        StockPlan splits;
        if (cfg.contains("splits")) splits = SplitPlan::from_json(json{{"stock", cfg.at("splits")}}).stock;
        const auto returns = value_or<std::string>(cfg, "returns", "");
        ReturnsPanel panel;
        if (returns.empty()) {
            SynthPanelConfig sc;
            if (c.seed) sc.seed = *c.seed;
            panel = synth_reversal_panel(sc);
        } else {
            m.add_input(returns);
            panel = load_returns_csv(returns);
        }
        const auto test = temporal_split(build_windows(panel), splits).test;
        if (test.empty()) throw EmptyInputError("no prompt rows fall in the test range");
        auto spec = PanelSpec::all_lags();
        std::vector<LabeledPanelResult> columns;
        const json checkpoints = cfg.value("checkpoints", json::object());
        for (const auto& [label, path] : checkpoints.items()) {
            m.add_input(path.get<std::string>());
            const auto ckpt = load_checkpoint(path.get<std::string>());
            columns.push_back({label, panel_fe_regression(forecast_panel_rows(test, net_forecasts(test, ckpt)), spec)});
        }
        std::vector<double> realized;
        for (const auto& r : test) realized.push_back(r.target);
        columns.push_back({"realized", panel_fe_regression(forecast_panel_rows(test, realized), spec)});
        emit(c, m, "eq3_table.csv", eq3_table_csv(columns));
        emit(c, m, "descriptive.csv", descriptive_table_csv({{"realized_return", realized}}));
        out << eq3_table_csv(columns);
    }
    m.time_stage("evaluate", sw.seconds());
    m.finish(c.out_dir);
    return kExitOk;
}

int cmd_run(const Common& c, const std::string& task, std::ostream& out) {
    json cfg = load_config(c.config);
    RunManifest* manifest = nullptr;
    if (task == "ar1") {
        auto ec = ar1_experiment_from_json(cfg);
        if (c.seed) ec.plan.ar1.master_seed = *c.seed;
        if (c.print_config) {
            out << to_json(ec).dump(2) << "\n";
            return kExitOk;
        }
        RunManifest m("run ar1", to_json(ec), ec.plan.ar1.master_seed);
        manifest = &m;
        Stopwatch sw;
        const auto r = run_ar1_experiment(ec);
        m.time_stage("pipeline", sw.seconds());
        save_checkpoint(r.base.checkpoint, out_path(c, "base_checkpoint.txt"));
        m.add_output("base_checkpoint.txt");
        auto tuned = r.tuned.checkpoint;
        tuned.config_hash = m.config_hash();
        save_checkpoint(tuned, out_path(c, "tuned_checkpoint.txt"));
        m.add_output("tuned_checkpoint.txt");
        write_train_report_csv(r.base.report, out_path(c, "pretrain_report.csv"));
        m.add_output("pretrain_report.csv");
        write_train_report_csv(r.tuned.report, out_path(c, "sft_report.csv"));
        m.add_output("sft_report.csv");
        out << "base network\n";
        write_ar1_tables(c, *manifest, r.base_cells, "base_", out);
        out << "fine-tuned network\n";
        write_ar1_tables(c, *manifest, r.tuned_cells, "tuned_", out);
        m.finish(c.out_dir);
        return kExitOk;
    }
    if (task != "stock") throw UsageError("--task must be ar1 or stock");
    auto ec = stock_experiment_from_json(cfg);
    if (c.seed) ec.panel.seed = *c.seed;
    if (c.print_config) {
        out << to_json(ec).dump(2) << "\n";
        return kExitOk;
    }
    RunManifest m("run stock", to_json(ec), ec.panel.seed);
    Stopwatch sw;
    const auto r = run_stock_experiment(ec);
    m.time_stage("pipeline", sw.seconds());
    save_checkpoint(r.base.checkpoint, out_path(c, "base_checkpoint.txt"));
    m.add_output("base_checkpoint.txt");
    save_checkpoint(r.tuned.checkpoint, out_path(c, "tuned_checkpoint.txt"));
    m.add_output("tuned_checkpoint.txt");
    write_train_report_csv(r.base.report, out_path(c, "pretrain_report.csv"));
    m.add_output("pretrain_report.csv");
    write_train_report_csv(r.tuned.report, out_path(c, "sft_report.csv"));
    m.add_output("sft_report.csv");
    const auto table = eq3_table_csv({{"base", r.base_fit}, {"fine-tuned", r.tuned_fit}, {"realized", r.realized_fit}});
    emit(c, m, "eq3_table.csv", table);
    emit(c, m, "descriptive.csv", descriptive_table_csv({{"realized_return", r.test_returns}}));
    out << table;
    m.finish(c.out_dir);
    return kExitOk;
}

int cmd_report(const std::string& run_dir, std::ostream& out) {
    if (run_dir.empty() || !fs::is_directory(run_dir)) {
        throw UsageError("run directory '" + run_dir + "' does not exist");
    }
    const auto manifest_path = fs::path(run_dir) / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw DataError("no manifest.json in '" + run_dir + "'");
    }
    const auto manifest = json::parse(read_file(manifest_path.string()));
    std::ostringstream s;
    s << "run: " << manifest.value("command", "?") << "\n";
    s << "config hash: " << manifest.value("config_hash", "?") << "\n";
    s << "seed: " << manifest.value("seed", 0ULL) << "\n";
    for (const auto& t : manifest.value("timings", json::array())) {
        s << "stage " << t.at("stage").get<std::string>() << ": " << format_fixed(t.at("seconds").get<double>(), 2) << " s\n";
    }
    s << "outputs:\n";
    for (const auto& o : manifest.value("outputs", json::array())) {
        s << "  " << o.at("path").get<std::string>() << "  " << o.at("sha256").get<std::string>().substr(0, 12) << "\n";
    }
    for (const auto& o : manifest.value("outputs", json::array())) {
        const auto name = o.at("path").get<std::string>();
        if (name.find("table") == std::string::npos) continue;
        s << "\n== " << name << "\n" << read_file((fs::path(run_dir) / name).string());
    }
    write_file((fs::path(run_dir) / "summary.txt").string(), s.str());
    out << s.str();
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Extrapolation-bias detection and LoRA debiasing harness", "debias"};
    app.require_subcommand(1);

    Common common;
    auto* simulate = app.add_subcommand("simulate", "run the AR(1) forecasting game and write panels");
    add_common(simulate, common, true);
    auto* build = app.add_subcommand("build-dataset", "render instruction datasets and check split hygiene");
    add_common(build, common, false);
    auto* train = app.add_subcommand("train", "pretrain a base network or LoRA-fine-tune a checkpoint");
    add_common(train, common, false);
    std::string train_path, val_path, base_path;
    train->add_option("--train", train_path, "training JSONL");
    train->add_option("--val", val_path, "validation JSONL");
    train->add_option("--base", base_path, "base checkpoint; fine-tunes with LoRA when given");
    auto* evaluate = app.add_subcommand("evaluate", "run the bias regressions and write report tables");
    add_common(evaluate, common, true);
    auto* run = app.add_subcommand("run", "full pretrain / evaluate / fine-tune / re-evaluate pipeline");
    add_common(run, common, false);
    std::string task = "ar1";
    run->add_option("--task", task, "ar1 or stock");
    auto* report = app.add_subcommand("report", "summarize a run directory");
    std::string run_dir;
    report->add_option("--run-dir", run_dir, "directory holding manifest.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*simulate) return cmd_simulate(common, out);
        if (*build) return cmd_build_dataset(common, out, err);
        if (*train) return cmd_train(common, train_path, val_path, base_path, out);
        if (*evaluate) return cmd_evaluate(common, out);
        if (*run) return cmd_run(common, task, out);
        if (*report) return cmd_report(run_dir, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const TrainingError& e) {
        err << "training error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const InferenceError& e) {
        err << "inference error: " << e.what() << "\n";
        return kExitInference;
    } catch (const AgentFailure& e) {
        err << "inference error: " << e.what() << "\n";
        return kExitInference;
    } catch (const json::exception& e) {
        // Config fields of the wrong JSON type surface here.
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitOther;
    }
    return kExitOther;
}

}  // namespace debias
