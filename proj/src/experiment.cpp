#include "debias/experiment.hpp"

#include <cmath>
#include <map>

#include "debias/error.hpp"

namespace debias {

using nlohmann::json;

AgentFactory extrapolative_targets(double theta) {
    return [theta](double rho, double mean) { return std::make_unique<ExtrapolativeAgent>(ExtrapConfig{rho, theta, mean}); };
}

AgentFactory net_agents(const AnyNet& net, const InputNormalizer& norm) {
    return [net, norm](double rho, double) { return std::make_unique<NetAgent>(net, norm, rho); };
}

std::vector<Ar1Config> ar1_configs(const Ar1Plan& plan, Split split, std::size_t rho_index) {
    std::vector<Ar1Config> out;
    const int n = plan.series_per_rho(split);
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out.push_back({plan.rhos.at(rho_index), plan.sigma, plan.mean, plan.history_len, plan.rounds,
                       plan.series_seed(split, rho_index, i)});
    }
    return out;
}

std::vector<Ar1Cell> evaluate_ar1(const Ar1Plan& plan, const AgentFactory& agents, SeMode se_mode, bool subject_fe,
                                  Split split) {
    std::vector<Ar1Cell> cells;
    for (std::size_t r = 0; r < plan.rhos.size(); ++r) {
        Ar1Cell cell;
        cell.rho = plan.rhos[r];
        auto agent = agents(cell.rho, plan.mean);
        const auto sessions = run_sessions(ar1_configs(plan, split, r), *agent);
        for (const auto& s : sessions) {
            cell.failed_rounds += s.failures.size();
        }
        cell.panel = build_forecast_panel(sessions);
        cell.fit = error_revision_regression(cell.panel, se_mode, subject_fe);
        cells.push_back(std::move(cell));
    }
    return cells;
}

// ------------------------------------------------------------------ samples

RawSamples raw_from_examples(const std::vector<InstructionExample>& examples, int window) {
    if (examples.empty()) {
        throw EmptyInputError("no examples");
    }
    if (window < 1) {
        throw ConfigError("window", "must be positive");
    }
    const Task task = examples.front().meta.task;
    const Eigen::Index m = task == Task::Ar1 ? 2 : 1;
    const auto n = static_cast<Eigen::Index>(examples.size());
    RawSamples raw{Eigen::MatrixXd(window, n), std::vector<double>(examples.size(), 0.0), Eigen::MatrixXd(m, n)};
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& ex = examples[static_cast<std::size_t>(j)];
        if (ex.meta.task != task) {
            throw DataError("example " + std::to_string(j) + " mixes tasks");
        }
        const auto values = prompt_values(ex.user_content());
        if (values.size() < static_cast<std::size_t>(window)) {
            throw ShapeError("example " + std::to_string(j) + " has fewer values than the window");
        }
        for (int i = 0; i < window; ++i) {
            raw.windows(i, j) = values[values.size() - static_cast<std::size_t>(window) + static_cast<std::size_t>(i)];
        }
        if (task == Task::Ar1) {
            if (!ex.meta.rho) {
                throw DataError("example " + std::to_string(j) + " lacks meta.rho");
            }
            raw.rho[static_cast<std::size_t>(j)] = *ex.meta.rho;
            const auto pair = parse_forecast_response(ex.target());
            raw.targets(0, j) = pair.change_one;
            raw.targets(1, j) = pair.change_two;
        } else {
            raw.targets(0, j) = parse_return_response(ex.target());
        }
    }
    return raw;
}

RawSamples raw_from_rows(const std::vector<PromptRow>& rows, const std::function<double(const PromptRow&)>& target) {
    if (rows.empty()) {
        throw EmptyInputError("no prompt rows");
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto w = static_cast<Eigen::Index>(rows.front().window.size());
    RawSamples raw{Eigen::MatrixXd(w, n), std::vector<double>(rows.size(), 0.0), Eigen::MatrixXd(1, n)};
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& row = rows[static_cast<std::size_t>(j)];
        if (static_cast<Eigen::Index>(row.window.size()) != w) {
            throw ShapeError("prompt rows have unequal window lengths");
        }
        raw.windows.col(j) = Eigen::Map<const Eigen::VectorXd>(row.window.data(), w);
        raw.targets(0, j) = target(row);
    }
    return raw;
}

InputNormalizer fit_normalizer(const RawSamples& raw, bool rho_input) {
    if (raw.windows.cols() < 2) {
        throw EmptyInputError("need at least two samples to fit a normalizer");
    }
    InputNormalizer norm;
    norm.window = static_cast<int>(raw.windows.rows());
    norm.rho_input = rho_input;
    norm.in_mean = raw.windows.mean();
    norm.in_sd = std::sqrt((raw.windows.array() - norm.in_mean).square().sum() / static_cast<double>(raw.windows.size() - 1));
    if (!(norm.in_sd > 0.0)) {
        norm.in_sd = 1.0;
    }
    norm.out_scale.clear();
    for (Eigen::Index i = 0; i < raw.targets.rows(); ++i) {
        const auto row = raw.targets.row(i).array();
        const double sd = std::sqrt((row - row.mean()).square().sum() / static_cast<double>(row.size() - 1));
        norm.out_scale.push_back(sd > 0.0 ? sd : 1.0);
    }
    return norm;
}

Samples normalize(const RawSamples& raw, const InputNormalizer& norm) {
    if (raw.windows.rows() != norm.window) {
        throw ShapeError("sample window does not match the normalizer");
    }
    const Eigen::Index n = raw.windows.cols();
    Samples s{Eigen::MatrixXd(norm.feature_width(), n), Eigen::MatrixXd(raw.targets.rows(), n)};
    s.inputs.topRows(norm.window) = (raw.windows.array() - norm.in_mean) / norm.in_sd;
    if (norm.rho_input) {
        s.inputs.row(norm.window) = Eigen::Map<const Eigen::RowVectorXd>(raw.rho.data(), n);
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::VectorXd t = raw.targets.col(j);
        s.targets.col(j) = norm.normalize_target(std::span<const double>(t.data(), static_cast<std::size_t>(t.size())));
    }
    return s;
}

// ------------------------------------------------------------------- config

namespace {

TrainConfig adam(double lr, int epochs, int eval_every, int patience, std::uint64_t seed) {
    TrainConfig c;
    c.optimizer = Optimizer::Adam;
    c.learning_rate = lr;
    c.batch_size = 64;
    c.max_epochs = epochs;
    c.eval_every = eval_every;
    c.patience = patience;
    c.seed = seed;
    return c;
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer optimizer_from(const std::string& s) {
    if (s == "adam") return Optimizer::Adam;
    if (s == "sgd") return Optimizer::Sgd;
    throw ConfigError("optimizer", "expected 'sgd' or 'adam', got '" + s + "'");
}

std::string cluster_name(ClusterMode c) { return to_string(c); }

ClusterMode cluster_from(const std::string& s) {
    for (ClusterMode c : {ClusterMode::None, ClusterMode::Unit, ClusterMode::Time, ClusterMode::TwoWay}) {
        if (to_string(c) == s) return c;
    }
    throw ConfigError("cluster", "unknown cluster mode '" + s + "'");
}

SeMode se_mode_from(const std::string& s) {
    if (s == to_string(SeMode::Classical)) return SeMode::Classical;
    if (s == to_string(SeMode::Hc1)) return SeMode::Hc1;
    throw ConfigError("se_mode", "unknown standard-error mode '" + s + "'");
}

template <typename T>
void read(const json& j, const char* key, T& field) {
    if (j.contains(key)) {
        try {
            field = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(key, e.what());
        }
    }
}

}  // namespace

Ar1ExperimentConfig::Ar1ExperimentConfig()
    : pretrain(adam(1e-3, 60, 480, 8, 101)), sft(adam(1e-3, 60, 480, 8, 202)) {}

void Ar1ExperimentConfig::validate() const {
    plan.validate();
    pretrain.validate();
    sft.validate();
    if (!(theta >= 0.0)) throw ConfigError("theta", "must be non-negative");
    if (rank < 1) throw ConfigError("rank", "must be at least 1");
    if (net.window < 1 || net.window > plan.ar1.history_len) throw ConfigError("net.window", "must lie in 1..history_len");
}

StockExperimentConfig::StockExperimentConfig()
    : net{{32, 32}, kStockWindow, false, 13}, pretrain(adam(1e-3, 40, 300, 6, 303)), sft(adam(1e-3, 40, 300, 6, 404)) {}

void StockExperimentConfig::validate() const {
    panel.validate();
    pretrain.validate();
    sft.validate();
    if (net.window != kStockWindow) throw ConfigError("net.window", "stock networks read 12-month windows");
    if (net.rho_input) throw ConfigError("net.rho_input", "stock networks take no persistence input");
    if (rank < 1) throw ConfigError("rank", "must be at least 1");
    if (!(extrap_decay >= 0.0 && extrap_decay < 1.0)) throw ConfigError("extrap_decay", "must lie in [0, 1)");
}

json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
            {"patience", c.patience},           {"eval_every", c.eval_every}, {"seed", c.seed},
            {"optimizer", optimizer_name(c.optimizer)}, {"momentum", c.momentum}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    read(j, "learning_rate", c.learning_rate);
    read(j, "batch_size", c.batch_size);
    read(j, "max_epochs", c.max_epochs);
    read(j, "patience", c.patience);
    read(j, "eval_every", c.eval_every);
    read(j, "seed", c.seed);
    read(j, "momentum", c.momentum);
    if (j.contains("optimizer")) {
        c.optimizer = optimizer_from(j.at("optimizer").get<std::string>());
    }
    c.validate();
    return c;
}

json to_json(const NetSpec& s) {
    return {{"hidden", s.hidden}, {"window", s.window}, {"rho_input", s.rho_input}, {"seed", s.seed}};
}

NetSpec net_spec_from_json(const json& j, NetSpec s) {
    read(j, "hidden", s.hidden);
    read(j, "window", s.window);
    read(j, "rho_input", s.rho_input);
    read(j, "seed", s.seed);
    return s;
}

json to_json(const Ar1ExperimentConfig& c) {
    return {{"plan", c.plan.to_json()},
            {"theta", c.theta},
            {"net", to_json(c.net)},
            {"pretrain", to_json(c.pretrain)},
            {"sft", to_json(c.sft)},
            {"rank", c.rank},
            {"alpha", c.alpha},
            {"se_mode", to_string(c.se_mode)},
            {"subject_fe", c.subject_fe}};
}

Ar1ExperimentConfig ar1_experiment_from_json(const json& j) {
    Ar1ExperimentConfig c;
    if (j.contains("plan")) c.plan = SplitPlan::from_json(j.at("plan"));
    read(j, "theta", c.theta);
    if (j.contains("net")) c.net = net_spec_from_json(j.at("net"), c.net);
    if (j.contains("pretrain")) c.pretrain = train_config_from_json(j.at("pretrain"), c.pretrain);
    if (j.contains("sft")) c.sft = train_config_from_json(j.at("sft"), c.sft);
    read(j, "rank", c.rank);
    read(j, "alpha", c.alpha);
    if (j.contains("se_mode")) c.se_mode = se_mode_from(j.at("se_mode").get<std::string>());
    read(j, "subject_fe", c.subject_fe);
    c.validate();
    return c;
}

json to_json(const StockExperimentConfig& c) {
    const auto& p = c.panel;
    SplitPlan plan;
    plan.stock = c.splits;
    return {{"panel",
             {{"n_firms", p.n_firms}, {"n_months", p.n_months}, {"phi", p.phi}, {"vol", p.vol},
              {"factor_vol", p.factor_vol}, {"mean", p.mean}, {"start", p.start.str()}, {"seed", p.seed}}},
            {"splits", plan.to_json().at("stock")},
            {"extrap_beta0", c.extrap_beta0},
            {"extrap_decay", c.extrap_decay},
            {"net", to_json(c.net)},
            {"pretrain", to_json(c.pretrain)},
            {"sft", to_json(c.sft)},
            {"rank", c.rank},
            {"alpha", c.alpha},
            {"cluster", cluster_name(c.cluster)}};
}

StockExperimentConfig stock_experiment_from_json(const json& j) {
    StockExperimentConfig c;
    if (j.contains("panel")) {
        const auto& p = j.at("panel");
        read(p, "n_firms", c.panel.n_firms);
        read(p, "n_months", c.panel.n_months);
        read(p, "phi", c.panel.phi);
        read(p, "vol", c.panel.vol);
        read(p, "factor_vol", c.panel.factor_vol);
        read(p, "mean", c.panel.mean);
        read(p, "seed", c.panel.seed);
        if (p.contains("start")) c.panel.start = YearMonth::parse(p.at("start").get<std::string>());
    }
    if (j.contains("splits")) {
        c.splits = SplitPlan::from_json(json{{"stock", j.at("splits")}}).stock;
    }
    read(j, "extrap_beta0", c.extrap_beta0);
    read(j, "extrap_decay", c.extrap_decay);
    if (j.contains("net")) c.net = net_spec_from_json(j.at("net"), c.net);
    if (j.contains("pretrain")) c.pretrain = train_config_from_json(j.at("pretrain"), c.pretrain);
    if (j.contains("sft")) c.sft = train_config_from_json(j.at("sft"), c.sft);
    read(j, "rank", c.rank);
    read(j, "alpha", c.alpha);
    if (j.contains("cluster")) c.cluster = cluster_from(j.at("cluster").get<std::string>());
    c.validate();
    return c;
}

// ---------------------------------------------------------------- pipelines

BaseFit pretrain_base(const RawSamples& train, const RawSamples& val, const NetSpec& spec, const TrainConfig& cfg) {
    const auto norm = fit_normalizer(train, spec.rho_input);
    std::vector<int> widths{static_cast<int>(norm.feature_width())};
    widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
    widths.push_back(static_cast<int>(train.targets.rows()));
    auto result = train_dense(DenseNet::random(widths, spec.seed), normalize(train, norm), normalize(val, norm), cfg);
    return {Checkpoint{std::move(result.net), {}, norm, {}}, std::move(result.report)};
}

SftFit fine_tune(const Checkpoint& base, const RawSamples& train, const RawSamples& val, int rank, double alpha,
                 const TrainConfig& cfg) {
    if (base.adapted()) {
        throw ConfigError("checkpoint", "fine-tuning starts from a base network without adapters");
    }
    const auto adapted = attach_lora(base.base, rank, alpha, cfg.seed);
    auto result = train_sft(adapted, normalize(train, base.normalizer), normalize(val, base.normalizer), cfg);
    return {Checkpoint{base.base, result.net.adapters(), base.normalizer, {}}, std::move(result.report)};
}

Ar1ExperimentResult run_ar1_experiment(const Ar1ExperimentConfig& cfg) {
    cfg.validate();
    Ar1ExperimentResult out;
    const auto biased = build_ar1_instruction_set(cfg.plan, extrapolative_targets(cfg.theta));
    out.base = pretrain_base(raw_from_examples(biased.train, cfg.net.window), raw_from_examples(biased.val, cfg.net.window),
                             cfg.net, cfg.pretrain);
    out.base_cells = evaluate_ar1(cfg.plan.ar1, net_agents(out.base.checkpoint.base, out.base.checkpoint.normalizer),
                                  cfg.se_mode, cfg.subject_fe);

    const auto rational = build_ar1_instruction_set(cfg.plan, rational_targets());
    out.train_examples = rational.train.size();
    out.tuned = fine_tune(out.base.checkpoint, raw_from_examples(rational.train, cfg.net.window),
                          raw_from_examples(rational.val, cfg.net.window), cfg.rank, cfg.alpha, cfg.sft);
    out.tuned_cells = evaluate_ar1(cfg.plan.ar1, net_agents(out.tuned.checkpoint.adapted_net(), out.tuned.checkpoint.normalizer),
                                   cfg.se_mode, cfg.subject_fe);
    return out;
}

std::vector<double> net_forecasts(const std::vector<PromptRow>& rows, const Checkpoint& model) {
    const auto& norm = model.normalizer;
    if (norm.rho_input || norm.out_scale.size() != 1) {
        throw ShapeError("return forecasts need a single-output network without a persistence input");
    }
    if (rows.empty()) {
        return {};
    }
    RawSamples raw = raw_from_rows(rows, [](const PromptRow&) { return 0.0; });
    const Samples s = normalize(raw, norm);
    const Eigen::MatrixXd out = model.adapted() ? forward_batch(model.adapted_net(), s.inputs) : forward_batch(model.base, s.inputs);
    std::vector<double> f(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        f[j] = out(0, static_cast<Eigen::Index>(j)) * norm.out_scale[0];
    }
    return f;
}

PanelRows forecast_panel_rows(const std::vector<PromptRow>& rows, const std::vector<double>& forecasts) {
    if (rows.size() != forecasts.size()) {
        throw ShapeError("one forecast per prompt row required");
    }
    PanelRows p;
    const auto n = static_cast<Eigen::Index>(rows.size());
    p.dependent.resize(n);
    p.lags.resize(n, kStockWindow);
    std::map<std::string, long> firms;
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& row = rows[static_cast<std::size_t>(j)];
        if (row.window.size() != static_cast<std::size_t>(kStockWindow)) {
            throw ShapeError("prompt rows must carry 12 returns");
        }
        p.unit.push_back(firms.try_emplace(row.firm_key, static_cast<long>(firms.size())).first->second);
        p.time.push_back(static_cast<long>(row.formation.index()));
        p.dependent(j) = forecasts[static_cast<std::size_t>(j)];
        for (int s = 0; s < kStockWindow; ++s) {
            p.lags(j, s) = row.lag(s);
        }
    }
    return p;
}

double extrapolative_return(const PromptRow& row, double mean, double beta0, double decay) {
    double f = mean;
    double w = beta0;
    for (int s = 0; s < static_cast<int>(row.window.size()); ++s, w *= decay) {
        f += w * (row.lag(s) - mean);
    }
    return f;
}

StockExperimentResult run_stock_experiment(const StockExperimentConfig& cfg) {
    cfg.validate();
    StockExperimentResult out;
    const auto rows = build_windows(synth_reversal_panel(cfg.panel));
    out.split = temporal_split(rows, cfg.splits);
    if (out.split.train.empty() || out.split.val.empty() || out.split.test.empty()) {
        throw EmptyInputError("synthetic panel leaves a split empty; adjust the panel span or the date ranges");
    }

    double mean = 0.0;
    for (const auto& r : out.split.train) {
        mean += r.target;
    }
    mean /= static_cast<double>(out.split.train.size());
    const auto biased = [&](const PromptRow& r) { return extrapolative_return(r, mean, cfg.extrap_beta0, cfg.extrap_decay); };
    out.base = pretrain_base(raw_from_rows(out.split.train, biased), raw_from_rows(out.split.val, biased), cfg.net,
                             cfg.pretrain);

    // Fine-tune through the instruction set so targets are exactly the
    // formatted assistant answers.
    SplitPlan plan;
    plan.stock = cfg.splits;
    const auto realized = build_stock_instruction_set(rows, plan);
    out.tuned = fine_tune(out.base.checkpoint, raw_from_examples(realized.train, kStockWindow),
                          raw_from_examples(realized.val, kStockWindow), cfg.rank, cfg.alpha, cfg.sft);

    auto spec = PanelSpec::all_lags();
    spec.cluster = cfg.cluster;
    const auto& test = out.split.test;
    out.base_fit = panel_fe_regression(forecast_panel_rows(test, net_forecasts(test, out.base.checkpoint)), spec);
    out.tuned_fit = panel_fe_regression(forecast_panel_rows(test, net_forecasts(test, out.tuned.checkpoint)), spec);
    for (const auto& r : test) {
        out.test_returns.push_back(r.target);
    }
    out.realized_fit = panel_fe_regression(forecast_panel_rows(test, out.test_returns), spec);
    return out;
}

}  // namespace debias
