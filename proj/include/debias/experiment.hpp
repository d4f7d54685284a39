#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/dataset.hpp"
#include "debias/econometrics.hpp"
#include "debias/forecasters.hpp"
#include "debias/lora.hpp"
#include "debias/returns.hpp"

namespace debias {

using AgentFactory = TargetAgentFactory;

AgentFactory extrapolative_targets(double theta);
// Every rho gets its own NetAgent over a shared network.
AgentFactory net_agents(const AnyNet& net, const InputNormalizer& norm);

// --------------------------------------------------------------- AR(1) cells

std::vector<Ar1Config> ar1_configs(const Ar1Plan& plan, Split split, std::size_t rho_index);

struct Ar1Cell {
    double rho = 0.0;
    ForecastPanel panel;
    RegressionResult fit;
    std::size_t failed_rounds = 0;
};

// One error-revision regression per rho over the plan's sessions of a split.
std::vector<Ar1Cell> evaluate_ar1(const Ar1Plan& plan, const AgentFactory& agents, SeMode se_mode = SeMode::Classical,
                                  bool subject_fe = false, Split split = Split::Test);

// ------------------------------------------------------------------ samples

// Un-normalized supervised pairs: the last `window` payload values of each
// prompt, its persistence (ar1 only) and the numeric target(s).
struct RawSamples {
    Eigen::MatrixXd windows;  // window x n
    std::vector<double> rho;
    Eigen::MatrixXd targets;  // m x n
};

// Re-parses prompts and assistant targets, so the network learns from exactly
// what an LLM would be shown.
RawSamples raw_from_examples(const std::vector<InstructionExample>& examples, int window);
RawSamples raw_from_rows(const std::vector<PromptRow>& rows, const std::function<double(const PromptRow&)>& target);

// Pooled mean/SD of the inputs, per-output SD of the targets.
InputNormalizer fit_normalizer(const RawSamples& raw, bool rho_input);
Samples normalize(const RawSamples& raw, const InputNormalizer& norm);

// ---------------------------------------------------------------- pipelines

struct NetSpec {
    std::vector<int> hidden{32, 32};
    int window = 8;
    bool rho_input = true;
    std::uint64_t seed = 11;
};

struct Ar1ExperimentConfig {
    SplitPlan plan;
    double theta = 0.5;
    NetSpec net;
    TrainConfig pretrain;
    TrainConfig sft;
    int rank = 4;
    double alpha = 4.0;
    SeMode se_mode = SeMode::Classical;
    bool subject_fe = false;

    Ar1ExperimentConfig();
    void validate() const;
};

struct StockExperimentConfig {
    SynthPanelConfig panel;
    StockPlan splits;
    // Extrapolative target: mean + sum_s beta0 * decay^s (r_{t-s} - mean).
    double extrap_beta0 = 0.4;
    double extrap_decay = 0.6;
    NetSpec net;
    TrainConfig pretrain;
    TrainConfig sft;
    int rank = 4;
    double alpha = 4.0;
    ClusterMode cluster = ClusterMode::TwoWay;

    StockExperimentConfig();
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const NetSpec& s);
NetSpec net_spec_from_json(const nlohmann::json& j, NetSpec base = {});
nlohmann::json to_json(const Ar1ExperimentConfig& c);
Ar1ExperimentConfig ar1_experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StockExperimentConfig& c);
StockExperimentConfig stock_experiment_from_json(const nlohmann::json& j);

// Dense pretraining from a random init; the normalizer is fitted on train.
struct BaseFit {
    Checkpoint checkpoint;
    TrainReport report;
};
BaseFit pretrain_base(const RawSamples& train, const RawSamples& val, const NetSpec& spec, const TrainConfig& cfg);

// LoRA SFT of a checkpoint's base under its own normalizer.
struct SftFit {
    Checkpoint checkpoint;
    TrainReport report;
};
SftFit fine_tune(const Checkpoint& base, const RawSamples& train, const RawSamples& val, int rank, double alpha,
                 const TrainConfig& cfg);

struct Ar1ExperimentResult {
    BaseFit base;
    SftFit tuned;
    std::vector<Ar1Cell> base_cells;
    std::vector<Ar1Cell> tuned_cells;
    std::size_t train_examples = 0;
};

// Pretrain on extrapolative targets, evaluate, fine-tune on rational targets,
// re-evaluate on the same test sessions.
Ar1ExperimentResult run_ar1_experiment(const Ar1ExperimentConfig& cfg);

// Network forecasts for prompt rows (single-output networks).
std::vector<double> net_forecasts(const std::vector<PromptRow>& rows, const Checkpoint& model);

// Lag regression inputs: the forecast explained by r_{t-0..t-11}.
PanelRows forecast_panel_rows(const std::vector<PromptRow>& rows, const std::vector<double>& forecasts);

double extrapolative_return(const PromptRow& row, double mean, double beta0, double decay);

struct StockExperimentResult {
    TemporalSplit split;
    BaseFit base;
    SftFit tuned;
    PanelResult base_fit;
    PanelResult tuned_fit;
    PanelResult realized_fit;  // firm/month FE regression with the realized return as dependent
    std::vector<double> test_returns;
};

StockExperimentResult run_stock_experiment(const StockExperimentConfig& cfg);

}  // namespace debias
