#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "debias/dataset.hpp"
#include "debias/forecaster.hpp"
#include "debias/lora.hpp"

namespace debias {

class InferenceClient;

// Conditional expectation of the AR(1): E_t x_{t+h} = mean + rho^h (x_t - mean).
class RationalAgent final : public Forecaster {
public:
    RationalAgent(double rho, double mean = 0.0);
    ForecastPair forecast(std::span<const double> history) override;
    std::string descriptor() const override;

private:
    double rho_;
    double mean_;
};

struct ExtrapConfig {
    double rho = 0.0;
    double theta = 0.5;  // weight on the latest innovation
    double mean = 0.0;

    void validate() const;
};

// Overweights the latest innovation e_t = x_t - mean - rho (x_{t-1} - mean):
// F x_{t+1} = mean + rho (x_t - mean) + theta e_t, F x_{t+2} = mean + rho (F x_{t+1} - mean).
class ExtrapolativeAgent final : public Forecaster {
public:
    explicit ExtrapolativeAgent(ExtrapConfig cfg);
    ForecastPair forecast(std::span<const double> history) override;
    std::string descriptor() const override;

private:
    ExtrapConfig cfg_;
};

// Population slope of the error-revision regression for ExtrapolativeAgent
// forecasts on an AR(1) with the same rho.
double extrapolative_b(double rho, double theta);

using AnyNet = std::variant<DenseNet, AdaptedNet>;

Eigen::VectorXd forward(const AnyNet& net, const Eigen::VectorXd& x);
Eigen::Index input_width(const AnyNet& net);
Eigen::Index output_width(const AnyNet& net);

// Network forecaster: features from the normalizer, two denormalized outputs.
class NetAgent final : public Forecaster {
public:
    // rho feeds the persistence input when the normalizer asks for one.
    NetAgent(AnyNet net, InputNormalizer norm, double rho = 0.0);
    ForecastPair forecast(std::span<const double> history) override;
    std::vector<AgentResult> forecast_batch(const std::vector<std::vector<double>>& histories) override;
    std::string descriptor() const override;

private:
    AnyNet net_;
    InputNormalizer norm_;
    double rho_;
};

// Parses "change_1: ... change_2: ..." answers; falls back to the first two
// standalone signed decimals. Throws ParseError carrying the raw text.
ForecastPair parse_forecast_response(std::string_view text);

// First standalone signed decimal in the text (stock answers).
double parse_return_response(std::string_view text);

// Remote model prompted with one of the prompt variants at temperature 0.
class LlmAgent final : public Forecaster {
public:
    LlmAgent(InferenceClient& client, PromptVariant variant, std::string model);
    ForecastPair forecast(std::span<const double> history) override;
    std::vector<AgentResult> forecast_batch(const std::vector<std::vector<double>>& histories) override;
    std::string descriptor() const override;

    int parse_failures() const { return parse_failures_; }
    const std::vector<std::string>& failure_log() const { return failure_log_; }

private:
    InferenceClient& client_;
    PromptVariant variant_;
    std::string model_;
    int parse_failures_ = 0;
    std::vector<std::string> failure_log_;
};

}  // namespace debias
