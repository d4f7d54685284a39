#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace debias {

// Elicited changes for horizons one and two, relative to the latest value the
// agent was shown. Levels are reconstructed as x_t + change_h.
struct ForecastPair {
    double change_one = 0.0;
    double change_two = 0.0;

    bool operator==(const ForecastPair&) const = default;
};

struct AgentResult {
    std::optional<ForecastPair> pair;
    std::string error;  // set when pair is empty
};

// Uniform forecaster contract. Implementations are stateless across rounds
// unless they document otherwise.
class Forecaster {
public:
    virtual ~Forecaster() = default;

    // history is ordered oldest-first and ends with the latest reveal.
    // Throws AgentFailure when no forecast can be produced.
    virtual ForecastPair forecast(std::span<const double> history) = 0;

    // Forecast many independent histories. The default runs forecast() in
    // order and captures AgentFailure per item; remote agents override this
    // to dispatch in parallel.
    virtual std::vector<AgentResult> forecast_batch(const std::vector<std::vector<double>>& histories);

    virtual std::string descriptor() const = 0;
};

}  // namespace debias
