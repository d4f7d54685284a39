#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "debias/forecaster.hpp"

namespace debias {

struct Ar1Config {
    double rho = 0.0;
    double sigma = 20.0;
    double mean = 0.0;
    int history_len = 40;
    int rounds = 40;
    std::uint64_t seed = 0;

    // Throws ConfigError naming the first offending field.
    void validate() const;
};

struct Ar1Session {
    Ar1Config config;
    // x_1..x_{history_len+rounds+2}, stored zero-based.
    std::vector<double> values;
    // forecasts[r-1] is round r's pair; empty when the agent failed.
    std::vector<std::optional<ForecastPair>> forecasts;
    std::vector<std::string> failures;

    // 1-based index of the latest value revealed at round r.
    std::size_t latest_index(int round) const { return static_cast<std::size_t>(config.history_len + round); }
    double value(std::size_t one_based) const { return values.at(one_based - 1); }
    int invalid_rounds() const;
};

struct PanelRow {
    int subject_id = 0;
    int t = 0;
    double f_one = 0.0;      // F_{i,t} x_{t+1}
    double f_two_lag = 0.0;  // F_{i,t-1} x_{t+1}
    double realized = 0.0;   // x_{t+1}

    double error() const { return realized - f_one; }
    double revision() const { return f_one - f_two_lag; }
    bool operator==(const PanelRow&) const = default;
};

struct ForecastPanel {
    std::vector<PanelRow> rows;
    int dropped = 0;
};

// Display coarsening applied to every history an agent sees.
double display_round(double v);

Ar1Session simulate_ar1(const Ar1Config& config);

// Runs the forecasting game. At round r the agent sees exactly the
// history_len values ending at x_{history_len+r}.
Ar1Session run_session(const Ar1Config& config, Forecaster& agent);

// Same as run_session for many configs; all rounds of all sessions are handed
// to the agent as one batch so remote agents can parallelise. Results are in
// config order.
std::vector<Ar1Session> run_sessions(const std::vector<Ar1Config>& configs, Forecaster& agent);

ForecastPanel build_forecast_panel(const std::vector<Ar1Session>& sessions);

void write_panel_csv(const ForecastPanel& panel, std::ostream& out);
void write_panel_csv(const ForecastPanel& panel, const std::string& path);
ForecastPanel read_panel_csv(const std::string& path);

}  // namespace debias
