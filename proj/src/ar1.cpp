#include "debias/ar1.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "debias/error.hpp"
#include "debias/random.hpp"
#include "debias/util.hpp"

namespace debias {

void Ar1Config::validate() const {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw ConfigError("rho", "must lie in [0, 1], got " + format_full(rho));
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw ConfigError("sigma", "must be positive and finite");
    }
    if (!std::isfinite(mean)) {
        throw ConfigError("mean", "must be finite");
    }
    if (history_len < 2) {
        throw ConfigError("history_len", "must be at least 2");
    }
    if (rounds < 2) {
        throw ConfigError("rounds", "must be at least 2");
    }
}

int Ar1Session::invalid_rounds() const {
    int n = 0;
    for (const auto& f : forecasts) {
        n += f.has_value() ? 0 : 1;
    }
    return n;
}

std::vector<AgentResult> Forecaster::forecast_batch(const std::vector<std::vector<double>>& histories) {
    std::vector<AgentResult> out;
    out.reserve(histories.size());
    for (const auto& h : histories) {
        try {
            out.push_back({forecast(h), {}});
        } catch (const AgentFailure& e) {
            out.push_back({std::nullopt, e.what()});
        }
    }
    return out;
}

double display_round(double v) {
    return std::strtod(format_fixed(v, 2).c_str(), nullptr);
}

Ar1Session simulate_ar1(const Ar1Config& config) {
    config.validate();
    Ar1Session s;
    s.config = config;
    const std::size_t n = static_cast<std::size_t>(config.history_len + config.rounds + 2);
    s.values.resize(n);
    NormalRng rng(config.seed);
    double prev = config.mean;
    for (std::size_t i = 0; i < n; ++i) {
        const double eps = config.sigma * rng.standard_normal();
        // x_1 is drawn around the mean, so the recursion starts from prev = mean.
        const double x = config.mean + config.rho * (prev - config.mean) + eps;
        s.values[i] = x;
        prev = x;
    }
    return s;
}

std::vector<Ar1Session> run_sessions(const std::vector<Ar1Config>& configs, Forecaster& agent) {
    std::vector<Ar1Session> sessions;
    sessions.reserve(configs.size());
    std::vector<std::vector<double>> histories;
    for (const auto& cfg : configs) {
        sessions.push_back(simulate_ar1(cfg));
        const auto& s = sessions.back();
        for (int r = 1; r <= cfg.rounds; ++r) {
            const std::size_t last = s.latest_index(r);
            const std::size_t first = last - static_cast<std::size_t>(cfg.history_len) + 1;
            std::vector<double> h;
            h.reserve(static_cast<std::size_t>(cfg.history_len));
            for (std::size_t i = first; i <= last; ++i) {
                h.push_back(display_round(s.value(i)));
            }
            histories.push_back(std::move(h));
        }
    }

    const auto results = agent.forecast_batch(histories);
    if (results.size() != histories.size()) {
        throw Error("agent returned " + std::to_string(results.size()) + " results for " +
                    std::to_string(histories.size()) + " histories");
    }
    std::size_t k = 0;
    for (auto& s : sessions) {
        s.forecasts.resize(static_cast<std::size_t>(s.config.rounds));
        for (int r = 1; r <= s.config.rounds; ++r, ++k) {
            const auto& res = results[k];
            auto& slot = s.forecasts[static_cast<std::size_t>(r - 1)];
            if (res.pair && std::isfinite(res.pair->change_one) && std::isfinite(res.pair->change_two)) {
                slot = res.pair;
            } else {
                s.failures.push_back("round " + std::to_string(r) + ": " +
                                     (res.error.empty() ? std::string("non-finite forecast") : res.error));
            }
        }
    }
    return sessions;
}

Ar1Session run_session(const Ar1Config& config, Forecaster& agent) {
    return std::move(run_sessions({config}, agent).front());
}

ForecastPanel build_forecast_panel(const std::vector<Ar1Session>& sessions) {
    if (sessions.empty()) {
        throw EmptyInputError("build_forecast_panel: no sessions");
    }
    ForecastPanel panel;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        const auto& s = sessions[i];
        if (s.config.rounds < 2 || s.forecasts.size() != static_cast<std::size_t>(s.config.rounds)) {
            throw DataError("session " + std::to_string(i) + " has no complete forecast record");
        }
        for (int t = 2; t <= s.config.rounds; ++t) {
            const auto& now = s.forecasts[static_cast<std::size_t>(t - 1)];
            const auto& before = s.forecasts[static_cast<std::size_t>(t - 2)];
            if (!now || !before) {
                ++panel.dropped;
                continue;
            }
            const std::size_t xt = s.latest_index(t);
            PanelRow row;
            row.subject_id = static_cast<int>(i);
            row.t = t;
            row.f_one = s.value(xt) + now->change_one;
            // Round t-1 saw x_{t-1} as latest; its two-ahead forecast targets x_{t+1}.
            row.f_two_lag = s.value(xt - 1) + before->change_two;
            row.realized = s.value(xt + 1);
            panel.rows.push_back(row);
        }
    }
    return panel;
}

void write_panel_csv(const ForecastPanel& panel, std::ostream& out) {
    out << "subject_id,t,f_one,f_two_lag,realized\n";
    for (const auto& r : panel.rows) {
        out << r.subject_id << ',' << r.t << ',' << format_full(r.f_one) << ',' << format_full(r.f_two_lag) << ','
            << format_full(r.realized) << '\n';
    }
}

void write_panel_csv(const ForecastPanel& panel, const std::string& path) {
    std::ostringstream ss;
    write_panel_csv(panel, ss);
    write_file(path, ss.str());
}

ForecastPanel read_panel_csv(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "subject_id,t,f_one,f_two_lag,realized") {
        throw DataError(path + ": missing panel header");
    }
    ForecastPanel panel;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        const auto f = split(trim(line), ',');
        const std::string ctx = path + ":" + std::to_string(lineno);
        if (f.size() != 5) {
            throw DataError(ctx + ": expected 5 fields");
        }
        PanelRow r;
        r.subject_id = static_cast<int>(parse_double(f[0], ctx));
        r.t = static_cast<int>(parse_double(f[1], ctx));
        r.f_one = parse_double(f[2], ctx);
        r.f_two_lag = parse_double(f[3], ctx);
        r.realized = parse_double(f[4], ctx);
        panel.rows.push_back(r);
    }
    return panel;
}

}  // namespace debias
