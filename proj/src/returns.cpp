#include "debias/returns.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "debias/error.hpp"
#include "debias/random.hpp"
#include "debias/util.hpp"

namespace debias {

ReturnsPanel load_returns_csv(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path + ": empty file");
    }
    if (trim(line) != "firm_key,month,ret") {
        throw DataError(path + ": line 1: expected header 'firm_key,month,ret'");
    }
    ReturnsPanel panel;
    std::map<std::pair<std::string, int>, int> seen;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        const std::string ctx = path + ": line " + std::to_string(lineno);
        const auto f = split(trim(line), ',');
        if (f.size() != 3) {
            throw DataError(ctx + ": expected 3 fields, got " + std::to_string(f.size()));
        }
        ReturnRecord r;
        r.firm_key = trim(f[0]);
        if (r.firm_key.empty()) {
            throw DataError(ctx + ": empty firm_key");
        }
        try {
            r.month = YearMonth::parse(f[1]);
        } catch (const DataError& e) {
            throw DataError(ctx + ": " + e.what());
        }
        r.ret = parse_double(f[2], ctx);
        const auto [it, inserted] = seen.try_emplace({r.firm_key, r.month.index()}, lineno);
        if (!inserted) {
            throw DataError(ctx + ": duplicate key (" + r.firm_key + ", " + r.month.str() + "), first seen on line " +
                            std::to_string(it->second));
        }
        panel.rows.push_back(std::move(r));
    }
    if (panel.rows.empty()) {
        throw EmptyInputError(path + ": no data rows");
    }
    return panel;
}

void write_returns_csv(const ReturnsPanel& panel, const std::string& path) {
    std::ostringstream ss;
    ss << "firm_key,month,ret\n";
    for (const auto& r : panel.rows) {
        ss << r.firm_key << ',' << r.month.str() << ',' << format_full(r.ret) << '\n';
    }
    write_file(path, ss.str());
}

ReturnsPanel clamp_returns(ReturnsPanel panel, double lo, double hi) {
    for (auto& r : panel.rows) {
        r.ret = std::clamp(r.ret, lo, hi);
    }
    return panel;
}

std::vector<PromptRow> build_windows(const ReturnsPanel& panel, int window_len) {
    if (window_len < 1) {
        throw ConfigError("window_len", "must be positive");
    }
    // firm -> month index -> return; std::map keeps firms and months ordered.
    std::map<std::string, std::map<int, double>> by_firm;
    for (const auto& r : panel.rows) {
        by_firm[r.firm_key][r.month.index()] = r.ret;
    }
    std::vector<PromptRow> out;
    for (const auto& [firm, series] : by_firm) {
        for (const auto& [t, ret] : series) {
            const auto next = series.find(t + 1);
            if (next == series.end()) {
                continue;
            }
            PromptRow row;
            row.firm_key = firm;
            row.formation = YearMonth::from_index(t);
            row.window.resize(static_cast<std::size_t>(window_len));
            bool complete = true;
            for (int s = 0; s < window_len; ++s) {
                const auto it = series.find(t - s);
                if (it == series.end()) {
                    complete = false;
                    break;
                }
                row.window[static_cast<std::size_t>(window_len - 1 - s)] = it->second;
            }
            if (!complete) {
                continue;
            }
            row.target = next->second;
            out.push_back(std::move(row));
        }
    }
    return out;
}

std::vector<PromptRow>& TemporalSplit::of(Split s) { return s == Split::Train ? train : s == Split::Val ? val : test; }
const std::vector<PromptRow>& TemporalSplit::of(Split s) const {
    return s == Split::Train ? train : s == Split::Val ? val : test;
}

TemporalSplit temporal_split(const std::vector<PromptRow>& rows, const StockPlan& plan) {
    SplitPlan probe;
    probe.stock = plan;
    if (const auto v = plan_guard(probe); !v.empty()) {
        throw SplitViolationError("overlapping split ranges: " + v.front().detail);
    }
    TemporalSplit out;
    for (const auto& row : rows) {
        if (const auto s = plan.assign(row.formation)) {
            out.of(*s).push_back(row);
        } else {
            ++out.dropped;
        }
    }
    return out;
}

void write_prompt_rows_csv(const std::vector<PromptRow>& rows, const std::string& path) {
    std::ostringstream ss;
    ss << "firm_key,formation";
    for (int s = kStockWindow - 1; s >= 0; --s) {
        ss << ",r_lag" << s;
    }
    ss << ",target\n";
    for (const auto& r : rows) {
        ss << r.firm_key << ',' << r.formation.str();
        for (double v : r.window) {
            ss << ',' << format_full(v);
        }
        ss << ',' << format_full(r.target) << '\n';
    }
    write_file(path, ss.str());
}

void SynthPanelConfig::validate() const {
    if (n_firms < 1) throw ConfigError("n_firms", "must be positive");
    if (n_months < 2) throw ConfigError("n_months", "must be at least 2");
    if (!(phi > -1.0 && phi < 0.0)) throw ConfigError("phi", "must lie in (-1, 0)");
    if (!(vol > 0.0)) throw ConfigError("vol", "must be positive");
    if (!(factor_vol >= 0.0)) throw ConfigError("factor_vol", "must be non-negative");
}

ReturnsPanel synth_reversal_panel(const SynthPanelConfig& cfg) {
    cfg.validate();
    NormalRng factor_rng(derive_seed(cfg.seed, {0}));
    std::vector<double> factor(static_cast<std::size_t>(cfg.n_months));
    for (auto& f : factor) {
        f = cfg.factor_vol * factor_rng.standard_normal();
    }
    ReturnsPanel panel;
    panel.rows.reserve(static_cast<std::size_t>(cfg.n_firms) * static_cast<std::size_t>(cfg.n_months));
    const int digits = static_cast<int>(std::to_string(cfg.n_firms).size());
    for (int i = 0; i < cfg.n_firms; ++i) {
        NormalRng rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(i)}));
        std::string key = std::to_string(i);
        key = "F" + std::string(static_cast<std::size_t>(digits) - key.size(), '0') + key;
        double u = cfg.vol / std::sqrt(1.0 - cfg.phi * cfg.phi) * rng.standard_normal();
        for (int t = 0; t < cfg.n_months; ++t) {
            if (t > 0) {
                u = cfg.phi * u + cfg.vol * rng.standard_normal();
            }
            panel.rows.push_back({key, cfg.start.plus(t), cfg.mean + factor[static_cast<std::size_t>(t)] + u});
        }
    }
    return panel;
}

}  // namespace debias
