#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "debias/calendar.hpp"
#include "debias/dataset.hpp"

namespace debias {

struct ReturnRecord {
    std::string firm_key;
    YearMonth month;
    double ret = 0.0;  // simple monthly return, decimal

    bool operator==(const ReturnRecord&) const = default;
};

struct ReturnsPanel {
    std::vector<ReturnRecord> rows;
};

// Header `firm_key,month,ret`, months as YYYY-MM. Throws DataError naming the
// line for malformed rows and duplicate (firm, month) keys.
ReturnsPanel load_returns_csv(const std::string& path);
void write_returns_csv(const ReturnsPanel& panel, const std::string& path);

// Optional robustness clamp; never applied by default.
ReturnsPanel clamp_returns(ReturnsPanel panel, double lo, double hi);

struct PromptRow {
    std::string firm_key;
    YearMonth formation;
    std::vector<double> window;  // r_{t-11..t}, oldest first
    double target = 0.0;         // r_{t+1}

    // r_{t-s}
    double lag(int s) const { return window[window.size() - 1 - static_cast<std::size_t>(s)]; }
};

// One row per firm and month t with window_len consecutive months ending at t
// and a return at t+1. Gaps break runs.
std::vector<PromptRow> build_windows(const ReturnsPanel& panel, int window_len = kStockWindow);

struct TemporalSplit {
    std::vector<PromptRow> train;
    std::vector<PromptRow> val;
    std::vector<PromptRow> test;
    int dropped = 0;

    std::vector<PromptRow>& of(Split s);
    const std::vector<PromptRow>& of(Split s) const;
};

// Assignment by formation month. Throws SplitViolationError on overlapping ranges.
TemporalSplit temporal_split(const std::vector<PromptRow>& rows, const StockPlan& plan);

void write_prompt_rows_csv(const std::vector<PromptRow>& rows, const std::string& path);

struct SynthPanelConfig {
    int n_firms = 500;
    int n_months = 120;
    double phi = -0.1;        // per-firm AR(1) persistence, in (-1, 0)
    double vol = 0.08;        // idiosyncratic innovation SD
    double factor_vol = 0.02; // common month factor SD
    double mean = 0.01;
    YearMonth start{2008, 1};
    std::uint64_t seed = 7;

    void validate() const;
};

// r_{i,t} = mean + f_t + u_{i,t}, u_{i,t} = phi u_{i,t-1} + vol e_{i,t},
// u_{i,0} drawn from its stationary distribution.
ReturnsPanel synth_reversal_panel(const SynthPanelConfig& cfg);

}  // namespace debias
