#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "debias/calendar.hpp"
#include "debias/chat.hpp"
#include "debias/forecaster.hpp"

namespace debias {

struct PromptRow;

enum class PromptKind { Baseline, RationalInvestor, ExtrapolationWarning };
enum class Task { Ar1, Stock };
enum class Split { Train, Val, Test };

std::string to_string(PromptKind k);
std::string to_string(Task t);
std::string to_string(Split s);
PromptKind prompt_kind_from_string(std::string_view s);
Task task_from_string(std::string_view s);
Split split_from_string(std::string_view s);

inline constexpr std::string_view kRationalInvestorPrefix = "You are a sophisticated rational investor.";
inline constexpr std::string_view kExtrapolationWarning =
    "Extrapolation bias refers to the cognitive tendency to assume recent trends will continue into the future, "
    "giving disproportionate weight to the most recent data points while underweighting longer-term patterns, "
    "base rates, or the possibility of reversion. Avoid extrapolation bias when creating your response.";

inline constexpr int kAr1Window = 40;
inline constexpr int kStockWindow = 12;

// Answer keys the AR(1) prompt asks for.
inline constexpr std::string_view kChangeOneKey = "change_1";
inline constexpr std::string_view kChangeTwoKey = "change_2";

struct PromptVariant {
    PromptKind kind = PromptKind::Baseline;
    Task task = Task::Ar1;
};

// Single user message. AR(1) payloads are rendered with 2 decimals, stock
// returns with 4. Throws DataError("payload ...") on a wrong window length.
Messages render_prompt(const PromptVariant& variant, std::span<const double> payload);

// Numbers listed in a rendered prompt's data line, oldest first.
std::vector<double> prompt_values(std::string_view user_content);

// "change_1: x.xx\nchange_2: y.yy"
std::string format_ar1_target(const ForecastPair& pair);
std::string format_stock_target(double r);

// True when the text carries a 4-digit year, a YYYY-MM stamp or a month name.
bool contains_date_token(std::string_view text);

struct ExampleMeta {
    Split split = Split::Train;
    Task task = Task::Ar1;
    std::optional<double> rho;
    std::optional<int> series;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> firm_key;
    std::optional<std::string> formation;  // YYYY-MM
    int t = 0;                              // round (ar1) or formation month index (stock)
    std::string variant = "baseline";

    bool operator==(const ExampleMeta&) const = default;
};

struct InstructionExample {
    Messages messages;  // prompt messages followed by exactly one assistant message
    ExampleMeta meta;

    const std::string& target() const { return messages.back().content; }
    const std::string& user_content() const;
    bool operator==(const InstructionExample&) const = default;
};

struct SplitDatasets {
    std::vector<InstructionExample> train;
    std::vector<InstructionExample> val;
    std::vector<InstructionExample> test;
    int dropped = 0;

    std::vector<InstructionExample>& of(Split s);
    const std::vector<InstructionExample>& of(Split s) const;
};

struct Ar1Plan {
    std::vector<double> rhos{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    int train_series_per_rho = 128;
    int val_series_per_rho = 32;
    int test_series_per_rho = 32;
    std::uint64_t master_seed = 20260101;
    // Seed blocks; series seeds derive from (master, block, rho index, series).
    std::uint64_t train_block = 1;
    std::uint64_t val_block = 2;
    std::uint64_t test_block = 3;
    double sigma = 20.0;
    double mean = 0.0;
    int history_len = kAr1Window;
    int rounds = 40;

    int series_per_rho(Split s) const;
    std::uint64_t block(Split s) const;
    std::uint64_t series_seed(Split s, std::size_t rho_index, int series) const;
};

struct StockPlan {
    std::optional<MonthRange> train = MonthRange{{2001, 1}, {2011, 12}};
    std::optional<MonthRange> val = MonthRange{{2012, 1}, {2015, 12}};
    std::optional<MonthRange> test = MonthRange{{2016, 1}, {2024, 12}};

    const std::optional<MonthRange>& of(Split s) const;
    // Split whose range contains the month, if any.
    std::optional<Split> assign(YearMonth formation) const;
};

struct SplitPlan {
    Ar1Plan ar1;
    StockPlan stock;

    // Throws SplitViolationError on overlapping seed blocks / seed values
    // or overlapping date ranges, ConfigError on malformed fields.
    void validate() const;

    static SplitPlan from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Builds a target agent for a given persistence.
using TargetAgentFactory = std::function<std::unique_ptr<Forecaster>(double rho, double mean)>;
TargetAgentFactory rational_targets();

// Per (rho, series, round): rendered history and the agent's target changes.
SplitDatasets build_ar1_instruction_set(const SplitPlan& plan, const TargetAgentFactory& targets = rational_targets(),
                                        PromptKind kind = PromptKind::Baseline);

// Per PromptRow: rendered window and realized next-month return, split by
// formation month. Rows with non-finite window values or targets, and rows
// outside every range, are dropped and counted.
SplitDatasets build_stock_instruction_set(const std::vector<PromptRow>& rows, const SplitPlan& plan,
                                          PromptKind kind = PromptKind::Baseline);

nlohmann::json to_json(const InstructionExample& ex);
InstructionExample example_from_json(const nlohmann::json& j);

std::string export_jsonl(const std::vector<InstructionExample>& dataset);
void export_jsonl(const std::vector<InstructionExample>& dataset, const std::string& path);
std::vector<InstructionExample> parse_jsonl(std::string_view text, const std::string& source = "<memory>");
std::vector<InstructionExample> import_jsonl(const std::string& path);

struct Violation {
    std::string kind;  // seed_overlap | month_overlap | duplicate_prompt
    std::string detail;
};

// Split hygiene. An empty result means every check passed.
std::vector<Violation> split_guard(const SplitDatasets& datasets);
// Date-range overlaps in a plan, reported as violations instead of thrown.
std::vector<Violation> plan_guard(const SplitPlan& plan);

}  // namespace debias
