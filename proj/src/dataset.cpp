#include "debias/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

#include "debias/ar1.hpp"
#include "debias/error.hpp"
#include "debias/forecasters.hpp"
#include "debias/random.hpp"
#include "debias/returns.hpp"
#include "debias/util.hpp"

namespace debias {

using nlohmann::json;

// ------------------------------------------------------------------ enums

std::string to_string(PromptKind k) {
    switch (k) {
        case PromptKind::Baseline: return "baseline";
        case PromptKind::RationalInvestor: return "rational_investor";
        case PromptKind::ExtrapolationWarning: return "extrapolation_warning";
    }
    return "?";
}

std::string to_string(Task t) { return t == Task::Ar1 ? "ar1" : "stock"; }

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

PromptKind prompt_kind_from_string(std::string_view s) {
    if (s == "baseline") return PromptKind::Baseline;
    if (s == "rational_investor") return PromptKind::RationalInvestor;
    if (s == "extrapolation_warning") return PromptKind::ExtrapolationWarning;
    throw ConfigError("variant", "unknown prompt variant '" + std::string(s) + "'");
}

Task task_from_string(std::string_view s) {
    if (s == "ar1") return Task::Ar1;
    if (s == "stock") return Task::Stock;
    throw ConfigError("task", "unknown task '" + std::string(s) + "'");
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw DataError("unknown split '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- prompts

namespace {

std::string join_values(std::span<const double> values, int decimals) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) {
            out += ", ";
        }
        out += format_fixed(values[i], decimals);
    }
    return out;
}

std::string prefix_for(PromptKind kind) {
    switch (kind) {
        case PromptKind::Baseline: return {};
        case PromptKind::RationalInvestor: return std::string(kRationalInvestorPrefix) + "\n\n";
        case PromptKind::ExtrapolationWarning: return std::string(kExtrapolationWarning) + "\n\n";
    }
    return {};
}

}  // namespace

Messages render_prompt(const PromptVariant& variant, std::span<const double> payload) {
    const std::size_t want = variant.task == Task::Ar1 ? kAr1Window : kStockWindow;
    if (payload.size() != want) {
        throw DataError("payload has " + std::to_string(payload.size()) + " values, " + to_string(variant.task) +
                        " prompts take " + std::to_string(want));
    }
    std::string text = prefix_for(variant.kind);
    if (variant.task == Task::Ar1) {
        text += "The following are the " + std::to_string(want) +
                " most recent observations of a time series, ordered from oldest to newest:\n";
        text += join_values(payload, 2);
        text += "\n\nThe latest observation is " + format_fixed(payload.back(), 2) + ". ";
        text += "Forecast how much the series will change from the latest observation to the next period, "
                "and from the latest observation to the period after next.\n";
        text += "Answer with exactly two lines and no other text:\n";
        text += std::string(kChangeOneKey) + ": <change for the next period>\n";
        text += std::string(kChangeTwoKey) + ": <change for the period after next>";
    } else {
        text += "The following are a stock's " + std::to_string(want) +
                " most recent monthly returns, ordered from oldest to newest, expressed as decimals:\n";
        text += join_values(payload, 4);
        text += "\n\nForecast the stock's return over the next month.\n";
        text += "Answer with a single decimal number and no other text.";
    }
    return {{"user", std::move(text)}};
}

std::vector<double> prompt_values(std::string_view user_content) {
    std::istringstream in{std::string(user_content)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.find(", ") == std::string::npos) {
            continue;
        }
        std::vector<double> values;
        bool ok = true;
        for (const auto& field : split(line, ',')) {
            try {
                values.push_back(parse_double(field, "prompt"));
            } catch (const DataError&) {
                ok = false;
                break;
            }
        }
        if (ok && !values.empty()) {
            return values;
        }
    }
    throw DataError("prompt carries no data line");
}

std::string format_ar1_target(const ForecastPair& pair) {
    return std::string(kChangeOneKey) + ": " + format_fixed(pair.change_one, 2) + "\n" + std::string(kChangeTwoKey) +
           ": " + format_fixed(pair.change_two, 2);
}

std::string format_stock_target(double r) { return format_fixed(r, 4); }

bool contains_date_token(std::string_view text) {
    static const std::regex month_names(
        R"(\b(january|february|march|april|may|june|july|august|september|october|november|december|)"
        R"(jan|feb|mar|apr|jun|jul|aug|sep|sept|oct|nov|dec)\b)",
        std::regex::icase);
    const std::string s(text);
    if (std::regex_search(s, month_names)) {
        return true;
    }
    // Four-digit runs 1900..2099 that are not the fractional part of a number.
    for (std::size_t i = 0; i < s.size();) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
            ++j;
        }
        const bool fractional = i > 0 && s[i - 1] == '.';
        if (!fractional && j - i == 4) {
            const int v = std::stoi(s.substr(i, 4));
            if (v >= 1900 && v <= 2099) {
                return true;
            }
        }
        i = j;
    }
    return false;
}

// --------------------------------------------------------------- examples

const std::string& InstructionExample::user_content() const {
    for (const auto& m : messages) {
        if (m.role == "user") {
            return m.content;
        }
    }
    throw DataError("example has no user message");
}

std::vector<InstructionExample>& SplitDatasets::of(Split s) {
    return s == Split::Train ? train : s == Split::Val ? val : test;
}

const std::vector<InstructionExample>& SplitDatasets::of(Split s) const {
    return s == Split::Train ? train : s == Split::Val ? val : test;
}

// ------------------------------------------------------------------- plan

int Ar1Plan::series_per_rho(Split s) const {
    return s == Split::Train ? train_series_per_rho : s == Split::Val ? val_series_per_rho : test_series_per_rho;
}

std::uint64_t Ar1Plan::block(Split s) const {
    return s == Split::Train ? train_block : s == Split::Val ? val_block : test_block;
}

std::uint64_t Ar1Plan::series_seed(Split s, std::size_t rho_index, int series) const {
    return derive_seed(master_seed, {block(s), static_cast<std::uint64_t>(rho_index), static_cast<std::uint64_t>(series)});
}

const std::optional<MonthRange>& StockPlan::of(Split s) const {
    return s == Split::Train ? train : s == Split::Val ? val : test;
}

std::optional<Split> StockPlan::assign(YearMonth formation) const {
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
        if (of(s) && of(s)->contains(formation)) {
            return s;
        }
    }
    return std::nullopt;
}

constexpr Split kSplits[] = {Split::Train, Split::Val, Split::Test};

std::vector<Violation> plan_guard(const SplitPlan& plan) {
    std::vector<Violation> out;
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
            const auto& ra = plan.stock.of(kSplits[a]);
            const auto& rb = plan.stock.of(kSplits[b]);
            if (ra && rb && ra->overlaps(*rb)) {
                out.push_back({"month_overlap", to_string(kSplits[a]) + " " + ra->str() + " overlaps " +
                                                    to_string(kSplits[b]) + " " + rb->str()});
            }
        }
    }
    return out;
}

void SplitPlan::validate() const {
    if (ar1.rhos.empty()) {
        throw ConfigError("ar1.rhos", "at least one persistence value required");
    }
    for (double r : ar1.rhos) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw ConfigError("ar1.rhos", "persistence must lie in [0, 1]");
        }
    }
    for (Split s : kSplits) {
        if (ar1.series_per_rho(s) < 0) {
            throw ConfigError("ar1." + to_string(s) + "_series_per_rho", "must be non-negative");
        }
    }
    Ar1Config probe{ar1.rhos.front(), ar1.sigma, ar1.mean, ar1.history_len, ar1.rounds, 0};
    probe.validate();
    if (ar1.history_len != kAr1Window) {
        throw ConfigError("ar1.history_len", "prompts render exactly " + std::to_string(kAr1Window) + " values");
    }
    if (ar1.train_block == ar1.val_block || ar1.train_block == ar1.test_block || ar1.val_block == ar1.test_block) {
        throw SplitViolationError("ar1 seed blocks overlap: train/val/test blocks must be distinct");
    }
    std::map<std::uint64_t, Split> owner;
    for (Split s : kSplits) {
        for (std::size_t r = 0; r < ar1.rhos.size(); ++r) {
            for (int i = 0; i < ar1.series_per_rho(s); ++i) {
                const auto seed = ar1.series_seed(s, r, i);
                auto [it, inserted] = owner.emplace(seed, s);
                if (!inserted && it->second != s) {
                    throw SplitViolationError("ar1 seed " + std::to_string(seed) + " used by both " +
                                              to_string(it->second) + " and " + to_string(s));
                }
            }
        }
    }
    for (Split s : kSplits) {
        const auto& r = stock.of(s);
        if (r && r->last < r->first) {
            throw ConfigError("stock." + to_string(s), "range ends before it starts");
        }
    }
    if (const auto v = plan_guard(*this); !v.empty()) {
        throw SplitViolationError("stock date ranges overlap: " + v.front().detail);
    }
}

namespace {

std::optional<MonthRange> range_from_json(const json& j, const std::string& field) {
    if (j.is_null()) {
        return std::nullopt;
    }
    if (!j.is_array() || j.size() != 2) {
        throw ConfigError(field, "expected [\"YYYY-MM\", \"YYYY-MM\"] or null");
    }
    return MonthRange{YearMonth::parse(j[0].get<std::string>()), YearMonth::parse(j[1].get<std::string>())};
}

json range_to_json(const std::optional<MonthRange>& r) {
    if (!r) {
        return nullptr;
    }
    return json::array({r->first.str(), r->last.str()});
}

}  // namespace

SplitPlan SplitPlan::from_json(const json& j) {
    SplitPlan p;
    try {
        if (j.contains("ar1")) {
            const auto& a = j.at("ar1");
            p.ar1.rhos = a.value("rhos", p.ar1.rhos);
            p.ar1.train_series_per_rho = a.value("train_series_per_rho", p.ar1.train_series_per_rho);
            p.ar1.val_series_per_rho = a.value("val_series_per_rho", p.ar1.val_series_per_rho);
            p.ar1.test_series_per_rho = a.value("test_series_per_rho", p.ar1.test_series_per_rho);
            p.ar1.master_seed = a.value("master_seed", p.ar1.master_seed);
            if (a.contains("seed_blocks")) {
                const auto& b = a.at("seed_blocks");
                p.ar1.train_block = b.value("train", p.ar1.train_block);
                p.ar1.val_block = b.value("val", p.ar1.val_block);
                p.ar1.test_block = b.value("test", p.ar1.test_block);
            }
            p.ar1.sigma = a.value("sigma", p.ar1.sigma);
            p.ar1.mean = a.value("mean", p.ar1.mean);
            p.ar1.history_len = a.value("history_len", p.ar1.history_len);
            p.ar1.rounds = a.value("rounds", p.ar1.rounds);
        }
        if (j.contains("stock")) {
            const auto& s = j.at("stock");
            for (Split sp : kSplits) {
                const auto key = to_string(sp);
                if (s.contains(key)) {
                    auto r = range_from_json(s.at(key), "stock." + key);
                    (sp == Split::Train ? p.stock.train : sp == Split::Val ? p.stock.val : p.stock.test) = r;
                }
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError("plan", e.what());
    }
    return p;
}

json SplitPlan::to_json() const {
    return {
        {"ar1",
         {{"rhos", ar1.rhos},
          {"train_series_per_rho", ar1.train_series_per_rho},
          {"val_series_per_rho", ar1.val_series_per_rho},
          {"test_series_per_rho", ar1.test_series_per_rho},
          {"master_seed", ar1.master_seed},
          {"seed_blocks", {{"train", ar1.train_block}, {"val", ar1.val_block}, {"test", ar1.test_block}}},
          {"sigma", ar1.sigma},
          {"mean", ar1.mean},
          {"history_len", ar1.history_len},
          {"rounds", ar1.rounds}}},
        {"stock",
         {{"train", range_to_json(stock.train)}, {"val", range_to_json(stock.val)}, {"test", range_to_json(stock.test)}}},
    };
}

// ---------------------------------------------------------------- builders

TargetAgentFactory rational_targets() {
    return [](double rho, double mean) { return std::make_unique<RationalAgent>(rho, mean); };
}

SplitDatasets build_ar1_instruction_set(const SplitPlan& plan, const TargetAgentFactory& targets, PromptKind kind) {
    plan.validate();
    SplitDatasets out;
    const auto& a = plan.ar1;
    const PromptVariant variant{kind, Task::Ar1};
    for (Split s : kSplits) {
        auto& dest = out.of(s);
        dest.reserve(a.rhos.size() * static_cast<std::size_t>(a.series_per_rho(s) * a.rounds));
        for (std::size_t r = 0; r < a.rhos.size(); ++r) {
            const double rho = a.rhos[r];
            auto agent = targets(rho, a.mean);
            for (int i = 0; i < a.series_per_rho(s); ++i) {
                const Ar1Config cfg{rho, a.sigma, a.mean, a.history_len, a.rounds, a.series_seed(s, r, i)};
                const Ar1Session session = run_session(cfg, *agent);
                for (int round = 1; round <= a.rounds; ++round) {
                    const auto& pair = session.forecasts[static_cast<std::size_t>(round - 1)];
                    if (!pair) {
                        ++out.dropped;
                        continue;
                    }
                    const auto last = session.latest_index(round);
                    std::vector<double> window;
                    for (std::size_t k = last - static_cast<std::size_t>(a.history_len) + 1; k <= last; ++k) {
                        window.push_back(display_round(session.value(k)));
                    }
                    InstructionExample ex;
                    ex.messages = render_prompt(variant, window);
                    ex.messages.push_back({"assistant", format_ar1_target(*pair)});
                    ex.meta.split = s;
                    ex.meta.task = Task::Ar1;
                    ex.meta.rho = rho;
                    ex.meta.series = i;
                    ex.meta.seed = cfg.seed;
                    ex.meta.t = round;
                    ex.meta.variant = to_string(kind);
                    dest.push_back(std::move(ex));
                }
            }
        }
    }
    return out;
}

SplitDatasets build_stock_instruction_set(const std::vector<PromptRow>& rows, const SplitPlan& plan, PromptKind kind) {
    plan.validate();
    SplitDatasets out;
    const PromptVariant variant{kind, Task::Stock};
    for (const auto& row : rows) {
        const bool complete = row.window.size() == static_cast<std::size_t>(kStockWindow) &&
                              std::all_of(row.window.begin(), row.window.end(), [](double v) { return std::isfinite(v); });
        const auto split = plan.stock.assign(row.formation);
        if (!complete || !std::isfinite(row.target) || !split) {
            ++out.dropped;
            continue;
        }
        InstructionExample ex;
        ex.messages = render_prompt(variant, row.window);
        ex.messages.push_back({"assistant", format_stock_target(row.target)});
        ex.meta.split = *split;
        ex.meta.task = Task::Stock;
        ex.meta.firm_key = row.firm_key;
        ex.meta.formation = row.formation.str();
        ex.meta.t = row.formation.index();
        ex.meta.variant = to_string(kind);
        out.of(*split).push_back(std::move(ex));
    }
    return out;
}

// ------------------------------------------------------------------ JSONL

json to_json(const InstructionExample& ex) {
    json messages = json::array();
    for (const auto& m : ex.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    json meta = {{"split", to_string(ex.meta.split)},
                 {"task", to_string(ex.meta.task)},
                 {"t", ex.meta.t},
                 {"variant", ex.meta.variant}};
    if (ex.meta.rho) meta["rho"] = *ex.meta.rho;
    if (ex.meta.series) meta["series"] = *ex.meta.series;
    if (ex.meta.seed) meta["seed"] = *ex.meta.seed;
    if (ex.meta.firm_key) meta["firm_key"] = *ex.meta.firm_key;
    if (ex.meta.formation) meta["formation"] = *ex.meta.formation;
    return {{"messages", std::move(messages)}, {"meta", std::move(meta)}};
}

InstructionExample example_from_json(const json& j) {
    InstructionExample ex;
    for (const auto& m : j.at("messages")) {
        ex.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    const auto n_assistant = std::count_if(ex.messages.begin(), ex.messages.end(),
                                           [](const ChatMessage& m) { return m.role == "assistant"; });
    if (ex.messages.empty() || n_assistant != 1 || ex.messages.back().role != "assistant") {
        throw DataError("example must end with exactly one assistant message");
    }
    const auto& meta = j.at("meta");
    ex.meta.split = split_from_string(meta.at("split").get<std::string>());
    ex.meta.task = task_from_string(meta.at("task").get<std::string>());
    ex.meta.t = meta.at("t").get<int>();
    ex.meta.variant = meta.value("variant", std::string("baseline"));
    if (meta.contains("rho")) ex.meta.rho = meta.at("rho").get<double>();
    if (meta.contains("series")) ex.meta.series = meta.at("series").get<int>();
    if (meta.contains("seed")) ex.meta.seed = meta.at("seed").get<std::uint64_t>();
    if (meta.contains("firm_key")) ex.meta.firm_key = meta.at("firm_key").get<std::string>();
    if (meta.contains("formation")) ex.meta.formation = meta.at("formation").get<std::string>();
    return ex;
}

std::string export_jsonl(const std::vector<InstructionExample>& dataset) {
    std::string out;
    for (const auto& ex : dataset) {
        out += to_json(ex).dump();
        out += '\n';
    }
    return out;
}

void export_jsonl(const std::vector<InstructionExample>& dataset, const std::string& path) {
    if (dataset.empty()) {
        throw EmptyInputError("refusing to export an empty dataset to '" + path + "'");
    }
    write_file(path, export_jsonl(dataset));
}

std::vector<InstructionExample> parse_jsonl(std::string_view text, const std::string& source) {
    std::vector<InstructionExample> out;
    std::size_t start = 0;
    int lineno = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++lineno;
        const auto line = text.substr(start, end - start);
        start = end + 1;
        if (trim(line).empty()) {
            continue;
        }
        try {
            out.push_back(example_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw DataError(source + ": line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<InstructionExample> import_jsonl(const std::string& path) {
    return parse_jsonl(read_file(path), path);
}

// ------------------------------------------------------------------ guard

std::vector<Violation> split_guard(const SplitDatasets& d) {
    std::vector<Violation> out;

    // (a) seed lineage
    std::map<std::uint64_t, std::set<Split>> seed_splits;
    for (Split s : kSplits) {
        for (const auto& ex : d.of(s)) {
            if (ex.meta.task == Task::Ar1 && ex.meta.seed) {
                seed_splits[*ex.meta.seed].insert(s);
            }
        }
    }
    for (const auto& [seed, splits] : seed_splits) {
        if (splits.size() > 1) {
            std::string names;
            for (Split s : splits) {
                names += (names.empty() ? "" : ", ") + to_string(s);
            }
            out.push_back({"seed_overlap", "seed " + std::to_string(seed) + " appears in " + names});
        }
    }

    // (b) formation-month ranges
    std::map<Split, MonthRange> ranges;
    for (Split s : kSplits) {
        for (const auto& ex : d.of(s)) {
            if (ex.meta.task != Task::Stock || !ex.meta.formation) {
                continue;
            }
            const auto m = YearMonth::parse(*ex.meta.formation);
            auto [it, inserted] = ranges.try_emplace(s, MonthRange{m, m});
            if (!inserted) {
                it->second.first = std::min(it->second.first, m);
                it->second.last = std::max(it->second.last, m);
            }
        }
    }
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
            const auto ia = ranges.find(kSplits[a]);
            const auto ib = ranges.find(kSplits[b]);
            if (ia != ranges.end() && ib != ranges.end() && ia->second.overlaps(ib->second)) {
                out.push_back({"month_overlap", to_string(kSplits[a]) + " formation months " + ia->second.str() +
                                                    " overlap " + to_string(kSplits[b]) + " " + ib->second.str()});
            }
        }
    }

    // (c) prompt text shared across splits
    std::unordered_map<std::string, std::pair<Split, std::size_t>> first_seen;
    for (Split s : kSplits) {
        const auto& v = d.of(s);
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::string key;
            for (const auto& m : v[i].messages) {
                if (m.role != "assistant") {
                    key += m.role + '\x1f' + m.content + '\x1e';
                }
            }
            auto [it, inserted] = first_seen.try_emplace(std::move(key), s, i);
            if (!inserted && it->second.first != s) {
                out.push_back({"duplicate_prompt", to_string(it->second.first) + "[" + std::to_string(it->second.second) +
                                                       "] and " + to_string(s) + "[" + std::to_string(i) +
                                                       "] share the same prompt"});
            }
        }
    }
    return out;
}

}  // namespace debias
