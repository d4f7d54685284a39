#include "debias/forecasters.hpp"

#include <cmath>
#include <regex>

#include "debias/error.hpp"
#include "debias/inference.hpp"
#include "debias/util.hpp"

namespace debias {

namespace {

double latest(std::span<const double> history, std::size_t need, const char* who) {
    if (history.size() < need) {
        throw AgentFailure(std::string(who) + ": history needs at least " + std::to_string(need) + " values");
    }
    return history.back();
}

}  // namespace

RationalAgent::RationalAgent(double rho, double mean) : rho_(rho), mean_(mean) {
    if (!std::isfinite(rho) || rho < 0.0 || rho > 1.0) throw ConfigError("rho", "must lie in [0, 1]");
}

ForecastPair RationalAgent::forecast(std::span<const double> history) {
    const double dev = latest(history, 1, "rational") - mean_;
    return {(rho_ - 1.0) * dev, (rho_ * rho_ - 1.0) * dev};
}

std::string RationalAgent::descriptor() const {
    return "rational(rho=" + format_fixed(rho_, 2) + ")";
}

void ExtrapConfig::validate() const {
    if (!std::isfinite(rho) || rho < 0.0 || rho > 1.0) throw ConfigError("rho", "must lie in [0, 1]");
    if (!std::isfinite(theta) || theta < 0.0) throw ConfigError("theta", "must be non-negative");
    if (!std::isfinite(mean)) throw ConfigError("mean", "must be finite");
}

ExtrapolativeAgent::ExtrapolativeAgent(ExtrapConfig cfg) : cfg_(cfg) {
    cfg_.validate();
}

ForecastPair ExtrapolativeAgent::forecast(std::span<const double> history) {
    const double x = latest(history, 2, "extrapolative");
    const double prev = history[history.size() - 2];
    const double shock = (x - cfg_.mean) - cfg_.rho * (prev - cfg_.mean);
    const double f1 = cfg_.mean + cfg_.rho * (x - cfg_.mean) + cfg_.theta * shock;
    const double f2 = cfg_.mean + cfg_.rho * (f1 - cfg_.mean);
    return {f1 - x, f2 - x};
}

std::string ExtrapolativeAgent::descriptor() const {
    return "extrapolative(rho=" + format_fixed(cfg_.rho, 2) + ",theta=" + format_fixed(cfg_.theta, 2) + ")";
}

double extrapolative_b(double rho, double theta) {
    // error = e_{t+1} - theta e_t, revision = (rho + theta) e_t - rho theta e_{t-1}
    const double s = rho + theta;
    const double denom = s * s + rho * rho * theta * theta;
    if (denom == 0.0) {
        return 0.0;
    }
    return -theta * s / denom;
}

// ---------------------------------------------------------------- networks

Eigen::VectorXd forward(const AnyNet& net, const Eigen::VectorXd& x) {
    return std::visit([&](const auto& n) { return debias::forward(n, x); }, net);
}

Eigen::Index input_width(const AnyNet& net) {
    return std::visit([](const auto& n) -> Eigen::Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(n)>, DenseNet>) {
            return n.input_width();
        } else {
            return n.base().input_width();
        }
    }, net);
}

Eigen::Index output_width(const AnyNet& net) {
    return std::visit([](const auto& n) -> Eigen::Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(n)>, DenseNet>) {
            return n.output_width();
        } else {
            return n.base().output_width();
        }
    }, net);
}

NetAgent::NetAgent(AnyNet net, InputNormalizer norm, double rho) : net_(std::move(net)), norm_(std::move(norm)), rho_(rho) {
    if (input_width(net_) != norm_.feature_width()) {
        throw ShapeError("network takes " + std::to_string(input_width(net_)) + " inputs, normalizer produces " +
                         std::to_string(norm_.feature_width()));
    }
    if (output_width(net_) != 2 || norm_.out_scale.size() != 2) {
        throw ShapeError("forecasting network must have two outputs");
    }
}

ForecastPair NetAgent::forecast(std::span<const double> history) {
    if (history.size() < static_cast<std::size_t>(norm_.window)) {
        throw AgentFailure("history shorter than the feature window");
    }
    const auto out = norm_.denormalize(debias::forward(net_, norm_.features(history, rho_)));
    return {out[0], out[1]};
}

std::vector<AgentResult> NetAgent::forecast_batch(const std::vector<std::vector<double>>& histories) {
    std::vector<AgentResult> results(histories.size());
    std::vector<Eigen::Index> ok;
    Eigen::MatrixXd inputs(norm_.feature_width(), static_cast<Eigen::Index>(histories.size()));
    for (std::size_t i = 0; i < histories.size(); ++i) {
        if (histories[i].size() < static_cast<std::size_t>(norm_.window)) {
            results[i].error = "history shorter than the feature window";
            continue;
        }
        inputs.col(static_cast<Eigen::Index>(ok.size())) = norm_.features(histories[i], rho_);
        ok.push_back(static_cast<Eigen::Index>(i));
    }
    const Eigen::MatrixXd packed = inputs.leftCols(static_cast<Eigen::Index>(ok.size()));
    const Eigen::MatrixXd out = std::visit([&](const auto& n) { return forward_batch(n, packed); }, net_);
    for (std::size_t j = 0; j < ok.size(); ++j) {
        const auto v = norm_.denormalize(out.col(static_cast<Eigen::Index>(j)));
        results[static_cast<std::size_t>(ok[j])].pair = ForecastPair{v[0], v[1]};
    }
    return results;
}

std::string NetAgent::descriptor() const {
    return std::string(std::holds_alternative<DenseNet>(net_) ? "net" : "net+lora") + "(rho=" + format_fixed(rho_, 2) + ")";
}

// ----------------------------------------------------------------- parsing

namespace {

const char* const kNumber = R"(([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?))";

std::string normalize_minus(std::string_view text) {
    std::string s(text);
    // U+2212 MINUS SIGN and U+2013 EN DASH as used by some models
    for (const char* dash : {"\xE2\x88\x92", "\xE2\x80\x93"}) {
        for (auto pos = s.find(dash); pos != std::string::npos; pos = s.find(dash, pos + 1)) {
            s.replace(pos, 3, "-");
        }
    }
    return s;
}

double to_finite(const std::string& token, std::string_view raw) {
    const double v = std::strtod(token.c_str(), nullptr);
    if (!std::isfinite(v)) {
        throw ParseError("non-finite number '" + token + "' in response", std::string(raw));
    }
    return v;
}

// Standalone numbers: not glued to a preceding letter, digit, '_' or '.'.
std::vector<std::string> standalone_numbers(const std::string& s) {
    static const std::regex re(kNumber);
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        const auto pos = static_cast<std::size_t>(it->position(0));
        if (pos > 0) {
            const unsigned char c = static_cast<unsigned char>(s[pos - 1]);
            if (std::isalnum(c) || c == '_' || c == '.') {
                continue;
            }
        }
        out.push_back(it->str(1));
    }
    return out;
}

}  // namespace

ForecastPair parse_forecast_response(std::string_view text) {
    const std::string s = normalize_minus(text);
    static const std::regex one(std::string(R"(change[_ ]?1[^0-9+\-.\n]{0,10})") + kNumber, std::regex::icase);
    static const std::regex two(std::string(R"(change[_ ]?2[^0-9+\-.\n]{0,10})") + kNumber, std::regex::icase);
    std::smatch m1;
    std::smatch m2;
    if (std::regex_search(s, m1, one) && std::regex_search(s, m2, two)) {
        return {to_finite(m1.str(1), text), to_finite(m2.str(1), text)};
    }
    const auto nums = standalone_numbers(s);
    if (nums.size() < 2) {
        throw ParseError("expected two numbers in response, found " + std::to_string(nums.size()), std::string(text));
    }
    return {to_finite(nums[0], text), to_finite(nums[1], text)};
}

double parse_return_response(std::string_view text) {
    const std::string s = normalize_minus(text);
    const auto nums = standalone_numbers(s);
    if (nums.empty()) {
        throw ParseError("no number in response", std::string(text));
    }
    double v = to_finite(nums[0], text);
    // "1.5%" means 0.015
    const auto pct = s.find(nums[0] + "%");
    if (pct != std::string::npos) {
        v /= 100.0;
    }
    return v;
}

// --------------------------------------------------------------------- LLM

LlmAgent::LlmAgent(InferenceClient& client, PromptVariant variant, std::string model)
    : client_(client), variant_(variant), model_(std::move(model)) {
    if (variant_.task != Task::Ar1) throw ConfigError("variant.task", "LlmAgent forecasts AR(1) sessions");
    if (model_.empty()) throw ConfigError("model", "must be set");
}

ForecastPair LlmAgent::forecast(std::span<const double> history) {
    auto res = forecast_batch({std::vector<double>(history.begin(), history.end())});
    if (!res[0].pair) {
        throw AgentFailure(res[0].error);
    }
    return *res[0].pair;
}

std::vector<AgentResult> LlmAgent::forecast_batch(const std::vector<std::vector<double>>& histories) {
    std::vector<ChatRequest> requests;
    requests.reserve(histories.size());
    std::vector<AgentResult> results(histories.size());
    std::vector<std::size_t> sent;
    for (std::size_t i = 0; i < histories.size(); ++i) {
        const auto& h = histories[i];
        if (h.size() < static_cast<std::size_t>(kAr1Window)) {
            results[i].error = "history shorter than the prompt window";
            continue;
        }
        const std::span<const double> window(h.data() + h.size() - kAr1Window, static_cast<std::size_t>(kAr1Window));
        requests.push_back({model_, render_prompt(variant_, window), 0.0, 256});
        sent.push_back(i);
    }
    const auto replies = client_.run_batch(requests);
    for (std::size_t j = 0; j < sent.size(); ++j) {
        auto& out = results[sent[j]];
        if (!replies[j].text) {
            out.error = "inference: " + replies[j].error;
            continue;
        }
        try {
            out.pair = parse_forecast_response(*replies[j].text);
        } catch (const ParseError& e) {
            ++parse_failures_;
            failure_log_.push_back(std::string(e.what()) + " | raw: " + e.raw());
            out.error = e.what();
        }
    }
    return results;
}

std::string LlmAgent::descriptor() const {
    return "llm(" + model_ + "," + to_string(variant_.kind) + ")";
}

}  // namespace debias
