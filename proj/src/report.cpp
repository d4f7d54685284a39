#include "debias/report.hpp"

#include <filesystem>
#include <sstream>

#include "debias/util.hpp"

namespace debias {

namespace {

std::string paren(double t) { return "(" + format_fixed(t, 2) + ")"; }

std::string join_row(const std::string& head, const std::vector<std::string>& cells) {
    std::string line = head;
    for (const auto& c : cells) {
        line += "," + c;
    }
    return line + "\n";
}

}  // namespace

std::string eq2_table_csv(const std::vector<Ar1Cell>& cells) {
    std::vector<std::string> header, b, tb, a, ta, r2, n, se;
    for (const auto& c : cells) {
        header.push_back("rho=" + format_fixed(c.rho, 1));
        b.push_back(format_fixed(c.fit.coef_of("revision"), 3));
        tb.push_back(paren(c.fit.t_of("revision")));
        if (c.fit.intercept) {
            a.push_back(format_fixed(c.fit.coef_of("const"), 3));
            ta.push_back(paren(c.fit.t_of("const")));
        } else {
            a.emplace_back("subject FE");
            ta.emplace_back("");
        }
        r2.push_back(format_fixed(c.fit.r_squared, 3));
        n.push_back(std::to_string(c.fit.n));
        se.push_back(to_string(c.fit.se_mode));
    }
    std::string out = join_row("", header);
    out += join_row("b", b);
    out += join_row("", tb);
    out += join_row("a", a);
    out += join_row("", ta);
    out += join_row("R2", r2);
    out += join_row("N", n);
    out += join_row("SE", se);
    return out;
}

std::string eq2_plot_csv(const std::vector<Ar1Cell>& cells) {
    std::string out = "rho,b,ci_low,ci_high\n";
    for (const auto& c : cells) {
        const double b = c.fit.coef_of("revision");
        const double se = c.fit.se_of("revision");
        out += format_full(c.rho) + "," + format_full(b) + "," + format_full(b - 1.96 * se) + "," +
               format_full(b + 1.96 * se) + "\n";
    }
    return out;
}

std::string eq3_table_csv(const std::vector<LabeledPanelResult>& columns) {
    if (columns.empty()) {
        throw EmptyInputError("no regressions to tabulate");
    }
    std::vector<std::string> header;
    for (const auto& c : columns) {
        header.push_back(c.label);
    }
    std::string out = join_row("", header);
    for (int s : columns.front().result.lags) {
        std::vector<std::string> coef, t;
        for (const auto& c : columns) {
            coef.push_back(format_fixed(c.result.beta_lag(s), 3));
            t.push_back(paren(c.result.t_lag(s)));
        }
        out += join_row("r_{t-" + std::to_string(s) + "}", coef);
        out += join_row("", t);
    }
    std::vector<std::string> r2, n, ufe, tfe, cl;
    for (const auto& c : columns) {
        r2.push_back(format_fixed(c.result.within_r_squared, 3));
        n.push_back(std::to_string(c.result.n));
        ufe.emplace_back(c.result.spec.unit_fe ? "Yes" : "No");
        tfe.emplace_back(c.result.spec.time_fe ? "Yes" : "No");
        cl.push_back(to_string(c.result.spec.cluster));
    }
    out += join_row("Within R2", r2);
    out += join_row("N", n);
    out += join_row("Firm FE", ufe);
    out += join_row("Month FE", tfe);
    out += join_row("Cluster", cl);
    return out;
}

std::string descriptive_table_csv(const std::vector<LabeledSeries>& series) {
    std::string out = "variable,mean,sd,p25,median,p75,n\n";
    for (const auto& s : series) {
        const auto d = descriptive_stats(s.values);
        out += s.label + "," + format_fixed(d.mean, 4) + "," + format_fixed(d.sd, 4) + "," + format_fixed(d.p25, 4) + "," +
               format_fixed(d.median, 4) + "," + format_fixed(d.p75, 4) + "," + std::to_string(d.n) + "\n";
    }
    return out;
}

// ----------------------------------------------------------------- manifest

RunManifest::RunManifest(std::string command, nlohmann::json config, std::uint64_t seed)
    : command_(std::move(command)), config_(std::move(config)), seed_(seed) {}

void RunManifest::add_input(const std::string& path) {
    inputs_[path] = sha256_hex(read_file(path));
}

void RunManifest::add_output(const std::string& path) {
    outputs_.push_back(path);
}

void RunManifest::time_stage(const std::string& stage, double seconds) {
    timings_.emplace_back(stage, seconds);
}

std::string RunManifest::config_hash() const {
    return sha256_hex(config_.dump());
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json timings = nlohmann::json::array();
    for (const auto& [stage, s] : timings_) {
        timings.push_back({{"stage", stage}, {"seconds", s}});
    }
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& p : outputs_) {
        const auto it = output_digests_.find(p);
        outputs.push_back({{"path", p}, {"sha256", it == output_digests_.end() ? "" : it->second}});
    }
    return {{"command", command_},     {"config_hash", config_hash()}, {"seed", seed_},
            {"config", config_},       {"inputs", inputs_},            {"outputs", outputs},
            {"timings", timings},      {"versions", {{"debias", "1.0.0"}, {"checkpoint_format", 1}, {"jsonl_schema", 1}}}};
}

void RunManifest::finish(const std::string& out_dir) {
    for (const auto& p : outputs_) {
        output_digests_[p] = sha256_hex(read_file((std::filesystem::path(out_dir) / p).string()));
    }
    write_file((std::filesystem::path(out_dir) / "manifest.json").string(), to_json().dump(2) + "\n");
}

}  // namespace debias
