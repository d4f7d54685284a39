#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/econometrics.hpp"
#include "debias/experiment.hpp"

namespace debias {

// Error-revision table: one column per rho; rows b, (t), a, (t), R2, N, SE.
std::string eq2_table_csv(const std::vector<Ar1Cell>& cells);
// rho,b,ci_low,ci_high with ci = b -/+ 1.96 se.
std::string eq2_plot_csv(const std::vector<Ar1Cell>& cells);

struct LabeledPanelResult {
    std::string label;
    PanelResult result;
};
// Lag table: beta_s and (t) rows per lag, then Within R2, N, FE flags, Cluster.
std::string eq3_table_csv(const std::vector<LabeledPanelResult>& columns);

struct LabeledSeries {
    std::string label;
    std::vector<double> values;
};
// variable,mean,sd,p25,median,p75,n
std::string descriptive_table_csv(const std::vector<LabeledSeries>& series);

// Records what a command read, produced and how long each stage took.
class RunManifest {
public:
    RunManifest(std::string command, nlohmann::json config, std::uint64_t seed);

    void add_input(const std::string& path);   // digest of file contents
    void add_output(const std::string& path);  // digest recorded at finish()
    void time_stage(const std::string& stage, double seconds);

    std::string config_hash() const;
    nlohmann::json to_json() const;
    // Writes manifest.json into out_dir after digesting every output.
    void finish(const std::string& out_dir);

private:
    std::string command_;
    nlohmann::json config_;
    std::uint64_t seed_;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
    std::map<std::string, std::string> output_digests_;
    std::vector<std::pair<std::string, double>> timings_;
};

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace debias
