#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "debias/ar1.hpp"
#include "debias/error.hpp"

namespace debias {

// Raised when clustered inference is requested with fewer than two clusters.
class EstimationError : public DataError {
public:
    using DataError::DataError;
};

enum class SeMode { Classical, Hc1 };
std::string to_string(SeMode mode);

struct RegressionResult {
    std::vector<std::string> names;  // "const" first when an intercept is fitted
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;
    Eigen::VectorXd se;
    Eigen::VectorXd t;
    double r_squared = 0.0;
    long n = 0;
    Eigen::VectorXd residuals;
    SeMode se_mode = SeMode::Classical;
    bool intercept = false;

    // Index of a named coefficient; throws DataError if absent.
    Eigen::Index index_of(const std::string& name) const;
    double coef_of(const std::string& name) const { return coef(index_of(name)); }
    double t_of(const std::string& name) const { return t(index_of(name)); }
    double se_of(const std::string& name) const { return se(index_of(name)); }
};

// Least squares through a column-pivoted QR. names label the columns of X;
// defaults are x1..xk. Throws SingularDesignError naming collinear columns.
RegressionResult ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, bool intercept, SeMode se_mode,
                     std::vector<std::string> names = {});

// Forecast error (realized - f_one) on forecast revision (f_one - f_two_lag),
// pooled over subjects. With subject_fe the regression is run on
// subject-demeaned data instead of with an intercept.
RegressionResult error_revision_regression(const ForecastPanel& panel, SeMode se_mode = SeMode::Classical,
                                           bool subject_fe = false);

struct WithinOptions {
    double tolerance = 1e-10;
    int max_iterations = 100000;
};

// Two-way within transformation by alternating projections. Each column is
// demeaned by unit and time groups until no cell moves by more than the
// tolerance. Either id vector may be empty to demean one way only.
Eigen::MatrixXd within_transform(const Eigen::MatrixXd& columns, std::span<const long> unit_ids,
                                 std::span<const long> time_ids, const WithinOptions& opts = {});

enum class ClusterMode { None, Unit, Time, TwoWay };
std::string to_string(ClusterMode mode);

// Long-format rows for the lagged-return regression.
struct PanelRows {
    std::vector<long> unit;
    std::vector<long> time;
    Eigen::VectorXd dependent;
    Eigen::MatrixXd lags;      // column s holds r_{t-s}
    Eigen::MatrixXd controls;  // optional extra regressors, n x c
    std::vector<std::string> control_names;

    std::size_t size() const { return unit.size(); }
};

struct PanelSpec {
    std::string dependent = "forecast";
    std::vector<int> lags;  // subset of 0..11
    bool unit_fe = true;
    bool time_fe = true;
    ClusterMode cluster = ClusterMode::TwoWay;
    bool use_controls = false;

    void validate(const PanelRows& rows) const;
    static PanelSpec all_lags(int count = 12);
};

struct PanelResult {
    std::vector<std::string> names;  // beta_<s>, then controls
    std::vector<int> lags;
    Eigen::VectorXd beta;
    Eigen::MatrixXd vcov;
    Eigen::VectorXd se;
    Eigen::VectorXd t;
    double within_r_squared = 0.0;
    long n = 0;
    long n_units = 0;
    long n_times = 0;
    long absorbed = 0;
    PanelSpec spec;

    double beta_lag(int s) const;
    double t_lag(int s) const;
};

PanelResult panel_fe_regression(const PanelRows& rows, const PanelSpec& spec);

// Cluster-robust sandwich. One id vector gives one-way clustering with factor
// G/(G-1) * (n-1)/(n-k); two give V_a + V_b - V_ab, where the intersection
// clusters are the distinct (a, b) pairs, followed by eigenvalue clamping.
Eigen::MatrixXd cluster_robust_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                    const std::vector<std::vector<long>>& clusters, long dof_k = -1);

// Clamp negative eigenvalues to zero and rebuild.
Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& v);

struct Descriptive {
    double mean = 0.0;
    double sd = 0.0;
    double p25 = 0.0;
    double median = 0.0;
    double p75 = 0.0;
    long n = 0;
};

// Sample (n-1) SD; percentiles by linear interpolation between order statistics.
Descriptive descriptive_stats(std::span<const double> values);
double percentile(std::vector<double> sorted_or_not, double p);

}  // namespace debias
