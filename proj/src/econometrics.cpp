#include "debias/econometrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <utility>

namespace debias {

namespace {

// Dense 0..G-1 labels for arbitrary ids.
std::vector<long> relabel(std::span<const long> ids, long& groups) {
    std::unordered_map<long, long> index;
    std::vector<long> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto [it, inserted] = index.try_emplace(ids[i], static_cast<long>(index.size()));
        out[i] = it->second;
    }
    groups = static_cast<long>(index.size());
    return out;
}

Eigen::MatrixXd classical_vcov(const Eigen::MatrixXd& xtx_inv, const Eigen::VectorXd& resid, long dof) {
    if (dof <= 0) {
        throw SingularDesignError("no residual degrees of freedom");
    }
    const double s2 = resid.squaredNorm() / static_cast<double>(dof);
    return s2 * xtx_inv;
}

Eigen::MatrixXd hc1_vcov(const Eigen::MatrixXd& X, const Eigen::MatrixXd& xtx_inv, const Eigen::VectorXd& resid,
                         long dof) {
    const Eigen::MatrixXd scored = X.array().colwise() * resid.array();
    const Eigen::MatrixXd meat = scored.transpose() * scored;
    const double n = static_cast<double>(X.rows());
    return (n / static_cast<double>(dof)) * (xtx_inv * meat * xtx_inv);
}

Eigen::VectorXd sqrt_diag(const Eigen::MatrixXd& v) {
    return v.diagonal().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace

std::string to_string(SeMode mode) { return mode == SeMode::Classical ? "classical" : "hc1"; }

std::string to_string(ClusterMode mode) {
    switch (mode) {
        case ClusterMode::None: return "none";
        case ClusterMode::Unit: return "unit";
        case ClusterMode::Time: return "time";
        case ClusterMode::TwoWay: return "unit+time";
    }
    return "?";
}

Eigen::Index RegressionResult::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw DataError("no coefficient named '" + name + "'");
    }
    return static_cast<Eigen::Index>(it - names.begin());
}

// ---------------------------------------------------------------------- OLS

RegressionResult ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, bool intercept, SeMode se_mode,
                     std::vector<std::string> names) {
    const Eigen::Index n = y.size();
    if (X.rows() != n) {
        throw ShapeError("ols: X has " + std::to_string(X.rows()) + " rows but y has " + std::to_string(n));
    }
    if (names.empty()) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            names.push_back("x" + std::to_string(j + 1));
        }
    }
    if (static_cast<Eigen::Index>(names.size()) != X.cols()) {
        throw ShapeError("ols: name count does not match columns");
    }
    Eigen::MatrixXd design(n, X.cols() + (intercept ? 1 : 0));
    if (intercept) {
        design.col(0).setOnes();
        design.rightCols(X.cols()) = X;
        names.insert(names.begin(), "const");
    } else {
        design = X;
    }
    const Eigen::Index k = design.cols();
    if (n <= k) {
        throw SingularDesignError("ols: need more observations (" + std::to_string(n) + ") than regressors (" +
                                  std::to_string(k) + ")");
    }
    if (!y.allFinite() || !design.allFinite()) {
        throw DataError("ols: non-finite data");
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-12);
    if (qr.rank() < k) {
        std::string bad;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < k; ++j) {
            bad += (bad.empty() ? "" : ", ") + names[static_cast<std::size_t>(perm(j))];
        }
        throw SingularDesignError("singular design: collinear column(s) " + bad);
    }

    RegressionResult r;
    r.names = std::move(names);
    r.intercept = intercept;
    r.se_mode = se_mode;
    r.n = static_cast<long>(n);
    r.coef = qr.solve(y);
    r.residuals = y - design * r.coef;

    // (X'X)^{-1} = P R^{-1} R^{-T} P^T
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const auto P = qr.colsPermutation();
    const Eigen::MatrixXd xtx_inv = P * (rinv * rinv.transpose()) * P.transpose();

    const long dof = static_cast<long>(n - k);
    r.vcov = se_mode == SeMode::Classical ? classical_vcov(xtx_inv, r.residuals, dof)
                                          : hc1_vcov(design, xtx_inv, r.residuals, dof);
    r.se = sqrt_diag(r.vcov);
    r.t = r.coef.cwiseQuotient(r.se);

    const double ssr = r.residuals.squaredNorm();
    const double sst = intercept ? (y.array() - y.mean()).matrix().squaredNorm() : y.squaredNorm();
    r.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    return r;
}

RegressionResult error_revision_regression(const ForecastPanel& panel, SeMode se_mode, bool subject_fe) {
    if (panel.rows.empty()) {
        throw EmptyInputError("error_revision_regression: empty panel");
    }
    const auto n = static_cast<Eigen::Index>(panel.rows.size());
    Eigen::VectorXd err(n);
    Eigen::MatrixXd rev(n, 1);
    std::vector<long> subject(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = panel.rows[static_cast<std::size_t>(i)];
        err(i) = row.error();
        rev(i, 0) = row.revision();
        subject[static_cast<std::size_t>(i)] = row.subject_id;
    }
    if (!subject_fe) {
        return ols(err, rev, true, se_mode, {"revision"});
    }
    Eigen::MatrixXd both(n, 2);
    both.col(0) = err;
    both.col(1) = rev.col(0);
    const Eigen::MatrixXd dm = within_transform(both, subject, {});
    RegressionResult r = ols(dm.col(0), dm.col(1), false, se_mode, {"revision"});
    // Absorbed subject means cost one degree of freedom each.
    long groups = 0;
    relabel(subject, groups);
    if (n - 1 - groups <= 0) {
        throw SingularDesignError("subject fixed effects leave no degrees of freedom");
    }
    const double scale = static_cast<double>(n - 1) / static_cast<double>(n - 1 - groups);
    if (se_mode == SeMode::Classical) {
        r.vcov *= scale;
        r.se = sqrt_diag(r.vcov);
        r.t = r.coef.cwiseQuotient(r.se);
    }
    return r;
}

// ------------------------------------------------------------ within / FE

Eigen::MatrixXd within_transform(const Eigen::MatrixXd& columns, std::span<const long> unit_ids,
                                 std::span<const long> time_ids, const WithinOptions& opts) {
    const auto n = static_cast<std::size_t>(columns.rows());
    if (unit_ids.empty() && time_ids.empty()) {
        throw DataError("within_transform: no id columns");
    }
    if ((!unit_ids.empty() && unit_ids.size() != n) || (!time_ids.empty() && time_ids.size() != n)) {
        throw ShapeError("within_transform: id columns must match row count");
    }

    struct Grouping {
        std::vector<long> label;
        std::vector<double> count;
    };
    std::vector<Grouping> groupings;
    for (auto ids : {unit_ids, time_ids}) {
        if (ids.empty()) {
            continue;
        }
        Grouping g;
        long G = 0;
        g.label = relabel(ids, G);
        g.count.assign(static_cast<std::size_t>(G), 0.0);
        for (long l : g.label) {
            g.count[static_cast<std::size_t>(l)] += 1.0;
        }
        groupings.push_back(std::move(g));
    }

    Eigen::MatrixXd out = columns;
    std::vector<double> sums;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        auto col = out.col(c);
        for (int iter = 0; iter < opts.max_iterations; ++iter) {
            double max_change = 0.0;
            for (const auto& g : groupings) {
                sums.assign(g.count.size(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    sums[static_cast<std::size_t>(g.label[i])] += col(static_cast<Eigen::Index>(i));
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const auto gi = static_cast<std::size_t>(g.label[i]);
                    const double m = sums[gi] / g.count[gi];
                    col(static_cast<Eigen::Index>(i)) -= m;
                    max_change = std::max(max_change, std::abs(m));
                }
            }
            if (max_change < opts.tolerance || groupings.size() == 1) {
                break;
            }
        }
    }
    return out;
}

void PanelSpec::validate(const PanelRows& rows) const {
    if (lags.empty() && !(use_controls && rows.controls.cols() > 0)) {
        throw ConfigError("lags", "no regressors selected");
    }
    std::set<int> seen;
    for (int s : lags) {
        if (s < 0 || s > 11) {
            throw ConfigError("lags", "lag " + std::to_string(s) + " outside 0..11");
        }
        if (s >= rows.lags.cols()) {
            throw ConfigError("lags", "rows do not carry lag " + std::to_string(s));
        }
        if (!seen.insert(s).second) {
            throw ConfigError("lags", "duplicate lag " + std::to_string(s));
        }
    }
    const auto n = rows.size();
    if (rows.time.size() != n || static_cast<std::size_t>(rows.dependent.size()) != n ||
        static_cast<std::size_t>(rows.lags.rows()) != n) {
        throw ShapeError("panel rows have inconsistent column lengths");
    }
    if (use_controls && static_cast<std::size_t>(rows.controls.rows()) != n) {
        throw ShapeError("control columns have the wrong length");
    }
}

PanelSpec PanelSpec::all_lags(int count) {
    PanelSpec s;
    for (int i = 0; i < count; ++i) {
        s.lags.push_back(i);
    }
    return s;
}

double PanelResult::beta_lag(int s) const {
    const auto it = std::find(lags.begin(), lags.end(), s);
    if (it == lags.end()) {
        throw DataError("lag " + std::to_string(s) + " not in regression");
    }
    return beta(it - lags.begin());
}

double PanelResult::t_lag(int s) const {
    const auto it = std::find(lags.begin(), lags.end(), s);
    if (it == lags.end()) {
        throw DataError("lag " + std::to_string(s) + " not in regression");
    }
    return t(it - lags.begin());
}

PanelResult panel_fe_regression(const PanelRows& rows, const PanelSpec& spec) {
    spec.validate(rows);
    const auto n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index n_ctrl = spec.use_controls ? rows.controls.cols() : 0;
    const Eigen::Index p = static_cast<Eigen::Index>(spec.lags.size()) + n_ctrl;

    PanelResult res;
    res.spec = spec;
    res.lags = spec.lags;
    for (int s : spec.lags) {
        res.names.push_back("beta_" + std::to_string(s));
    }
    for (Eigen::Index c = 0; c < n_ctrl; ++c) {
        res.names.push_back(c < static_cast<Eigen::Index>(rows.control_names.size())
                                ? rows.control_names[static_cast<std::size_t>(c)]
                                : "control_" + std::to_string(c));
    }

    Eigen::MatrixXd data(n, p + 1);
    data.col(0) = rows.dependent;
    for (std::size_t j = 0; j < spec.lags.size(); ++j) {
        data.col(static_cast<Eigen::Index>(j) + 1) = rows.lags.col(spec.lags[j]);
    }
    if (n_ctrl > 0) {
        data.rightCols(n_ctrl) = rows.controls;
    }

    long n_units = 0, n_times = 0;
    relabel(rows.unit, n_units);
    relabel(rows.time, n_times);
    res.n = static_cast<long>(n);
    res.n_units = n_units;
    res.n_times = n_times;

    const bool any_fe = spec.unit_fe || spec.time_fe;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    if (any_fe) {
        const Eigen::MatrixXd dm = within_transform(data, spec.unit_fe ? std::span<const long>(rows.unit)
                                                                     : std::span<const long>(),
                                                    spec.time_fe ? std::span<const long>(rows.time)
                                                                 : std::span<const long>());
        y = dm.col(0);
        X = dm.rightCols(p);
        res.absorbed = (spec.unit_fe ? n_units : 0) + (spec.time_fe ? n_times : 0) -
                       (spec.unit_fe && spec.time_fe ? 1 : 0);
    } else {
        y = data.col(0);
        X = data.rightCols(p);
        res.absorbed = 0;
    }

    // Point estimates and classical covariance via the OLS routine.
    RegressionResult base = ols(y, X, !any_fe, SeMode::Classical, res.names);
    const Eigen::Index off = any_fe ? 0 : 1;
    Eigen::MatrixXd design(n, p + off);
    if (!any_fe) {
        design.col(0).setOnes();
    }
    design.rightCols(p) = X;
    const long k_total = static_cast<long>(design.cols()) + res.absorbed;

    Eigen::MatrixXd vcov_full;
    switch (spec.cluster) {
        case ClusterMode::None:
            if (n - k_total <= 0) {
                throw SingularDesignError("fixed effects leave no residual degrees of freedom");
            }
            vcov_full = base.vcov * (static_cast<double>(n - design.cols()) / static_cast<double>(n - k_total));
            break;
        case ClusterMode::Unit:
            vcov_full = cluster_robust_vcov(design, base.residuals, {rows.unit});
            break;
        case ClusterMode::Time:
            vcov_full = cluster_robust_vcov(design, base.residuals, {rows.time});
            break;
        case ClusterMode::TwoWay:
            vcov_full = cluster_robust_vcov(design, base.residuals, {rows.unit, rows.time});
            break;
    }

    res.beta = base.coef.tail(p);
    res.vcov = vcov_full.bottomRightCorner(p, p);
    res.se = sqrt_diag(res.vcov);
    res.t = res.beta.cwiseQuotient(res.se);
    const double sst = y.squaredNorm() - (any_fe ? 0.0 : static_cast<double>(n) * y.mean() * y.mean());
    res.within_r_squared = sst > 0.0 ? 1.0 - base.residuals.squaredNorm() / sst : 1.0;
    return res;
}

// --------------------------------------------------------- clustered vcov

namespace {

Eigen::MatrixXd one_way_meat(const Eigen::MatrixXd& scores, std::span<const long> ids, long& groups) {
    const auto labels = relabel(ids, groups);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(groups, scores.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        sums.row(labels[i]) += scores.row(static_cast<Eigen::Index>(i));
    }
    return sums.transpose() * sums;
}

}  // namespace

Eigen::MatrixXd cluster_robust_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                    const std::vector<std::vector<long>>& clusters, long dof_k) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = dof_k >= 0 ? dof_k : X.cols();
    if (residuals.size() != n) {
        throw ShapeError("cluster_robust_vcov: residual length mismatch");
    }
    if (clusters.empty() || clusters.size() > 2) {
        throw ConfigError("cluster", "one or two cluster dimensions are supported");
    }
    for (const auto& c : clusters) {
        if (static_cast<Eigen::Index>(c.size()) != n) {
            throw ShapeError("cluster_robust_vcov: cluster id length mismatch");
        }
    }
    if (n <= k) {
        throw SingularDesignError("cluster_robust_vcov: n must exceed k");
    }
    const Eigen::MatrixXd xtx = X.transpose() * X;
    const Eigen::MatrixXd bread = xtx.ldlt().solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
    const Eigen::MatrixXd scores = X.array().colwise() * residuals.array();

    auto component = [&](std::span<const long> ids) {
        long G = 0;
        const Eigen::MatrixXd meat = one_way_meat(scores, ids, G);
        if (G < 2) {
            throw EstimationError("clustered inference needs at least 2 clusters per dimension, got " +
                                  std::to_string(G));
        }
        const double c = (static_cast<double>(G) / static_cast<double>(G - 1)) *
                         (static_cast<double>(n - 1) / static_cast<double>(n - k));
        return Eigen::MatrixXd(c * (bread * meat * bread));
    };

    if (clusters.size() == 1) {
        Eigen::MatrixXd v = component(clusters[0]);
        return 0.5 * (v + v.transpose());
    }
    // Intersection clusters: distinct (a, b) pairs.
    std::map<std::pair<long, long>, long> pair_index;
    std::vector<long> inter(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto key = std::make_pair(clusters[0][static_cast<std::size_t>(i)], clusters[1][static_cast<std::size_t>(i)]);
        auto [it, _] = pair_index.try_emplace(key, static_cast<long>(pair_index.size()));
        inter[static_cast<std::size_t>(i)] = it->second;
    }
    const Eigen::MatrixXd va = component(clusters[0]);
    const Eigen::MatrixXd vb = component(clusters[1]);
    Eigen::MatrixXd vab;
    if (pair_index.size() >= 2) {
        vab = component(inter);
    } else {
        vab = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    }
    Eigen::MatrixXd v = va + vb - vab;
    v = 0.5 * (v + v.transpose());
    return psd_repair(v);
}

Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& v) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
    if (eig.eigenvalues().minCoeff() >= 0.0) {
        return v;
    }
    const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd out = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

// ------------------------------------------------------------- descriptive

double percentile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw EmptyInputError("percentile of empty input");
    }
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Descriptive descriptive_stats(std::span<const double> values) {
    if (values.empty()) {
        throw EmptyInputError("descriptive_stats: empty input");
    }
    Descriptive d;
    d.n = static_cast<long>(values.size());
    d.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(d.n);
    double ss = 0.0;
    for (double v : values) {
        ss += (v - d.mean) * (v - d.mean);
    }
    d.sd = d.n > 1 ? std::sqrt(ss / static_cast<double>(d.n - 1)) : 0.0;
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    d.p25 = percentile(sorted, 0.25);
    d.median = percentile(sorted, 0.5);
    d.p75 = percentile(sorted, 0.75);
    return d;
}

}  // namespace debias
