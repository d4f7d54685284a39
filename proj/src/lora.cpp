#include "debias/lora.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>

#include "debias/random.hpp"
#include "debias/util.hpp"

namespace debias {

namespace {

std::string hexfloat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

void apply_activation(Activation act, Eigen::MatrixXd& m) {
    if (act == Activation::Tanh) {
        m = m.array().tanh().matrix();
    }
}

struct LayerCache {
    Eigen::MatrixXd input;   // k x n
    Eigen::MatrixXd down;    // r x n (A x), adapted layers only
    Eigen::MatrixXd output;  // d x n, post-activation
};

// Shared forward path. adapters may be null for a plain network.
Eigen::MatrixXd run_layers(const DenseNet& net, const std::vector<LoraAdapter>* adapters,
                           const Eigen::MatrixXd& xs, std::vector<LayerCache>* cache) {
    if (xs.rows() != net.input_width()) {
        throw ShapeError("input width " + std::to_string(xs.rows()) + " does not match network input width " +
                         std::to_string(net.input_width()));
    }
    const auto& layers = net.layers();
    if (cache) {
        cache->assign(layers.size(), {});
    }
    Eigen::MatrixXd h = xs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        Eigen::MatrixXd pre = layer.weight * h;
        pre.colwise() += layer.bias;
        Eigen::MatrixXd down;
        if (adapters) {
            const auto& ad = (*adapters)[l];
            down = ad.a * h;
            pre.noalias() += ad.scale() * (ad.b * down);
        }
        apply_activation(layer.activation, pre);
        if (cache) {
            (*cache)[l].input = std::move(h);
            (*cache)[l].down = std::move(down);
            (*cache)[l].output = pre;
        }
        h = std::move(pre);
    }
    return h;
}

void require_finite(const Samples& batch) {
    if (batch.size() == 0) {
        throw DataError("empty batch");
    }
    if (!batch.inputs.allFinite() || !batch.targets.allFinite()) {
        throw DataError("non-finite value in batch inputs or targets");
    }
}

// Backward pass from dL/d(output). Calls visit(l, delta, cache[l]) for every
// layer from last to first, where delta = dL/d(pre-activation).
template <typename Visit>
void backward(const DenseNet& net, const std::vector<LoraAdapter>* adapters, std::vector<LayerCache>& cache,
              Eigen::MatrixXd upstream, Visit&& visit) {
    const auto& layers = net.layers();
    for (std::size_t i = layers.size(); i-- > 0;) {
        const auto& layer = layers[i];
        Eigen::MatrixXd delta = std::move(upstream);
        if (layer.activation == Activation::Tanh) {
            delta.array() *= 1.0 - cache[i].output.array().square();
        }
        visit(i, delta, cache[i]);
        if (i == 0) {
            break;
        }
        upstream = layer.weight.transpose() * delta;
        if (adapters) {
            const auto& ad = (*adapters)[i];
            upstream.noalias() += ad.scale() * (ad.a.transpose() * (ad.b.transpose() * delta));
        }
    }
}

Eigen::MatrixXd loss_gradient(const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets, double& loss) {
    const Eigen::MatrixXd diff = out - targets;
    const double count = static_cast<double>(diff.size());
    loss = diff.squaredNorm() / count;
    return (2.0 / count) * diff;
}

}  // namespace

// ---------------------------------------------------------------- DenseNet

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) {
        throw ShapeError("network needs at least one layer");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.bias.size() != layer.weight.rows()) {
            throw ShapeError("layer " + std::to_string(l) + ": bias length does not match weight rows");
        }
        if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
            throw ShapeError("layer " + std::to_string(l) + ": weight " +
                             shape_str(layer.weight.rows(), layer.weight.cols()) + " does not chain");
        }
    }
    if (layers_.back().activation != Activation::Identity) {
        throw ShapeError("final layer must be linear");
    }
}

DenseNet DenseNet::random(const std::vector<int>& widths, std::uint64_t seed) {
    if (widths.size() < 2) {
        throw ConfigError("widths", "need input and output widths");
    }
    NormalRng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int k = widths[l];
        const int d = widths[l + 1];
        if (k < 1 || d < 1) {
            throw ConfigError("widths", "all widths must be positive");
        }
        DenseLayer layer;
        const double sd = std::sqrt(2.0 / static_cast<double>(k + d));
        layer.weight = Eigen::MatrixXd::NullaryExpr(d, k, [&] { return sd * rng.standard_normal(); });
        layer.bias = Eigen::VectorXd::Zero(d);
        layer.activation = (l + 2 == widths.size()) ? Activation::Identity : Activation::Tanh;
        layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers));
}

Eigen::Index DenseNet::input_width() const { return layers_.front().in_width(); }
Eigen::Index DenseNet::output_width() const { return layers_.back().out_width(); }

std::size_t DenseNet::weight_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
        n += static_cast<std::size_t>(l.weight.size());
    }
    return n;
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    }
    return n;
}

std::string DenseNet::checksum() const {
    std::string bytes;
    for (const auto& l : layers_) {
        bytes += shape_str(l.weight.rows(), l.weight.cols());
        bytes.append(reinterpret_cast<const char*>(l.weight.data()), sizeof(double) * l.weight.size());
        bytes.append(reinterpret_cast<const char*>(l.bias.data()), sizeof(double) * l.bias.size());
        bytes += l.activation == Activation::Tanh ? 't' : 'i';
    }
    return sha256_hex(bytes);
}

// -------------------------------------------------------------- AdaptedNet

AdaptedNet::AdaptedNet(DenseNet base, std::vector<LoraAdapter> adapters)
    : base_(std::move(base)), adapters_(std::move(adapters)) {
    const auto& layers = base_.layers();
    if (adapters_.size() != layers.size()) {
        throw ShapeError("expected one adapter per layer (" + std::to_string(layers.size()) + "), got " +
                         std::to_string(adapters_.size()));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& ad = adapters_[l];
        if (ad.a.cols() != layers[l].in_width() || ad.b.rows() != layers[l].out_width() ||
            ad.b.cols() != ad.a.rows() || ad.a.rows() < 1) {
            throw ShapeError("adapter " + std::to_string(l) + " shapes A " + shape_str(ad.a.rows(), ad.a.cols()) +
                             ", B " + shape_str(ad.b.rows(), ad.b.cols()) + " do not fit layer " +
                             shape_str(layers[l].out_width(), layers[l].in_width()));
        }
    }
}

std::size_t AdaptedNet::trainable_parameters() const {
    std::size_t n = 0;
    for (const auto& ad : adapters_) {
        n += ad.parameter_count();
    }
    return n;
}

double AdaptedNet::trainable_fraction() const {
    return static_cast<double>(trainable_parameters()) / static_cast<double>(base_.weight_count());
}

// ------------------------------------------------------------------ forward

Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& xs) {
    return run_layers(net, nullptr, xs, nullptr);
}

Eigen::MatrixXd forward_batch(const AdaptedNet& net, const Eigen::MatrixXd& xs) {
    return run_layers(net.base(), &net.adapters(), xs, nullptr);
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x) {
    return forward_batch(net, Eigen::MatrixXd(x)).col(0);
}

Eigen::VectorXd forward(const AdaptedNet& net, const Eigen::VectorXd& x) {
    return forward_batch(net, Eigen::MatrixXd(x)).col(0);
}

// --------------------------------------------------------- attach / merge

AdaptedNet attach_lora(const DenseNet& base, int rank, double alpha, std::uint64_t seed) {
    if (rank < 1) {
        throw ConfigError("rank", "must be at least 1");
    }
    if (!(alpha > 0.0)) {
        throw ConfigError("alpha", "must be positive");
    }
    const auto& layers = base.layers();
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        const auto min_dim = std::min(layers[l].in_width(), layers[l].out_width());
        if (rank >= min_dim) {
            throw ConfigError("rank", std::to_string(rank) + " is not below min(d, k) = " + std::to_string(min_dim) +
                                          " of layer " + std::to_string(l));
        }
    }
    NormalRng rng(seed);
    std::vector<LoraAdapter> adapters;
    adapters.reserve(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const bool head = l + 1 == layers.size();
        const Eigen::Index r = head ? std::min<Eigen::Index>(rank, layers[l].out_width()) : rank;
        const double sd = 1.0 / std::sqrt(static_cast<double>(r));
        LoraAdapter ad;
        ad.a = Eigen::MatrixXd::NullaryExpr(r, layers[l].in_width(), [&] { return sd * rng.standard_normal(); });
        ad.b = Eigen::MatrixXd::Zero(layers[l].out_width(), r);
        // Keep the layer's scale equal to alpha/rank even where the head's rank is capped.
        ad.alpha = alpha * static_cast<double>(r) / static_cast<double>(rank);
        adapters.push_back(std::move(ad));
    }
    return AdaptedNet(base, std::move(adapters));
}

DenseNet merge_lora(const AdaptedNet& adapted) {
    std::vector<DenseLayer> layers = adapted.base().layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& ad = adapted.adapters()[l];
        layers[l].weight += ad.scale() * (ad.b * ad.a);
    }
    return DenseNet(std::move(layers));
}

// ---------------------------------------------------------------- gradients

Samples Samples::subset(std::span<const Eigen::Index> columns) const {
    Samples s;
    s.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(columns.size()));
    s.targets.resize(targets.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        s.inputs.col(static_cast<Eigen::Index>(j)) = inputs.col(columns[j]);
        s.targets.col(static_cast<Eigen::Index>(j)) = targets.col(columns[j]);
    }
    return s;
}

double mse(const DenseNet& net, const Samples& data) {
    return (forward_batch(net, data.inputs) - data.targets).squaredNorm() / static_cast<double>(data.targets.size());
}

double mse(const AdaptedNet& net, const Samples& data) {
    return (forward_batch(net, data.inputs) - data.targets).squaredNorm() / static_cast<double>(data.targets.size());
}

AdapterGradients grad(const AdaptedNet& adapted, const Samples& batch) {
    require_finite(batch);
    std::vector<LayerCache> cache;
    const Eigen::MatrixXd out = run_layers(adapted.base(), &adapted.adapters(), batch.inputs, &cache);
    if (out.rows() != batch.targets.rows()) {
        throw ShapeError("target width does not match network output width");
    }
    AdapterGradients g;
    const auto n_layers = adapted.adapters().size();
    g.a.resize(n_layers);
    g.b.resize(n_layers);
    Eigen::MatrixXd upstream = loss_gradient(out, batch.targets, g.loss);
    backward(adapted.base(), &adapted.adapters(), cache, std::move(upstream),
             [&](std::size_t l, const Eigen::MatrixXd& delta, const LayerCache& c) {
                 const auto& ad = adapted.adapters()[l];
                 g.b[l] = ad.scale() * (delta * c.down.transpose());
                 g.a[l] = ad.scale() * ((ad.b.transpose() * delta) * c.input.transpose());
             });
    return g;
}

DenseGradients grad(const DenseNet& net, const Samples& batch) {
    require_finite(batch);
    std::vector<LayerCache> cache;
    const Eigen::MatrixXd out = run_layers(net, nullptr, batch.inputs, &cache);
    if (out.rows() != batch.targets.rows()) {
        throw ShapeError("target width does not match network output width");
    }
    DenseGradients g;
    g.weight.resize(net.layers().size());
    g.bias.resize(net.layers().size());
    Eigen::MatrixXd upstream = loss_gradient(out, batch.targets, g.loss);
    backward(net, nullptr, cache, std::move(upstream),
             [&](std::size_t l, const Eigen::MatrixXd& delta, const LayerCache& c) {
                 g.weight[l] = delta * c.input.transpose();
                 g.bias[l] = delta.rowwise().sum();
             });
    return g;
}

// ----------------------------------------------------------------- training

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate", "must be finite and non-negative");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size", "must be positive");
    }
    if (max_epochs < 1) {
        throw ConfigError("max_epochs", "must be positive");
    }
    if (patience < 1) {
        throw ConfigError("patience", "must be at least 1");
    }
    if (eval_every < 1) {
        throw ConfigError("eval_every", "must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("momentum", "must lie in [0, 1)");
    }
}

double TrainReport::best_val_loss() const {
    for (const auto& e : evals) {
        if (e.step == best_step) {
            return e.val_loss;
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

namespace {

// Parameter views and matching gradients in one fixed order.
std::vector<std::span<double>> param_views(AdaptedNet& net) {
    std::vector<std::span<double>> v;
    for (auto& ad : net.mutable_adapters()) {
        v.emplace_back(ad.a.data(), static_cast<std::size_t>(ad.a.size()));
        v.emplace_back(ad.b.data(), static_cast<std::size_t>(ad.b.size()));
    }
    return v;
}

std::vector<std::span<double>> param_views(DenseNet& net) {
    std::vector<std::span<double>> v;
    for (auto& l : net.mutable_layers()) {
        v.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
        v.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return v;
}

std::vector<Eigen::MatrixXd> flat_grads(const AdaptedNet& net, const Samples& batch) {
    auto g = grad(net, batch);
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t l = 0; l < g.a.size(); ++l) {
        out.push_back(std::move(g.a[l]));
        out.push_back(std::move(g.b[l]));
    }
    return out;
}

std::vector<Eigen::MatrixXd> flat_grads(const DenseNet& net, const Samples& batch) {
    auto g = grad(net, batch);
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
        out.push_back(std::move(g.weight[l]));
        out.push_back(Eigen::MatrixXd(g.bias[l]));
    }
    return out;
}

class OptimizerState {
public:
    OptimizerState(const TrainConfig& cfg, const std::vector<std::span<double>>& params) : cfg_(cfg) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(cfg.optimizer == Optimizer::Adam ? p.size() : 0, 0.0);
        }
    }

    void step(const std::vector<std::span<double>>& params, const std::vector<Eigen::MatrixXd>& grads) {
        ++t_;
        const double lr = cfg_.learning_rate;
        if (cfg_.optimizer == Optimizer::Sgd) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double* g = grads[i].data();
                auto& m = m_[i];
                for (std::size_t j = 0; j < params[i].size(); ++j) {
                    m[j] = cfg_.momentum * m[j] + g[j];
                    params[i][j] -= lr * m[j];
                }
            }
            return;
        }
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double* g = grads[i].data();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < params[i].size(); ++j) {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                params[i][j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
            }
        }
    }

private:
    TrainConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

template <typename Net>
TrainResult<Net> run_training(Net net, const Samples& train, const Samples& val, const TrainConfig& cfg) {
    cfg.validate();
    if (train.size() == 0 || val.size() == 0) {
        throw DataError("training and validation sets must be nonempty");
    }
    require_finite(train);
    require_finite(val);

    auto params = param_views(net);
    OptimizerState opt(cfg, params);
    NormalRng rng(cfg.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainResult<Net> result{net, {}};
    auto& report = result.report;
    int evals_since_best = 0;
    double best = std::numeric_limits<double>::infinity();

    // Returns true when training should stop.
    auto evaluate = [&](long step) {
        const double val_loss = mse(net, val);
        if (!std::isfinite(val_loss)) {
            throw DivergenceError("validation loss is not finite at step " + std::to_string(step), report);
        }
        report.evals.push_back({step, mse(net, train), val_loss});
        if (val_loss < best) {
            best = val_loss;
            report.best_step = step;
            result.net = net;
            evals_since_best = 0;
            return false;
        }
        return ++evals_since_best >= cfg.patience;
    };

    long step = 0;
    if (evaluate(step)) {
        report.stopped_early = true;
        return result;
    }
    const auto n = order.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[rng.index(i)]);
        }
        for (std::size_t start = 0; start < n; start += bs) {
            const auto len = std::min(bs, n - start);
            const Samples batch = train.subset(std::span<const Eigen::Index>(order).subspan(start, len));
            opt.step(params, flat_grads(net, batch));
            ++step;
            if (step % cfg.eval_every == 0 && evaluate(step)) {
                report.stopped_early = true;
                return result;
            }
        }
    }
    if (report.evals.back().step != step) {
        evaluate(step);
    }
    return result;
}

}  // namespace

TrainResult<AdaptedNet> train_sft(const AdaptedNet& adapted, const Samples& train, const Samples& val,
                                  const TrainConfig& cfg) {
    return run_training(adapted, train, val, cfg);
}

TrainResult<DenseNet> train_dense(const DenseNet& net, const Samples& train, const Samples& val,
                                  const TrainConfig& cfg) {
    return run_training(net, train, val, cfg);
}

void write_train_report_csv(const TrainReport& report, const std::string& path) {
    std::ostringstream ss;
    ss << "step,train_loss,val_loss,is_best\n";
    for (const auto& e : report.evals) {
        ss << e.step << ',' << format_full(e.train_loss) << ',' << format_full(e.val_loss) << ','
           << (e.step == report.best_step ? 1 : 0) << '\n';
    }
    ss << "# best_step=" << report.best_step << " stopped_early=" << (report.stopped_early ? "true" : "false") << '\n';
    write_file(path, ss.str());
}

// --------------------------------------------------------------- normalizer

Eigen::VectorXd InputNormalizer::features(std::span<const double> history, double rho) const {
    if (history.size() < static_cast<std::size_t>(window)) {
        throw ShapeError("history of " + std::to_string(history.size()) + " values is shorter than the feature window " +
                         std::to_string(window));
    }
    Eigen::VectorXd f(feature_width());
    const auto tail = history.subspan(history.size() - static_cast<std::size_t>(window));
    for (int i = 0; i < window; ++i) {
        f(i) = (tail[static_cast<std::size_t>(i)] - in_mean) / in_sd;
    }
    if (rho_input) {
        f(window) = rho;
    }
    return f;
}

std::vector<double> InputNormalizer::denormalize(const Eigen::VectorXd& output) const {
    if (static_cast<std::size_t>(output.size()) != out_scale.size()) {
        throw ShapeError("network output width does not match normalizer");
    }
    std::vector<double> v(out_scale.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = output(static_cast<Eigen::Index>(i)) * out_scale[i];
    }
    return v;
}

Eigen::VectorXd InputNormalizer::normalize_target(std::span<const double> target) const {
    if (target.size() != out_scale.size()) {
        throw ShapeError("target width does not match normalizer");
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(target.size()));
    for (std::size_t i = 0; i < target.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = target[i] / out_scale[i];
    }
    return v;
}

// --------------------------------------------------------------- checkpoint
//
// Text format, one record per line, every double as a C99 hex-float so the
// round trip is bit-exact:
//
//   debias-checkpoint 1
//   config_hash <token>
//   normalizer <window> <rho_input> <in_mean> <in_sd> <m> <out_scale_1..m>
//   layers <L>
//   layer <d> <k> <tanh|identity>      then d rows of k weights, then 1 row of d biases
//   adapters <0|L>
//   adapter <r> <alpha>                then r rows of A (k wide), d rows of B (r wide)
//   end

namespace {

void put_matrix(std::ostringstream& ss, const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            ss << (j ? " " : "") << hexfloat(m(i, j));
        }
        ss << '\n';
    }
}

class TokenReader {
public:
    explicit TokenReader(const std::string& text) : in_(text) {}

    std::string word() {
        std::string w;
        if (!(in_ >> w)) {
            throw DataError("checkpoint truncated");
        }
        return w;
    }
    void expect(const std::string& w) {
        const auto got = word();
        if (got != w) {
            throw DataError("checkpoint: expected '" + w + "', found '" + got + "'");
        }
    }
    long integer() {
        const auto w = word();
        char* end = nullptr;
        const long v = std::strtol(w.c_str(), &end, 10);
        if (*end != '\0') {
            throw DataError("checkpoint: bad integer '" + w + "'");
        }
        return v;
    }
    double real() {
        const auto w = word();
        char* end = nullptr;
        const double v = std::strtod(w.c_str(), &end);
        if (*end != '\0') {
            throw DataError("checkpoint: bad number '" + w + "'");
        }
        return v;
    }
    Eigen::MatrixXd matrix(long rows, long cols) {
        if (rows < 0 || cols < 0) {
            throw DataError("checkpoint: negative shape");
        }
        Eigen::MatrixXd m(rows, cols);
        for (long i = 0; i < rows; ++i) {
            for (long j = 0; j < cols; ++j) {
                m(i, j) = real();
            }
        }
        return m;
    }

private:
    std::istringstream in_;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::ostringstream ss;
    ss << "debias-checkpoint 1\n";
    ss << "config_hash " << (ckpt.config_hash.empty() ? "-" : ckpt.config_hash) << '\n';
    const auto& nz = ckpt.normalizer;
    ss << "normalizer " << nz.window << ' ' << (nz.rho_input ? 1 : 0) << ' ' << hexfloat(nz.in_mean) << ' '
       << hexfloat(nz.in_sd) << ' ' << nz.out_scale.size();
    for (double s : nz.out_scale) {
        ss << ' ' << hexfloat(s);
    }
    ss << '\n';
    const auto& layers = ckpt.base.layers();
    ss << "layers " << layers.size() << '\n';
    for (const auto& l : layers) {
        ss << "layer " << l.out_width() << ' ' << l.in_width() << ' '
           << (l.activation == Activation::Tanh ? "tanh" : "identity") << '\n';
        put_matrix(ss, l.weight);
        put_matrix(ss, l.bias.transpose());
    }
    ss << "adapters " << ckpt.adapters.size() << '\n';
    for (const auto& ad : ckpt.adapters) {
        ss << "adapter " << ad.rank() << ' ' << hexfloat(ad.alpha) << '\n';
        put_matrix(ss, ad.a);
        put_matrix(ss, ad.b);
    }
    ss << "end\n";
    return ss.str();
}

Checkpoint deserialize_checkpoint(const std::string& text) {
    TokenReader r(text);
    r.expect("debias-checkpoint");
    if (r.integer() != 1) {
        throw DataError("checkpoint: unsupported version");
    }
    Checkpoint c;
    r.expect("config_hash");
    c.config_hash = r.word();
    if (c.config_hash == "-") {
        c.config_hash.clear();
    }
    r.expect("normalizer");
    c.normalizer.window = static_cast<int>(r.integer());
    c.normalizer.rho_input = r.integer() != 0;
    c.normalizer.in_mean = r.real();
    c.normalizer.in_sd = r.real();
    c.normalizer.out_scale.resize(static_cast<std::size_t>(r.integer()));
    for (auto& s : c.normalizer.out_scale) {
        s = r.real();
    }
    r.expect("layers");
    const long n_layers = r.integer();
    std::vector<DenseLayer> layers;
    for (long l = 0; l < n_layers; ++l) {
        r.expect("layer");
        const long d = r.integer();
        const long k = r.integer();
        const auto act = r.word();
        DenseLayer layer;
        if (act == "tanh") {
            layer.activation = Activation::Tanh;
        } else if (act == "identity") {
            layer.activation = Activation::Identity;
        } else {
            throw DataError("checkpoint: unknown activation '" + act + "'");
        }
        layer.weight = r.matrix(d, k);
        layer.bias = r.matrix(1, d).transpose();
        layers.push_back(std::move(layer));
    }
    c.base = DenseNet(std::move(layers));
    r.expect("adapters");
    const long n_adapters = r.integer();
    for (long l = 0; l < n_adapters; ++l) {
        if (l >= n_layers) {
            throw DataError("checkpoint: more adapters than layers");
        }
        r.expect("adapter");
        const long rank = r.integer();
        LoraAdapter ad;
        ad.alpha = r.real();
        const auto& layer = c.base.layers()[static_cast<std::size_t>(l)];
        ad.a = r.matrix(rank, layer.in_width());
        ad.b = r.matrix(layer.out_width(), rank);
        c.adapters.push_back(std::move(ad));
    }
    r.expect("end");
    if (!c.adapters.empty()) {
        AdaptedNet check(c.base, c.adapters);  // validates shapes
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file(path));
}

}  // namespace debias
