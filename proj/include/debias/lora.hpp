#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "debias/error.hpp"

namespace debias {

enum class Activation { Tanh, Identity };

struct DenseLayer {
    Eigen::MatrixXd weight;  // d x k
    Eigen::VectorXd bias;    // d
    Activation activation = Activation::Tanh;

    Eigen::Index in_width() const { return weight.cols(); }
    Eigen::Index out_width() const { return weight.rows(); }
};

// Feed-forward regression network. Layer shapes chain and the last layer is
// linear.
class DenseNet {
public:
    DenseNet() = default;
    explicit DenseNet(std::vector<DenseLayer> layers);

    // widths = {input, hidden..., output}; tanh hidden layers, Xavier-normal
    // weights, zero biases.
    static DenseNet random(const std::vector<int>& widths, std::uint64_t seed);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& mutable_layers() { return layers_; }
    Eigen::Index input_width() const;
    Eigen::Index output_width() const;
    std::size_t weight_count() const;     // weight-matrix entries only
    std::size_t parameter_count() const;  // weights + biases
    // Digest of all shapes and parameter bits.
    std::string checksum() const;

private:
    std::vector<DenseLayer> layers_;
};

struct LoraAdapter {
    Eigen::MatrixXd a;  // r x k, down-projection
    Eigen::MatrixXd b;  // d x r, up-projection
    double alpha = 1.0;

    Eigen::Index rank() const { return a.rows(); }
    double scale() const { return alpha / static_cast<double>(rank()); }
    std::size_t parameter_count() const { return static_cast<std::size_t>(a.size() + b.size()); }
};

// Frozen base network plus one adapter per layer.
class AdaptedNet {
public:
    AdaptedNet(DenseNet base, std::vector<LoraAdapter> adapters);

    const DenseNet& base() const { return base_; }
    const std::vector<LoraAdapter>& adapters() const { return adapters_; }
    std::vector<LoraAdapter>& mutable_adapters() { return adapters_; }

    std::size_t trainable_parameters() const;
    // trainable / base weight entries
    double trainable_fraction() const;

private:
    DenseNet base_;
    std::vector<LoraAdapter> adapters_;
};

// Single-input forward pass. Throws ShapeError on width mismatch.
Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x);
Eigen::VectorXd forward(const AdaptedNet& net, const Eigen::VectorXd& x);
// Column-per-example batch forward.
Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& xs);
Eigen::MatrixXd forward_batch(const AdaptedNet& net, const Eigen::MatrixXd& xs);

// A_ij ~ Normal(0, 1/rank), B = 0. Hidden layers require rank < min(d, k);
// the output head uses min(rank, d) since its output width can be 1 or 2.
AdaptedNet attach_lora(const DenseNet& base, int rank, double alpha, std::uint64_t seed);
inline AdaptedNet attach_lora(const DenseNet& base, int rank, std::uint64_t seed) {
    return attach_lora(base, rank, static_cast<double>(rank), seed);
}

// W' = W0 + scale * B * A for every layer.
DenseNet merge_lora(const AdaptedNet& adapted);

// Column-per-example supervised data.
struct Samples {
    Eigen::MatrixXd inputs;   // k x n
    Eigen::MatrixXd targets;  // m x n

    Eigen::Index size() const { return inputs.cols(); }
    Samples subset(std::span<const Eigen::Index> columns) const;
};

// Mean over examples and outputs of the squared error.
double mse(const DenseNet& net, const Samples& data);
double mse(const AdaptedNet& net, const Samples& data);

struct AdapterGradients {
    std::vector<Eigen::MatrixXd> a;
    std::vector<Eigen::MatrixXd> b;
    double loss = 0.0;
};

struct DenseGradients {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;
    double loss = 0.0;
};

// Reverse-mode gradients of the MSE loss with respect to adapter entries only.
AdapterGradients grad(const AdaptedNet& adapted, const Samples& batch);
// Full-network gradients, used to pretrain a base network.
DenseGradients grad(const DenseNet& net, const Samples& batch);

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
    double learning_rate = 0.01;
    int batch_size = 64;
    int max_epochs = 50;
    int patience = 5;
    int eval_every = 500;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Sgd;
    double momentum = 0.0;  // SGD only

    void validate() const;
};

struct EvalRecord {
    long step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;

    bool operator==(const EvalRecord&) const = default;
};

struct TrainReport {
    std::vector<EvalRecord> evals;
    long best_step = 0;
    bool stopped_early = false;

    double initial_val_loss() const { return evals.front().val_loss; }
    double best_val_loss() const;
    bool operator==(const TrainReport&) const = default;
};

class DivergenceError : public TrainingError {
public:
    DivergenceError(const std::string& what, TrainReport report)
        : TrainingError(what), report_(std::move(report)) {}
    const TrainReport& report() const { return report_; }

private:
    TrainReport report_;
};

template <typename Net>
struct TrainResult {
    Net net;
    TrainReport report;
};

// LoRA SFT: only adapter entries move; the returned net is the best-validation
// snapshot. An evaluation happens at step 0 and every eval_every steps; after
// `patience` evaluations without improvement training stops.
TrainResult<AdaptedNet> train_sft(const AdaptedNet& adapted, const Samples& train, const Samples& val,
                                  const TrainConfig& cfg);

// Same loop with every weight and bias trainable.
TrainResult<DenseNet> train_dense(const DenseNet& net, const Samples& train, const Samples& val,
                                  const TrainConfig& cfg);

void write_train_report_csv(const TrainReport& report, const std::string& path);

// Maps raw histories to network features and network outputs back to
// forecast units.
struct InputNormalizer {
    int window = 8;          // most recent observations used
    bool rho_input = false;  // append the process persistence as a feature
    double in_mean = 0.0;
    double in_sd = 1.0;
    std::vector<double> out_scale{1.0, 1.0};

    Eigen::Index feature_width() const { return window + (rho_input ? 1 : 0); }
    Eigen::VectorXd features(std::span<const double> history, double rho = 0.0) const;
    std::vector<double> denormalize(const Eigen::VectorXd& output) const;
    Eigen::VectorXd normalize_target(std::span<const double> target) const;
};

// A trained model as stored on disk: base weights, optional adapters,
// normalizer and the hash of the config that produced it.
struct Checkpoint {
    DenseNet base;
    std::vector<LoraAdapter> adapters;
    InputNormalizer normalizer;
    std::string config_hash;

    bool adapted() const { return !adapters.empty(); }
    AdaptedNet adapted_net() const { return AdaptedNet(base, adapters); }
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace debias
