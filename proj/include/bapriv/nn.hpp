#pragma once

// Feed-forward network engine: dense, batch-norm, ReLU, dropout and a
// softmax or sigmoid head, trained by backpropagation with RMSProp.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bapriv/matrix.hpp"
#include "bapriv/rng.hpp"

namespace bapriv::nn {

enum class LayerKind { kDense, kBatchNorm, kRelu, kDropout, kSoftmax, kSigmoid };

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t width = 0;  // dense only
  double rate = 0.0;      // dropout only

  static LayerSpec dense(std::size_t width) { return {LayerKind::kDense, width, 0.0}; }
  static LayerSpec batch_norm() { return {LayerKind::kBatchNorm, 0, 0.0}; }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0.0}; }
  static LayerSpec dropout(double rate) { return {LayerKind::kDropout, 0, rate}; }
  static LayerSpec softmax() { return {LayerKind::kSoftmax, 0, 0.0}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid, 0, 0.0}; }
};

const char* kind_name(LayerKind kind);

enum class Mode { kTraining, kInference };
enum class LossKind { kCrossEntropy, kMeanSquaredError };

struct Dense {
  Matrix weights;  // in x out
  std::vector<double> bias;
  Matrix grad_weights;
  std::vector<double> grad_bias;
  Matrix input;  // cached for backward
};

struct BatchNorm {
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.99;
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
  std::vector<double> grad_gamma, grad_beta;
  Matrix normalized;             // cached x-hat
  std::vector<double> inv_std;   // cached 1/sqrt(var + eps)
  bool cached_training = false;
};

struct Relu {
  Matrix input;
};

struct Dropout {
  double rate = 0.0;
  Matrix mask;  // 0 or 1/(1-rate); empty in inference mode
};

struct Softmax {
  Matrix output;
};

struct Sigmoid {
  Matrix output;
};

using Layer = std::variant<Dense, BatchNorm, Relu, Dropout, Softmax, Sigmoid>;

// View of one trainable tensor and its gradient.
struct ParamRef {
  std::span<double> value;
  std::span<double> grad;
};

struct RmsProp {
  double learning_rate = 0.001;
  double rho = 0.9;
  double epsilon = 1e-8;
};

struct EarlyStopping {
  bool enabled = false;
  double min_delta = 1e-5;
  int patience = 10;
};

struct TrainConfig {
  LossKind loss = LossKind::kCrossEntropy;
  RmsProp optimizer;
  std::size_t batch_size = 32;
  int epochs = 50;
  std::uint64_t seed = 0;
  EarlyStopping early_stopping;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

struct TrainingHistory {
  std::vector<EpochStats> epochs;
  bool stopped_early = false;
};

class NeuralNet {
 public:
  NeuralNet() = default;
  // Materializes weights: dense layers Glorot-uniform, biases zero,
  // batch-norm gamma 1 / beta 0 / running var 1.
  NeuralNet(std::size_t input_dim, const std::vector<LayerSpec>& layers, std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  LayerKind head() const { return specs_.back().kind; }

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }
  // Restarts the dropout mask stream.
  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  // Forward pass in the current mode. Training mode caches activations for
  // backward, samples dropout masks and updates batch-norm running stats.
  Matrix forward(const Matrix& batch);
  // Inference-mode pass that leaves the network untouched.
  Matrix infer(const Matrix& batch) const;

  // Mean loss over the batch; fills every layer's gradient buffers.
  double loss_and_grad(const Matrix& batch, const Matrix& targets, LossKind loss);

  std::vector<ParamRef> parameters();

  std::size_t total_params() const;
  std::size_t trainable_params() const;

  const std::optional<TrainConfig>& train_config() const { return train_config_; }
  void set_train_config(const TrainConfig& cfg) { train_config_ = cfg; }

 private:
  void backward(const Matrix& grad_output, bool fused_softmax_ce);

  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<LayerSpec> specs_;
  std::vector<Layer> layers_;
  Mode mode_ = Mode::kInference;
  Rng dropout_rng_{0};
  std::optional<TrainConfig> train_config_;
};

double compute_loss(const Matrix& outputs, const Matrix& targets, LossKind loss);
// Fraction of rows whose argmax matches the argmax of the one-hot target.
double argmax_accuracy(const Matrix& outputs, const Matrix& targets);
std::size_t argmax(std::span<const double> values);

Matrix one_hot(std::span<const std::size_t> labels, std::size_t n_classes);

// RMSProp over shuffled mini-batches. Leaves the network in inference mode.
TrainingHistory train(NeuralNet& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& cfg,
                      const std::optional<std::pair<Matrix, Matrix>>& validation = std::nullopt);

// Softmax-head inference for a single vector.
std::vector<double> predict(const NeuralNet& net, std::span<const double> vector);

std::string to_json(const NeuralNet& net);
NeuralNet from_json(const std::string& text);
void save(const NeuralNet& net, const std::filesystem::path& path);
NeuralNet load(const std::filesystem::path& path);

std::string history_to_json(const TrainingHistory& history);

}  // namespace bapriv::nn
