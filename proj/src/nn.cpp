#include "bapriv/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bapriv/error.hpp"
#include "bapriv/kernels.hpp"

namespace bapriv::nn {

using json = nlohmann::json;

const char* kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kBatchNorm: return "batch_norm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kSigmoid: return "sigmoid";
  }
  return "?";
}

namespace {

LayerKind kind_from_name(const std::string& name) {
  for (auto k : {LayerKind::kDense, LayerKind::kBatchNorm, LayerKind::kRelu, LayerKind::kDropout, LayerKind::kSoftmax,
                 LayerKind::kSigmoid}) {
    if (name == kind_name(k)) return k;
  }
  throw DataError("unknown layer kind '" + name + "'");
}

bool is_head(LayerKind k) { return k == LayerKind::kSoftmax || k == LayerKind::kSigmoid; }

void check_finite(const Matrix& m, const char* where) {
  for (double v : m.flat()) {
    if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite activation in ") + where, -1);
  }
}

// Overloaded-lambda helper for std::visit.
template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Matrix dense_forward(const Dense& layer, const Matrix& x) {
  Matrix out = kernels::matmul(x, layer.weights);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
  }
  return out;
}

Matrix batch_norm_infer(const BatchNorm& bn, const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double inv = 1.0 / std::sqrt(bn.running_var[j] + BatchNorm::kEpsilon);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      out(i, j) = bn.gamma[j] * (x(i, j) - bn.running_mean[j]) * inv + bn.beta[j];
    }
  }
  return out;
}

Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.flat()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix softmax_forward(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

Matrix sigmoid_forward(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.flat()[i];
    // Split by sign so exp never overflows.
    out.flat()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ConfigError("learning_rate must be a finite value >= 0");
  }
  if (!(optimizer.rho >= 0.0 && optimizer.rho < 1.0)) throw ConfigError("rmsprop rho must lie in [0, 1)");
  if (!(optimizer.epsilon > 0.0)) throw ConfigError("rmsprop epsilon must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (early_stopping.enabled && early_stopping.patience < 1) throw ConfigError("patience must be >= 1");
}

NeuralNet::NeuralNet(std::size_t input_dim, const std::vector<LayerSpec>& layers, std::uint64_t seed)
    : input_dim_(input_dim), specs_(layers), dropout_rng_(derive_seed(seed, 1)) {
  if (input_dim == 0) throw ConfigError("network input_dim must be >= 1");
  if (layers.empty() || !is_head(layers.back().kind)) {
    throw ConfigError("network must end in a softmax or sigmoid head");
  }
  Rng init(seed);
  std::size_t width = input_dim;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& spec = layers[li];
    if (is_head(spec.kind) && li + 1 != layers.size()) throw ConfigError("head layer must be the last layer");
    switch (spec.kind) {
      case LayerKind::kDense: {
        if (spec.width < 1) throw ConfigError("dense width must be >= 1");
        Dense d;
        d.weights = Matrix(width, spec.width);
        const double limit = std::sqrt(6.0 / static_cast<double>(width + spec.width));
        for (double& w : d.weights.flat()) w = init.uniform(-limit, limit);
        d.bias.assign(spec.width, 0.0);
        d.grad_weights = Matrix(width, spec.width);
        d.grad_bias.assign(spec.width, 0.0);
        layers_.emplace_back(std::move(d));
        width = spec.width;
        break;
      }
      case LayerKind::kBatchNorm: {
        BatchNorm bn;
        bn.gamma.assign(width, 1.0);
        bn.beta.assign(width, 0.0);
        bn.running_mean.assign(width, 0.0);
        bn.running_var.assign(width, 1.0);
        bn.grad_gamma.assign(width, 0.0);
        bn.grad_beta.assign(width, 0.0);
        layers_.emplace_back(std::move(bn));
        break;
      }
      case LayerKind::kRelu: layers_.emplace_back(Relu{}); break;
      case LayerKind::kDropout:
        if (!(spec.rate >= 0.0 && spec.rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
        layers_.emplace_back(Dropout{spec.rate, {}});
        break;
      case LayerKind::kSoftmax: layers_.emplace_back(Softmax{}); break;
      case LayerKind::kSigmoid: layers_.emplace_back(Sigmoid{}); break;
    }
  }
  output_dim_ = width;
}

Matrix NeuralNet::infer(const Matrix& batch) const {
  if (batch.cols() != input_dim_) {
    throw DimensionError("network expects " + std::to_string(input_dim_) + " inputs, got " +
                         std::to_string(batch.cols()));
  }
  Matrix x = batch;
  for (const auto& layer : layers_) {
    x = std::visit(Overloaded{
                       [&](const Dense& d) { return dense_forward(d, x); },
                       [&](const BatchNorm& bn) { return batch_norm_infer(bn, x); },
                       [&](const Relu&) { return relu_forward(x); },
                       [&](const Dropout&) { return x; },
                       [&](const Softmax&) { return softmax_forward(x); },
                       [&](const Sigmoid&) { return sigmoid_forward(x); },
                   },
                   layer);
  }
  check_finite(x, "inference");
  return x;
}

Matrix NeuralNet::forward(const Matrix& batch) {
  if (batch.cols() != input_dim_) {
    throw DimensionError("network expects " + std::to_string(input_dim_) + " inputs, got " +
                         std::to_string(batch.cols()));
  }
  const bool training = mode_ == Mode::kTraining;
  Matrix x = batch;
  for (auto& layer : layers_) {
    x = std::visit(
        Overloaded{
            [&](Dense& d) {
              d.input = x;
              return dense_forward(d, x);
            },
            [&](BatchNorm& bn) {
              bn.cached_training = training;
              const std::size_t n = x.rows();
              const std::size_t w = x.cols();
              bn.normalized = Matrix(n, w);
              bn.inv_std.assign(w, 0.0);
              Matrix out(n, w);
              for (std::size_t j = 0; j < w; ++j) {
                double mean, var;
                if (training) {
                  mean = 0.0;
                  for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
                  mean /= static_cast<double>(n);
                  var = 0.0;
                  for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
                  var /= static_cast<double>(n);
                  bn.running_mean[j] = BatchNorm::kMomentum * bn.running_mean[j] + (1.0 - BatchNorm::kMomentum) * mean;
                  bn.running_var[j] = BatchNorm::kMomentum * bn.running_var[j] + (1.0 - BatchNorm::kMomentum) * var;
                } else {
                  mean = bn.running_mean[j];
                  var = bn.running_var[j];
                }
                const double inv = 1.0 / std::sqrt(var + BatchNorm::kEpsilon);
                bn.inv_std[j] = inv;
                for (std::size_t i = 0; i < n; ++i) {
                  const double xh = (x(i, j) - mean) * inv;
                  bn.normalized(i, j) = xh;
                  out(i, j) = bn.gamma[j] * xh + bn.beta[j];
                }
              }
              return out;
            },
            [&](Relu& r) {
              r.input = x;
              return relu_forward(x);
            },
            [&](Dropout& dr) {
              if (!training || dr.rate == 0.0) {
                dr.mask = Matrix();
                return x;
              }
              dr.mask = Matrix(x.rows(), x.cols());
              const double keep = 1.0 / (1.0 - dr.rate);
              Matrix out = x;
              for (std::size_t i = 0; i < out.size(); ++i) {
                const double m = dropout_rng_.uniform() < dr.rate ? 0.0 : keep;
                dr.mask.flat()[i] = m;
                out.flat()[i] *= m;
              }
              return out;
            },
            [&](Softmax& s) {
              s.output = softmax_forward(x);
              return s.output;
            },
            [&](Sigmoid& s) {
              s.output = sigmoid_forward(x);
              return s.output;
            },
        },
        layer);
  }
  check_finite(x, "forward pass");
  return x;
}

void NeuralNet::backward(const Matrix& grad_output, bool fused_softmax_ce) {
  Matrix g = grad_output;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    auto& layer = layers_[li];
    if (fused_softmax_ce && li + 1 == layers_.size()) continue;  // g is already d loss / d logits
    g = std::visit(
        Overloaded{
            [&](Dense& d) {
              // Copy into the existing buffer: the optimizer holds spans over it.
              const Matrix gw = kernels::matmul_at_b(d.input, g);
              std::copy(gw.flat().begin(), gw.flat().end(), d.grad_weights.flat().begin());
              std::fill(d.grad_bias.begin(), d.grad_bias.end(), 0.0);
              for (std::size_t i = 0; i < g.rows(); ++i) {
                auto r = g.row(i);
                for (std::size_t j = 0; j < r.size(); ++j) d.grad_bias[j] += r[j];
              }
              return li == 0 ? Matrix() : kernels::matmul_a_bt(g, d.weights);
            },
            [&](BatchNorm& bn) {
              const std::size_t n = g.rows();
              const std::size_t w = g.cols();
              Matrix dx(n, w);
              for (std::size_t j = 0; j < w; ++j) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                  sum_g += g(i, j);
                  sum_gx += g(i, j) * bn.normalized(i, j);
                }
                bn.grad_beta[j] = sum_g;
                bn.grad_gamma[j] = sum_gx;
                const double scale = bn.gamma[j] * bn.inv_std[j];
                if (bn.cached_training) {
                  const double nn = static_cast<double>(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    dx(i, j) = scale * (g(i, j) - sum_g / nn - bn.normalized(i, j) * sum_gx / nn);
                  }
                } else {
                  for (std::size_t i = 0; i < n; ++i) dx(i, j) = scale * g(i, j);
                }
              }
              return dx;
            },
            [&](Relu& r) {
              Matrix dx = g;
              for (std::size_t i = 0; i < dx.size(); ++i) {
                if (!(r.input.flat()[i] > 0.0)) dx.flat()[i] = 0.0;
              }
              return dx;
            },
            [&](Dropout& dr) {
              if (dr.mask.empty()) return g;
              Matrix dx = g;
              for (std::size_t i = 0; i < dx.size(); ++i) dx.flat()[i] *= dr.mask.flat()[i];
              return dx;
            },
            [&](Softmax& s) {
              Matrix dx(g.rows(), g.cols());
              for (std::size_t i = 0; i < g.rows(); ++i) {
                auto y = s.output.row(i);
                auto gi = g.row(i);
                double dot = 0.0;
                for (std::size_t j = 0; j < y.size(); ++j) dot += gi[j] * y[j];
                for (std::size_t j = 0; j < y.size(); ++j) dx(i, j) = y[j] * (gi[j] - dot);
              }
              return dx;
            },
            [&](Sigmoid& s) {
              Matrix dx = g;
              for (std::size_t i = 0; i < dx.size(); ++i) {
                const double y = s.output.flat()[i];
                dx.flat()[i] *= y * (1.0 - y);
              }
              return dx;
            },
        },
        layer);
  }
}

double compute_loss(const Matrix& outputs, const Matrix& targets, LossKind loss) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
    throw DimensionError("outputs and targets differ in shape");
  }
  const auto n = static_cast<double>(outputs.rows());
  double total = 0.0;
  if (loss == LossKind::kCrossEntropy) {
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const double t = targets.flat()[i];
      if (t != 0.0) total -= t * std::log(std::max(outputs.flat()[i], std::numeric_limits<double>::min()));
    }
    return total / n;
  }
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const double e = outputs.flat()[i] - targets.flat()[i];
    total += e * e;
  }
  return total / static_cast<double>(outputs.size());
}

double NeuralNet::loss_and_grad(const Matrix& batch, const Matrix& targets, LossKind loss) {
  if (batch.rows() != targets.rows() || targets.cols() != output_dim_) {
    throw DimensionError("targets do not match batch rows and network output");
  }
  const Matrix out = forward(batch);
  const double value = compute_loss(out, targets, loss);
  Matrix grad(out.rows(), out.cols());
  const bool fused = loss == LossKind::kCrossEntropy && head() == LayerKind::kSoftmax;
  const auto n = static_cast<double>(out.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double y = out.flat()[i];
    const double t = targets.flat()[i];
    if (fused) {
      grad.flat()[i] = (y - t) / n;
    } else if (loss == LossKind::kCrossEntropy) {
      grad.flat()[i] = t == 0.0 ? 0.0 : -t / (std::max(y, std::numeric_limits<double>::min()) * n);
    } else {
      grad.flat()[i] = 2.0 * (y - t) / static_cast<double>(out.size());
    }
  }
  backward(grad, fused);
  return value;
}

std::vector<ParamRef> NeuralNet::parameters() {
  std::vector<ParamRef> out;
  for (auto& layer : layers_) {
    if (auto* d = std::get_if<Dense>(&layer)) {
      out.push_back({d->weights.flat(), d->grad_weights.flat()});
      out.push_back({d->bias, d->grad_bias});
    } else if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      out.push_back({bn->gamma, bn->grad_gamma});
      out.push_back({bn->beta, bn->grad_beta});
    }
  }
  return out;
}

std::size_t NeuralNet::trainable_params() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<Dense>(&layer)) n += d->weights.size() + d->bias.size();
    if (const auto* bn = std::get_if<BatchNorm>(&layer)) n += bn->gamma.size() + bn->beta.size();
  }
  return n;
}

std::size_t NeuralNet::total_params() const {
  std::size_t n = trainable_params();
  for (const auto& layer : layers_) {
    if (const auto* bn = std::get_if<BatchNorm>(&layer)) n += bn->running_mean.size() + bn->running_var.size();
  }
  return n;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double argmax_accuracy(const Matrix& outputs, const Matrix& targets) {
  if (outputs.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < outputs.rows(); ++i) hits += argmax(outputs.row(i)) == argmax(targets.row(i));
  return static_cast<double>(hits) / static_cast<double>(outputs.rows());
}

Matrix one_hot(std::span<const std::size_t> labels, std::size_t n_classes) {
  Matrix out(labels.size(), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) throw DimensionError("label out of range");
    out(i, labels[i]) = 1.0;
  }
  return out;
}

TrainingHistory train(NeuralNet& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& cfg,
                      const std::optional<std::pair<Matrix, Matrix>>& validation) {
  cfg.validate();
  if (inputs.rows() == 0) throw DataError("cannot train on an empty dataset");
  if (inputs.rows() != targets.rows()) throw DimensionError("inputs and targets differ in row count");
  const bool classifier = net.head() == LayerKind::kSoftmax;

  net.set_train_config(cfg);
  net.reseed_dropout(derive_seed(cfg.seed, 1));
  Rng shuffle_rng(cfg.seed);

  auto params = net.parameters();
  std::vector<std::vector<double>> accum;
  for (const auto& p : params) accum.emplace_back(p.value.size(), 0.0);

  TrainingHistory history;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const std::size_t n = inputs.rows();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    net.set_mode(Mode::kTraining);
    auto order = shuffle_rng.permutation(n);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    try {
      for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        const std::size_t stop = std::min(n, start + cfg.batch_size);
        std::span<const std::size_t> idx(order.data() + start, stop - start);
        const Matrix xb = inputs.select_rows(idx);
        const Matrix yb = targets.select_rows(idx);
        const double loss = net.loss_and_grad(xb, yb, cfg.loss);
        if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss", epoch);
        loss_sum += loss * static_cast<double>(idx.size());
        if (classifier) {
          // The head's cached output is this batch's prediction.
          const auto& sm = std::get<Softmax>(net.layers().back());
          for (std::size_t i = 0; i < idx.size(); ++i) hits += argmax(sm.output.row(i)) == argmax(yb.row(i));
        }
        const auto& o = cfg.optimizer;
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
          auto& a = accum[pi];
          auto w = params[pi].value;
          auto g = params[pi].grad;
          for (std::size_t j = 0; j < w.size(); ++j) {
            a[j] = o.rho * a[j] + (1.0 - o.rho) * g[j] * g[j];
            w[j] -= o.learning_rate * g[j] / std::sqrt(a[j] + o.epsilon);
          }
        }
      }
    } catch (const DivergenceError& e) {
      net.set_mode(Mode::kInference);
      throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch), epoch);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    if (classifier) stats.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
    net.set_mode(Mode::kInference);
    if (validation && validation->first.rows() > 0) {
      const Matrix out = net.infer(validation->first);
      stats.val_loss = compute_loss(out, validation->second, cfg.loss);
      if (classifier) stats.val_accuracy = argmax_accuracy(out, validation->second);
    }
    history.epochs.push_back(stats);

    if (cfg.early_stopping.enabled) {
      const double monitored = stats.val_loss.value_or(stats.train_loss);
      if (monitored < best - cfg.early_stopping.min_delta) {
        best = monitored;
        since_best = 0;
      } else if (++since_best >= cfg.early_stopping.patience) {
        history.stopped_early = true;
        break;
      }
    }
  }
  net.set_mode(Mode::kInference);
  return history;
}

std::vector<double> predict(const NeuralNet& net, std::span<const double> vector) {
  if (net.head() != LayerKind::kSoftmax) throw ConfigError("predict needs a softmax head");
  Matrix one(1, vector.size(), std::vector<double>(vector.begin(), vector.end()));
  return net.infer(one).values();
}

// ---- serialization ----

namespace {

json config_to_json(const TrainConfig& cfg) {
  return json{{"loss", cfg.loss == LossKind::kCrossEntropy ? "cross_entropy" : "mean_squared_error"},
              {"optimizer",
               {{"name", "rmsprop"},
                {"learning_rate", cfg.optimizer.learning_rate},
                {"rho", cfg.optimizer.rho},
                {"epsilon", cfg.optimizer.epsilon}}},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"seed", cfg.seed},
              {"early_stopping",
               {{"enabled", cfg.early_stopping.enabled},
                {"min_delta", cfg.early_stopping.min_delta},
                {"patience", cfg.early_stopping.patience}}}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.loss = j.at("loss").get<std::string>() == "cross_entropy" ? LossKind::kCrossEntropy : LossKind::kMeanSquaredError;
  cfg.optimizer.learning_rate = j.at("optimizer").at("learning_rate").get<double>();
  cfg.optimizer.rho = j.at("optimizer").at("rho").get<double>();
  cfg.optimizer.epsilon = j.at("optimizer").at("epsilon").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.early_stopping.enabled = j.at("early_stopping").at("enabled").get<bool>();
  cfg.early_stopping.min_delta = j.at("early_stopping").at("min_delta").get<double>();
  cfg.early_stopping.patience = j.at("early_stopping").at("patience").get<int>();
  return cfg;
}

template <typename T>
void assign_checked(std::vector<double>& dst, const json& src, std::size_t expected, const char* what) {
  auto values = src.get<std::vector<T>>();
  if (values.size() != expected) throw DataError(std::string("model file: wrong size for ") + what);
  dst.assign(values.begin(), values.end());
}

}  // namespace

std::string to_json(const NeuralNet& net) {
  json layers = json::array();
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& spec = net.specs()[i];
    json l{{"kind", kind_name(spec.kind)}};
    std::visit(Overloaded{
                   [&](const Dense& d) {
                     l["width"] = spec.width;
                     l["weights"] = d.weights.values();
                     l["bias"] = d.bias;
                   },
                   [&](const BatchNorm& bn) {
                     l["gamma"] = bn.gamma;
                     l["beta"] = bn.beta;
                     l["running_mean"] = bn.running_mean;
                     l["running_var"] = bn.running_var;
                   },
                   [&](const Dropout& d) { l["rate"] = d.rate; },
                   [&](const auto&) {},
               },
               net.layers()[i]);
    layers.push_back(std::move(l));
  }
  json j{{"format", "bapriv-net"},
         {"version", 1},
         {"input_dim", net.input_dim()},
         {"output_dim", net.output_dim()},
         {"layers", std::move(layers)}};
  if (net.train_config()) j["train_config"] = config_to_json(*net.train_config());
  return j.dump();
}

NeuralNet from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "bapriv-net") throw DataError("not a network file");
    std::vector<LayerSpec> specs;
    for (const auto& l : j.at("layers")) {
      LayerSpec s;
      s.kind = kind_from_name(l.at("kind").get<std::string>());
      if (s.kind == LayerKind::kDense) s.width = l.at("width").get<std::size_t>();
      if (s.kind == LayerKind::kDropout) s.rate = l.at("rate").get<double>();
      specs.push_back(s);
    }
    NeuralNet net(j.at("input_dim").get<std::size_t>(), specs, 0);
    const auto& jl = j.at("layers");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      auto& layer = net.layers()[i];
      if (auto* d = std::get_if<Dense>(&layer)) {
        std::vector<double> w;
        assign_checked<double>(w, jl[i].at("weights"), d->weights.size(), "dense weights");
        d->weights = Matrix(d->weights.rows(), d->weights.cols(), std::move(w));
        assign_checked<double>(d->bias, jl[i].at("bias"), d->bias.size(), "dense bias");
      } else if (auto* bn = std::get_if<BatchNorm>(&layer)) {
        const std::size_t w = bn->gamma.size();
        assign_checked<double>(bn->gamma, jl[i].at("gamma"), w, "gamma");
        assign_checked<double>(bn->beta, jl[i].at("beta"), w, "beta");
        assign_checked<double>(bn->running_mean, jl[i].at("running_mean"), w, "running_mean");
        assign_checked<double>(bn->running_var, jl[i].at("running_var"), w, "running_var");
        for (double v : bn->running_var) {
          if (!std::isfinite(v) || v < 0.0) throw DataError("model file: invalid running variance");
        }
      }
    }
    if (j.contains("train_config")) net.set_train_config(config_from_json(j.at("train_config")));
    if (net.output_dim() != j.at("output_dim").get<std::size_t>()) throw DataError("model file: output_dim mismatch");
    return net;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("invalid architecture in model file: ") + e.what());
  }
}

void save(const NeuralNet& net, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(net) << '\n';
}

NeuralNet load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string history_to_json(const TrainingHistory& history) {
  json epochs = json::array();
  for (const auto& e : history.epochs) {
    json j{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.train_accuracy) j["train_accuracy"] = *e.train_accuracy;
    if (e.val_loss) j["val_loss"] = *e.val_loss;
    if (e.val_accuracy) j["val_accuracy"] = *e.val_accuracy;
    epochs.push_back(std::move(j));
  }
  return json{{"epochs", std::move(epochs)}, {"stopped_early", history.stopped_early}}.dump(2);
}

}  // namespace bapriv::nn
