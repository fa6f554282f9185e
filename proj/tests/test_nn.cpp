#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bapriv/attack.hpp"
#include "bapriv/nn.hpp"

using namespace bapriv;
using namespace bapriv::nn;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(rows, cols);
  for (auto& v : x.flat()) v = rng.uniform(-1.0, 1.0);
  return x;
}

NeuralNet small_classifier(std::size_t in, std::size_t out, std::uint64_t seed, double dropout = 0.2) {
  return NeuralNet(in,
                   {LayerSpec::dense(8), LayerSpec::batch_norm(), LayerSpec::relu(), LayerSpec::dropout(dropout),
                    LayerSpec::dense(out), LayerSpec::softmax()},
                   seed);
}

Dense& first_dense(NeuralNet& net) { return std::get<Dense>(net.layers().front()); }

}  // namespace

TEST(Net, RejectsMalformedArchitectures) {
  EXPECT_THROW(NeuralNet(3, {LayerSpec::dense(2)}, 1), ConfigError);
  EXPECT_THROW(NeuralNet(3, {LayerSpec::softmax(), LayerSpec::dense(2), LayerSpec::softmax()}, 1), ConfigError);
  EXPECT_THROW(NeuralNet(3, {LayerSpec::dense(0), LayerSpec::softmax()}, 1), ConfigError);
  EXPECT_THROW(NeuralNet(3, {LayerSpec::dropout(1.0), LayerSpec::softmax()}, 1), ConfigError);
  EXPECT_THROW(NeuralNet(0, {LayerSpec::softmax()}, 1), ConfigError);
}

TEST(Net, GlorotInitWithinLimits) {
  NeuralNet net(30, {LayerSpec::dense(50), LayerSpec::sigmoid()}, 3);
  const double limit = std::sqrt(6.0 / 80.0);
  for (double w : first_dense(net).weights.flat()) {
    EXPECT_LE(std::fabs(w), limit);
  }
  for (double b : first_dense(net).bias) EXPECT_EQ(b, 0.0);
}

TEST(Net, AttackArchitectureParameterCount) {
  const auto net = attack::build_attack_model({{128, 256, 256, 128}, 30, 33}, 1);
  EXPECT_EQ(net.total_params(), 143009u);
}

TEST(Softmax, ClosedFormCases) {
  NeuralNet net(2, {LayerSpec::softmax()}, 1);
  const auto equal = predict(net, std::vector<double>{0.7, 0.7});
  EXPECT_NEAR(equal[0], 0.5, 1e-15);
  EXPECT_NEAR(equal[1], 0.5, 1e-15);
  const auto p = predict(net, std::vector<double>{0.0, std::log(3.0)});
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);

  const auto net2 = small_classifier(5, 4, 2);
  const auto out = net2.infer(random_batch(20, 5, 3));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double sum = 0.0;
    for (double v : out.row(i)) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  NeuralNet sig(2, {LayerSpec::sigmoid()}, 1);
  EXPECT_THROW(predict(sig, std::vector<double>{0.0, 0.0}), ConfigError);
}

TEST(Loss, ClosedForms) {
  const Matrix uniform{{0.25, 0.25, 0.25, 0.25}};
  const Matrix target{{0, 0, 1, 0}};
  EXPECT_NEAR(compute_loss(uniform, target, LossKind::kCrossEntropy), std::log(4.0), 1e-15);
  EXPECT_EQ(compute_loss(target, target, LossKind::kMeanSquaredError), 0.0);

  NeuralNet net(3, {LayerSpec::dense(2), LayerSpec::sigmoid()}, 4);
  const auto x = random_batch(4, 3, 5);
  const Matrix y = net.infer(x);
  net.set_mode(Mode::kTraining);
  EXPECT_EQ(net.loss_and_grad(x, y, LossKind::kMeanSquaredError), 0.0);
  for (const auto& p : net.parameters()) {
    for (double g : p.grad) EXPECT_EQ(g, 0.0);
  }
}

TEST(Dropout, InferenceIgnoresRate) {
  auto a = small_classifier(4, 3, 7, 0.0);
  auto b = small_classifier(4, 3, 7, 0.6);
  const auto x = random_batch(6, 4, 8);
  EXPECT_EQ(a.infer(x), b.infer(x));
}

TEST(Dropout, TrainingPreservesExpectation) {
  const double rate = 0.3;
  NeuralNet net(1, {LayerSpec::dropout(rate), LayerSpec::sigmoid()}, 9);
  net.set_mode(Mode::kTraining);
  const Matrix x(10000, 1, 0.8);
  net.forward(x);
  const auto& mask = std::get<Dropout>(net.layers()[0]).mask;
  double sum = 0.0;
  for (double m : mask.flat()) {
    EXPECT_TRUE(m == 0.0 || std::fabs(m - 1.0 / (1.0 - rate)) < 1e-15);
    sum += m * 0.8;
  }
  EXPECT_NEAR(sum / 10000.0, 0.8, 0.008);
}

TEST(BatchNorm, TrainingNormalizesPerFeature) {
  NeuralNet net(3, {LayerSpec::batch_norm(), LayerSpec::sigmoid()}, 1);
  net.set_mode(Mode::kTraining);
  Matrix x = random_batch(50, 3, 10);
  for (std::size_t i = 0; i < 50; ++i) x(i, 1) = 5.0 + 3.0 * x(i, 1);
  net.forward(x);
  const auto& bn = std::get<BatchNorm>(net.layers()[0]);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < 50; ++i) mean += bn.normalized(i, j) / 50.0;
    for (std::size_t i = 0; i < 50; ++i) sq += (bn.normalized(i, j) - mean) * (bn.normalized(i, j) - mean) / 50.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq, 1.0, 1e-3);
  }
  // Running stats moved 1% of the way toward the batch statistics.
  EXPECT_NEAR(bn.running_mean[1], 0.01 * 5.0, 0.02);
}

TEST(BatchNorm, InferenceIsRowWise) {
  auto net = small_classifier(5, 3, 11);
  const auto x = random_batch(10, 5, 12);
  net.set_mode(Mode::kTraining);
  net.forward(random_batch(32, 5, 13));  // move running stats off their initial values
  net.set_mode(Mode::kInference);
  const auto batch = net.infer(x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto single = predict(net, x.row(i));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(batch(i, j), single[j]);
  }
}

TEST(Forward, ChecksInputWidth) {
  auto net = small_classifier(5, 3, 14);
  EXPECT_THROW(net.infer(Matrix(2, 4)), DimensionError);
  EXPECT_THROW(net.forward(Matrix(2, 6)), DimensionError);
}

TEST(Train, SeparableToyReachesFullAccuracy) {
  const Matrix x{{0.1, 0.2}, {0.2, 0.1}, {0.3, 0.3}, {0.15, 0.35},
                 {0.8, 0.9}, {0.9, 0.7}, {0.7, 0.8}, {0.85, 0.95}};
  const std::vector<std::size_t> labels{0, 0, 0, 0, 1, 1, 1, 1};
  const auto y = one_hot(labels, 2);
  NeuralNet net(2, {LayerSpec::dense(4), LayerSpec::relu(), LayerSpec::dense(2), LayerSpec::softmax()}, 15);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  cfg.optimizer.learning_rate = 0.01;
  cfg.seed = 16;
  const auto h = train(net, x, y, cfg);
  EXPECT_EQ(h.epochs.size(), 200u);
  EXPECT_EQ(argmax_accuracy(net.infer(x), y), 1.0);
  EXPECT_EQ(net.mode(), Mode::kInference);
}

TEST(Train, ZeroLearningRateLeavesWeightsAlone) {
  auto net = small_classifier(3, 2, 17, 0.0);
  const auto before = first_dense(net).weights;
  const auto x = random_batch(16, 3, 18);
  std::vector<std::size_t> labels(16);
  for (std::size_t i = 0; i < 16; ++i) labels[i] = i % 2;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.optimizer.learning_rate = 0.0;
  const auto h = train(net, x, one_hot(labels, 2), cfg);
  EXPECT_EQ(first_dense(net).weights, before);
  // Same batch contents, shuffled summation order: equal up to rounding.
  EXPECT_DOUBLE_EQ(h.epochs[0].train_loss, h.epochs[2].train_loss);
}

TEST(Train, DeterministicHistoryAndWeights) {
  const auto x = random_batch(40, 4, 19);
  std::vector<std::size_t> labels(40);
  for (std::size_t i = 0; i < 40; ++i) labels[i] = x(i, 0) > 0 ? 1 : 0;
  const auto y = one_hot(labels, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 20;
  auto a = small_classifier(4, 2, 21), b = small_classifier(4, 2, 21);
  const auto ha = train(a, x, y, cfg, std::make_pair(x, y));
  const auto hb = train(b, x, y, cfg, std::make_pair(x, y));
  EXPECT_EQ(history_to_json(ha), history_to_json(hb));
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(Train, EarlyStoppingHonoursPatience) {
  auto net = small_classifier(3, 2, 22, 0.0);
  const auto x = random_batch(8, 3, 23);
  const std::vector<std::size_t> labels{0, 1, 0, 1, 0, 1, 0, 1};
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.optimizer.learning_rate = 0.0;  // loss never improves after epoch 1
  cfg.early_stopping = {true, 1e-5, 3};
  const auto h = train(net, x, one_hot(labels, 2), cfg);
  EXPECT_TRUE(h.stopped_early);
  EXPECT_EQ(h.epochs.size(), 4u);
}

TEST(Train, DivergenceReportsEpoch) {
  NeuralNet net(2, {LayerSpec::dense(3), LayerSpec::dense(2), LayerSpec::sigmoid()}, 24);
  for (double& w : first_dense(net).weights.flat()) w = 1.0;  // 2 * 1e308 overflows
  Matrix x(4, 2, 1e308);
  Matrix y(4, 2, 0.5);
  TrainConfig cfg;
  cfg.loss = LossKind::kMeanSquaredError;
  cfg.epochs = 2;
  try {
    train(net, x, y, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 1);
  }
}

TEST(Train, RmsPropSingleStepMatchesHandUpdate) {
  NeuralNet net(1, {LayerSpec::dense(1), LayerSpec::sigmoid()}, 25);
  auto& d = first_dense(net);
  d.weights(0, 0) = 0.5;
  const Matrix x{{2.0}};
  const Matrix y{{1.0}};
  // y_hat = s(1), dL/dw = 2 (y_hat - 1) y_hat (1 - y_hat) * 2
  const double s = 1.0 / (1.0 + std::exp(-1.0));
  const double g = 2.0 * (s - 1.0) * s * (1.0 - s) * 2.0;
  const double a = 0.1 * g * g;
  const double expected = 0.5 - 0.001 * g / std::sqrt(a + 1e-8);
  TrainConfig cfg;
  cfg.loss = LossKind::kMeanSquaredError;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  train(net, x, y, cfg);
  EXPECT_NEAR(first_dense(net).weights(0, 0), expected, 1e-15);
}

TEST(Serialization, RoundTripIsBitwise) {
  auto net = small_classifier(6, 3, 26);
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto x = random_batch(30, 6, 27);
  std::vector<std::size_t> labels(30);
  for (std::size_t i = 0; i < 30; ++i) labels[i] = i % 3;
  train(net, x, one_hot(labels, 3), cfg);
  const auto path = std::filesystem::temp_directory_path() / "bapriv_nn_roundtrip.json";
  save(net, path);
  const auto back = load(path);
  EXPECT_EQ(back.infer(x), net.infer(x));
  EXPECT_EQ(to_json(back), to_json(net));
  ASSERT_TRUE(back.train_config().has_value());
  EXPECT_EQ(back.train_config()->epochs, 2);

  const auto text = to_json(net);
  EXPECT_THROW(from_json(text.substr(0, text.size() / 2)), DataError);
  EXPECT_THROW(back.infer(Matrix(1, 5)), DimensionError);
  std::filesystem::remove(path);
}
