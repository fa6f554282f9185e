#include "bapriv/attack.hpp"

#include <algorithm>
#include <cmath>

#include "bapriv/kernels.hpp"
#include "bapriv/rng.hpp"

namespace bapriv::attack {

namespace {

// In-place Cholesky of a symmetric positive definite matrix (lower factor).
void cholesky(Matrix& a) {
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(a(i, i)));
  const double tol = 1e-12 * std::max(1.0, max_diag);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t p = 0; p < j; ++p) diag -= a(j, p) * a(j, p);
    if (!(diag > tol)) {
      throw SingularMatrixError("R R^T is singular: projection matrix is rank deficient");
    }
    const double l = std::sqrt(diag);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t p = 0; p < j; ++p) s -= a(i, p) * a(j, p);
      a(i, j) = s / l;
    }
  }
}

void cholesky_solve(const Matrix& l, std::span<double> b) {
  const std::size_t n = l.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t p = 0; p < i; ++p) s -= l(i, p) * b[p];
    b[i] = s / l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t p = i + 1; p < n; ++p) s -= l(p, i) * b[p];
    b[i] = s / l(i, i);
  }
}

}  // namespace

Matrix min_norm_reconstruct(const Matrix& projected, const RandomMatrix& matrix) {
  if (projected.cols() != matrix.k) throw DimensionError("projected width does not match k");
  const Matrix r = matrix.as_matrix();
  Matrix gram = kernels::matmul_a_bt(r, r);
  cholesky(gram);
  const double scale = projection_scale(matrix);

  Matrix coeffs(projected.rows(), matrix.k);
  for (std::size_t i = 0; i < projected.rows(); ++i) {
    auto c = coeffs.row(i);
    auto x = projected.row(i);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = x[j] / scale;
    cholesky_solve(gram, c);
  }
  return kernels::matmul(coeffs, r);
}

std::vector<double> min_norm_reconstruct(std::span<const double> x_prime, const RandomMatrix& matrix) {
  Matrix one(1, x_prime.size(), std::vector<double>(x_prime.begin(), x_prime.end()));
  return min_norm_reconstruct(one, matrix).values();
}

Profile min_norm_reconstruct(const ProjectedProfile& projected, const RandomMatrix& matrix) {
  return Profile{projected.user_id, min_norm_reconstruct(projected.samples, matrix), {}};
}

const char* mode_name(KnowledgeMode mode) {
  return mode == KnowledgeMode::kDistributionOnly ? "distribution_only" : "known_matrix";
}

KnowledgeMode mode_from_name(const std::string& name) {
  if (name == "distribution_only") return KnowledgeMode::kDistributionOnly;
  if (name == "known_matrix") return KnowledgeMode::kKnownMatrix;
  throw ConfigError("unknown attack knowledge mode '" + name + "'");
}

AttackCorpus build_attack_corpus(const std::vector<Profile>& attack_profiles, const AttackKnowledge& knowledge,
                                 std::size_t k, std::uint64_t seed) {
  if (attack_profiles.empty()) throw DataError("attack corpus needs at least one attack profile");
  if (knowledge.matrices_per_profile < 1) throw ConfigError("matrices_per_profile must be >= 1");
  const bool known = knowledge.mode == KnowledgeMode::kKnownMatrix;
  if (known && knowledge.known_matrices.empty()) throw ConfigError("known_matrix mode needs the victims' matrices");

  const std::size_t d = attack_profiles.front().d();
  std::vector<Matrix> inputs, targets;
  AttackCorpus corpus;
  for (std::size_t i = 0; i < attack_profiles.size(); ++i) {
    const auto& p = attack_profiles[i];
    if (p.d() != d) throw DimensionError("attack profiles disagree on feature count");
    for (std::size_t j = 0; j < knowledge.matrices_per_profile; ++j) {
      const std::size_t slot = i * knowledge.matrices_per_profile + j;
      RandomMatrix r = known ? knowledge.known_matrices[slot % knowledge.known_matrices.size()]
                             : sample_matrix(k, d, knowledge.phi, derive_seed(seed, slot));
      if (r.d != d) throw DimensionError("attack matrix does not match the profile dimension");
      inputs.push_back(project(p.samples, r));
      targets.push_back(p.samples);
      corpus.matrix_ids.insert(corpus.matrix_ids.end(), p.m(), r.matrix_id);
    }
  }
  corpus.inputs = Matrix::vstack(inputs);
  corpus.targets = Matrix::vstack(targets);
  return corpus;
}

nn::NeuralNet build_attack_model(const AttackModelSpec& spec, std::uint64_t seed) {
  if (spec.input_dim < 1 || spec.output_dim < 1) throw ConfigError("attack model dimensions must be >= 1");
  std::vector<nn::LayerSpec> layers;
  for (auto w : spec.stack_widths) {
    layers.push_back(nn::LayerSpec::dense(w));
    layers.push_back(nn::LayerSpec::batch_norm());
    layers.push_back(nn::LayerSpec::relu());
  }
  layers.push_back(nn::LayerSpec::dense(spec.output_dim));
  layers.push_back(nn::LayerSpec::sigmoid());
  return nn::NeuralNet(spec.input_dim, layers, seed);
}

nn::TrainConfig default_attack_config(std::uint64_t seed) {
  nn::TrainConfig cfg;
  cfg.loss = nn::LossKind::kMeanSquaredError;
  cfg.epochs = 50;
  cfg.seed = seed;
  cfg.early_stopping = {true, 1e-5, 10};
  return cfg;
}

AttackTraining train_attack_model(const AttackCorpus& corpus, const AttackModelSpec& spec, const nn::TrainConfig& cfg,
                                  double train_fraction, std::uint64_t split_seed) {
  if (corpus.inputs.rows() == 0) throw DataError("attack corpus is empty");
  if (cfg.loss != nn::LossKind::kMeanSquaredError) throw ConfigError("the attack model is trained with MSE");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must lie in (0, 1]");
  if (corpus.inputs.cols() != spec.input_dim || corpus.targets.cols() != spec.output_dim) {
    throw DimensionError("attack corpus does not match the model dimensions");
  }

  const std::size_t n = corpus.inputs.rows();
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n);
  Rng rng(split_seed);
  auto order = rng.permutation(n);
  std::vector<std::size_t> tr(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> va(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());

  AttackTraining out{build_attack_model(spec, derive_seed(cfg.seed, 2)), {}};
  std::optional<std::pair<Matrix, Matrix>> validation;
  if (!va.empty()) validation.emplace(corpus.inputs.select_rows(va), corpus.targets.select_rows(va));
  out.history = nn::train(out.net, corpus.inputs.select_rows(tr), corpus.targets.select_rows(tr), cfg, validation);
  return out;
}

std::vector<Profile> recover_profiles(const nn::NeuralNet& attack_net, const std::vector<ProjectedProfile>& victims) {
  std::vector<Profile> out;
  for (const auto& v : victims) {
    if (v.samples.cols() != attack_net.input_dim()) {
      throw DimensionError("victim '" + v.user_id + "' has k=" + std::to_string(v.samples.cols()) +
                           " but the attack model expects " + std::to_string(attack_net.input_dim()));
    }
    out.push_back(Profile{v.user_id, attack_net.infer(v.samples), {}});
  }
  return out;
}

}  // namespace bapriv::attack
