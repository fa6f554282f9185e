#pragma once

// Profile-reconstruction attacks against projected profiles: the
// minimum-norm linear preimage and a learned inversion network.

#include <cstdint>
#include <string>
#include <vector>

#include "bapriv/dataio.hpp"
#include "bapriv/nn.hpp"
#include "bapriv/projection.hpp"

namespace bapriv::attack {

// x_hat = R^T (R R^T)^{-1} x', after dividing out the projection scale so
// that R x_hat reproduces the unscaled projection. Throws
// SingularMatrixError when R R^T is not positive definite.
std::vector<double> min_norm_reconstruct(std::span<const double> x_prime, const RandomMatrix& matrix);
Matrix min_norm_reconstruct(const Matrix& projected, const RandomMatrix& matrix);
Profile min_norm_reconstruct(const ProjectedProfile& projected, const RandomMatrix& matrix);

enum class KnowledgeMode { kDistributionOnly, kKnownMatrix };

const char* mode_name(KnowledgeMode mode);
KnowledgeMode mode_from_name(const std::string& name);

struct AttackKnowledge {
  KnowledgeMode mode = KnowledgeMode::kDistributionOnly;
  double phi = kDefaultPhi;
  std::size_t matrices_per_profile = 1;
  std::vector<RandomMatrix> known_matrices;  // victims' matrices, known_matrix mode only
};

struct AttackCorpus {
  Matrix inputs;   // projected rows
  Matrix targets;  // matching plain rows
  std::vector<std::string> matrix_ids;  // one per row
};

// Projects every attack profile with matrices_per_profile matrices: fresh
// draws from the public distribution, or the victims' matrices assigned
// round-robin when they are known.
AttackCorpus build_attack_corpus(const std::vector<Profile>& attack_profiles, const AttackKnowledge& knowledge,
                                 std::size_t k, std::uint64_t seed);

struct AttackModelSpec {
  std::vector<std::size_t> stack_widths{128, 256, 256, 128};
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
};

// dense -> batch-norm -> ReLU stacks, then dense(d) -> sigmoid.
nn::NeuralNet build_attack_model(const AttackModelSpec& spec, std::uint64_t seed);

// Defaults: MSE, RMSProp(0.001), 50 epochs, early stop after 10 epochs
// without a 1e-5 improvement in validation loss.
nn::TrainConfig default_attack_config(std::uint64_t seed);

struct AttackTraining {
  nn::NeuralNet net;
  nn::TrainingHistory history;
};

AttackTraining train_attack_model(const AttackCorpus& corpus, const AttackModelSpec& spec, const nn::TrainConfig& cfg,
                                  double train_fraction = 0.8, std::uint64_t split_seed = 0);

std::vector<Profile> recover_profiles(const nn::NeuralNet& attack_net, const std::vector<ProjectedProfile>& victims);

}  // namespace bapriv::attack
