#pragma once

// Behavioral-authentication verifier: classifier construction, enrollment,
// claim verification, FRR/FAR measurement and the rekey/refresh workflow.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bapriv/dataio.hpp"
#include "bapriv/nn.hpp"
#include "bapriv/projection.hpp"

namespace bapriv::auth {

enum class Variant { kPlain, kPrivacyPreserving };

struct BaClassifierSpec {
  Variant variant = Variant::kPrivacyPreserving;
  std::vector<std::size_t> stack_widths;
  double dropout_rate = 0.1;
  std::size_t n_classes = 2;

  // 128-256-512-256-128 stacks, dropout 0.1.
  static BaClassifierSpec plain(std::size_t n_classes);
  // 64-128-64 stacks, dropout 0.1.
  static BaClassifierSpec privacy_preserving(std::size_t n_classes);

  void validate() const;
};

// Each stack is dense -> batch-norm -> ReLU -> dropout; then dense(N) -> softmax.
nn::NeuralNet build_classifier(const BaClassifierSpec& spec, std::size_t input_dim, std::uint64_t seed);

enum class PolicyMode { kMajorityArgmax, kMeanProbability };

struct VerificationPolicy {
  PolicyMode mode = PolicyMode::kMajorityArgmax;
  double tau = 0.5;
  void validate() const;
};

// Stable user id <-> class index map (sorted by user id).
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<std::string> users);

  std::size_t size() const { return users_.size(); }
  const std::vector<std::string>& users() const { return users_; }
  std::optional<std::size_t> find(const std::string& user) const;
  std::size_t index(const std::string& user) const;  // throws DataError when unknown

  std::string to_json() const;
  static LabelMap from_json(const std::string& text);

 private:
  std::vector<std::string> users_;
};

// A user's rows as the verifier sees them: plain or projected samples.
struct LabeledSet {
  std::string user_id;
  Matrix samples;
};

LabeledSet labeled(const Profile& profile);
LabeledSet labeled(const ProjectedProfile& profile);

struct Enrollment {
  nn::NeuralNet net;
  LabelMap labels;
  nn::TrainingHistory history;
};

struct EnrollOptions {
  double train_fraction = 0.8;  // remainder is validation
  std::uint64_t split_seed = 0;
  std::uint64_t init_seed = 0;
};

Enrollment enroll(const std::vector<LabeledSet>& sets, const BaClassifierSpec& spec, const nn::TrainConfig& cfg,
                  const EnrollOptions& options = {});

struct Claim {
  std::string claimed_user;
  std::string true_user;  // ground truth for reporting
  Matrix samples;
};

struct ClaimResult {
  std::string claimed_user;
  bool accept = false;
  double score = 0.0;
  std::vector<std::vector<double>> per_sample;
};

ClaimResult verify(const nn::NeuralNet& net, const LabelMap& labels, const std::string& claimed_user,
                   const Matrix& samples, const VerificationPolicy& policy);

struct ErrorRates {
  // Claim-level rates (the verifier's accept/reject decisions).
  double frr = 0.0;
  double far = 0.0;
  std::size_t valid_claims = 0;
  std::size_t false_rejects = 0;
  std::size_t invalid_claims = 0;
  std::size_t false_accepts = 0;
  // Per-sample rates: fraction of rows whose argmax disagrees (valid) or
  // agrees (invalid) with the claimed identity.
  double sample_frr = 0.0;
  double sample_far = 0.0;
  std::size_t valid_samples = 0;
  std::size_t invalid_samples = 0;
};

// Either claim set may be empty, but not both.
ErrorRates measure_error_rates(const nn::NeuralNet& net, const LabelMap& labels, const std::vector<Claim>& valid,
                               const std::vector<Claim>& invalid, const VerificationPolicy& policy);

// Self-claims: each user's rows chunked into claims of claim_size rows
// (the last chunk takes the remainder; 0 means one claim per user).
std::vector<Claim> make_valid_claims(const std::vector<LabeledSet>& sets, std::size_t claim_size);
// Same chunks, each relabeled with another user's identity through a seeded
// derangement of the users.
std::vector<Claim> make_invalid_claims(const std::vector<LabeledSet>& sets, std::size_t claim_size,
                                       std::uint64_t seed);

struct UnusabilityReport {
  ErrorRates rates;              // valid set = correct identity, wrong matrix
  double acceptance = 0.0;       // claim-level acceptance of wrong-matrix claims
  double sample_acceptance = 0.0;
};

// Held-out plain profiles are projected with fresh matrices (one per user,
// keyed by user id) and submitted under their true identity.
UnusabilityReport wrong_matrix_trial(const nn::NeuralNet& net, const LabelMap& labels,
                                     const std::vector<Profile>& held_out,
                                     const std::map<std::string, RandomMatrix>& fresh_matrices,
                                     const VerificationPolicy& policy, std::size_t claim_size);

enum class RefreshStart {
  // Re-draw the first dense layer (the weights applied to projected
  // features), keep every other trained weight, then update all of them.
  kResetInputLayer,
  // Continue from every existing weight unchanged.
  kWarm,
};

struct RefreshInputs {
  std::vector<Profile> train;     // plain training rows per user
  std::vector<Profile> held_out;  // plain held-out rows per user
  std::map<std::string, RandomMatrix> old_matrices;
  std::map<std::string, RandomMatrix> new_matrices;
  RefreshStart start = RefreshStart::kResetInputLayer;
};

struct RefreshResult {
  Enrollment enrollment;
  ErrorRates new_matrix;          // FRR under the new keys
  UnusabilityReport old_matrix;   // acceptance of data projected with the old keys
};

// Re-projects with the new matrices and keeps training the existing weights;
// options.init_seed seeds the input-layer redraw.
RefreshResult refresh(const Enrollment& old_state, const RefreshInputs& inputs, const nn::TrainConfig& cfg,
                      const VerificationPolicy& policy, std::size_t claim_size, const EnrollOptions& options = {});

// Brute-force keyspace in bits: k * d * log2(alphabet_size).
double keyspace_bits(std::size_t k, std::size_t d, std::size_t alphabet_size);

std::string to_json(const ErrorRates& rates);
std::string to_json(const ClaimResult& result);

}  // namespace bapriv::auth
