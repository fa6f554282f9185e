#pragma once

// End-to-end driver: configuration, deterministic data preparation and the
// generate / enroll / verify / refresh / attack / report commands.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bapriv/attack.hpp"
#include "bapriv/authsys.hpp"
#include "bapriv/dataio.hpp"
#include "bapriv/projection.hpp"
#include "bapriv/synth.hpp"

namespace bapriv::pipeline {

struct PipelineConfig {
  // data
  std::string data_source = "synthetic";  // synthetic | csv
  std::filesystem::path data_dir;         // csv source directory
  SynthSpec synth;
  // groups and splits
  double enroll_fraction = 0.8;  // share of users in the enrollment group
  double test_fraction = 0.2;    // held-out rows per enrolled user
  std::size_t smote_target_m = 0;  // 0 disables oversampling
  std::size_t smote_k = 5;
  // projection
  bool projection_enabled = true;
  std::size_t k = 20;
  double phi = kDefaultPhi;
  // classifier
  std::string classifier_variant = "privacy_preserving";
  std::vector<std::size_t> classifier_widths;  // empty: variant default
  double dropout = 0.1;
  int epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  // verification
  std::string policy_mode = "majority_argmax";
  double tau = 0.5;
  std::size_t claim_size = 8;
  std::size_t wrong_matrix_rounds = 5;
  // refresh
  int refresh_epochs = 20;
  std::string refresh_start = "reset_input_layer";  // reset_input_layer | warm
  // attack
  std::string attack_mode = "all";  // distribution_only | known_matrix | min_norm | all
  std::size_t matrices_per_profile = 4;
  std::vector<std::size_t> attack_widths{128, 256, 256, 128};
  int attack_epochs = 50;
  int attack_patience = 10;
  double attack_min_delta = 1e-5;
  double alpha = 0.05;
  // run
  std::uint64_t seed = 7;
  std::filesystem::path out = "out";

  // Applies one dotted key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  // Every key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  static std::vector<std::string> keys();

  // Flat "key = value" lines; '#' starts a comment.
  static PipelineConfig from_text(const std::string& text);
  static PipelineConfig from_file(const std::filesystem::path& path);
};

// Seed of a pipeline component: derive_seed(master seed, component index).
enum class Component : std::uint64_t {
  kSynth = 1,
  kGroups = 2,
  kHoldout = 3,
  kSmote = 4,
  kEnrollMatrices = 5,
  kClassifierInit = 6,
  kClassifierTrain = 7,
  kValidationSplit = 8,
  kInvalidClaims = 9,
  kWrongMatrices = 10,
  kRefreshMatrices = 11,
  kRefreshTrain = 12,
  kAttackCorpus = 13,
  kAttackTrain = 14,
  kAttackSplit = 15,
  kAttackMatrices = 16,
};

std::uint64_t component_seed(std::uint64_t master, Component c);

// Everything the commands derive from the configuration alone.
struct Prepared {
  std::vector<Profile> enroll_train;     // normalized (and oversampled) training rows
  std::vector<Profile> enroll_held_out;  // normalized held-out rows
  std::vector<Profile> attack_profiles;  // normalized attack-group profiles
  NormalizationBounds bounds;
  std::map<std::string, RandomMatrix> matrices;  // enrollment keys per user
};

Dataset load_source(const PipelineConfig& cfg);
Prepared prepare(const PipelineConfig& cfg);

// Matrix for a user: seeded from the given component and the user's index.
std::map<std::string, RandomMatrix> make_matrices(const PipelineConfig& cfg, const std::vector<Profile>& profiles,
                                                  Component component, std::uint64_t round = 0);

std::vector<auth::LabeledSet> as_sets(const std::vector<Profile>& profiles,
                                      const std::map<std::string, RandomMatrix>* matrices);

void cmd_generate(const PipelineConfig& cfg);
void cmd_enroll(const PipelineConfig& cfg);

struct VerifyOptions {
  std::optional<std::filesystem::path> claims_file;
  bool wrong_matrix = false;
};
void cmd_verify(const PipelineConfig& cfg, const VerifyOptions& options);
void cmd_refresh(const PipelineConfig& cfg);
void cmd_attack(const PipelineConfig& cfg);
void cmd_report(const PipelineConfig& cfg);

// Claims file: JSON array of {claimed_user, true_user, rows} with plain rows;
// each claim is projected with the true user's enrolled matrix.
std::string default_claims_json(const PipelineConfig& cfg, const Prepared& prepared);

}  // namespace bapriv::pipeline
