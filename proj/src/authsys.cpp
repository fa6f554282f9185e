#include "bapriv/authsys.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "bapriv/rng.hpp"

namespace bapriv::auth {

using json = nlohmann::json;

BaClassifierSpec BaClassifierSpec::plain(std::size_t n_classes) {
  return {Variant::kPlain, {128, 256, 512, 256, 128}, 0.1, n_classes};
}

BaClassifierSpec BaClassifierSpec::privacy_preserving(std::size_t n_classes) {
  return {Variant::kPrivacyPreserving, {64, 128, 64}, 0.1, n_classes};
}

void BaClassifierSpec::validate() const {
  if (stack_widths.empty()) throw ConfigError("classifier needs at least one stack");
  for (auto w : stack_widths) {
    if (w < 1) throw ConfigError("stack widths must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (n_classes < 2) throw ConfigError("classifier needs at least 2 classes");
}

nn::NeuralNet build_classifier(const BaClassifierSpec& spec, std::size_t input_dim, std::uint64_t seed) {
  spec.validate();
  std::vector<nn::LayerSpec> layers;
  for (auto w : spec.stack_widths) {
    layers.push_back(nn::LayerSpec::dense(w));
    layers.push_back(nn::LayerSpec::batch_norm());
    layers.push_back(nn::LayerSpec::relu());
    layers.push_back(nn::LayerSpec::dropout(spec.dropout_rate));
  }
  layers.push_back(nn::LayerSpec::dense(spec.n_classes));
  layers.push_back(nn::LayerSpec::softmax());
  return nn::NeuralNet(input_dim, layers, seed);
}

void VerificationPolicy::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
}

LabelMap::LabelMap(std::vector<std::string> users) : users_(std::move(users)) {
  std::sort(users_.begin(), users_.end());
  if (std::adjacent_find(users_.begin(), users_.end()) != users_.end()) {
    throw DataError("duplicate user id in label map");
  }
}

std::optional<std::size_t> LabelMap::find(const std::string& user) const {
  auto it = std::lower_bound(users_.begin(), users_.end(), user);
  if (it == users_.end() || *it != user) return std::nullopt;
  return static_cast<std::size_t>(it - users_.begin());
}

std::size_t LabelMap::index(const std::string& user) const {
  auto i = find(user);
  if (!i) throw DataError("unknown claimed identity '" + user + "'");
  return *i;
}

std::string LabelMap::to_json() const { return json{{"users", users_}}.dump(2); }

LabelMap LabelMap::from_json(const std::string& text) {
  try {
    return LabelMap(json::parse(text).at("users").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed label map: ") + e.what());
  }
}

LabeledSet labeled(const Profile& profile) { return {profile.user_id, profile.samples}; }
LabeledSet labeled(const ProjectedProfile& profile) { return {profile.user_id, profile.samples}; }

namespace {

struct TrainingData {
  Matrix train_x, train_y, val_x, val_y;
};

TrainingData assemble(const std::vector<LabeledSet>& sets, const LabelMap& labels, const EnrollOptions& options) {
  if (!(options.train_fraction > 0.0 && options.train_fraction <= 1.0)) {
    throw ConfigError("enrollment train_fraction must lie in (0, 1]");
  }
  std::vector<Matrix> tx, vx;
  std::vector<std::size_t> ty, vy;
  for (std::size_t u = 0; u < sets.size(); ++u) {
    const auto& s = sets[u];
    const std::size_t m = s.samples.rows();
    const std::size_t cls = labels.index(s.user_id);
    auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(m)));
    n_train = std::clamp<std::size_t>(n_train, 1, m);
    Rng rng(derive_seed(options.split_seed, u));
    auto order = rng.permutation(m);
    std::vector<std::size_t> tr(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> va(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    tx.push_back(s.samples.select_rows(tr));
    vx.push_back(s.samples.select_rows(va));
    ty.insert(ty.end(), tr.size(), cls);
    vy.insert(vy.end(), va.size(), cls);
  }
  TrainingData data;
  data.train_x = Matrix::vstack(tx);
  data.val_x = Matrix::vstack(vx);
  if (data.val_x.cols() == 0) data.val_x = Matrix(0, data.train_x.cols());
  data.train_y = nn::one_hot(ty, labels.size());
  data.val_y = nn::one_hot(vy, labels.size());
  return data;
}

void check_sets(const std::vector<LabeledSet>& sets) {
  if (sets.size() < 2) throw DataError("enrollment needs at least 2 users");
  for (const auto& s : sets) {
    if (s.samples.rows() < 1) throw DataError("user '" + s.user_id + "' has no samples");
    if (s.samples.cols() != sets.front().samples.cols()) throw DimensionError("users disagree on input dimension");
  }
}

}  // namespace

Enrollment enroll(const std::vector<LabeledSet>& sets, const BaClassifierSpec& spec, const nn::TrainConfig& cfg,
                  const EnrollOptions& options) {
  check_sets(sets);
  cfg.validate();
  std::vector<std::string> users;
  for (const auto& s : sets) users.push_back(s.user_id);
  LabelMap labels(users);
  BaClassifierSpec sized = spec;
  sized.n_classes = labels.size();

  const auto data = assemble(sets, labels, options);
  Enrollment e{build_classifier(sized, data.train_x.cols(), options.init_seed), labels, {}};
  std::optional<std::pair<Matrix, Matrix>> validation;
  if (data.val_x.rows() > 0) validation.emplace(data.val_x, data.val_y);
  e.history = nn::train(e.net, data.train_x, data.train_y, cfg, validation);
  return e;
}

ClaimResult verify(const nn::NeuralNet& net, const LabelMap& labels, const std::string& claimed_user,
                   const Matrix& samples, const VerificationPolicy& policy) {
  policy.validate();
  const std::size_t cls = labels.index(claimed_user);
  if (samples.rows() < 1) throw DataError("a claim needs at least one verification row");
  if (net.output_dim() != labels.size()) throw DimensionError("classifier output does not match the label map");

  const Matrix probs = net.infer(samples);
  ClaimResult r;
  r.claimed_user = claimed_user;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    r.per_sample.emplace_back(row.begin(), row.end());
    acc += policy.mode == PolicyMode::kMajorityArgmax ? (nn::argmax(row) == cls ? 1.0 : 0.0) : row[cls];
  }
  r.score = acc / static_cast<double>(probs.rows());
  r.accept = r.score >= policy.tau;
  return r;
}

ErrorRates measure_error_rates(const nn::NeuralNet& net, const LabelMap& labels, const std::vector<Claim>& valid,
                               const std::vector<Claim>& invalid, const VerificationPolicy& policy) {
  if (valid.empty() && invalid.empty()) throw DataError("no claims to measure");
  ErrorRates r;
  std::size_t sample_misses = 0, sample_hits = 0;
  for (const auto& c : valid) {
    const auto res = verify(net, labels, c.claimed_user, c.samples, policy);
    ++r.valid_claims;
    if (!res.accept) ++r.false_rejects;
    const std::size_t cls = labels.index(c.claimed_user);
    for (const auto& p : res.per_sample) sample_misses += nn::argmax(p) != cls;
    r.valid_samples += res.per_sample.size();
  }
  for (const auto& c : invalid) {
    const auto res = verify(net, labels, c.claimed_user, c.samples, policy);
    ++r.invalid_claims;
    if (res.accept) ++r.false_accepts;
    const std::size_t cls = labels.index(c.claimed_user);
    for (const auto& p : res.per_sample) sample_hits += nn::argmax(p) == cls;
    r.invalid_samples += res.per_sample.size();
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  r.frr = ratio(r.false_rejects, r.valid_claims);
  r.far = ratio(r.false_accepts, r.invalid_claims);
  r.sample_frr = ratio(sample_misses, r.valid_samples);
  r.sample_far = ratio(sample_hits, r.invalid_samples);
  return r;
}

namespace {

std::vector<Matrix> chunk(const Matrix& rows, std::size_t claim_size) {
  std::vector<Matrix> out;
  const std::size_t m = rows.rows();
  if (claim_size == 0 || claim_size >= m) return {rows};
  const std::size_t n_chunks = m / claim_size;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t start = c * claim_size;
    const std::size_t stop = c + 1 == n_chunks ? m : start + claim_size;
    std::vector<std::size_t> idx(stop - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    out.push_back(rows.select_rows(idx));
  }
  return out;
}

}  // namespace

std::vector<Claim> make_valid_claims(const std::vector<LabeledSet>& sets, std::size_t claim_size) {
  std::vector<Claim> claims;
  for (const auto& s : sets) {
    for (auto& part : chunk(s.samples, claim_size)) claims.push_back({s.user_id, s.user_id, std::move(part)});
  }
  return claims;
}

std::vector<Claim> make_invalid_claims(const std::vector<LabeledSet>& sets, std::size_t claim_size,
                                       std::uint64_t seed) {
  const std::size_t n = sets.size();
  if (n < 2) throw DataError("invalid claims need at least 2 users");
  Rng rng(seed);
  std::vector<std::size_t> perm;
  bool deranged = false;
  while (!deranged) {
    perm = rng.permutation(n);
    deranged = true;
    for (std::size_t i = 0; i < n; ++i) deranged = deranged && perm[i] != i;
  }
  std::vector<Claim> claims;
  for (std::size_t u = 0; u < n; ++u) {
    for (auto& part : chunk(sets[u].samples, claim_size)) {
      claims.push_back({sets[perm[u]].user_id, sets[u].user_id, std::move(part)});
    }
  }
  return claims;
}

UnusabilityReport wrong_matrix_trial(const nn::NeuralNet& net, const LabelMap& labels,
                                     const std::vector<Profile>& held_out,
                                     const std::map<std::string, RandomMatrix>& fresh_matrices,
                                     const VerificationPolicy& policy, std::size_t claim_size) {
  std::vector<LabeledSet> sets;
  for (const auto& p : held_out) {
    auto it = fresh_matrices.find(p.user_id);
    if (it == fresh_matrices.end()) throw DataError("no fresh matrix for user '" + p.user_id + "'");
    sets.push_back(labeled(project(p, it->second)));
  }
  UnusabilityReport rep;
  rep.rates = measure_error_rates(net, labels, make_valid_claims(sets, claim_size), {}, policy);
  rep.acceptance = 1.0 - rep.rates.frr;
  rep.sample_acceptance = 1.0 - rep.rates.sample_frr;
  return rep;
}

RefreshResult refresh(const Enrollment& old_state, const RefreshInputs& inputs, const nn::TrainConfig& cfg,
                      const VerificationPolicy& policy, std::size_t claim_size, const EnrollOptions& options) {
  cfg.validate();
  std::vector<LabeledSet> train_sets, held_sets;
  for (const auto& p : inputs.train) {
    auto it = inputs.new_matrices.find(p.user_id);
    if (it == inputs.new_matrices.end()) throw DataError("no new matrix for user '" + p.user_id + "'");
    train_sets.push_back(labeled(project(p, it->second)));
  }
  for (const auto& p : inputs.held_out) {
    held_sets.push_back(labeled(project(p, inputs.new_matrices.at(p.user_id))));
  }
  check_sets(train_sets);

  RefreshResult r{old_state, {}, {}};
  if (inputs.start == RefreshStart::kResetInputLayer) {
    for (auto& layer : r.enrollment.net.layers()) {
      if (auto* d = std::get_if<nn::Dense>(&layer)) {
        Rng rng(derive_seed(options.init_seed, 0x5245));
        const double limit = std::sqrt(6.0 / static_cast<double>(d->weights.rows() + d->weights.cols()));
        for (double& w : d->weights.flat()) w = rng.uniform(-limit, limit);
        std::fill(d->bias.begin(), d->bias.end(), 0.0);
        break;
      }
    }
  }
  const auto data = assemble(train_sets, r.enrollment.labels, options);
  std::optional<std::pair<Matrix, Matrix>> validation;
  if (data.val_x.rows() > 0) validation.emplace(data.val_x, data.val_y);
  r.enrollment.history = nn::train(r.enrollment.net, data.train_x, data.train_y, cfg, validation);

  r.new_matrix = measure_error_rates(r.enrollment.net, r.enrollment.labels, make_valid_claims(held_sets, claim_size),
                                     {}, policy);
  r.old_matrix = wrong_matrix_trial(r.enrollment.net, r.enrollment.labels, inputs.held_out, inputs.old_matrices,
                                    policy, claim_size);
  return r;
}

double keyspace_bits(std::size_t k, std::size_t d, std::size_t alphabet_size) {
  if (k < 1 || d < 1 || alphabet_size < 1) throw ConfigError("keyspace arguments must be positive");
  return static_cast<double>(k) * static_cast<double>(d) * std::log2(static_cast<double>(alphabet_size));
}

std::string to_json(const ErrorRates& r) {
  return json{{"frr", r.frr},
              {"far", r.far},
              {"valid_claims", r.valid_claims},
              {"false_rejects", r.false_rejects},
              {"invalid_claims", r.invalid_claims},
              {"false_accepts", r.false_accepts},
              {"sample_frr", r.sample_frr},
              {"sample_far", r.sample_far},
              {"valid_samples", r.valid_samples},
              {"invalid_samples", r.invalid_samples}}
      .dump(2);
}

std::string to_json(const ClaimResult& r) {
  return json{{"claimed_user", r.claimed_user}, {"accept", r.accept}, {"score", r.score}, {"per_sample", r.per_sample}}
      .dump(2);
}

}  // namespace bapriv::auth
