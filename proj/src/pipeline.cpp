#include "bapriv/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "bapriv/nn.hpp"
#include "bapriv/privacy.hpp"
#include "bapriv/rng.hpp"

namespace bapriv::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- configuration ----

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto t = trim(v);
  if (t == "inf" || t == "infinity") return HUGE_VAL;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto t = trim(v);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const auto u = parse_u64(key, v);
  if (u > 1'000'000'000ULL) throw ConfigError("'" + key + "' is out of range");
  return static_cast<int>(u);
}

bool parse_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_u64(key, item));
  }
  return out;
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return "inf";
  return json(v).dump();
}

std::string fmt_widths(const std::vector<std::size_t>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

struct Key {
  const char* name;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      {"data.source", [](auto& c, const auto& v) { c.data_source = trim(v); }, [](const auto& c) { return c.data_source; }},
      {"data.dir", [](auto& c, const auto& v) { c.data_dir = trim(v); }, [](const auto& c) { return c.data_dir.string(); }},
      {"synth.n_users", [](auto& c, const auto& v) { c.synth.n_users = parse_u64("synth.n_users", v); },
       [](const auto& c) { return std::to_string(c.synth.n_users); }},
      {"synth.d", [](auto& c, const auto& v) { c.synth.d = parse_u64("synth.d", v); },
       [](const auto& c) { return std::to_string(c.synth.d); }},
      {"synth.m", [](auto& c, const auto& v) { c.synth.m_per_user = parse_u64("synth.m", v); },
       [](const auto& c) { return std::to_string(c.synth.m_per_user); }},
      {"synth.separation", [](auto& c, const auto& v) { c.synth.class_separation = parse_double("synth.separation", v); },
       [](const auto& c) { return fmt_double(c.synth.class_separation); }},
      {"synth.boundary",
       [](auto& c, const auto& v) {
         const auto t = trim(v);
         if (t == "reflect") {
           c.synth.boundary = BoundaryMode::kReflect;
         } else if (t == "clamp") {
           c.synth.boundary = BoundaryMode::kClamp;
         } else {
           throw ConfigError("synth.boundary must be reflect or clamp");
         }
       },
       [](const auto& c) { return std::string(c.synth.boundary == BoundaryMode::kReflect ? "reflect" : "clamp"); }},
      {"groups.enroll_fraction", [](auto& c, const auto& v) { c.enroll_fraction = parse_double("groups.enroll_fraction", v); },
       [](const auto& c) { return fmt_double(c.enroll_fraction); }},
      {"split.test_fraction", [](auto& c, const auto& v) { c.test_fraction = parse_double("split.test_fraction", v); },
       [](const auto& c) { return fmt_double(c.test_fraction); }},
      {"smote.target_m", [](auto& c, const auto& v) { c.smote_target_m = parse_u64("smote.target_m", v); },
       [](const auto& c) { return std::to_string(c.smote_target_m); }},
      {"smote.k", [](auto& c, const auto& v) { c.smote_k = parse_u64("smote.k", v); },
       [](const auto& c) { return std::to_string(c.smote_k); }},
      {"projection.enabled", [](auto& c, const auto& v) { c.projection_enabled = parse_bool("projection.enabled", v); },
       [](const auto& c) { return std::string(c.projection_enabled ? "true" : "false"); }},
      {"projection.k", [](auto& c, const auto& v) { c.k = parse_u64("projection.k", v); },
       [](const auto& c) { return std::to_string(c.k); }},
      {"projection.phi", [](auto& c, const auto& v) { c.phi = parse_double("projection.phi", v); },
       [](const auto& c) { return fmt_double(c.phi); }},
      {"classifier.variant", [](auto& c, const auto& v) { c.classifier_variant = trim(v); },
       [](const auto& c) { return c.classifier_variant; }},
      {"classifier.widths", [](auto& c, const auto& v) { c.classifier_widths = parse_widths("classifier.widths", v); },
       [](const auto& c) { return fmt_widths(c.classifier_widths); }},
      {"classifier.dropout", [](auto& c, const auto& v) { c.dropout = parse_double("classifier.dropout", v); },
       [](const auto& c) { return fmt_double(c.dropout); }},
      {"train.epochs", [](auto& c, const auto& v) { c.epochs = parse_int("train.epochs", v); },
       [](const auto& c) { return std::to_string(c.epochs); }},
      {"train.batch_size", [](auto& c, const auto& v) { c.batch_size = parse_u64("train.batch_size", v); },
       [](const auto& c) { return std::to_string(c.batch_size); }},
      {"train.learning_rate", [](auto& c, const auto& v) { c.learning_rate = parse_double("train.learning_rate", v); },
       [](const auto& c) { return fmt_double(c.learning_rate); }},
      {"verify.mode", [](auto& c, const auto& v) { c.policy_mode = trim(v); }, [](const auto& c) { return c.policy_mode; }},
      {"verify.tau", [](auto& c, const auto& v) { c.tau = parse_double("verify.tau", v); },
       [](const auto& c) { return fmt_double(c.tau); }},
      {"verify.claim_size", [](auto& c, const auto& v) { c.claim_size = parse_u64("verify.claim_size", v); },
       [](const auto& c) { return std::to_string(c.claim_size); }},
      {"verify.wrong_matrix_rounds",
       [](auto& c, const auto& v) { c.wrong_matrix_rounds = parse_u64("verify.wrong_matrix_rounds", v); },
       [](const auto& c) { return std::to_string(c.wrong_matrix_rounds); }},
      {"refresh.epochs", [](auto& c, const auto& v) { c.refresh_epochs = parse_int("refresh.epochs", v); },
       [](const auto& c) { return std::to_string(c.refresh_epochs); }},
      {"refresh.start", [](auto& c, const auto& v) { c.refresh_start = trim(v); },
       [](const auto& c) { return c.refresh_start; }},
      {"attack.mode", [](auto& c, const auto& v) { c.attack_mode = trim(v); }, [](const auto& c) { return c.attack_mode; }},
      {"attack.matrices_per_profile",
       [](auto& c, const auto& v) { c.matrices_per_profile = parse_u64("attack.matrices_per_profile", v); },
       [](const auto& c) { return std::to_string(c.matrices_per_profile); }},
      {"attack.widths", [](auto& c, const auto& v) { c.attack_widths = parse_widths("attack.widths", v); },
       [](const auto& c) { return fmt_widths(c.attack_widths); }},
      {"attack.epochs", [](auto& c, const auto& v) { c.attack_epochs = parse_int("attack.epochs", v); },
       [](const auto& c) { return std::to_string(c.attack_epochs); }},
      {"attack.patience", [](auto& c, const auto& v) { c.attack_patience = parse_int("attack.patience", v); },
       [](const auto& c) { return std::to_string(c.attack_patience); }},
      {"attack.min_delta", [](auto& c, const auto& v) { c.attack_min_delta = parse_double("attack.min_delta", v); },
       [](const auto& c) { return fmt_double(c.attack_min_delta); }},
      {"privacy.alpha", [](auto& c, const auto& v) { c.alpha = parse_double("privacy.alpha", v); },
       [](const auto& c) { return fmt_double(c.alpha); }},
      {"seed", [](auto& c, const auto& v) { c.seed = parse_u64("seed", v); },
       [](const auto& c) { return std::to_string(c.seed); }},
      {"out", [](auto& c, const auto& v) { c.out = trim(v); }, [](const auto& c) { return c.out.string(); }},
  };
  return table;
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : key_table()) {
    if (key == k.name) {
      k.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::vector<std::string> PipelineConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.emplace_back(k.name);
  return out;
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : key_table()) out.emplace_back(k.name, k.get(*this));
  return out;
}

void PipelineConfig::validate() const {
  if (data_source != "synthetic" && data_source != "csv") throw ConfigError("data.source must be synthetic or csv");
  if (data_source == "csv" && data_dir.empty()) throw ConfigError("data.dir is required for csv input");
  if (data_source == "synthetic") synth.validate();
  if (!(enroll_fraction > 0.0 && enroll_fraction <= 1.0)) throw ConfigError("groups.enroll_fraction must lie in (0, 1]");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("split.test_fraction must lie in (0, 1)");
  if (smote_k < 1) throw ConfigError("smote.k must be >= 1");
  if (projection_enabled) {
    if (k < 1) throw ConfigError("projection.k must be >= 1");
    if (!(phi > 1.0)) throw ConfigError("projection.phi must be > 1");
    if (data_source == "synthetic" && k >= synth.d) throw ConfigError("projection.k must be smaller than d");
  }
  if (classifier_variant != "plain" && classifier_variant != "privacy_preserving") {
    throw ConfigError("classifier.variant must be plain or privacy_preserving");
  }
  for (auto w : classifier_widths) {
    if (w < 1) throw ConfigError("classifier.widths entries must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("classifier.dropout must lie in [0, 1)");
  if (epochs < 1 || refresh_epochs < 1 || attack_epochs < 1) throw ConfigError("epoch counts must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (policy_mode != "majority_argmax" && policy_mode != "mean_probability") {
    throw ConfigError("verify.mode must be majority_argmax or mean_probability");
  }
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("verify.tau must lie in (0, 1]");
  if (refresh_start != "reset_input_layer" && refresh_start != "warm") {
    throw ConfigError("refresh.start must be reset_input_layer or warm");
  }
  if (wrong_matrix_rounds < 1) throw ConfigError("verify.wrong_matrix_rounds must be >= 1");
  if (attack_mode != "all" && attack_mode != "distribution_only" && attack_mode != "known_matrix" &&
      attack_mode != "min_norm") {
    throw ConfigError("attack.mode must be distribution_only, known_matrix, min_norm or all");
  }
  if (matrices_per_profile < 1) throw ConfigError("attack.matrices_per_profile must be >= 1");
  if (attack_widths.empty()) throw ConfigError("attack.widths must not be empty");
  if (attack_patience < 1) throw ConfigError("attack.patience must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("privacy.alpha must lie in (0, 1)");
  if (out.empty()) throw ConfigError("out must not be empty");
}

PipelineConfig PipelineConfig::from_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

PipelineConfig PipelineConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::uint64_t component_seed(std::uint64_t master, Component c) {
  return derive_seed(master, static_cast<std::uint64_t>(c));
}

// ---- preparation ----

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string() + " (run the preceding command first)");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json config_json(const PipelineConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.entries()) {
    if (k != "out") j[k] = v;
  }
  return j;
}

json rates_json(const auth::ErrorRates& r) { return json::parse(auth::to_json(r)); }

auth::VerificationPolicy policy_of(const PipelineConfig& cfg) {
  return {cfg.policy_mode == "majority_argmax" ? auth::PolicyMode::kMajorityArgmax : auth::PolicyMode::kMeanProbability,
          cfg.tau};
}

nn::TrainConfig classifier_train_config(const PipelineConfig& cfg, int epochs, Component seed_component) {
  nn::TrainConfig t;
  t.loss = nn::LossKind::kCrossEntropy;
  t.optimizer.learning_rate = cfg.learning_rate;
  t.batch_size = cfg.batch_size;
  t.epochs = epochs;
  t.seed = component_seed(cfg.seed, seed_component);
  return t;
}

auth::BaClassifierSpec classifier_spec(const PipelineConfig& cfg) {
  auto spec = cfg.classifier_variant == "plain" ? auth::BaClassifierSpec::plain(2)
                                                 : auth::BaClassifierSpec::privacy_preserving(2);
  if (!cfg.classifier_widths.empty()) spec.stack_widths = cfg.classifier_widths;
  spec.dropout_rate = cfg.dropout;
  return spec;
}

auth::EnrollOptions enroll_options(const PipelineConfig& cfg) {
  return {0.8, component_seed(cfg.seed, Component::kValidationSplit),
          component_seed(cfg.seed, Component::kClassifierInit)};
}

fs::path enroll_dir(const PipelineConfig& cfg) { return cfg.out / "enroll"; }

std::map<std::string, RandomMatrix> load_matrices(const fs::path& dir, const std::vector<Profile>& profiles) {
  std::map<std::string, RandomMatrix> out;
  for (const auto& p : profiles) out.emplace(p.user_id, load_matrix(dir / (p.user_id + ".json")));
  return out;
}

void save_matrices(const std::map<std::string, RandomMatrix>& matrices, const fs::path& dir) {
  for (const auto& [user, m] : matrices) save_matrix(m, dir / (user + ".json"));
}

std::string summary_table(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  std::ostringstream out;
  for (const auto& [k, v] : rows) out << std::left << std::setw(static_cast<int>(width) + 2) << k << v << '\n';
  return out.str();
}

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v << '%';
  return s.str();
}

}  // namespace

Dataset load_source(const PipelineConfig& cfg) {
  if (cfg.data_source == "csv") return load_dataset_dir(cfg.data_dir);
  SynthSpec spec = cfg.synth;
  spec.seed = component_seed(cfg.seed, Component::kSynth);
  return generate(spec);
}

std::map<std::string, RandomMatrix> make_matrices(const PipelineConfig& cfg, const std::vector<Profile>& profiles,
                                                  Component component, std::uint64_t round) {
  std::map<std::string, RandomMatrix> out;
  const auto base = derive_seed(component_seed(cfg.seed, component), round);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    out.emplace(p.user_id, sample_matrix(cfg.k, p.d(), cfg.phi, derive_seed(base, i)));
  }
  return out;
}

std::vector<auth::LabeledSet> as_sets(const std::vector<Profile>& profiles,
                                      const std::map<std::string, RandomMatrix>* matrices) {
  std::vector<auth::LabeledSet> sets;
  for (const auto& p : profiles) {
    if (matrices) {
      auto it = matrices->find(p.user_id);
      if (it == matrices->end()) throw DataError("no matrix for user '" + p.user_id + "'");
      sets.push_back(auth::labeled(project(p, it->second)));
    } else {
      sets.push_back(auth::labeled(p));
    }
  }
  return sets;
}

Prepared prepare(const PipelineConfig& cfg) {
  cfg.validate();
  Dataset ds = load_source(cfg);
  ds.validate();
  if (cfg.projection_enabled && cfg.k >= ds.d()) throw ConfigError("projection.k must be smaller than d");
  auto& profiles = ds.profiles;
  std::sort(profiles.begin(), profiles.end(), [](const auto& a, const auto& b) { return a.user_id < b.user_id; });

  const std::size_t n = profiles.size();
  Rng rng(component_seed(cfg.seed, Component::kGroups));
  auto order = rng.permutation(n);
  auto n_enroll = static_cast<std::size_t>(std::llround(cfg.enroll_fraction * static_cast<double>(n)));
  n_enroll = std::clamp<std::size_t>(n_enroll, 2, n);
  if (n < 2) throw DataError("at least 2 users are required");
  std::vector<std::size_t> g1(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_enroll));
  std::vector<std::size_t> g2(order.begin() + static_cast<std::ptrdiff_t>(n_enroll), order.end());
  std::sort(g1.begin(), g1.end());
  std::sort(g2.begin(), g2.end());

  Prepared p;
  const auto holdout_base = component_seed(cfg.seed, Component::kHoldout);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    auto [train, held] = split(profiles[g1[i]], SplitSpec{1.0 - cfg.test_fraction, derive_seed(holdout_base, i)});
    p.enroll_train.push_back(std::move(train));
    p.enroll_held_out.push_back(std::move(held));
  }
  p.bounds = fit_normalizer(p.enroll_train);
  for (auto& prof : p.enroll_train) prof = normalize(prof, p.bounds);
  for (auto& prof : p.enroll_held_out) prof = normalize(prof, p.bounds);
  for (auto i : g2) p.attack_profiles.push_back(normalize(profiles[i], p.bounds));

  if (cfg.smote_target_m > 0) {
    const auto smote_base = component_seed(cfg.seed, Component::kSmote);
    for (std::size_t i = 0; i < p.enroll_train.size(); ++i) {
      auto& prof = p.enroll_train[i];
      if (cfg.smote_target_m > prof.m()) {
        prof = smote_oversample(prof, cfg.smote_target_m, std::min(cfg.smote_k, prof.m() - 1),
                                derive_seed(smote_base, i));
      }
    }
  }
  if (cfg.projection_enabled) p.matrices = make_matrices(cfg, p.enroll_train, Component::kEnrollMatrices);
  return p;
}

// ---- commands ----

void cmd_generate(const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.data_source != "synthetic") throw ConfigError("generate needs data.source = synthetic");
  write_dataset_dir(load_source(cfg), cfg.out / "data");
}

void cmd_enroll(const PipelineConfig& cfg) {
  const Prepared prep = prepare(cfg);
  const auto* matrices = cfg.projection_enabled ? &prep.matrices : nullptr;
  const auto train_sets = as_sets(prep.enroll_train, matrices);
  const auto held_sets = as_sets(prep.enroll_held_out, matrices);

  auto enrollment = auth::enroll(train_sets, classifier_spec(cfg),
                                 classifier_train_config(cfg, cfg.epochs, Component::kClassifierTrain),
                                 enroll_options(cfg));
  const auto policy = policy_of(cfg);
  const auto rates = auth::measure_error_rates(
      enrollment.net, enrollment.labels, auth::make_valid_claims(held_sets, cfg.claim_size),
      auth::make_invalid_claims(held_sets, cfg.claim_size, component_seed(cfg.seed, Component::kInvalidClaims)),
      policy);

  const auto dir = enroll_dir(cfg);
  nn::save(enrollment.net, dir / "model.json");
  write_text(dir / "labels.json", enrollment.labels.to_json());
  write_text(dir / "history.json", nn::history_to_json(enrollment.history));
  if (matrices) save_matrices(prep.matrices, dir / "matrices");

  json bounds = json::array();
  for (const auto& b : prep.bounds) bounds.push_back({b.min, b.max});
  const auto& last = enrollment.history.epochs.back();
  json report{{"command", "enroll"},
              {"config", config_json(cfg)},
              {"projected", cfg.projection_enabled},
              {"users", enrollment.labels.users()},
              {"input_dim", enrollment.net.input_dim()},
              {"total_params", enrollment.net.total_params()},
              {"trainable_params", enrollment.net.trainable_params()},
              {"normalization_bounds", bounds},
              {"final_train_accuracy", last.train_accuracy.value_or(0.0)},
              {"final_validation_accuracy", last.val_accuracy.value_or(0.0)},
              {"held_out", rates_json(rates)}};
  write_text(dir / "report.json", report.dump(2));
  write_text(dir / "summary.txt",
             summary_table({{"users", std::to_string(enrollment.labels.size())},
                            {"projected", cfg.projection_enabled ? "yes" : "no"},
                            {"train accuracy", pct(last.train_accuracy.value_or(0.0))},
                            {"validation accuracy", pct(last.val_accuracy.value_or(0.0))},
                            {"held-out FRR (claims)", pct(rates.frr)},
                            {"held-out FAR (claims)", pct(rates.far)},
                            {"held-out FRR (samples)", pct(rates.sample_frr)},
                            {"held-out FAR (samples)", pct(rates.sample_far)}}));
}

std::string default_claims_json(const PipelineConfig& cfg, const Prepared& prepared) {
  const auto plain = as_sets(prepared.enroll_held_out, nullptr);
  auto valid = auth::make_valid_claims(plain, cfg.claim_size);
  auto invalid = auth::make_invalid_claims(plain, cfg.claim_size, component_seed(cfg.seed, Component::kInvalidClaims));
  json arr = json::array();
  for (const auto* set : {&valid, &invalid}) {
    for (const auto& c : *set) {
      json rows = json::array();
      for (std::size_t i = 0; i < c.samples.rows(); ++i) {
        auto r = c.samples.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
      }
      arr.push_back({{"claimed_user", c.claimed_user}, {"true_user", c.true_user}, {"rows", rows}});
    }
  }
  return arr.dump(1);
}

void cmd_verify(const PipelineConfig& cfg, const VerifyOptions& options) {
  const Prepared prep = prepare(cfg);
  const auto dir = enroll_dir(cfg);
  const auto net = nn::from_json(read_text(dir / "model.json"));
  const auto labels = auth::LabelMap::from_json(read_text(dir / "labels.json"));
  std::map<std::string, RandomMatrix> matrices;
  if (cfg.projection_enabled) matrices = load_matrices(dir / "matrices", prep.enroll_train);
  const auto policy = policy_of(cfg);

  std::string claims_text;
  if (options.claims_file) {
    claims_text = read_text(*options.claims_file);
  } else {
    claims_text = default_claims_json(cfg, prep);
    write_text(cfg.out / "verify" / "claims.json", claims_text);
  }

  std::vector<auth::Claim> valid, invalid;
  try {
    for (const auto& c : json::parse(claims_text)) {
      auth::Claim claim;
      claim.claimed_user = c.at("claimed_user").get<std::string>();
      claim.true_user = c.at("true_user").get<std::string>();
      Matrix rows;
      for (const auto& r : c.at("rows")) rows.append_row(r.get<std::vector<double>>());
      if (cfg.projection_enabled) {
        auto it = matrices.find(claim.true_user);
        if (it == matrices.end()) throw DataError("claim submitter '" + claim.true_user + "' has no enrolled matrix");
        rows = project(rows, it->second);
      }
      claim.samples = std::move(rows);
      (claim.claimed_user == claim.true_user ? valid : invalid).push_back(std::move(claim));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed claims file: ") + e.what());
  }

  json per_claim = json::array();
  for (const auto* set : {&valid, &invalid}) {
    for (const auto& c : *set) {
      const auto r = auth::verify(net, labels, c.claimed_user, c.samples, policy);
      per_claim.push_back({{"claimed_user", c.claimed_user},
                           {"true_user", c.true_user},
                           {"accept", r.accept},
                           {"score", r.score}});
    }
  }
  json report{{"command", "verify"}, {"config", config_json(cfg)}, {"claims", per_claim}};
  std::vector<std::pair<std::string, std::string>> rows;
  if (!valid.empty()) {
    const auto r = auth::measure_error_rates(net, labels, valid, {}, policy);
    report["frr"] = rates_json(r);
    rows.emplace_back("FRR (claims)", pct(r.frr));
    rows.emplace_back("FRR (samples)", pct(r.sample_frr));
  }
  if (!invalid.empty()) {
    const auto r = auth::measure_error_rates(net, labels, {}, invalid, policy);
    report["far"] = rates_json(r);
    rows.emplace_back("FAR (claims)", pct(r.far));
    rows.emplace_back("FAR (samples)", pct(r.sample_far));
  }
  if (options.wrong_matrix) {
    if (!cfg.projection_enabled) throw ConfigError("the wrong-matrix trial needs projection.enabled = true");
    json rounds = json::array();
    double acc = 0.0, sample_acc = 0.0;
    for (std::size_t round = 0; round < cfg.wrong_matrix_rounds; ++round) {
      const auto fresh = make_matrices(cfg, prep.enroll_held_out, Component::kWrongMatrices, round);
      const auto u = auth::wrong_matrix_trial(net, labels, prep.enroll_held_out, fresh, policy, cfg.claim_size);
      rounds.push_back({{"acceptance", u.acceptance}, {"sample_acceptance", u.sample_acceptance}});
      acc += u.acceptance;
      sample_acc += u.sample_acceptance;
    }
    const auto n = static_cast<double>(cfg.wrong_matrix_rounds);
    report["unusability"] = {{"rounds", rounds}, {"acceptance", acc / n}, {"sample_acceptance", sample_acc / n}};
    rows.emplace_back("wrong-matrix acceptance (claims)", pct(acc / n));
    rows.emplace_back("wrong-matrix acceptance (samples)", pct(sample_acc / n));
  }
  write_text(cfg.out / "verify" / "report.json", report.dump(2));
  write_text(cfg.out / "verify" / "summary.txt", summary_table(rows));
}

void cmd_refresh(const PipelineConfig& cfg) {
  if (!cfg.projection_enabled) throw ConfigError("refresh needs projection.enabled = true");
  const Prepared prep = prepare(cfg);
  const auto dir = enroll_dir(cfg);
  auth::Enrollment old_state{nn::from_json(read_text(dir / "model.json")),
                             auth::LabelMap::from_json(read_text(dir / "labels.json")), {}};
  const auto old_matrices = load_matrices(dir / "matrices", prep.enroll_train);
  const auto policy = policy_of(cfg);

  const auto before = auth::measure_error_rates(
      old_state.net, old_state.labels, auth::make_valid_claims(as_sets(prep.enroll_held_out, &old_matrices), cfg.claim_size),
      {}, policy);

  auth::RefreshInputs inputs{prep.enroll_train, prep.enroll_held_out, old_matrices,
                             make_matrices(cfg, prep.enroll_train, Component::kRefreshMatrices),
                             cfg.refresh_start == "warm" ? auth::RefreshStart::kWarm
                                                         : auth::RefreshStart::kResetInputLayer};
  const auto result = auth::refresh(old_state, inputs,
                                    classifier_train_config(cfg, cfg.refresh_epochs, Component::kRefreshTrain), policy,
                                    cfg.claim_size, enroll_options(cfg));

  const auto out = cfg.out / "refresh";
  nn::save(result.enrollment.net, out / "model.json");
  write_text(out / "labels.json", result.enrollment.labels.to_json());
  write_text(out / "history.json", nn::history_to_json(result.enrollment.history));
  save_matrices(inputs.new_matrices, out / "matrices");
  const auto& last = result.enrollment.history.epochs.back();
  json report{{"command", "refresh"},
              {"config", config_json(cfg)},
              {"before", rates_json(before)},
              {"new_matrix", rates_json(result.new_matrix)},
              {"old_matrix",
               {{"acceptance", result.old_matrix.acceptance},
                {"sample_acceptance", result.old_matrix.sample_acceptance},
                {"rates", rates_json(result.old_matrix.rates)}}},
              {"final_train_accuracy", last.train_accuracy.value_or(0.0)},
              {"final_validation_accuracy", last.val_accuracy.value_or(0.0)}};
  write_text(out / "report.json", report.dump(2));
  write_text(out / "summary.txt",
             summary_table({{"FRR before refresh (claims)", pct(before.frr)},
                            {"FRR new keys (claims)", pct(result.new_matrix.frr)},
                            {"FRR new keys (samples)", pct(result.new_matrix.sample_frr)},
                            {"old-key acceptance (claims)", pct(result.old_matrix.acceptance)},
                            {"old-key acceptance (samples)", pct(result.old_matrix.sample_acceptance)}}));
}

void cmd_attack(const PipelineConfig& cfg) {
  if (!cfg.projection_enabled) throw ConfigError("attack needs projection.enabled = true");
  const Prepared prep = prepare(cfg);
  if (prep.attack_profiles.empty()) throw ConfigError("the attack group is empty; lower groups.enroll_fraction");

  std::vector<ProjectedProfile> victims;
  std::vector<RandomMatrix> known;
  for (const auto& p : prep.enroll_train) {
    victims.push_back(project(p, prep.matrices.at(p.user_id)));
    known.push_back(prep.matrices.at(p.user_id));
  }
  const std::size_t d = prep.enroll_train.front().d();
  const auto out = cfg.out / "attack";

  std::vector<std::string> modes;
  if (cfg.attack_mode == "all") {
    modes = {"distribution_only", "known_matrix", "min_norm"};
  } else {
    modes = {cfg.attack_mode};
  }

  json summary{{"command", "attack"}, {"config", config_json(cfg)}, {"victims", victims.size()},
               {"attack_profiles", prep.attack_profiles.size()}};
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& mode : modes) {
    std::vector<Profile> recovered;
    json entry;
    if (mode == "min_norm") {
      for (const auto& v : victims) recovered.push_back(attack::min_norm_reconstruct(v, prep.matrices.at(v.user_id)));
    } else {
      attack::AttackKnowledge knowledge{attack::mode_from_name(mode), cfg.phi, cfg.matrices_per_profile, {}};
      if (knowledge.mode == attack::KnowledgeMode::kKnownMatrix) knowledge.known_matrices = known;
      const auto corpus = attack::build_attack_corpus(prep.attack_profiles, knowledge, cfg.k,
                                                      component_seed(cfg.seed, Component::kAttackCorpus));
      auto tcfg = attack::default_attack_config(component_seed(cfg.seed, Component::kAttackTrain));
      tcfg.epochs = cfg.attack_epochs;
      tcfg.batch_size = cfg.batch_size;
      tcfg.early_stopping = {true, cfg.attack_min_delta, cfg.attack_patience};
      const auto trained = attack::train_attack_model(corpus, {cfg.attack_widths, cfg.k, d}, tcfg, 0.8,
                                                      component_seed(cfg.seed, Component::kAttackSplit));
      write_text(out / ("history_" + mode + ".json"), nn::history_to_json(trained.history));
      const auto& last = trained.history.epochs.back();
      entry["corpus_rows"] = corpus.inputs.rows();
      entry["epochs_run"] = trained.history.epochs.size();
      entry["final_train_loss"] = last.train_loss;
      entry["final_val_loss"] = last.val_loss.value_or(last.train_loss);
      recovered = attack::recover_profiles(trained.net, victims);
    }
    for (const auto& r : recovered) write_csv(r, out / "recovered" / mode / (r.user_id + ".csv"));
    const auto report = privacy::evaluate_distribution_privacy(recovered, prep.enroll_train, cfg.alpha, mode);
    write_text(out / ("privacy_" + mode + ".json"), report.to_json());
    write_text(out / ("pass_fractions_" + mode + ".csv"), report.to_csv());
    entry["epsilon_max"] = report.epsilon_max;
    entry["epsilon_mean"] = report.epsilon_mean;
    entry["profiles_with_recovered_features"] = report.profiles_with_recovered_features;
    summary["modes"][mode] = entry;
    rows.emplace_back(mode + " epsilon (max)", pct(report.epsilon_max));
    rows.emplace_back(mode + " epsilon (mean)", pct(report.epsilon_mean));
    rows.emplace_back(mode + " profiles with recovered features",
                      std::to_string(report.profiles_with_recovered_features) + "/" + std::to_string(victims.size()));
  }
  write_text(out / "report.json", summary.dump(2));
  write_text(out / "summary.txt", summary_table(rows));
}

void cmd_report(const PipelineConfig& cfg) {
  cfg.validate();
  json all = json::object();
  std::string text;
  for (const char* stage : {"enroll", "verify", "refresh", "attack"}) {
    const auto path = cfg.out / stage / "report.json";
    if (!fs::exists(path)) continue;
    json j = json::parse(read_text(path));
    j.erase("config");
    if (j.contains("claims")) j.erase("claims");
    all[stage] = std::move(j);
    text += std::string("== ") + stage + " ==\n" + read_text(cfg.out / stage / "summary.txt") + "\n";
  }
  if (all.empty()) throw DataError("no stage reports under " + cfg.out.string() + "; run enroll first");
  all["config"] = config_json(cfg);
  write_text(cfg.out / "report" / "summary.json", all.dump(2));
  write_text(cfg.out / "report" / "summary.txt", text);
}

}  // namespace bapriv::pipeline
