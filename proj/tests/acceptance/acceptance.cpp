// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Every threshold and runtime budget is pinned below. Criteria 8-10 run the
// pipeline on seeded synthetic data in a scratch directory under the
// current working directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bapriv/attack.hpp"
#include "bapriv/authsys.hpp"
#include "bapriv/nn.hpp"
#include "bapriv/pipeline.hpp"
#include "bapriv/privacy.hpp"
#include "bapriv/projection.hpp"
#include "bapriv/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bapriv;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void run(int id, const std::string& name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_seconds;
  const bool ok = o.pass && in_time;
  if (!ok) ++g_failures;
  char timing[96];
  std::snprintf(timing, sizeof timing, "%.3f s (budget %g s)", secs, budget_seconds);
  std::printf("[%s] %2d %s: %s; %s%s\n", ok ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), timing,
              in_time ? "" : " OVER BUDGET");
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

// ---- 1: minimum projected dimension, no log factor ----

Outcome table_rows() {
  struct Row {
    JlParams p;
    double exact, printed;
  };
  const Row rows[] = {{{300, 1.0, 0.5}, 30.0, 30.0}, {{200, 0.5, 1.0}, 72.0, 73.0}, {{300, 0.7, 1.0}, 45.92, 46.0}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const double v = jl_min_dimension(r.p, false);
    const double rounded = std::round(v * 100.0) / 100.0;
    ok = ok && std::fabs(rounded - r.exact) < 1e-9 && std::fabs(v - r.printed) <= 1.1;
    detail += fmt("%.4f ", v);
  }
  return {ok, "k0 = " + detail + "(want 30.00 72.00 45.92, printed 30/73/46 within 1.1)"};
}

// ---- 2: classifier parameter counts ----

Outcome param_counts() {
  const auto plain = auth::build_classifier(auth::BaClassifierSpec::plain(68), 33, 1);
  const auto pp = auth::build_classifier(auth::BaClassifierSpec::privacy_preserving(155), 56, 1);
  const bool ok = plain.total_params() == 347076 && plain.trainable_params() == 344516 &&
                  pp.total_params() == 31323 && pp.trainable_params() == 30811;
  return {ok, "plain " + std::to_string(plain.total_params()) + "/" + std::to_string(plain.trainable_params()) +
                  ", privacy-preserving " + std::to_string(pp.total_params()) + "/" +
                  std::to_string(pp.trainable_params()) + " (want 347076/344516, 31323/30811)"};
}

// ---- 3: distance concentration at the full-formula dimension ----

Outcome jl_concentration() {
  const std::size_t d = 50, n = 100;
  const auto k = static_cast<std::size_t>(std::ceil(jl_min_dimension({n, 0.5, 1.0}, true)));
  Rng rng(2024);
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs(n);
  for (auto& [x, y] : pairs) {
    x.resize(d);
    y.resize(d);
    for (auto& v : x) v = rng.uniform();
    for (auto& v : y) v = rng.uniform();
  }
  std::size_t worst = n;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto r = sample_matrix(k, d, 3.0, 1000 + s, {"", true});
    const auto ratios = distance_distortion(pairs, r);
    const auto inside = static_cast<std::size_t>(
        std::count_if(ratios.begin(), ratios.end(), [](double q) { return q >= 0.5 && q <= 1.5; }));
    worst = std::min(worst, inside);
  }
  return {worst >= 99, "k = " + std::to_string(k) + ", worst matrix keeps " + std::to_string(worst) +
                           "/100 ratios in [0.5, 1.5] (want >= 99)"};
}

// ---- 4: projection preserves squared norm in expectation ----

Outcome unbiasedness() {
  const std::size_t d = 40, k = 20, trials = 10000;
  Rng rng(77);
  std::vector<double> x(d);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  const double base = squared_norm(x);
  double sum = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto r = sample_matrix(k, d, 3.0, derive_seed(4242, t));
    sum += squared_norm(project(x, r)) / base;
  }
  const double mean = sum / static_cast<double>(trials);
  return {std::fabs(mean - 1.0) <= 0.02, fmt("mean ratio %.5f", mean) + " (want within 0.02 of 1)"};
}

// ---- 5: finite-difference gradient checks ----

double batch_loss(nn::NeuralNet& net, const Matrix& x, const Matrix& y, nn::LossKind loss, std::uint64_t mask_seed) {
  net.reseed_dropout(mask_seed);
  return nn::compute_loss(net.forward(x), y, loss);
}

double grad_check_worst(std::uint64_t seed, nn::LayerKind head, nn::LossKind loss) {
  Rng rng(seed);
  const std::size_t in = 3 + rng.index(4), rows = 5 + rng.index(4), out = 2 + rng.index(3);
  std::vector<nn::LayerSpec> layers;
  for (int s = 0; s < 2; ++s) {
    layers.push_back(nn::LayerSpec::dense(3 + rng.index(5)));
    layers.push_back(nn::LayerSpec::batch_norm());
    layers.push_back(nn::LayerSpec::relu());
    layers.push_back(nn::LayerSpec::dropout(0.25));
  }
  layers.push_back(nn::LayerSpec::dense(out));
  layers.push_back(head == nn::LayerKind::kSoftmax ? nn::LayerSpec::softmax() : nn::LayerSpec::sigmoid());
  nn::NeuralNet net(in, layers, seed);
  // Move batch-norm scale/shift away from the identity so their gradients matter.
  for (auto& l : net.layers()) {
    if (auto* bn = std::get_if<nn::BatchNorm>(&l)) {
      for (auto& g : bn->gamma) g = rng.uniform(0.5, 1.5);
      for (auto& b : bn->beta) b = rng.uniform(-0.3, 0.3);
    }
  }
  Matrix x(rows, in), y(rows, out);
  for (auto& v : x.flat()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (loss == nn::LossKind::kCrossEntropy && head == nn::LayerKind::kSoftmax) {
      y(i, rng.index(out)) = 1.0;
    } else {
      for (std::size_t j = 0; j < out; ++j) y(i, j) = rng.uniform(0.05, 0.95);
    }
  }
  net.set_mode(nn::Mode::kTraining);
  const std::uint64_t mask_seed = derive_seed(seed, 99);
  net.reseed_dropout(mask_seed);
  net.loss_and_grad(x, y, loss);
  auto params = net.parameters();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad.begin(), p.grad.end());

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t j = 0; j < params[pi].value.size(); ++j) {
      double& w = params[pi].value[j];
      const double keep = w;
      w = keep + h;
      const double up = batch_loss(net, x, y, loss, mask_seed);
      w = keep - h;
      const double down = batch_loss(net, x, y, loss, mask_seed);
      w = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][j];
      // Floor well above the ~1e-11 roundoff of a central difference at h = 1e-5,
      // so exactly-zero gradients (a dense bias feeding batch norm) compare sanely.
      const double rel = std::fabs(a - numeric) / std::max(1e-6, std::fabs(a) + std::fabs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

Outcome gradient_oracle() {
  struct Case {
    nn::LayerKind head;
    nn::LossKind loss;
    const char* name;
  };
  const Case cases[] = {{nn::LayerKind::kSoftmax, nn::LossKind::kCrossEntropy, "softmax+ce"},
                        {nn::LayerKind::kSoftmax, nn::LossKind::kMeanSquaredError, "softmax+mse"},
                        {nn::LayerKind::kSigmoid, nn::LossKind::kMeanSquaredError, "sigmoid+mse"},
                        {nn::LayerKind::kSigmoid, nn::LossKind::kCrossEntropy, "sigmoid+ce"}};
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& c : cases) {
      const double w = grad_check_worst(seed, c.head, c.loss);
      if (w > worst) {
        worst = w;
        where = std::string(c.name) + " seed " + std::to_string(seed);
      }
    }
  }
  return {worst <= 1e-3, fmt("worst relative error %.3e", worst) + " at " + where + " (want <= 1e-3)"};
}

// ---- 6: KS statistic against exhaustive ECDF enumeration ----

double ecdf_d(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> support(a);
  support.insert(support.end(), b.begin(), b.end());
  double d = 0.0;
  for (double t : support) {
    const auto ca = std::count_if(a.begin(), a.end(), [t](double v) { return v <= t; });
    const auto cb = std::count_if(b.begin(), b.end(), [t](double v) { return v <= t; });
    d = std::max(d, std::fabs(static_cast<double>(ca) / static_cast<double>(a.size()) -
                              static_cast<double>(cb) / static_cast<double>(b.size())));
  }
  return d;
}

Outcome ks_oracle() {
  Rng rng(606);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(2 + rng.index(11)), b(2 + rng.index(11));
    // Small integer support forces ties half of the time.
    const bool ties = t % 2 == 0;
    for (auto& v : a) v = ties ? static_cast<double>(rng.index(5)) : rng.uniform();
    for (auto& v : b) v = ties ? static_cast<double>(rng.index(5)) : rng.uniform();
    if (privacy::ks_two_sample(a, b).d_statistic != ecdf_d(a, b)) ++mismatches;
  }
  const std::vector<double> a1{1, 2, 3}, b1{4, 5, 6}, a2{1, 2}, b2{2, 3};
  const double d1 = privacy::ks_two_sample(a1, b1).d_statistic;
  const double d2 = privacy::ks_two_sample(a2, b2).d_statistic;

  bool monotone = true;
  double prev_p = 2.0;
  std::vector<double> base(50);
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = static_cast<double>(i);
  double prev_d = -1.0;
  for (int shift = 0; shift <= 50; ++shift) {
    std::vector<double> moved(base);
    for (auto& v : moved) v += shift + 0.5;
    const auto r = privacy::ks_two_sample(base, moved);
    monotone = monotone && r.d_statistic >= prev_d && r.p_value <= prev_p;
    prev_d = r.d_statistic;
    prev_p = r.p_value;
  }
  const bool ok = mismatches == 0 && d1 == 1.0 && d2 == 0.5 && monotone;
  return {ok, std::to_string(mismatches) + "/200 mismatches, hand cases D=" + fmt("%.3f", d1) + "," +
                  fmt("%.3f", d2) + ", p monotone: " + (monotone ? "yes" : "no")};
}

// ---- 7: minimum-norm reconstruction ----

Outcome min_norm() {
  Rng rng(707);
  int systems = 0, rejected = 0;
  double worst_residual = 0.0;
  int norm_violations = 0;
  while (systems < 100) {
    const std::size_t k = 2 + rng.index(9);
    const std::size_t d = k + 1 + rng.index(12);
    const auto r = sample_matrix(k, d, 3.0, rng.next_u64());
    std::vector<double> x(d);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    const auto xp = project(x, r);
    std::vector<double> xhat;
    try {
      xhat = attack::min_norm_reconstruct(xp, r);
    } catch (const SingularMatrixError&) {
      ++rejected;
      continue;
    }
    ++systems;
    const auto back = project(xhat, r);
    for (std::size_t i = 0; i < k; ++i) worst_residual = std::max(worst_residual, std::fabs(back[i] - xp[i]));
    for (int p = 0; p < 10; ++p) {
      std::vector<double> v(d);
      for (auto& e : v) e = rng.uniform(-1.0, 1.0);
      // Null-space component of v: v minus its own minimum-norm preimage.
      const auto row_part = attack::min_norm_reconstruct(project(v, r), r);
      const double t = rng.uniform(-3.0, 3.0);
      std::vector<double> moved(xhat);
      for (std::size_t i = 0; i < d; ++i) moved[i] += t * (v[i] - row_part[i]);
      if (squared_norm(xhat) > squared_norm(moved) * (1.0 + 1e-12) + 1e-15) ++norm_violations;
    }
  }
  const bool ok = worst_residual <= 1e-8 && norm_violations == 0;
  return {ok, fmt("max |R x_hat - x'| = %.2e", worst_residual) + ", " + std::to_string(norm_violations) +
                  "/1000 norm violations, " + std::to_string(rejected) + " singular draws skipped"};
}

// ---- 8: synthetic end-to-end ----

pipeline::PipelineConfig e2e_config(const fs::path& out) {
  pipeline::PipelineConfig cfg;
  cfg.synth.n_users = 10;
  cfg.synth.d = 24;
  cfg.synth.m_per_user = 240;
  cfg.k = 20;
  cfg.phi = 3.0;
  cfg.enroll_fraction = 1.0;  // every user enrolls
  cfg.seed = 7;
  cfg.out = out;
  return cfg;
}

Outcome synthetic_e2e(const fs::path& scratch) {
  const auto cfg = e2e_config(scratch / "e2e");
  fs::remove_all(cfg.out);
  pipeline::cmd_enroll(cfg);
  pipeline::cmd_verify(cfg, {std::nullopt, true});
  pipeline::cmd_refresh(cfg);
  const auto enroll = read_json(cfg.out / "enroll" / "report.json");
  const auto verify = read_json(cfg.out / "verify" / "report.json");
  const auto refresh = read_json(cfg.out / "refresh" / "report.json");
  const double val_acc = enroll["final_validation_accuracy"];
  const double wrong = verify["unusability"]["acceptance"];
  const double before = refresh["before"]["frr"];
  const double after = refresh["new_matrix"]["frr"];
  const double old_acc = refresh["old_matrix"]["acceptance"];
  const bool ok = val_acc >= 0.90 && wrong <= 0.15 && after <= before + 0.05 && old_acc <= 0.15;
  return {ok, fmt("validation accuracy %.4f (>= 0.90)", val_acc) + fmt(", wrong-matrix acceptance %.4f (<= 0.15)", wrong) +
                  fmt(", FRR %.4f", before) + fmt(" -> %.4f (<= +0.05)", after) +
                  fmt(", old-matrix acceptance %.4f (<= 0.15)", old_acc)};
}

// ---- 9: attack ordering ----

Outcome attack_ordering(const fs::path& scratch) {
  pipeline::PipelineConfig cfg;
  cfg.synth.n_users = 20;
  cfg.synth.d = 24;
  cfg.synth.m_per_user = 240;
  cfg.synth.class_separation = 1.5;
  cfg.enroll_fraction = 0.5;  // 10 victims, 10 attack profiles
  cfg.k = 20;
  cfg.attack_mode = "all";
  cfg.seed = 7;
  cfg.out = scratch / "attack";
  fs::remove_all(cfg.out);
  pipeline::cmd_attack(cfg);
  const auto report = read_json(cfg.out / "attack" / "report.json");
  const double dist = report["modes"]["distribution_only"]["epsilon_mean"];
  const double known = report["modes"]["known_matrix"]["epsilon_mean"];

  // Control: k = d identity "projection" for victims and attacker alike.
  const auto prep = pipeline::prepare(cfg);
  const std::size_t d = cfg.synth.d;
  std::vector<std::int8_t> eye(d * d, 0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1;
  const auto identity = matrix_from_entries(d, d, eye, cfg.phi, "identity");
  std::vector<ProjectedProfile> victims;
  for (const auto& p : prep.enroll_train) victims.push_back(project(p, identity));
  const auto corpus = attack::build_attack_corpus(
      prep.attack_profiles, {attack::KnowledgeMode::kKnownMatrix, cfg.phi, 1, {identity}}, d, 1);
  const auto trained = attack::train_attack_model(corpus, {cfg.attack_widths, d, d}, attack::default_attack_config(2),
                                                  0.8, 3);
  const auto recovered = attack::recover_profiles(trained.net, victims);
  const double control =
      privacy::evaluate_distribution_privacy(recovered, prep.enroll_train, cfg.alpha, "identity").epsilon_mean;

  const bool ok = control >= 0.90 && dist < control && known >= dist;
  return {ok, fmt("identity control %.4f (>= 0.90)", control) + fmt(", distribution-only %.4f (< control)", dist) +
                  fmt(", known-matrix %.4f (>= distribution-only)", known)};
}

// ---- 10: determinism ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const fs::path& scratch) {
  std::vector<fs::path> roots;
  for (const char* name : {"run_a", "run_b"}) {
    pipeline::PipelineConfig cfg;
    cfg.out = scratch / name;
    fs::remove_all(cfg.out);
    pipeline::cmd_generate(cfg);
    pipeline::cmd_enroll(cfg);
    pipeline::cmd_verify(cfg, {std::nullopt, true});
    pipeline::cmd_refresh(cfg);
    pipeline::cmd_attack(cfg);
    pipeline::cmd_report(cfg);
    roots.push_back(cfg.out);
  }
  std::vector<std::string> files_a, files_b;
  for (const auto& e : fs::recursive_directory_iterator(roots[0])) {
    if (e.is_regular_file()) files_a.push_back(fs::relative(e.path(), roots[0]).string());
  }
  for (const auto& e : fs::recursive_directory_iterator(roots[1])) {
    if (e.is_regular_file()) files_b.push_back(fs::relative(e.path(), roots[1]).string());
  }
  std::sort(files_a.begin(), files_a.end());
  std::sort(files_b.begin(), files_b.end());
  if (files_a != files_b) return {false, "runs emitted different file sets"};
  std::size_t differing = 0;
  std::string first;
  for (const auto& f : files_a) {
    if (slurp(roots[0] / f) != slurp(roots[1] / f)) {
      if (differing++ == 0) first = f;
    }
  }
  return {differing == 0, std::to_string(files_a.size()) + " files compared, " + std::to_string(differing) +
                              " differ" + (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path scratch = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_work";
  fs::create_directories(scratch);

  run(1, "minimum projected dimension (no log factor)", 0.001, table_rows);
  run(2, "classifier parameter counts", 1.0, param_counts);
  run(3, "distance concentration", 5.0, jl_concentration);
  run(4, "projection unbiasedness", 10.0, unbiasedness);
  run(5, "gradient oracle", 30.0, gradient_oracle);
  run(6, "KS oracle equivalence", 5.0, ks_oracle);
  run(7, "minimum-norm correctness", 5.0, min_norm);
  run(8, "synthetic end-to-end", 300.0, [&] { return synthetic_e2e(scratch); });
  run(9, "attack ordering", 600.0, [&] { return attack_ordering(scratch); });
  run(10, "determinism", 1800.0, [&] { return determinism(scratch); });

  std::printf("%s: %d criterion(s) failed\n", g_failures ? "FAILED" : "OK", g_failures);
  return g_failures ? 1 : 0;
}
