// bapriv: command-line driver for the projection-based authentication pipeline.
//
//   bapriv <command> [--config FILE] [--<key> VALUE ...]
//
// Commands: generate, enroll, verify, refresh, attack, report, config.
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "bapriv/pipeline.hpp"

namespace {

using bapriv::pipeline::PipelineConfig;

struct Overrides {
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_config_options(CLI::App& cmd, Overrides& ov) {
  cmd.add_option("--config", ov.config_file, "flat key = value config file");
  for (const auto& key : PipelineConfig::keys()) {
    cmd.add_option_function<std::string>(
        "--" + key, [&ov, key](const std::string& v) { ov.values[key] = v; }, "override '" + key + "'");
  }
}

PipelineConfig resolve(const Overrides& ov) {
  PipelineConfig cfg = ov.config_file.empty() ? PipelineConfig{} : PipelineConfig::from_file(ov.config_file);
  for (const auto& [k, v] : ov.values) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving behavioral authentication via sparse random projection"};
  app.require_subcommand(1);
  Overrides ov;

  auto* gen = app.add_subcommand("generate", "write the synthetic dataset as per-user CSV files");
  auto* enr = app.add_subcommand("enroll", "project profiles and train the verifier");
  auto* ver = app.add_subcommand("verify", "verify claims against the enrolled model");
  auto* ref = app.add_subcommand("refresh", "rekey all users and update the model");
  auto* att = app.add_subcommand("attack", "run reconstruction attacks and measure distribution privacy");
  auto* rep = app.add_subcommand("report", "collect stage reports into one summary");
  auto* cfg_cmd = app.add_subcommand("config", "print the resolved configuration");
  for (auto* c : {gen, enr, ver, ref, att, rep, cfg_cmd}) add_config_options(*c, ov);

  bapriv::pipeline::VerifyOptions verify_opts;
  std::string claims;
  ver->add_option("--claims", claims, "JSON claims file (default: derived from held-out data)");
  ver->add_flag("--wrong-matrix", verify_opts.wrong_matrix, "also project held-out data with fresh matrices");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  PipelineConfig cfg;
  try {
    cfg = resolve(ov);
  } catch (const bapriv::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  if (!claims.empty()) verify_opts.claims_file = claims;

  try {
    namespace p = bapriv::pipeline;
    if (*gen) {
      p::cmd_generate(cfg);
    } else if (*enr) {
      p::cmd_enroll(cfg);
    } else if (*ver) {
      p::cmd_verify(cfg, verify_opts);
    } else if (*ref) {
      p::cmd_refresh(cfg);
    } else if (*att) {
      p::cmd_attack(cfg);
    } else if (*rep) {
      p::cmd_report(cfg);
      std::cout << (cfg.out / "report" / "summary.txt").string() << '\n';
    } else {
      for (const auto& [k, v] : cfg.entries()) std::cout << k << " = " << v << '\n';
    }
  } catch (const bapriv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
