#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssac/commands.hpp"
#include "ssac/errors.hpp"
#include "ssac/runtime.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

ssac::KeyValueEntry parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ssac::UsageError("--set expects key=value, got '" + text + "'");
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1)), 0};
}

std::vector<std::size_t> parse_k_values(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    const long long v = ssac::parse_integer("k", item);
    if (v < 0) throw ssac::UsageError("sweep-k: negative k " + item);
    out.push_back(std::size_t(v));
  }
  if (out.empty()) throw ssac::UsageError("sweep-k: no k values");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  ssac::tune_allocator();

  CLI::App app{"Deep subspace anomaly classification workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = ".";
  int threads = 1;
  app.add_option("--seed", seed, "Seed for the command's randomness");
  app.add_option("--config", config_path, "Flat key-value config file");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads for gen, replicate and sweep-k")->check(CLI::PositiveNumber);

  std::string manifest, checkpoint, split = "test";
  std::vector<std::string> assignments;
  std::optional<std::size_t> k_override;
  std::optional<double> lambda_override;
  bool baseline = false;
  double q = 0.99;
  int replications = 5;
  std::string k_values = "0,5,10,15,20,25";

  auto add_train_options = [&](CLI::App* cmd) {
    cmd->add_option("--set", assignments, "Override a train config key (key=value), repeatable");
    cmd->add_option("--k", k_override, "Subspace dimension");
    cmd->add_option("--lambda", lambda_override, "Weight of the deviation losses");
  };

  auto* gen = app.add_subcommand("gen", "Generate the synthetic defect dataset");

  auto* train = app.add_subcommand("train", "Train a model on a manifest's train split");
  train->add_option("--manifest", manifest, "Dataset manifest")->required();
  train->add_flag("--baseline", baseline, "Train the linear-head baseline instead");
  add_train_options(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--manifest", manifest, "Dataset manifest")->required();
  eval->add_option("--split", split, "train, val or test");

  auto* detect = app.add_subcommand("detect", "Score known test samples against the new-type pool");
  detect->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  detect->add_option("--manifest", manifest, "Dataset manifest")->required();
  detect->add_option("--quantile", q, "Validation-score quantile used as threshold")->check(CLI::Range(0.0, 1.0));

  auto* replicate = app.add_subcommand("replicate", "Re-split, train subspace and baseline, aggregate");
  replicate->add_option("--manifest", manifest, "Dataset manifest")->required();
  replicate->add_option("--replications,-R", replications, "Number of replications")->check(CLI::PositiveNumber);
  add_train_options(replicate);

  auto* sweep = app.add_subcommand("sweep-k", "Train once per subspace dimension");
  sweep->add_option("--manifest", manifest, "Dataset manifest")->required();
  sweep->add_option("--values", k_values, "Comma-separated k values");
  add_train_options(sweep);

  auto* export_repr = app.add_subcommand("export-repr", "Export representations and subspace distances");
  export_repr->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  export_repr->add_option("--manifest", manifest, "Dataset manifest")->required();
  export_repr->add_option("--split", split, "train, val, test or new");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto train_config = [&] {
    std::vector<ssac::KeyValueEntry> overrides;
    for (const auto& a : assignments) overrides.push_back(parse_assignment(a));
    if (k_override) overrides.push_back({"k", std::to_string(*k_override), 0});
    if (lambda_override) overrides.push_back({"lambda", ssac::format_real(*lambda_override), 0});
    if (baseline) {
      overrides.push_back({"head", "linear", 0});
      overrides.push_back({"ce_only", "true", 0});
    }
    return ssac::resolve_train_config(config_path, overrides);
  };

  try {
    auto& log = std::cout;
    if (gen->parsed()) {
      std::cout << ssac::cmd_gen(config_path, out_dir, seed.value_or(0), threads, log) << "\n";
    } else if (train->parsed()) {
      auto cfg = train_config();
      if (seed) cfg.seed = *seed;
      ssac::cmd_train(manifest, cfg, out_dir, log);
    } else if (eval->parsed()) {
      ssac::cmd_eval(checkpoint, manifest, split, out_dir, log);
    } else if (detect->parsed()) {
      ssac::cmd_detect(checkpoint, manifest, out_dir, q, log);
    } else if (replicate->parsed()) {
      ssac::cmd_replicate(manifest, replications, seed.value_or(0), train_config(), out_dir, threads, log);
    } else if (sweep->parsed()) {
      auto cfg = train_config();
      if (seed) cfg.seed = *seed;
      ssac::cmd_sweep_k(manifest, parse_k_values(k_values), cfg, out_dir, threads, log);
    } else if (export_repr->parsed()) {
      ssac::cmd_export_repr(checkpoint, manifest, split, out_dir + "/repr_" + split + ".csv", log);
    }
  } catch (const ssac::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ssac::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const ssac::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
