// Command-line driver: run / sweep / predict-bytes / presets.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adagossip/adagossip.hpp"

namespace {

using adagossip::ConfigMap;

// Registers one --flag per config key; set flags become overrides.
struct ConfigFlags {
  std::optional<std::string> config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "flat key=value config file");
    for (const auto& key : adagossip::config_keys()) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option(flag, values[key], "override `" + key + "`");
    }
  }

  ConfigMap overrides() const {
    ConfigMap out;
    for (const auto& [k, v] : values)
      if (!v.empty()) out[k] = v;
    return out;
  }
};

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    out.push_back(std::stod(item, &used));
    if (used != item.size()) throw adagossip::ConfigError("malformed sweep value `" + item + "`");
  }
  return out;
}

int run_command(const ConfigFlags& flags) {
  const auto cfg = adagossip::parse_config(flags.config_path, flags.overrides());
  const auto result = adagossip::run_experiment(cfg);
  if (cfg.out.empty()) {
    adagossip::write_metrics_csv(std::cout, result);
  } else {
    std::ofstream out(cfg.out, std::ios::binary);
    if (!out) throw adagossip::ConfigError("cannot write " + cfg.out);
    adagossip::write_metrics_csv(out, result);
    std::ofstream summary(cfg.out + ".summary.csv", std::ios::binary);
    adagossip::write_summary(summary, result);
  }
  adagossip::write_summary(std::cerr, result);
  return result.summary.seeds_failed == 0 ? 0 : 3;
}

int sweep_command(const ConfigFlags& flags, const std::string& axis, const std::string& values) {
  auto overrides = flags.overrides();
  const auto parsed_axis = adagossip::parse_sweep_axis(axis);
  const auto vals = parse_values(values);
  if (vals.empty()) throw adagossip::ConfigError("--values is empty");
  // A gamma sweep supplies gamma itself, so seed the required field.
  if (parsed_axis == adagossip::SweepAxis::gamma && !overrides.contains("gamma")) {
    overrides["gamma"] = adagossip::format_double(vals.front());
  }
  const auto cfg = adagossip::parse_config(flags.config_path, overrides);
  const auto result = adagossip::sweep(cfg, parsed_axis, vals);
  if (cfg.out.empty()) {
    adagossip::write_sweep_csv(std::cout, result);
  } else {
    std::ofstream out(cfg.out, std::ios::binary);
    if (!out) throw adagossip::ConfigError("cannot write " + cfg.out);
    adagossip::write_sweep_csv(out, result);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized learning with compressed gossip (DSGD, DeepSqueeze, CHOCO-SGD, AdaG-SGD)"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  auto* run = app.add_subcommand("run", "run an experiment over all configured seeds");
  run_flags.attach(run);

  ConfigFlags sweep_flags;
  std::string axis, values;
  auto* sw = app.add_subcommand("sweep", "repeat an experiment over values of one axis");
  sweep_flags.attach(sw);
  sw->add_option("--axis", axis, "beta | agents | gamma")->required();
  sw->add_option("--values", values, "comma-separated axis values")->required();

  std::size_t params = 0, agents = 0, batch = 32;
  std::uint64_t samples = 0;
  std::string topology = "ring", compressor = "none";
  auto* predict = app.add_subcommand("predict-bytes", "per-agent transmitted MB per epoch");
  predict->add_option("--params", params, "model parameter count")->required();
  predict->add_option("--samples", samples, "training samples")->required();
  predict->add_option("--agents", agents, "number of agents")->required();
  predict->add_option("--batch", batch, "per-agent mini-batch size");
  predict->add_option("--topology", topology, "ring | dyck32 | torus:RxC | full");
  predict->add_option("--compressor", compressor, "none | topk:F | quant:B");

  auto* list = app.add_subcommand("presets", "list built-in hyper-parameter presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(run_flags);
    if (*sw) return sweep_command(sweep_flags, axis, values);
    if (*predict) {
      const double mb = adagossip::predicted_bytes_per_epoch(params, samples, agents, batch, topology,
                                                              adagossip::parse_compressor(compressor));
      std::cout << adagossip::format_double(mb) << '\n';
      return 0;
    }
    if (*list) {
      for (const auto& p : adagossip::presets()) {
        std::cout << p.name << "  algorithm=" << p.algorithm << " topology=" << p.topology
                  << " agents=" << p.agents << " compressor=" << p.compressor << " gamma=" << p.gamma << '\n';
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
