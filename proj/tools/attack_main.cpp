// attack: command-line front end for campaigns, reports, the desk model and
// the built-in self test.
//
// Exit codes: 0 success, 1 campaign error, 2 config error.

#include <CLI11.hpp>

#include <iostream>

#include "selftest.hpp"
#include "tetradat/desk.hpp"
#include "tetradat/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCampaignError = 1;
constexpr int kConfigError = 2;

int run(const std::string& config_path) {
  const auto spec = tetradat::load_campaign_config(config_path);
  const auto summary = tetradat::run_campaign(spec);
  std::cout << tetradat::to_json(summary).dump(2) << '\n';
  return kOk;
}

int report(const std::string& results) {
  const auto outcome = tetradat::emit_report(results);
  std::cout << "wrote " << outcome.panels << " panels";
  if (!outcome.omitted.empty()) std::cout << ", omitted " << outcome.omitted.size();
  std::cout << '\n';
  return kOk;
}

int train(std::uint64_t seed, const std::string& out,
          const tetradat::desk::TrainOptions& options) {
  tetradat::desk::TrainReport rep;
  const auto model = tetradat::desk::train_desk_model(seed, options, &rep);
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e)
    std::cout << "epoch " << e + 1 << " loss " << rep.epoch_loss[e] << '\n';
  std::cout << "train accuracy " << rep.train_accuracy << '\n';
  tetradat::save_weights(out, model);
  std::cout << "saved " << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-train black-box adversarial attacks"};
  app.require_subcommand(1);

  std::string config;
  auto* run_cmd = app.add_subcommand("run", "Run an attack campaign");
  run_cmd->add_option("--config", config, "Campaign config file")->required();

  std::string results;
  auto* report_cmd = app.add_subcommand("report", "Render report panels");
  report_cmd->add_option("--results", results, "Campaign output directory")->required();

  std::uint64_t seed = tetradat::desk::kTrainDataSeed;
  std::string weights_out = "desk_model.nnw";
  tetradat::desk::TrainOptions options;
  auto* train_cmd =
      app.add_subcommand("train-desk-model", "Train the built-in desk classifier");
  train_cmd->add_option("--seed", seed, "Seed for data, initialization and shuffling")
      ->required();
  train_cmd->add_option("--out", weights_out, "Output weights file (NNW1)");
  train_cmd->add_option("--samples", options.samples, "Synthetic training images");
  train_cmd->add_option("--epochs", options.epochs, "Training epochs");
  train_cmd->add_option("--lr", options.lr, "Learning rate");

  std::string weights = std::string(TETRADAT_DATA_DIR) + "/desk_model.nnw";
  auto* selftest_cmd = app.add_subcommand("selftest", "Quick numerical self test");
  selftest_cmd->add_option("--weights", weights, "Desk model weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return run(config);
    if (*report_cmd) return report(results);
    if (*train_cmd) return train(seed, weights_out, options);
    if (*selftest_cmd) return tetradat::tools::selftest(weights, std::cout) ? kOk : kCampaignError;
  } catch (const tetradat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCampaignError;
  }
  return kOk;
}
