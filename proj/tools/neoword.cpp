// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neoword/cli.hpp"
#include "neoword/errors.hpp"

namespace {

neoword::ExperimentConfig load_config(const std::string& path,
                                      const std::vector<std::string>& overrides) {
  return neoword::ExperimentConfig::load(path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neologism training and evaluation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string dataset_path;
  std::string train_run;
  std::string run_id;
  bool resume = false;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration file")->required();
    cmd->add_option("--set", overrides, "override, key=value (repeatable)");
  };
  auto add_run_opts = [&](CLI::App* cmd) {
    cmd->add_option("--run-id", run_id, "explicit run id");
    cmd->add_flag("--resume", resume, "reuse an existing run directory");
  };

  auto* datagen = app.add_subcommand("datagen", "generate a preference dataset");
  add_config(datagen);
  std::string out_path = "dataset.jsonl";
  datagen->add_option("--out", out_path, "output dataset path");

  auto* train = app.add_subcommand("train", "train neologism embedding rows");
  add_config(train);
  train->add_option("--dataset", dataset_path, "preference dataset")->required();
  add_run_opts(train);

  auto* eval = app.add_subcommand("eval", "evaluate the trained neologism");
  add_config(eval);
  eval->add_option("--dataset", dataset_path, "preference dataset (training targets)")->required();
  eval->add_option("--train-run", train_run, "training run directory")->required();
  add_run_opts(eval);

  auto* verbalize = app.add_subcommand("verbalize", "elicit a self-verbalization");
  add_config(verbalize);
  verbalize->add_option("--train-run", train_run, "training run directory")->required();
  add_run_opts(verbalize);

  auto* plugin = app.add_subcommand("plugin-eval", "evaluate verbalization candidates");
  add_config(plugin);
  plugin->add_option("--dataset", dataset_path, "preference dataset (training targets)")
      ->required();
  plugin->add_option("--train-run", train_run, "training run directory")->required();
  std::vector<std::string> synonyms;
  std::vector<std::string> instructions;
  std::string from_verbalization;
  plugin->add_option("--synonym", synonyms, "candidate synonym (repeatable)");
  plugin->add_option("--instruction", instructions, "candidate instruction (repeatable)");
  plugin->add_option("--from-verbalization", from_verbalization,
                     "verbalize run directory to pull candidates from");
  add_run_opts(plugin);

  auto* report = app.add_subcommand("report", "combined tables over finished runs");
  std::vector<std::string> run_dirs;
  report->add_option("runs", run_dirs, "run directories")->required();
  std::string report_out;
  report->add_option("--out", report_out, "also write the tables to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (datagen->parsed()) {
      auto config = load_config(config_path, overrides);
      auto result = neoword::cmd_datagen(config, out_path);
      std::printf("wrote %zu records to %s\n", result.records, result.dataset_path.c_str());
      std::printf("manifest: %s\n", result.manifest_path.c_str());
    } else if (train->parsed()) {
      auto config = load_config(config_path, overrides);
      auto outcome = neoword::cmd_train(config, dataset_path, run_id, resume);
      std::printf("run %s complete (%zu optimizer steps)\n", outcome.record.run_id.c_str(),
                  outcome.result.loss_history.size());
      if (!outcome.result.loss_history.empty())
        std::printf("final loss: %.6f\n", outcome.result.loss_history.back());
      std::printf("artifacts: %s\n", outcome.run_dir.c_str());
    } else if (eval->parsed()) {
      auto config = load_config(config_path, overrides);
      auto outcome = neoword::cmd_eval(config, dataset_path, train_run, run_id, resume);
      std::printf("run %s complete\n", outcome.record.run_id.c_str());
      std::fputs(neoword::format_report(outcome.report).c_str(), stdout);
    } else if (verbalize->parsed()) {
      auto config = load_config(config_path, overrides);
      auto outcome = neoword::cmd_verbalize(config, train_run, run_id, resume);
      std::printf("run %s complete\n", outcome.record.run_id.c_str());
      const auto& v = outcome.verbalization;
      if (v.synonyms.empty()) {
        std::printf("synonyms: (no parsable list)\n");
      } else {
        std::printf("synonyms:");
        for (const auto& w : v.synonyms)
          std::printf(" %s%s", w.c_str(), w.find(' ') != std::string::npos ? " (multi-word)" : "");
        std::printf("\n");
      }
      std::printf("instruction: %s\n", v.instruction.c_str());
    } else if (plugin->parsed()) {
      auto config = load_config(config_path, overrides);
      std::vector<neoword::PluginCandidate> candidates;
      if (!from_verbalization.empty()) {
        auto v = neoword::load_verbalization(std::filesystem::path(from_verbalization) /
                                             "verbalization.json");
        for (const auto& w : v.synonyms)
          candidates.push_back({neoword::PluginCandidate::Kind::synonym, w});
        if (!v.instruction.empty())
          candidates.push_back({neoword::PluginCandidate::Kind::instruction, v.instruction});
      }
      for (const auto& w : synonyms)
        candidates.push_back({neoword::PluginCandidate::Kind::synonym, w});
      for (const auto& text : instructions)
        candidates.push_back({neoword::PluginCandidate::Kind::instruction, text});
      auto outcome =
          neoword::cmd_plugin_eval(config, dataset_path, train_run, candidates, run_id, resume);
      std::printf("run %s complete (%zu candidates)\n", outcome.record.run_id.c_str(),
                  outcome.reports.size());
      for (const auto& rep : outcome.reports) std::fputs(neoword::format_report(rep).c_str(), stdout);
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      std::string tables = neoword::cmd_report(dirs);
      std::fputs(tables.c_str(), stdout);
      if (!report_out.empty()) neoword::write_text_file(report_out, tables);
    }
  } catch (const neoword::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", neoword::errc_name(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
