#include <map>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "match/errors.hpp"
#include "match_cli/pipeline.hpp"

namespace {

std::string dashed(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

void setup_logging(const match::cli::RunConfig& config) {
  std::filesystem::create_directories(config.output_dir);
  auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
  auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>(
      config.output_path("match.log").string(), false);
  auto logger = std::make_shared<spdlog::logger>("match", spdlog::sinks_init_list{console, file});
  logger->set_level(spdlog::level::from_str(config.log_level));
  logger->set_pattern("[%H:%M:%S] [%l] %v");
  logger->flush_on(spdlog::level::info);
  spdlog::set_default_logger(logger);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace match::cli;

  CLI::App app{"Metadata-aware hierarchical multi-label text classification"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1, 1);

  std::string config_file;
  app.add_option("-c,--config", config_file, "key = value configuration file")
      ->check(CLI::ExistingFile);

  std::map<std::string, std::string> key_values;
  for (const auto& key : config_keys()) {
    app.add_option(dashed(key.name), key_values[key.name], key.help + " [" + key.type + "]")
        ->group("Config overrides");
  }
  bool no_author = false, no_venue = false, no_reference = false;
  bool no_pretrain = false, no_hierarchy = false, no_metadata = false;
  auto* ablations = "Ablations";
  app.add_flag("--no-author", no_author, "leave out authors")->group(ablations);
  app.add_flag("--no-venue", no_venue, "leave out venues")->group(ablations);
  app.add_flag("--no-reference", no_reference, "leave out references")->group(ablations);
  app.add_flag("--no-pretrain", no_pretrain, "random unit initialization")->group(ablations);
  app.add_flag("--no-hierarchy", no_hierarchy, "set lambda_param = lambda_output = 0")
      ->group(ablations);
  app.add_flag("--no-metadata", no_metadata, "leave out every metadata type")->group(ablations);

  const std::pair<const char*, const char*> commands[] = {
      {"synth", "write a planted synthetic corpus and hierarchy"},
      {"pretrain", "train spherical joint embeddings"},
      {"train", "train the classifier"},
      {"predict", "write top-k predictions"},
      {"eval", "evaluate on the test split"},
      {"all", "synth (without a corpus), pretrain, train and eval"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  RunConfig config;
  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& key : config_keys()) {
      if (app.count(dashed(key.name)) > 0) overrides.emplace_back(key.name, key_values[key.name]);
    }
    if (no_pretrain) overrides.emplace_back("pretrain", "false");
    if (no_hierarchy) {
      overrides.emplace_back("lambda_param", "0");
      overrides.emplace_back("lambda_output", "0");
    }
    config = parse_config(config_file, overrides);
    if (no_metadata) config.drop_metadata.push_back("all");
    if (no_author) config.drop_metadata.push_back("authors");
    if (no_venue) config.drop_metadata.push_back("venue");
    if (no_reference) config.drop_metadata.push_back("references");
  } catch (const match::ArgumentError& e) {
    std::fprintf(stderr, "match: %s\n", e.what());
    return 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    setup_logging(config);
    if (command == "synth") run_synth(config);
    else if (command == "pretrain") run_pretrain(config);
    else if (command == "train") run_train(config);
    else if (command == "predict") run_predict(config);
    else if (command == "eval") run_eval(config);
    else run_all(config);
  } catch (const match::ArgumentError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
