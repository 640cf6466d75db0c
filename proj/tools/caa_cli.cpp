// caa: command-line entry point for the pipeline stages.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "caa/config.hpp"
#include "caa/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kMissingStage = 3, kData = 4 };

int report_error(const std::string& kind, const std::string& stage, const std::string& message,
                 const std::vector<std::string>& problems = {}, const std::string& needs = "") {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["stage"] = stage;
  j["message"] = message;
  if (!problems.empty()) j["problems"] = problems;
  if (!needs.empty()) j["missing_stage"] = needs;
  std::cerr << j.dump() << '\n';
  if (kind == "config") return kConfig;
  if (kind == "missing-stage") return kMissingStage;
  if (kind == "data") return kData;
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual contextual affective analysis pipeline"};
  app.require_subcommand(1);

  std::string config_file;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_file, "INI configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("-o,--output-dir", output_dir, "Overrides paths.output_dir");
  app.add_option("--seed", seed, "Overrides run.seed");
  app.add_option("--set", sets, "Overrides any key: section.key=value (repeatable)");

  caa::StageOptions stage_opt;
  std::string target, source, similarity, slope;
  std::optional<std::size_t> min_verbs, k;

  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const auto& name : caa::stage_names()) subs.emplace_back(name, app.add_subcommand(name, "Run the " + name + " stage"));
  auto* all = app.add_subcommand("run-all", "Run every stage in order");
  auto find = [&](const std::string& n) {
    for (auto& [name, s] : subs)
      if (name == n) return s;
    return static_cast<CLI::App*>(nullptr);
  };
  find("eval")->add_option("--target", target, "Only this target language");
  find("eval")->add_option("--source", source, "Only this source (training) language");
  find("match")->add_option("--similarity", similarity, "pivoted-dot or cosine (matching.similarity)");
  find("match")->add_option("--slope", slope, "Fixed slope or 'auto' (matching.slope)");
  find("report")->add_option("--min-verbs", min_verbs, "Minimum verbs per subgroup (report.min_verbs)");
  find("rank-imbalance")->add_option("-k", k, "Number of entries per list (report.imbalance_k)");

  CLI11_PARSE(app, argc, argv);

  std::string stage;
  for (auto& [name, s] : subs)
    if (s->parsed()) stage = name;
  if (all->parsed()) stage = "run-all";

  try {
    caa::ConfigOverrides overrides = caa::parse_overrides(sets);
    if (!output_dir.empty()) overrides.emplace_back("paths.output_dir", output_dir);
    if (seed) overrides.emplace_back("run.seed", std::to_string(*seed));
    if (!similarity.empty()) overrides.emplace_back("matching.similarity", similarity);
    if (!slope.empty()) overrides.emplace_back("matching.slope", slope);
    if (min_verbs) overrides.emplace_back("report.min_verbs", std::to_string(*min_verbs));
    if (k) overrides.emplace_back("report.imbalance_k", std::to_string(*k));
    auto cfg = caa::load_config(config_file, overrides);
    // A relative --output-dir is taken from the working directory.
    if (!output_dir.empty()) cfg.output_dir = std::filesystem::absolute(output_dir);
    if (!target.empty()) stage_opt.eval.target = caa::Language(target);
    if (!source.empty()) stage_opt.eval.source = caa::Language(source);

    std::vector<std::string> stages = stage == "run-all" ? caa::stage_names() : std::vector<std::string>{stage};
    for (const auto& s : stages) {
      try {
        caa::run_stage(s, cfg, stage_opt);
      } catch (const caa::ConfigError& e) {
        return report_error("config", s, e.what(), e.problems());
      } catch (const caa::MissingStageError& e) {
        return report_error("missing-stage", s, e.what(), {}, e.stage());
      } catch (const caa::DataError& e) {
        return report_error("data", s, e.what());
      } catch (const caa::ParseError& e) {
        return report_error("data", s, e.what());
      } catch (const caa::FormatError& e) {
        return report_error("data", s, e.what());
      } catch (const std::exception& e) {
        return report_error("failure", s, e.what());
      }
      std::cout << s << ": ok (" << cfg.output_dir.string() << ", config " << cfg.hash().substr(0, 12) << ")\n";
    }
  } catch (const caa::ConfigError& e) {
    return report_error("config", stage, e.what(), e.problems());
  } catch (const std::exception& e) {
    return report_error("failure", stage, e.what());
  }
  return kOk;
}
