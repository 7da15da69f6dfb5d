// psi: command-line driver for the price sentiment pipeline.
//
//   psi --config pipeline.json run-all
//   psi --config pipeline.json evaluate --reference cpi.csv --variant consumer_general
//
// Exit codes: 0 success, 1 per-item failures (see *.errors.jsonl), 2 config or I/O error.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "psi/pipeline.hpp"

namespace {

struct Overrides {
  std::optional<std::string> cache;
  std::optional<std::uint64_t> seed;
  bool strict_industry = false;
  std::optional<std::string> out_dir;
  bool emit_plot_data = false;
  bool force = false;
  std::optional<std::string> psi;
  std::optional<std::string> reference;
  std::optional<std::string> variant;
  std::optional<std::string> ensemble;
};

psi::PipelineConfig load_config(const std::string& path, const Overrides& o) {
  auto j = psi::json::parse(psi::read_file(path), nullptr, false);
  if (j.is_discarded()) throw psi::ConfigError(path + ": invalid JSON");
  // Overrides are folded into the document so stage digests see them.
  auto cwd_abs = [](const std::string& p) { return psi::fs::absolute(p).lexically_normal().string(); };
  if (o.cache) j["cache"] = cwd_abs(*o.cache);
  if (o.seed) j["seed"] = *o.seed;
  if (o.strict_industry) j["strict_industry"] = true;
  if (o.out_dir) j["out_dir"] = cwd_abs(*o.out_dir);
  if (o.emit_plot_data) j["emit_plot_data"] = true;
  if (o.ensemble) j["ensemble"] = *o.ensemble;
  if (o.psi) j["analytics"]["psi"] = cwd_abs(*o.psi);
  if (o.reference) j["analytics"]["reference"] = cwd_abs(*o.reference);
  if (o.variant) j["analytics"]["variant"] = *o.variant;
  auto c = psi::PipelineConfig::from_json(j, path);
  c.force = o.force;
  return c;
}

int exit_code(const std::vector<psi::StageResult>& results) {
  int code = psi::kExitOk;
  for (const auto& r : results) code = std::max(code, r.exit_code);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Price sentiment index pipeline"};
  app.set_version_flag("--version", psi::kToolVersion);
  app.require_subcommand(1);

  std::string config_path = "pipeline.json";
  Overrides o;
  app.add_option("-c,--config", config_path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--cache", o.cache, "LLM response cache file (JSONL)");
  app.add_option("--seed", o.seed, "Seed for the train/dev/test split");
  app.add_flag("--strict-industry", o.strict_industry, "Fail on industries missing from the mapping");
  app.add_option("--out-dir", o.out_dir, "Directory for stage artifacts");
  app.add_flag("--force", o.force, "Rerun stages even when their manifests are current");

  auto* filter = app.add_subcommand("filter", "Keep price-related comments");
  auto* classify = app.add_subcommand("classify", "Run every judge over the filtered comments");
  auto* integrate = app.add_subcommand("integrate", "Combine judgments into one label per comment");
  integrate->add_option("--ensemble", o.ensemble, "llm or vote")->check(CLI::IsMember({"llm", "vote"}));
  auto* index = app.add_subcommand("index", "Build monthly PSI series");
  index->add_flag("--emit-plot-data", o.emit_plot_data, "Also write plot_data.csv");
  auto* evaluate = app.add_subcommand("evaluate", "Lead/lag correlation and Granger tests against a reference");
  evaluate->add_option("--psi", o.psi, "PSI CSV (defaults to the variant's file in the output directory)");
  evaluate->add_option("--reference", o.reference, "Reference series CSV (month,value)");
  evaluate->add_option("--variant", o.variant, "PSI variant to evaluate");
  auto* run_all = app.add_subcommand("run-all", "Run every stage in order");
  run_all->add_flag("--emit-plot-data", o.emit_plot_data, "Also write plot_data.csv");
  run_all->add_option("--reference", o.reference, "Reference series CSV (month,value)");

  CLI11_PARSE(app, argc, argv);

  try {
    auto c = load_config(config_path, o);
    std::vector<psi::StageResult> results;
    if (filter->parsed()) results.push_back(psi::cmd_filter(c));
    else if (classify->parsed()) results.push_back(psi::cmd_classify(c));
    else if (integrate->parsed()) results.push_back(psi::cmd_integrate(c));
    else if (index->parsed()) results.push_back(psi::cmd_index(c));
    else if (evaluate->parsed()) results.push_back(psi::cmd_evaluate(c));
    else if (run_all->parsed()) results = psi::run_all(c);
    return exit_code(results);
  } catch (const psi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return psi::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return psi::kExitConfigError;
  }
}
