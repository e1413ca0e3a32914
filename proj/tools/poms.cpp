// poms — quality-diversity policy search over learned parameter manifolds.
//
//   poms run <config.json>        execute one variant across its seed list
//   poms compare <campaign.json>  run several variants and emit summary/stats
//   poms stats <a.csv> <b.csv>    rank-test two finals tables or curves

#include <string>

#include <CLI11.hpp>

#include "poms/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"quality-diversity policy search in learned latent spaces"};
  app.require_subcommand(1);

  std::string config_path, campaign_path, csv_a, csv_b;
  std::string output_root;
  std::string alternative = "greater";

  auto* run = app.add_subcommand("run", "execute a single-variant run config");
  run->add_option("config", config_path, "run config JSON")->required();
  run->add_option("--output-root", output_root,
                  "directory the config's output_dir is resolved against "
                  "(default: $POMS_OUTPUT_ROOT or cwd)");

  auto* compare = app.add_subcommand("compare", "execute a multi-variant campaign");
  compare->add_option("campaign", campaign_path, "campaign config JSON")->required();
  compare->add_option("--output-root", output_root,
                      "directory the config's output_dir is resolved against");

  auto* stats = app.add_subcommand("stats", "Mann-Whitney rank test on two CSVs");
  stats->add_option("a", csv_a, "first finals table or coverage curve")->required();
  stats->add_option("b", csv_b, "second finals table or coverage curve")->required();
  stats->add_option("--alternative", alternative, "greater (default) or two-sided")
      ->check(CLI::IsMember({"greater", "two-sided"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad arguments are input errors
  }

  if (run->parsed()) return poms::cmd_run(config_path, output_root);
  if (compare->parsed()) return poms::cmd_compare(campaign_path, output_root);
  return poms::cmd_stats(csv_a, csv_b, alternative);
}
