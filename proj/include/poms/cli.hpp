#pragma once

// The three tool commands. Each returns a process exit status: 0 success,
// 1 runtime failure (partial artifacts are left in place), 2 bad input.
// Kept out of main() so tests can drive commands in-process.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "poms/config.hpp"
#include "poms/errors.hpp"
#include "poms/io.hpp"
#include "poms/metrics.hpp"
#include "poms/search.hpp"

namespace poms {

// Output root precedence: explicit flag, then POMS_OUTPUT_ROOT, then cwd.
inline std::filesystem::path resolve_output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("POMS_OUTPUT_ROOT"); env && *env) return env;
  return ".";
}

namespace detail {

inline std::string cell_stem(const Variant& v, std::uint64_t seed) {
  return std::string(variant_name(v.kind)) + "_" + std::to_string(seed);
}

inline void write_cell_artifacts(const std::filesystem::path& dir, const RunConfig& cfg,
                                 const Variant& v, std::uint64_t seed,
                                 const RunResult& res) {
  const std::string stem = cell_stem(v, seed);
  write_file(dir / ("coverage_" + stem + ".csv"), coverage_csv(res.curve));
  write_file(dir / ("mixing_" + stem + ".csv"), mixing_csv(res.mixing_per_loop));
  write_file(dir / ("archive_" + stem + ".json"),
             archive_to_json(res.archive, cfg.policy).dump(2) + "\n");
  if (res.model)
    write_file(dir / ("model_" + stem + ".json"), model_to_json(*res.model).dump() + "\n");
}

inline RunResult run_cell(const RunConfig& cfg, const Variant& v, std::uint64_t seed) {
  RunOptions opts;
  opts.checkpoint_every = cfg.checkpoint_every;
  opts.threads = cfg.threads;
  return run(v, cfg.env, cfg.policy, cfg.budget, seed, opts);
}

inline std::string rank_method_name(RankMethod m) {
  return m == RankMethod::exact ? "exact" : "normal-approximation";
}

// Accepted stats inputs: a per-seed finals table (seed,final_coverage), a bare
// final_coverage column, or a single coverage curve (its last checkpoint).
inline std::vector<double> load_finals(const std::filesystem::path& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty()) throw ParseError(path.string() + ": empty file");
  const std::string& header = lines.front();
  std::vector<double> values;
  if (header == "seed,final_coverage" || header == "final_coverage") {
    const std::size_t col = header == "final_coverage" ? 0 : 1;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto fields = split(lines[i], ',');
      if (fields.size() != col + 1)
        throw ParseError(path.string() + ": malformed row '" + lines[i] + "'");
      values.push_back(parse_double(fields[col]));
    }
  } else if (header == "evals,coverage") {
    const auto curve = coverage_from_csv(read_file(path));
    if (curve.points.empty()) throw ParseError(path.string() + ": curve has no points");
    values.push_back(curve.points.back().coverage);
  } else {
    throw ParseError(path.string() + ": unrecognised header '" + header + "'");
  }
  if (values.empty()) throw ParseError(path.string() + ": no data rows");
  return values;
}

}  // namespace detail

inline int cmd_run(const std::string& config_path, const std::string& output_root = "") {
  RunConfig cfg;
  try {
    cfg = parse_config(Json::parse(read_file(config_path)), /*campaign=*/false);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    const auto dir = resolve_output_root(output_root) / std::filesystem::path(cfg.output_dir);
    write_file(dir / "manifest.json", manifest_json(cfg).dump(2) + "\n");
    const Variant& v = cfg.variants.front();
    std::vector<double> finals;
    for (std::uint64_t seed : cfg.seeds) {
      const RunResult res = detail::run_cell(cfg, v, seed);
      detail::write_cell_artifacts(dir, cfg, v, seed, res);
      if (cfg.dump_traces) {
        Rng boot(derive_seed(seed, hash_string("bootstrap")));
        const Rollout ro = evaluate(cfg.env, init_uniform(cfg.policy, boot));
        write_file(dir / ("trace_" + detail::cell_stem(v, seed) + ".csv"),
                   rollout_trace_csv(ro));
      }
      finals.push_back(res.curve.points.back().coverage);
      std::cout << variant_name(v.kind) << " seed " << seed << ": coverage "
                << format_double(finals.back()) << " after " << res.evaluations
                << " evals\n";
    }
    write_file(dir / ("finals_" + std::string(variant_name(v.kind)) + ".csv"),
               finals_csv(cfg.seeds, finals));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_compare(const std::string& campaign_path, const std::string& output_root = "") {
  RunConfig cfg;
  try {
    cfg = parse_config(Json::parse(read_file(campaign_path)), /*campaign=*/true);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    const auto dir = resolve_output_root(output_root) / std::filesystem::path(cfg.output_dir);
    write_file(dir / "manifest.json", manifest_json(cfg).dump(2) + "\n");

    std::vector<std::vector<CoverageCurve>> curves(cfg.variants.size());
    std::vector<std::vector<double>> finals(cfg.variants.size());
    for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
      const Variant& v = cfg.variants[vi];
      for (std::uint64_t seed : cfg.seeds) {
        const RunResult res = detail::run_cell(cfg, v, seed);
        detail::write_cell_artifacts(dir, cfg, v, seed, res);
        curves[vi].push_back(res.curve);
        finals[vi].push_back(res.curve.points.back().coverage);
        std::cout << variant_name(v.kind) << " seed " << seed << ": coverage "
                  << format_double(finals[vi].back()) << "\n";
      }
      write_file(dir / ("finals_" + std::string(variant_name(v.kind)) + ".csv"),
                 finals_csv(cfg.seeds, finals[vi]));
    }

    std::string summary = "variant,evals,median,q25,q75\n";
    for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
      const SeedSummary s = summarise(curves[vi]);
      for (std::size_t k = 0; k < s.checkpoints.size(); ++k) {
        summary += variant_name(cfg.variants[vi].kind);
        summary += ',' + std::to_string(s.checkpoints[k]);
        summary += ',' + format_double(s.median[k]);
        summary += ',' + format_double(s.q25[k]);
        summary += ',' + format_double(s.q75[k]) + '\n';
      }
    }
    write_file(dir / "summary.csv", summary);

    std::string stats = "variant_a,variant_b,u,p,method\n";
    for (std::size_t a = 0; a < cfg.variants.size(); ++a)
      for (std::size_t b = a + 1; b < cfg.variants.size(); ++b) {
        const RankTestResult r = compare(finals[a], finals[b]);
        stats += std::string(variant_name(cfg.variants[a].kind)) + ',' +
                 variant_name(cfg.variants[b].kind) + ',' + format_double(r.u_statistic) +
                 ',' + format_double(r.p_value) + ',' + detail::rank_method_name(r.method) +
                 '\n';
      }
    // the headline composition: the weakest latent-variant-vs-mape-iso result
    std::size_t iso_index = cfg.variants.size();
    std::vector<std::size_t> latent_indices;
    for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
      if (cfg.variants[vi].kind == VariantKind::mape_iso) iso_index = vi;
      if (variant_uses_latent(cfg.variants[vi].kind)) latent_indices.push_back(vi);
    }
    if (iso_index < cfg.variants.size() && latent_indices.size() >= 2) {
      RankTestResult worst;
      worst.p_value = -1.0;
      for (std::size_t li : latent_indices) {
        const RankTestResult r = compare(finals[li], finals[iso_index]);
        if (r.p_value > worst.p_value) worst = r;
      }
      stats += "latent-max,mape-iso," + format_double(worst.u_statistic) + ',' +
               format_double(worst.p_value) + ',' + detail::rank_method_name(worst.method) +
               '\n';
    }
    write_file(dir / "stats.csv", stats);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_stats(const std::string& csv_a, const std::string& csv_b,
                     const std::string& alternative = "greater") {
  Alternative alt;
  if (alternative == "greater") {
    alt = Alternative::greater;
  } else if (alternative == "two-sided") {
    alt = Alternative::two_sided;
  } else {
    std::cerr << "unknown alternative: " << alternative << "\n";
    return 2;
  }
  try {
    const auto a = detail::load_finals(csv_a);
    const auto b = detail::load_finals(csv_b);
    const RankTestResult r = mann_whitney_u(a, b, alt);
    std::cout << "U=" << format_double(r.u_statistic) << " p=" << format_double(r.p_value)
              << " method=" << detail::rank_method_name(r.method) << " n1=" << a.size()
              << " n2=" << b.size() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "stats error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace poms
