// trendscope: discover, verify and export urban change trends from
// geotagged street-level imagery.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "trendscope/pipeline.hpp"

using namespace trendscope;

namespace {

struct SynthArgs {
  std::filesystem::path out = "city";
  std::vector<std::size_t> trends{30, 30, 30, 30, 30};
  std::vector<std::size_t> distractors;
  std::size_t distractor_count = 10;
  std::size_t singletons = 20;
  std::size_t empty = 10;
  std::vector<std::size_t> unusual{12};
  double hallucination = 0.0;
  double escape = 0.0;
  double false_reject = 0.0;
  std::uint64_t seed = 7;
  std::size_t max_in_flight = 16;
};

void add_common(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--backend", c.backend_config, "Analyst backend config (JSON)");
  cmd->add_option("--out", c.out_dir, "Artifact directory")->capture_default_str();
  cmd->add_option("--prompts", c.prompt_dir, "Prompt template directory (default: bundled)");
  cmd->add_option("--max-in-flight", c.max_in_flight, "Concurrent analyst requests");
  cmd->add_option("--seed", c.seed, "Seed for sampling and tie-breaking")->capture_default_str();
  cmd->add_flag("--fail-on-poison", c.fail_on_poison, "Exit 3 if any request was poisoned");
}

void add_verify_opts(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("-N,--n", c.n, "Confirmations required for a trend")->capture_default_str();
  cmd->add_option("-k,--k", c.k, "Shortlist size (default 3N)");
  cmd->add_option("--k-multiple", c.k_multiple, "k as a multiple of N")->capture_default_str();
  cmd->add_option("--tight", c.tight, "Canopy tight threshold")->capture_default_str();
  cmd->add_option("--loose", c.loose, "Canopy loose threshold")->capture_default_str();
  cmd->add_option("--ranking", c.ranking, "most_detailed | period_delta | stratified")
      ->capture_default_str();
  cmd->add_option("--verify-top", c.verify_top, "Verify only the first M ranked proposals");
  cmd->add_option("--pre-window", c.pre_window, "Pre period for period_delta ranking");
  cmd->add_option("--post-window", c.post_window, "Post period for period_delta ranking");
}

void print(const CommandOutcome& out) {
  for (const auto& m : out.messages) std::cerr << m << "\n";
  if (!out.up_to_date) std::cout << out.summary.dump(1) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Urban change trend discovery over street-level imagery"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.require_subcommand(1);

  RunConfig c;
  SynthArgs synth;

  auto* s = app.add_subcommand("synth", "Generate a synthetic city with a scripted analyst");
  s->add_option("--out", synth.out, "Output directory")->capture_default_str();
  s->add_option("--trends", synth.trends, "Changes per planted trend");
  s->add_option("--distractors", synth.distractors, "Changes per sub-threshold group");
  s->add_option("--distractor-count", synth.distractor_count,
                "Sub-threshold groups when --distractors is omitted (sizes 1..24)");
  s->add_option("--singletons", synth.singletons, "Unrelated one-off changes");
  s->add_option("--empty", synth.empty, "Locations without changes");
  s->add_option("--unusual", synth.unusual, "Images per planted unusual finding");
  s->add_option("--hallucination-rate", synth.hallucination);
  s->add_option("--critic-escape-rate", synth.escape);
  s->add_option("--critic-false-reject-rate", synth.false_reject);
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--max-in-flight", synth.max_in_flight)->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "Group images into locations and sequences");
  ingest->add_option("--manifest", c.manifest, "Image manifest (JSONL)")->required();
  ingest->add_option("--radius", c.radius_m, "Grouping radius in meters")->capture_default_str();
  ingest->add_option("--suppression-radius", c.suppression_radius_m, "NMS radius (default 2x radius)");
  ingest->add_option("--seed-sample", c.seed_sample, "Evaluate NMS over a random candidate subset");
  ingest->add_option("--min-images", c.min_images)->capture_default_str();
  add_common(ingest, c);

  auto* detect = app.add_subcommand("detect", "Describe changes between consecutive images");
  detect->add_flag("!--no-critic", c.critic_enabled, "Skip the self-critic pass");
  add_common(detect, c);

  auto* propose = app.add_subcommand("propose", "Abstract changes and cluster them into proposals");
  add_verify_opts(propose, c);
  add_common(propose, c);

  auto* verify = app.add_subcommand("verify", "Verify proposals against the change pool");
  add_verify_opts(verify, c);
  add_common(verify, c);

  auto* query = app.add_subcommand("query", "Conditioned discovery over a filtered pool");
  query->add_option("--time-window", c.time_window, "START..END (dates or RFC 3339)");
  query->add_option("--subject", c.subject, "Keep changes about this subject");
  query->add_option("--pool-size", c.pool_size, "Nearest changes screened for --subject");
  query->add_flag("--unusual", c.unusual, "Query single images for unusual findings");
  add_verify_opts(query, c);
  add_common(query, c);

  auto* eval = app.add_subcommand("eval", "Evaluate detection, membership and verification");
  eval->add_option("--pair-labels", c.pair_labels, "Labeled image pairs (JSONL)");
  add_verify_opts(eval, c);
  add_common(eval, c);

  bool export_query = false;
  auto* exp = app.add_subcommand("export", "Write GeoJSON and an HTML report");
  exp->add_flag("--query", export_query, "Export the last query instead of verify");
  add_common(exp, c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) {
      CityRecipe r;
      r.seed = synth.seed;
      r.trend_sizes = synth.trends;
      if (!synth.distractors.empty()) {
        r.distractor_sizes = synth.distractors;
      } else {
        for (std::size_t i = 0; i < synth.distractor_count; ++i) r.distractor_sizes.push_back(1 + (i * 7) % 24);
      }
      r.singleton_changes = synth.singletons;
      r.empty_locations = synth.empty;
      r.unusual_trend_sizes = synth.unusual;
      r.hallucination_rate = synth.hallucination;
      r.critic_escape_rate = synth.escape;
      r.critic_false_reject_rate = synth.false_reject;
      const auto city = generate_city(r);
      write_synthetic_city(city, synth.out, synth.max_in_flight);
      std::cout << "wrote " << city.points.size() << " images to " << synth.out.string() << "\n";
      return 0;
    }
    CommandOutcome out;
    if (ingest->parsed()) out = cmd_ingest(c);
    else if (detect->parsed()) out = cmd_detect(c);
    else if (propose->parsed()) out = cmd_propose(c);
    else if (verify->parsed()) out = cmd_verify(c);
    else if (query->parsed()) out = cmd_query(c);
    else if (eval->parsed()) out = cmd_eval(c);
    else out = cmd_export(c, export_query ? ExportSource::query : ExportSource::verify);
    print(out);
    return out.exit_code;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
