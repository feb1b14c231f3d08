#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "volnet/volnet.hpp"

namespace {

using namespace volnet;

std::map<Archetype, double> parse_mix(const std::string& text) {
  std::map<Archetype, double> mix;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    auto eq = part.find('=');
    auto a = eq == std::string::npos ? std::nullopt : parse_archetype(detail::trim(part.substr(0, eq)));
    if (!a) throw Error("synth", "mix entries look like FPD=0.25, got '" + part + "'");
    mix[*a] = detail::parse_real("mix", detail::trim(part.substr(eq + 1)));
  }
  return mix;
}

std::string synth_config_text(const SynthPaths& p) {
  return fmt::format(
      "# generated by volnet synth\ntransactions = {}\nevents = {}\nkey_users = {}\nout = {}\n",
      p.transactions.filename().string(), p.events.filename().string(), p.heroes.filename().string(), "results");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volnet: key-user behavior analysis for volunteer transaction networks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "pipeline config file (key = value)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_flag("-q,--quiet", quiet, "suppress warnings on stderr");

  const std::vector<std::pair<std::string, Stage>> stages{
      {"ingest", Stage::ingest},     {"communities", Stage::communities}, {"behavior", Stage::behavior},
      {"cluster", Stage::cluster},   {"features", Stage::features},       {"train", Stage::train},
      {"explain", Stage::explain},   {"run-all", Stage::explain}};
  std::map<CLI::App*, Stage> stage_of;
  for (const auto& [name, stage] : stages)
    stage_of[app.add_subcommand(name, name == "run-all" ? std::string("run every stage")
                                                        : fmt::format("run the pipeline through the {} stage", name))] =
        stage;

  auto* synth = app.add_subcommand("synth", "generate a synthetic network with planted archetypes");
  SynthConfig sc;
  std::string mix;
  synth->add_option("--heroes", sc.n_heroes, "number of key users")->capture_default_str();
  synth->add_option("--regulars", sc.n_regulars_per_hero, "regular users per hero")->capture_default_str();
  synth->add_option("--weeks", sc.weeks, "weeks of templated behavior")->capture_default_str();
  synth->add_option("--communities", sc.community_count, "planted communities")->capture_default_str();
  synth->add_option("--noise", sc.noise_sd, "DR jitter standard deviation")->capture_default_str();
  synth->add_option("--mix", mix, "archetype mix, e.g. FPD=0.4,SAD=0.2,FAD=0.2,SPD=0.2");
  double message_effect = sc.feature_signal[EventKind::message];
  synth->add_option("--message-effect", message_effect, "log-rate effect of the label on messages")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  const auto started = std::chrono::steady_clock::now();
  try {
    if (synth->parsed()) {
      if (seed) sc.seed = *seed;
      if (!mix.empty()) sc.archetype_mix = parse_mix(mix);
      sc.feature_signal[EventKind::message] = message_effect;
      const fs::path dir = out_dir.empty() ? fs::path("synth") : fs::path(out_dir);
      auto data = generate(sc);
      auto paths = write_synth(data, dir);
      csv::write_text(dir / "volnet.conf", synth_config_text(paths), "synth");
      std::cout << fmt::format("wrote {} transactions, {} events, {} heroes to {}\n", data.log.transactions.size(),
                               data.events.events.size(), data.heroes.ids.size(), dir.string());
      return 0;
    }
    if (config_path.empty()) throw Error("config", "--config is required");
    PipelineConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out = out_dir;
    Stage last = Stage::explain;
    for (auto* sub : app.get_subcommands()) last = stage_of.at(sub);
    auto result = run_pipeline(cfg, last, quiet);
    for (const auto& s : result.scopes)
      if (s.selection.k) std::cout << fmt::format("scope {}: {} key users, k={}\n", s.name, s.users.size(), s.selection.k);
    for (const auto& c : result.cases)
      std::cout << fmt::format("scope {} case {}: best model {}\n", c.scope, to_string(c.trend_case),
                               to_string(c.best));
    std::cout << fmt::format("outputs in {} ({:.1f}s)\n", cfg.out.string(),
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
