// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sde_restore/commands.hpp"

namespace sr = sde_restore;

namespace {

// --seed wins, then SDE_RESTORE_SEED, then `fallback`.
uint64_t resolve_seed(const std::optional<uint64_t>& flag, uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SDE_RESTORE_SEED")) {
    try {
      std::size_t used = 0;
      const uint64_t v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    sr::fail(sr::ErrorKind::Config, std::string("SDE_RESTORE_SEED is not an unsigned integer: ") + env);
  }
  return fallback;
}

std::pair<std::string, sr::fs::path> parse_restored(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) return {"method", arg};
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-based diffusion restoration of speech spectrograms"};
  app.require_subcommand(1);
  int exit_code = 0;

  std::optional<uint64_t> seed;
  unsigned jobs = sr::default_jobs();
  auto common = [&](CLI::App* c) {
    c->add_option("--seed", seed, "Master seed (default: $SDE_RESTORE_SEED, else 0)");
    c->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  };

  // generate
  sr::GenerateOptions gen;
  std::string gen_task = "noise";
  auto* g = app.add_subcommand("generate", "Build a corrupted/clean dataset and its manifest");
  g->add_option("--task", gen_task, "noise, reverb or bandwidth")->check(CLI::IsMember({"noise", "reverb", "bandwidth"}));
  g->add_option("--clean-dir", gen.clean_dir, "Directory of clean WAV files")->required();
  g->add_option("--noise-dir", gen.noise_dir, "Directory of noise WAV files (noise task)");
  g->add_option("--out-dir", gen.out_dir, "Output dataset directory")->required();
  g->add_option("--count", gen.count, "Number of utterances")->required()->check(CLI::NonNegativeNumber);
  common(g);
  g->callback([&] {
    gen.task = sr::task_from_string(gen_task);
    gen.seed = resolve_seed(seed, 0);
    gen.jobs = jobs;
    const sr::Manifest m = sr::cmd_generate(gen);
    std::cerr << "wrote " << m.rows.size() << " utterances to " << gen.out_dir << "\n";
  });

  // train
  sr::TrainOptions tr;
  sr::fs::path train_config;
  std::string train_mode;
  std::optional<int> epochs, batch;
  std::optional<int64_t> max_steps;
  std::optional<double> lr;
  bool wall_time = false;
  auto* t = app.add_subcommand("train", "Train a generative or discriminative model");
  t->add_option("--manifest", tr.manifest, "Training manifest (JSONL)")->required();
  t->add_option("--out", tr.checkpoint, "Checkpoint path to write")->required();
  t->add_option("--config", train_config, "Run config JSON");
  t->add_option("--mode", train_mode, "generative or discriminative (overrides the config)")
      ->check(CLI::IsMember({"generative", "discriminative"}));
  t->add_option("--epochs", epochs, "Maximum epochs");
  t->add_option("--max-steps", max_steps, "Optimizer step budget (0: none)");
  t->add_option("--batch-size", batch, "Batch size");
  t->add_option("--lr", lr, "Adam learning rate");
  t->add_flag("--record-wall-time", wall_time, "Fill the wall_time_s curve column");
  common(t);
  t->callback([&] {
    sr::RunConfig cfg = train_config.empty() ? sr::RunConfig{} : sr::read_run_config(train_config);
    if (!train_mode.empty()) cfg.net.mode = sr::net_mode_from_string(train_mode);
    if (epochs) cfg.train.max_epochs = *epochs;
    if (max_steps) cfg.train.max_steps = *max_steps;
    if (batch) cfg.train.batch_size = *batch;
    if (lr) cfg.train.lr = *lr;
    if (wall_time) cfg.train.record_wall_time = true;
    cfg.seed = resolve_seed(seed, cfg.seed);
    tr.config = cfg;
    tr.jobs = jobs;
    sr::cmd_train(tr, std::cerr);
  });

  // enhance
  sr::EnhanceOptions en;
  std::string en_scheme, en_mode;
  std::optional<int> en_steps, corrector;
  std::optional<double> snr_r;
  bool en_strict = false;
  auto* e = app.add_subcommand("enhance", "Restore WAV files with a trained checkpoint");
  e->add_option("--input", en.input, "Input WAV file or directory")->required();
  e->add_option("--checkpoint", en.checkpoint, "Checkpoint from train")->required();
  e->add_option("--out-dir", en.out_dir, "Output directory")->required();
  e->add_option("--steps", en_steps, "Reverse-diffusion steps (default: checkpoint config)")->check(CLI::PositiveNumber);
  e->add_option("--snr-r", snr_r, "Langevin corrector signal-to-noise ratio");
  e->add_option("--corrector-steps", corrector, "Corrector steps per predictor step");
  e->add_option("--scheme", en_scheme, "pc or em")->check(CLI::IsMember({"pc", "em"}));
  e->add_option("--mode", en_mode, "Expected checkpoint mode (default: read from the checkpoint)")
      ->check(CLI::IsMember({"generative", "discriminative"}));
  e->add_flag("--trace", en.trace, "Write a per-step trace CSV per file");
  e->add_flag("--strict", en_strict, "Accepted for symmetry; enhance has no skippable rows");
  common(e);
  e->callback([&] {
    // sampler settings default to the sampler section the model was trained with
    const sr::Checkpoint ck = sr::read_checkpoint(en.checkpoint);
    en.sampler = ck.config.sampler;
    if (en_steps) en.sampler.n_steps = *en_steps;
    if (snr_r) en.sampler.snr_r = *snr_r;
    if (corrector) en.sampler.corrector_steps = *corrector;
    if (!en_scheme.empty()) en.sampler.scheme = sr::sampler_scheme_from_string(en_scheme);
    if (!en_mode.empty()) {
      sr::require(sr::to_string(ck.config.net.mode) == en_mode, sr::ErrorKind::Config,
                  "checkpoint is " + std::string(sr::to_string(ck.config.net.mode)) + ", not " + en_mode);
    }
    en.seed = resolve_seed(seed, 0);
    en.jobs = jobs;
    const std::size_t n = sr::cmd_enhance(en, std::cerr);
    std::cerr << "wrote " << n << " file(s) to " << en.out_dir << "\n";
  });

  // evaluate
  sr::EvaluateOptions ev;
  std::vector<std::string> restored;
  bool ev_strict = false;
  auto* v = app.add_subcommand("evaluate", "Score restored files against the manifest references");
  v->add_option("--manifest", ev.manifest, "Dataset manifest (JSONL)")->required();
  v->add_option("--restored", restored, "Restored directory, optionally LABEL=DIR; repeatable")->required();
  v->add_option("--out", ev.out_csv, "Metric CSV path")->required();
  v->add_flag("--strict", ev_strict, "Exit nonzero if any row is skipped");
  common(v);
  v->callback([&] {
    for (const auto& r : restored) ev.restored.push_back(parse_restored(r));
    ev.jobs = jobs;
    const sr::EvaluateResult res = sr::cmd_evaluate(ev, std::cout, std::cerr);
    if (ev_strict && res.skipped > 0) exit_code = 3;
  });

  // sde-sim
  sr::SdeSimOptions sim;
  sr::fs::path sim_config;
  bool sim_strict = false;
  auto* s = app.add_subcommand("sde-sim", "Simulate the forward SDE and check it against the kernel");
  s->add_option("--config", sim_config, "Run config JSON (sde section used)");
  s->add_option("--paths", sim.n_paths, "Number of paths")->check(CLI::PositiveNumber);
  s->add_option("--steps", sim.n_steps, "Euler-Maruyama steps on [0, T]")->check(CLI::PositiveNumber);
  s->add_option("--trace-paths", sim.trace_paths, "Trajectories written to <out stem>.paths.csv");
  s->add_option("--out", sim.out_csv, "Summary CSV path")->required();
  s->add_flag("--strict", sim_strict, "Exit nonzero if the kernel check fails");
  common(s);
  s->callback([&] {
    sr::RunConfig cfg = sim_config.empty() ? sr::RunConfig{} : sr::read_run_config(sim_config);
    sim.sde = cfg.sde;
    sim.seed = resolve_seed(seed, cfg.seed);
    const sr::SdeSimResult res = sr::cmd_sde_sim(sim, std::cout);
    cfg.seed = sim.seed;
    sr::write_json_file(sr::sibling(sim.out_csv, ".config.json"),
                        {{"config", sr::to_json(cfg)}, {"paths", sim.n_paths}, {"steps", sim.n_steps},
                         {"trace_paths", sim.trace_paths}});
    if (sim_strict && !res.pass) exit_code = 3;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return exit_code;
}
