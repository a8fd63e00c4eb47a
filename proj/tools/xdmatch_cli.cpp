// Command-line front end: every subcommand reads one JSON config (all keys
// optional) and accepts a few flag overrides on top.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "xdmatch/candidates.hpp"
#include "xdmatch/catalog.hpp"
#include "xdmatch/common.hpp"
#include "xdmatch/config.hpp"
#include "xdmatch/csv.hpp"
#include "xdmatch/features.hpp"
#include "xdmatch/gbt.hpp"
#include "xdmatch/pipeline.hpp"
#include "xdmatch/synthgen.hpp"

namespace {

using namespace xdm;

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  return dir.back() == '/' ? dir + name : dir + "/" + name;
}

Catalog load_catalog(const AppConfig& cfg) {
  IngestOptions opts;
  opts.handle_sentinel = cfg.handle_sentinel;
  opts.dictionary_file = cfg.dictionary_file;
  Catalog cat = ingest(world_tables(cfg.world_dir), opts);
  return propagate_same_handle_ips(std::move(cat));
}

void print_coverage(const CoverageReport& rep) {
  std::printf("devices with known handle: %lld\n", (long long)rep.n_devices);
  std::printf("covered (all labeled cookies in candidate set): %lld\n", (long long)rep.n_covered);
  std::printf("coverage: %.4f\n", rep.coverage);
  std::printf("total device/cookie pairs: %lld\n", (long long)rep.total_pairs);
  for (int r = 1; r <= 4; ++r) {
    std::printf("rule %d devices: %lld\n", r, (long long)rep.rule_counts[r]);
  }
  std::printf("devices with empty candidate set: %lld\n", (long long)rep.empty_sets);
}

int run_verify(const AppConfig& cfg) {
  VerifyReport rep = verify_world(world_tables(cfg.world_dir), join_path(cfg.world_dir, "truth.csv"));
  if (rep.ok) {
    std::printf("world %s: consistent\n", cfg.world_dir.c_str());
    return 0;
  }
  std::fprintf(stderr, "world %s: %zu problem(s)\n", cfg.world_dir.c_str(), rep.problems.size());
  for (const auto& p : rep.problems) std::fprintf(stderr, "  %s\n", p.c_str());
  return 1;
}

std::vector<CandidateSet> train_candidate_sets(const Catalog& cat, const AppConfig& cfg) {
  std::vector<CandidateSet> sets;
  for (int d = 0; d < cat.n_devices(); ++d) {
    if (!cat.devices[d].is_test) sets.push_back(select_candidates(cat, d, cfg.pipeline.blocking));
  }
  return sets;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"device-to-cookie identity matching pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);

  std::string world_dir_flag, out_dir_flag, model_flag;
  int persons_flag = -1;
  long long seed_flag = -1;
  int threads_flag = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--world-dir", world_dir_flag, "world directory (six tables + truth.csv)");
    sub->add_option("--out-dir", out_dir_flag, "output directory");
    sub->add_option("--threads", threads_flag, "worker threads (0 = all cores)");
  };

  CLI::App* cmd_generate = app.add_subcommand("generate", "write a synthetic world");
  add_common(cmd_generate);
  cmd_generate->add_option("--persons", persons_flag, "number of persons");
  cmd_generate->add_option("--seed", seed_flag, "world seed");

  CLI::App* cmd_verify = app.add_subcommand("verify", "check world consistency");
  add_common(cmd_verify);

  CLI::App* cmd_ingest = app.add_subcommand("ingest", "build the catalog and print stats");
  add_common(cmd_ingest);
  std::string dict_out;
  cmd_ingest->add_option("--save-dictionary", dict_out, "persist the categorical dictionary CSV");

  CLI::App* cmd_candidates = app.add_subcommand("candidates", "candidate sets + coverage report");
  add_common(cmd_candidates);

  CLI::App* cmd_features = app.add_subcommand("features", "feature dataset CSV + binary cache");
  add_common(cmd_features);

  CLI::App* cmd_train = app.add_subcommand("train", "train and save the bagged ensemble");
  add_common(cmd_train);
  cmd_train->add_option("--model", model_flag, "model output path (default <out>/model.txt)");

  CLI::App* cmd_predict = app.add_subcommand("predict", "full pipeline: train, self-train, post-process");
  add_common(cmd_predict);
  cmd_predict->add_option("--model", model_flag, "reuse a saved ensemble for round 1");
  bool no_self_train = false;
  cmd_predict->add_flag("--no-self-train", no_self_train, "skip the self-training round");

  CLI::App* cmd_evaluate = app.add_subcommand("evaluate", "device-averaged F0.5 of a predictions file");
  std::string pred_path, truth_path, per_device_path;
  cmd_evaluate->add_option("--predictions", pred_path, "predictions CSV")->required();
  cmd_evaluate->add_option("--truth", truth_path, "truth CSV")->required();
  cmd_evaluate->add_option("--per-device", per_device_path, "per-device components CSV");

  CLI::App* cmd_sweep = app.add_subcommand("sweep", "second-candidate threshold sweep");
  add_common(cmd_sweep);
  double sweep_step = 0.05;
  cmd_sweep->add_option("--step", sweep_step, "threshold grid step");

  CLI::App* cmd_ablation = app.add_subcommand("ablation", "pipeline variants report");
  add_common(cmd_ablation);

  CLI::App* cmd_cv = app.add_subcommand("cv", "small-grid cross validation over rounds/depth");
  add_common(cmd_cv);
  int cv_folds = 10;
  cmd_cv->add_option("--folds", cv_folds, "fold count");

  CLI11_PARSE(app, argc, argv);

  try {
    AppConfig cfg = load_config(config_path);
    if (!world_dir_flag.empty()) cfg.world_dir = world_dir_flag;
    if (!out_dir_flag.empty()) cfg.out_dir = out_dir_flag;
    if (threads_flag >= 0) cfg.pipeline.n_threads = threads_flag;
    cfg.pipeline.n_threads = resolve_threads(cfg.pipeline.n_threads);
    std::filesystem::create_directories(cfg.out_dir);

    if (cmd_generate->parsed()) {
      if (persons_flag > 0) cfg.world.n_persons = persons_flag;
      if (seed_flag >= 0) cfg.world.seed = (uint64_t)seed_flag;
      generate_world(cfg.world, cfg.world_dir);
      std::printf("world written to %s\n", cfg.world_dir.c_str());
      return run_verify(cfg);
    }
    if (cmd_verify->parsed()) {
      return run_verify(cfg);
    }
    if (cmd_ingest->parsed()) {
      Catalog cat = load_catalog(cfg);
      std::printf("devices: %d (%d test)\n", cat.n_devices(),
                  (int)std::count_if(cat.devices.begin(), cat.devices.end(),
                                     [](const DeviceRecord& d) { return d.is_test; }));
      std::printf("cookies: %d\n", cat.n_cookies());
      std::printf("ips: %d\n", cat.n_ips());
      std::printf("known handles: %zu\n", cat.handle_tokens.size());
      std::printf("dictionary entries: %zu\n", cat.dictionary.size());
      std::printf("catalog hash: %016llx\n", (unsigned long long)cat.content_hash);
      if (!dict_out.empty()) {
        cat.dictionary.save(dict_out);
        std::printf("dictionary saved to %s\n", dict_out.c_str());
      }
      return 0;
    }
    if (cmd_candidates->parsed()) {
      Catalog cat = load_catalog(cfg);
      auto sets = select_all_candidates(cat, cfg.pipeline.blocking, cfg.pipeline.n_threads);
      const std::string path = join_path(cfg.out_dir, "candidates.csv");
      write_candidates_csv(cat, sets, path);
      std::printf("candidate pairs written to %s\n", path.c_str());
      print_coverage(coverage_report(cat, cfg.pipeline.blocking));
      return 0;
    }
    if (cmd_features->parsed()) {
      Catalog cat = load_catalog(cfg);
      auto sets = select_all_candidates(cat, cfg.pipeline.blocking, cfg.pipeline.n_threads);
      LabeledHandles labeled = training_handles(cat);
      const uint64_t key = dataset_cache_key(cat, cfg.pipeline.blocking);
      const std::string cache_path = join_path(cfg.out_dir, "dataset.bin");
      std::vector<FeatureRow> rows;
      if (auto cached = read_dataset_cache(key, cache_path)) {
        rows = std::move(*cached);
        // values and labels come from the cache; reattach ids by replaying
        // the deterministic pair order
        std::vector<int> order(sets.size());
        for (size_t i = 0; i < sets.size(); ++i) order[i] = (int)i;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
          return cat.device_id_less(sets[a].device, sets[b].device);
        });
        size_t at = 0;
        for (int i : order) {
          for (int cookie : sets[i].cookie_ids) {
            if (at >= rows.size()) throw std::runtime_error("stale dataset cache: " + cache_path);
            rows[at].device = sets[i].device;
            rows[at].cookie = cookie;
            ++at;
          }
        }
        if (at != rows.size()) throw std::runtime_error("stale dataset cache: " + cache_path);
        std::printf("dataset cache hit (%zu rows)\n", rows.size());
      } else {
        rows = build_dataset(cat, sets, labeled, cfg.pipeline.blocking, cfg.pipeline.n_threads);
        write_dataset_cache(rows, key, cache_path);
        std::printf("dataset built (%zu rows), cache written to %s\n", rows.size(),
                    cache_path.c_str());
      }
      const std::string csv_path = join_path(cfg.out_dir, "dataset.csv");
      write_dataset_csv(cat, rows, csv_path);
      std::printf("dataset CSV written to %s\n", csv_path.c_str());
      return 0;
    }
    if (cmd_train->parsed()) {
      Catalog cat = load_catalog(cfg);
      LabeledHandles labeled = training_handles(cat);
      auto rows = build_dataset(cat, train_candidate_sets(cat, cfg), labeled,
                                cfg.pipeline.blocking, cfg.pipeline.n_threads);
      Dataset data = to_learner_dataset(rows);
      std::printf("training rows: %d\n", data.n_rows());
      BoostParams boost = cfg.pipeline.boost;
      boost.n_threads = cfg.pipeline.n_bags > 1 ? 1 : cfg.pipeline.n_threads;
      BaggedEnsemble ens = train_bagged(data, boost, cfg.pipeline.n_bags, cfg.pipeline.master_seed,
                                        cfg.pipeline.bootstrap, cfg.pipeline.n_threads);
      const std::string path = model_flag.empty() ? join_path(cfg.out_dir, "model.txt") : model_flag;
      save_ensemble(ens, path);
      std::printf("ensemble (%d members) saved to %s\n", (int)ens.models.size(), path.c_str());
      std::printf("member-0 train log-loss: %.6f -> %.6f\n", ens.models[0].train_loss.front(),
                  ens.models[0].train_loss.back());
      return 0;
    }
    if (cmd_predict->parsed()) {
      Catalog cat = load_catalog(cfg);
      if (no_self_train) cfg.pipeline.self_training = false;
      const BaggedEnsemble* preloaded = nullptr;
      BaggedEnsemble loaded;
      if (!model_flag.empty()) {
        loaded = load_ensemble(model_flag);
        preloaded = &loaded;
        std::printf("round-1 ensemble loaded from %s\n", model_flag.c_str());
      }
      PipelineRun run = run_pipeline(cat, cfg.pipeline, preloaded);
      const std::string path = join_path(cfg.out_dir, "predictions.csv");
      save_predictions_csv(cat, run.predictions, cfg.pipeline.post.sentinel, path);
      std::printf("pseudo-labeled devices: %zu\n", run.pseudo_labels.size());
      std::printf("predictions for %zu devices written to %s\n", run.predictions.size(),
                  path.c_str());
      return 0;
    }
    if (cmd_evaluate->parsed()) {
      EvalSummary s = evaluate(load_id_sets(pred_path), load_id_sets(truth_path), per_device_path);
      std::printf("devices: %lld\n", (long long)s.n_devices);
      std::printf("mean F0.5: %.6f\n", s.mean_f05);
      return 0;
    }
    if (cmd_sweep->parsed()) {
      Catalog cat = load_catalog(cfg);
      cfg.pipeline.self_training = false;
      PipelineRun run = run_pipeline(cat, cfg.pipeline);
      std::vector<double> grid;
      for (double t = 0.0; t <= 1.0 + 1e-12; t += sweep_step) grid.push_back(t);
      IdSetMap truth = load_id_sets(join_path(cfg.world_dir, "truth.csv"));
      auto rows = threshold_sweep(cat, run.scores_round1, truth, grid);
      const std::string path = join_path(cfg.out_dir, "sweep.csv");
      save_sweep_csv(rows, path);
      std::printf("sweep written to %s\n", path.c_str());
      for (const auto& r : rows) {
        std::printf("  threshold %.3f: %5.1f%% of devices, mean F0.5 %.4f\n", r.threshold,
                    100.0 * r.fraction, r.mean_f05);
      }
      return 0;
    }
    if (cmd_ablation->parsed()) {
      Catalog cat = load_catalog(cfg);
      IdSetMap truth = load_id_sets(join_path(cfg.world_dir, "truth.csv"));
      auto rows = ablation(cat, truth, cfg.pipeline);
      const std::string path = join_path(cfg.out_dir, "ablation.csv");
      save_ablation_csv(rows, path);
      std::printf("%-14s %8s %9s\n", "variant", "f05", "seconds");
      for (const auto& r : rows) {
        std::printf("%-14s %8.4f %9.2f\n", r.variant.c_str(), r.mean_f05, r.seconds);
      }
      std::printf("report written to %s\n", path.c_str());
      return 0;
    }
    if (cmd_cv->parsed()) {
      Catalog cat = load_catalog(cfg);
      LabeledHandles labeled = training_handles(cat);
      auto rows = build_dataset(cat, train_candidate_sets(cat, cfg), labeled,
                                cfg.pipeline.blocking, cfg.pipeline.n_threads);
      Dataset data = to_learner_dataset(rows);
      std::vector<BoostParams> grid;
      for (int rounds : {50, 100, 200}) {
        for (int depth : {6, 10}) {
          BoostParams p = cfg.pipeline.boost;
          p.rounds = rounds;
          p.max_depth = depth;
          p.n_threads = cfg.pipeline.n_threads;
          grid.push_back(p);
        }
      }
      auto results = cross_validate(data, grid, cv_folds, cfg.pipeline.master_seed);
      std::printf("%7s %6s %10s %10s\n", "rounds", "depth", "logloss", "pair-F0.5");
      for (const auto& r : results) {
        std::printf("%7d %6d %10.5f %10.5f\n", r.params.rounds, r.params.max_depth, r.mean_logloss,
                    r.mean_f05);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
