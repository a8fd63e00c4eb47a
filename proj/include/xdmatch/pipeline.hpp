#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "xdmatch/candidates.hpp"
#include "xdmatch/catalog.hpp"
#include "xdmatch/features.hpp"
#include "xdmatch/gbt.hpp"

namespace xdm {

// Candidates of one device with model scores, descending by score, ties
// broken by ascending cookie id.
struct ScoredCandidates {
  int device = -1;
  std::vector<std::pair<int, double>> entries;  // (cookie index, score)
};

struct PostProcessKey {
  int labeled_bucket = 0;   // accepted so far: 0 -> 1, 1 -> 2, 2 -> >=3
  int mates_bucket = 0;     // other same-handle cookies: 0 -> 0, 1 -> 1..2, 2 -> >=3
  bool winner_known = false;
  bool candidate_known = false;
};

int bucket_labeled(int n_already_labeled);
int bucket_mates(int n_handle_mates);
std::string postprocess_key_name(const PostProcessKey& key);   // e.g. "L2_M1_WK_CU"
PostProcessKey parse_postprocess_key(const std::string& name);

// Step-1 threshold plus the per-situation multiplier table gating runner-up
// acceptance. Shipped defaults come from a small grid search on the bundled
// synthetic worlds; every value can be overridden from the config file.
class PostProcessConfig {
 public:
  double step1_threshold = 0.3;
  std::string sentinel = "NO_COOKIE";

  PostProcessConfig();

  double multiplier(const PostProcessKey& key) const;
  void set_multiplier(const PostProcessKey& key, double value);  // must be in (0,1]
  static int table_size() { return 36; }
  double multiplier_at(int index) const { return table_[index]; }

 private:
  std::array<double, 36> table_;
};

enum class AcceptStep : uint8_t { Step1, Step2, Step3Handle, Step4, Step4Handle };
const char* accept_step_name(AcceptStep step);

struct PredictionSet {
  int device = -1;
  std::vector<int> cookie_ids;                         // ascending by cookie id
  std::vector<std::pair<int, AcceptStep>> trace;       // acceptance order
  bool is_sentinel = false;                            // device shares no ip with any cookie
};

struct EvalComponents {
  int64_t tp = 0, fp = 0, fn = 0;
  double p = 0.0, r = 0.0, f05 = 0.0;
};

// id -> sorted unique cookie ids; also the in-memory shape of the
// predictions/truth CSV (device_id, space-separated cookie ids)
using IdSetMap = std::map<std::string, std::vector<std::string>>;

IdSetMap load_id_sets(const std::string& path);
void save_id_sets(const IdSetMap& sets, const std::string& path);

// device-level F0.5 with beta = 0.5; p/r take 0 on empty denominators
EvalComponents f05_device(const std::vector<std::string>& predicted,
                          const std::vector<std::string>& truth);

struct EvalSummary {
  double mean_f05 = 0.0;
  int64_t n_devices = 0;
};

// unweighted mean over devices; every prediction must appear in truth.
// per_device_csv, when non-empty, receives one row per device.
EvalSummary evaluate(const IdSetMap& predictions, const IdSetMap& truth,
                     const std::string& per_device_csv = "");

ScoredCandidates score_device(const BaggedEnsemble& ensemble, const Catalog& catalog, int device,
                              const CandidateSet& candidates, const LabeledHandles& labeled,
                              const BlockingThresholds& thresholds = {});

std::vector<ScoredCandidates> score_devices(const BaggedEnsemble& ensemble, const Catalog& catalog,
                                            std::span<const CandidateSet> candidate_sets,
                                            const LabeledHandles& labeled,
                                            const BlockingThresholds& thresholds = {},
                                            int n_threads = 1);

struct PseudoLabel {
  int device = -1;
  int cookie = -1;
};

// devices whose top candidate clears top_min while the runner-up stays under
// second_max (vacuously true for single-candidate devices)
std::vector<PseudoLabel> select_pseudo_labels(std::span<const ScoredCandidates> all_scored,
                                              double top_min = 0.4, double second_max = 0.05);

// One self-training round: pseudo-labeled devices adopt their top cookie's
// handle, the O-dependent slots (24..26) of the training rows are recomputed,
// and the ensemble retrains from scratch with the same seeds.
BaggedEnsemble self_train(const Catalog& catalog, std::vector<FeatureRow>& train_rows,
                          std::span<const ScoredCandidates> test_scored, LabeledHandles& labeled,
                          const BoostParams& boost, int n_bags, bool bootstrap,
                          uint64_t master_seed, double top_min = 0.4, double second_max = 0.05,
                          int n_threads = 1);

PredictionSet postprocess(const Catalog& catalog, const BaggedEnsemble& ensemble, int device,
                          const ScoredCandidates& scored, const PostProcessConfig& config,
                          const LabeledHandles& labeled, const BlockingThresholds& thresholds = {});

struct SweepRow {
  double threshold = 0.0;
  double fraction = 0.0;   // devices whose second score is under the threshold
  double mean_f05 = 0.0;   // over qualifying devices
  int64_t n_qualifying = 0;
};

// Figure-style table over the second-candidate score. The per-device score
// uses the plain top-cookie-plus-handle-mates prediction.
std::vector<SweepRow> threshold_sweep(const Catalog& catalog,
                                      std::span<const ScoredCandidates> all_scored,
                                      const IdSetMap& truth, std::span<const double> thresholds);

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

struct PipelineOptions {
  BlockingThresholds blocking;
  BoostParams boost;
  int n_bags = 8;
  bool bootstrap = true;
  bool self_training = true;
  double pseudo_top_min = 0.4;
  double pseudo_second_max = 0.05;
  PostProcessConfig post;
  uint64_t master_seed = 20150824;
  int n_threads = 1;
};

struct PipelineRun {
  std::vector<CandidateSet> test_candidates;
  std::vector<FeatureRow> train_rows;
  BaggedEnsemble round1;
  BaggedEnsemble final_ensemble;
  std::vector<ScoredCandidates> scores_round1;
  std::vector<ScoredCandidates> scores_final;
  std::vector<PseudoLabel> pseudo_labels;
  std::vector<PredictionSet> predictions;
  LabeledHandles labeled;  // post-augmentation
};

// train on the labeled devices, score the test devices, optionally self-train
// once, then post-process every test device. A preloaded ensemble replaces
// round-1 training.
PipelineRun run_pipeline(const Catalog& catalog, const PipelineOptions& options,
                         const BaggedEnsemble* preloaded_round1 = nullptr);

void save_predictions_csv(const Catalog& catalog, std::span<const PredictionSet> predictions,
                          const std::string& sentinel, const std::string& path);
IdSetMap predictions_to_id_sets(const Catalog& catalog, std::span<const PredictionSet> predictions,
                                const std::string& sentinel);

struct AblationRow {
  std::string variant;
  double mean_f05 = 0.0;
  double seconds = 0.0;
};

// Four variants with shared seeds: candidate set as-is, single boosted model,
// bagged ensemble, and the full run with self-training and post-processing.
std::vector<AblationRow> ablation(const Catalog& catalog, const IdSetMap& truth,
                                  const PipelineOptions& options);

void save_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

// learner-side dataset from labeled feature rows (rows without a label are
// skipped); returns the kept row indexes through kept when non-null
Dataset to_learner_dataset(std::span<const FeatureRow> rows, std::vector<int>* kept = nullptr);

}  // namespace xdm
