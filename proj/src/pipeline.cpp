#include "xdmatch/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

#include "xdmatch/common.hpp"

namespace xdm {

int bucket_labeled(int n_already_labeled) {
  if (n_already_labeled <= 1) return 0;
  if (n_already_labeled == 2) return 1;
  return 2;
}

int bucket_mates(int n_handle_mates) {
  if (n_handle_mates <= 0) return 0;
  if (n_handle_mates <= 2) return 1;
  return 2;
}

namespace {

int key_index(const PostProcessKey& k) {
  return ((k.labeled_bucket * 3 + k.mates_bucket) * 2 + (k.winner_known ? 1 : 0)) * 2 +
         (k.candidate_known ? 1 : 0);
}

}  // namespace

std::string postprocess_key_name(const PostProcessKey& k) {
  return strfmt("L%d_M%d_W%c_C%c", k.labeled_bucket + 1,
                k.mates_bucket == 0 ? 0 : (k.mates_bucket == 1 ? 1 : 3),
                k.winner_known ? 'K' : 'U', k.candidate_known ? 'K' : 'U');
}

PostProcessKey parse_postprocess_key(const std::string& name) {
  PostProcessKey k;
  int labeled = 0, mates = 0;
  char w = 0, c = 0;
  if (std::sscanf(name.c_str(), "L%d_M%d_W%c_C%c", &labeled, &mates, &w, &c) != 4 ||
      labeled < 1 || labeled > 3 || (mates != 0 && mates != 1 && mates != 3) ||
      (w != 'K' && w != 'U') || (c != 'K' && c != 'U')) {
    throw std::runtime_error("bad access-parameter key '" + name +
                             "' (expected e.g. L1_M0_WK_CK)");
  }
  k.labeled_bucket = labeled - 1;
  k.mates_bucket = mates == 0 ? 0 : (mates == 1 ? 1 : 2);
  k.winner_known = w == 'K';
  k.candidate_known = c == 'K';
  return k;
}

PostProcessConfig::PostProcessConfig() {
  // grid-searched on the bundled synthetic worlds; keys with more cookies
  // already accepted, or riskier candidates, demand a larger score ratio
  const double base[3] = {0.55, 0.70, 0.85};
  const double mates_adjust[3] = {1.0, 1.1, 1.25};
  for (int lb = 0; lb < 3; ++lb) {
    for (int mb = 0; mb < 3; ++mb) {
      for (int wk = 0; wk < 2; ++wk) {
        for (int ck = 0; ck < 2; ++ck) {
          double m = base[lb] * mates_adjust[mb];
          if (wk == 0) m *= 0.95;
          if (ck == 0) m *= 1.15;
          m = std::min(1.0, std::max(0.05, m));
          PostProcessKey key{lb, mb, wk == 1, ck == 1};
          table_[key_index(key)] = m;
        }
      }
    }
  }
}

double PostProcessConfig::multiplier(const PostProcessKey& key) const {
  return table_[key_index(key)];
}

void PostProcessConfig::set_multiplier(const PostProcessKey& key, double value) {
  if (!(value > 0.0 && value <= 1.0)) {
    throw std::runtime_error("access parameter must be in (0,1]: " + postprocess_key_name(key));
  }
  table_[key_index(key)] = value;
}

const char* accept_step_name(AcceptStep step) {
  switch (step) {
    case AcceptStep::Step1: return "step1";
    case AcceptStep::Step2: return "step2";
    case AcceptStep::Step3Handle: return "step3-handle";
    case AcceptStep::Step4: return "step4";
    case AcceptStep::Step4Handle: return "step4-handle";
  }
  return "?";
}

Dataset to_learner_dataset(std::span<const FeatureRow> rows, std::vector<int>* kept) {
  Dataset data(kFeatureCount);
  if (kept) kept->clear();
  for (size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].label) continue;
    data.add_row(rows[i].values, *rows[i].label ? 1 : 0);
    if (kept) kept->push_back(static_cast<int>(i));
  }
  return data;
}

ScoredCandidates score_device(const BaggedEnsemble& ensemble, const Catalog& cat, int device,
                              const CandidateSet& candidates, const LabeledHandles& labeled,
                              const BlockingThresholds& t) {
  ScoredCandidates scored;
  scored.device = device;
  scored.entries.reserve(candidates.cookie_ids.size());
  for (int cookie : candidates.cookie_ids) {
    PairContext ctx = build_context(cat, device, cookie, labeled, t);
    FeatureRow row = extract_features(cat, device, cookie, ctx);
    scored.entries.emplace_back(cookie, ensemble.predict_prob(row.values));
  }
  std::sort(scored.entries.begin(), scored.entries.end(),
            [&cat](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return cat.cookie_id_less(a.first, b.first);
            });
  return scored;
}

std::vector<ScoredCandidates> score_devices(const BaggedEnsemble& ensemble, const Catalog& cat,
                                            std::span<const CandidateSet> candidate_sets,
                                            const LabeledHandles& labeled,
                                            const BlockingThresholds& t, int n_threads) {
  std::vector<ScoredCandidates> out(candidate_sets.size());
  parallel_for(static_cast<int>(candidate_sets.size()), n_threads, [&](int i) {
    out[i] = score_device(ensemble, cat, candidate_sets[i].device, candidate_sets[i], labeled, t);
  });
  return out;
}

std::vector<PseudoLabel> select_pseudo_labels(std::span<const ScoredCandidates> all_scored,
                                              double top_min, double second_max) {
  std::vector<PseudoLabel> out;
  for (const auto& scored : all_scored) {
    if (scored.entries.empty()) continue;
    if (!(scored.entries[0].second > top_min)) continue;
    if (scored.entries.size() >= 2 && !(scored.entries[1].second < second_max)) continue;
    out.push_back(PseudoLabel{scored.device, scored.entries[0].first});
  }
  return out;
}

BaggedEnsemble self_train(const Catalog& cat, std::vector<FeatureRow>& train_rows,
                          std::span<const ScoredCandidates> test_scored, LabeledHandles& labeled,
                          const BoostParams& boost, int n_bags, bool bootstrap,
                          uint64_t master_seed, double top_min, double second_max, int n_threads) {
  for (const PseudoLabel& pl : select_pseudo_labels(test_scored, top_min, second_max)) {
    const int h = cat.cookies[pl.cookie].handle_idx;
    if (h < 0) continue;                       // top cookie carries no handle to adopt
    if (labeled.handle_of(pl.device)) continue;
    labeled.set(cat, pl.device, h);
  }
  parallel_for(static_cast<int>(train_rows.size()), n_threads,
               [&](int i) { refresh_o_features(cat, train_rows[i], labeled); });
  Dataset data = to_learner_dataset(train_rows);
  return train_bagged(data, boost, n_bags, master_seed, bootstrap, n_threads);
}

PredictionSet postprocess(const Catalog& cat, const BaggedEnsemble& ensemble, int device,
                          const ScoredCandidates& scored, const PostProcessConfig& config,
                          const LabeledHandles& labeled, const BlockingThresholds& t) {
  PredictionSet result;
  result.device = device;

  std::vector<std::pair<int, double>> entries = scored.entries;
  AcceptStep winner_step = AcceptStep::Step1;
  if (entries.empty() || !(entries[0].second > config.step1_threshold)) {
    // Step 2: no convincing winner among the blocked candidates, widen to
    // every ip-sharing cookie and rescore
    CandidateSet expanded = expand_candidates(cat, device);
    if (expanded.cookie_ids.empty()) {
      result.is_sentinel = true;
      return result;
    }
    entries = score_device(ensemble, cat, device, expanded, labeled, t).entries;
    winner_step = AcceptStep::Step2;
  }

  const int winner = entries[0].first;
  const double winner_score = entries[0].second;
  const bool winner_known = cat.cookies[winner].handle_idx >= 0;

  std::vector<uint8_t> accepted(cat.n_cookies(), 0);
  auto accept = [&](int cookie, AcceptStep step) {
    if (accepted[cookie]) return;
    accepted[cookie] = 1;
    result.cookie_ids.push_back(cookie);
    result.trace.emplace_back(cookie, step);
  };

  // Step 3
  accept(winner, winner_step);
  if (winner_known) {
    for (int mate : cat.handle_cookies[cat.cookies[winner].handle_idx]) {
      accept(mate, AcceptStep::Step3Handle);
    }
  }

  // Step 4: one pass over the remaining candidates in score order
  for (size_t i = 1; i < entries.size(); ++i) {
    const int cand = entries[i].first;
    if (accepted[cand]) continue;
    const int h = cat.cookies[cand].handle_idx;
    const int n_mates = h >= 0 ? static_cast<int>(cat.handle_cookies[h].size()) - 1 : 0;
    PostProcessKey key;
    key.labeled_bucket = bucket_labeled(static_cast<int>(result.cookie_ids.size()));
    key.mates_bucket = bucket_mates(n_mates);
    key.winner_known = winner_known;
    key.candidate_known = h >= 0;
    if (entries[i].second > winner_score * config.multiplier(key)) {
      accept(cand, AcceptStep::Step4);
      if (h >= 0) {
        for (int mate : cat.handle_cookies[h]) accept(mate, AcceptStep::Step4Handle);
      }
    }
  }

  std::sort(result.cookie_ids.begin(), result.cookie_ids.end(),
            [&cat](int a, int b) { return cat.cookie_id_less(a, b); });
  return result;
}

PipelineRun run_pipeline(const Catalog& cat, const PipelineOptions& opt,
                         const BaggedEnsemble* preloaded_round1) {
  PipelineRun run;
  run.labeled = training_handles(cat);

  std::vector<CandidateSet> train_candidates;
  for (int d = 0; d < cat.n_devices(); ++d) {
    CandidateSet set = select_candidates(cat, d, opt.blocking);
    if (cat.devices[d].is_test) run.test_candidates.push_back(std::move(set));
    else train_candidates.push_back(std::move(set));
  }

  run.train_rows = build_dataset(cat, train_candidates, run.labeled, opt.blocking, opt.n_threads);
  Dataset data = to_learner_dataset(run.train_rows);

  BoostParams boost = opt.boost;
  boost.n_threads = opt.n_bags > 1 ? 1 : opt.n_threads;
  if (preloaded_round1) {
    run.round1 = *preloaded_round1;
  } else {
    run.round1 = train_bagged(data, boost, opt.n_bags, opt.master_seed, opt.bootstrap, opt.n_threads);
  }
  run.scores_round1 = score_devices(run.round1, cat, run.test_candidates, run.labeled,
                                    opt.blocking, opt.n_threads);

  if (opt.self_training) {
    run.pseudo_labels = select_pseudo_labels(run.scores_round1, opt.pseudo_top_min,
                                             opt.pseudo_second_max);
    run.final_ensemble = self_train(cat, run.train_rows, run.scores_round1, run.labeled, boost,
                                    opt.n_bags, opt.bootstrap, opt.master_seed,
                                    opt.pseudo_top_min, opt.pseudo_second_max, opt.n_threads);
    run.scores_final = score_devices(run.final_ensemble, cat, run.test_candidates, run.labeled,
                                     opt.blocking, opt.n_threads);
  } else {
    run.final_ensemble = run.round1;
    run.scores_final = run.scores_round1;
  }

  run.predictions.resize(run.scores_final.size());
  parallel_for(static_cast<int>(run.scores_final.size()), opt.n_threads, [&](int i) {
    run.predictions[i] = postprocess(cat, run.final_ensemble, run.scores_final[i].device,
                                     run.scores_final[i], opt.post, run.labeled, opt.blocking);
  });
  return run;
}

}  // namespace xdm
