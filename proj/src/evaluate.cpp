#include <algorithm>
#include <chrono>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "xdmatch/common.hpp"
#include "xdmatch/csv.hpp"
#include "xdmatch/pipeline.hpp"

namespace xdm {

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<std::string> split_ids(const std::string& field) {
  std::vector<std::string> out;
  std::istringstream ss(field);
  std::string id;
  while (ss >> id) out.push_back(id);
  return out;
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += ids[i];
  }
  return out;
}

double elapsed_seconds(std::chrono::steady_clock::time_point from) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

}  // namespace

IdSetMap load_id_sets(const std::string& path) {
  CsvReader r(path, {"device_id", "cookie_ids"});
  IdSetMap out;
  std::vector<std::string> f;
  while (r.next_row(f)) {
    if (!out.emplace(f[0], sorted_unique(split_ids(f[1]))).second) {
      r.fail(1, "duplicate device_id '" + f[0] + "'");
    }
  }
  return out;
}

void save_id_sets(const IdSetMap& sets, const std::string& path) {
  CsvWriter w(path);
  w.write_row({"device_id", "cookie_ids"});
  for (const auto& [device, cookies] : sets) {
    w.write_row({device, join_ids(cookies)});
  }
  w.close();
}

EvalComponents f05_device(const std::vector<std::string>& predicted,
                          const std::vector<std::string>& truth) {
  const std::vector<std::string> ps = sorted_unique(predicted);
  const std::vector<std::string> ts = sorted_unique(truth);
  EvalComponents ev;
  size_t i = 0, j = 0;
  while (i < ps.size() && j < ts.size()) {
    if (ps[i] < ts[j]) ++i;
    else if (ts[j] < ps[i]) ++j;
    else { ++ev.tp; ++i; ++j; }
  }
  ev.fp = static_cast<int64_t>(ps.size()) - ev.tp;
  ev.fn = static_cast<int64_t>(ts.size()) - ev.tp;
  ev.p = (ev.tp + ev.fp) > 0 ? double(ev.tp) / double(ev.tp + ev.fp) : 0.0;
  ev.r = (ev.tp + ev.fn) > 0 ? double(ev.tp) / double(ev.tp + ev.fn) : 0.0;
  ev.f05 = (ev.p == 0.0 && ev.r == 0.0) ? 0.0 : 1.25 * ev.p * ev.r / (0.25 * ev.p + ev.r);
  return ev;
}

EvalSummary evaluate(const IdSetMap& predictions, const IdSetMap& truth,
                     const std::string& per_device_csv) {
  EvalSummary summary;
  double sum = 0.0;
  std::unique_ptr<CsvWriter> w;
  if (!per_device_csv.empty()) {
    w = std::make_unique<CsvWriter>(per_device_csv);
    w->write_row({"device_id", "tp", "fp", "fn", "precision", "recall", "f05"});
  }
  for (const auto& [device, predicted] : predictions) {
    auto it = truth.find(device);
    if (it == truth.end()) throw std::runtime_error("device missing from truth: " + device);
    EvalComponents ev = f05_device(predicted, it->second);
    sum += ev.f05;
    ++summary.n_devices;
    if (w) {
      w->write_row({device, std::to_string(ev.tp), std::to_string(ev.fp), std::to_string(ev.fn),
                    format_double(ev.p), format_double(ev.r), format_double(ev.f05)});
    }
  }
  if (w) w->close();
  summary.mean_f05 = summary.n_devices > 0 ? sum / double(summary.n_devices) : 0.0;
  return summary;
}

namespace {

// top cookie plus its handle mates; the plain prediction the supervised
// stage is scored with
std::vector<std::string> top_with_mates(const Catalog& cat, const ScoredCandidates& scored,
                                        const std::string& sentinel) {
  if (scored.entries.empty()) return {sentinel};
  const int top = scored.entries[0].first;
  std::vector<std::string> out = {cat.cookies[top].cookie_id};
  const int h = cat.cookies[top].handle_idx;
  if (h >= 0) {
    for (int mate : cat.handle_cookies[h]) out.push_back(cat.cookies[mate].cookie_id);
  }
  return sorted_unique(std::move(out));
}

}  // namespace

std::vector<SweepRow> threshold_sweep(const Catalog& cat,
                                      std::span<const ScoredCandidates> all_scored,
                                      const IdSetMap& truth, std::span<const double> thresholds) {
  struct DeviceEntry {
    double second_score = 0.0;
    double f05 = 0.0;
  };
  std::vector<DeviceEntry> entries;
  entries.reserve(all_scored.size());
  for (const auto& scored : all_scored) {
    const std::string& device_id = cat.devices[scored.device].device_id;
    auto it = truth.find(device_id);
    if (it == truth.end()) throw std::runtime_error("device missing from truth: " + device_id);
    DeviceEntry e;
    e.second_score = scored.entries.size() >= 2 ? scored.entries[1].second : 0.0;
    e.f05 = f05_device(top_with_mates(cat, scored, "NO_COOKIE"), it->second).f05;
    entries.push_back(e);
  }

  std::vector<double> grid(thresholds.begin(), thresholds.end());
  std::sort(grid.begin(), grid.end());
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double t : grid) {
    SweepRow row;
    row.threshold = t;
    double sum = 0.0;
    for (const auto& e : entries) {
      if (e.second_score < t) {
        ++row.n_qualifying;
        sum += e.f05;
      }
    }
    row.fraction = entries.empty() ? 0.0 : double(row.n_qualifying) / double(entries.size());
    row.mean_f05 = row.n_qualifying > 0 ? sum / double(row.n_qualifying) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  CsvWriter w(path);
  w.write_row({"threshold", "fraction_of_devices", "mean_f05", "n_qualifying"});
  for (const auto& r : rows) {
    w.write_row({format_double(r.threshold), format_double(r.fraction), format_double(r.mean_f05),
                 std::to_string(r.n_qualifying)});
  }
  w.close();
}

IdSetMap predictions_to_id_sets(const Catalog& cat, std::span<const PredictionSet> predictions,
                                const std::string& sentinel) {
  IdSetMap out;
  for (const auto& pred : predictions) {
    std::vector<std::string> ids;
    if (pred.is_sentinel || pred.cookie_ids.empty()) {
      ids.push_back(sentinel);
    } else {
      for (int c : pred.cookie_ids) ids.push_back(cat.cookies[c].cookie_id);
      ids = sorted_unique(std::move(ids));
    }
    out.emplace(cat.devices[pred.device].device_id, std::move(ids));
  }
  return out;
}

void save_predictions_csv(const Catalog& cat, std::span<const PredictionSet> predictions,
                          const std::string& sentinel, const std::string& path) {
  save_id_sets(predictions_to_id_sets(cat, predictions, sentinel), path);
}

std::vector<AblationRow> ablation(const Catalog& cat, const IdSetMap& truth,
                                  const PipelineOptions& opt) {
  const std::string& sentinel = opt.post.sentinel;
  std::vector<AblationRow> report;

  auto t0 = std::chrono::steady_clock::now();
  LabeledHandles labeled = training_handles(cat);
  std::vector<CandidateSet> train_candidates, test_candidates;
  for (int d = 0; d < cat.n_devices(); ++d) {
    CandidateSet set = select_candidates(cat, d, opt.blocking);
    if (cat.devices[d].is_test) test_candidates.push_back(std::move(set));
    else train_candidates.push_back(std::move(set));
  }

  // variant 1: the candidate set itself is the prediction
  {
    IdSetMap predictions;
    for (const auto& set : test_candidates) {
      std::vector<std::string> ids;
      for (int c : set.cookie_ids) ids.push_back(cat.cookies[c].cookie_id);
      if (ids.empty()) ids.push_back(sentinel);
      predictions.emplace(cat.devices[set.device].device_id, sorted_unique(std::move(ids)));
    }
    report.push_back({"Sel", evaluate(predictions, truth).mean_f05, elapsed_seconds(t0)});
  }

  std::vector<FeatureRow> train_rows =
      build_dataset(cat, train_candidates, labeled, opt.blocking, opt.n_threads);
  Dataset data = to_learner_dataset(train_rows);

  auto top_mate_predictions = [&](std::span<const ScoredCandidates> scores) {
    IdSetMap predictions;
    for (const auto& scored : scores) {
      predictions.emplace(cat.devices[scored.device].device_id,
                          top_with_mates(cat, scored, sentinel));
    }
    return predictions;
  };

  // variant 2: one boosted model, winner plus handle mates
  {
    auto t1 = std::chrono::steady_clock::now();
    BoostParams boost = opt.boost;
    boost.n_threads = opt.n_threads;
    BaggedEnsemble single;
    single.models.push_back(train(data, boost, opt.master_seed));
    single.seeds.push_back(opt.master_seed);
    auto scores = score_devices(single, cat, test_candidates, labeled, opt.blocking, opt.n_threads);
    report.push_back({"Sel+SL", evaluate(top_mate_predictions(scores), truth).mean_f05,
                      elapsed_seconds(t1)});
  }

  // variant 3: bagged ensemble, same prediction rule
  BoostParams boost = opt.boost;
  boost.n_threads = opt.n_bags > 1 ? 1 : opt.n_threads;
  auto t2 = std::chrono::steady_clock::now();
  BaggedEnsemble bagged = train_bagged(data, boost, opt.n_bags, opt.master_seed, opt.bootstrap,
                                       opt.n_threads);
  auto scores_round1 =
      score_devices(bagged, cat, test_candidates, labeled, opt.blocking, opt.n_threads);
  report.push_back({"Sel+SL+B", evaluate(top_mate_predictions(scores_round1), truth).mean_f05,
                    elapsed_seconds(t2)});

  // variant 4: self-training round plus post-processing
  {
    auto t3 = std::chrono::steady_clock::now();
    BaggedEnsemble round2 =
        self_train(cat, train_rows, scores_round1, labeled, boost, opt.n_bags, opt.bootstrap,
                   opt.master_seed, opt.pseudo_top_min, opt.pseudo_second_max, opt.n_threads);
    auto scores_final =
        score_devices(round2, cat, test_candidates, labeled, opt.blocking, opt.n_threads);
    std::vector<PredictionSet> predictions(scores_final.size());
    parallel_for(static_cast<int>(scores_final.size()), opt.n_threads, [&](int i) {
      predictions[i] = postprocess(cat, round2, scores_final[i].device, scores_final[i], opt.post,
                                   labeled, opt.blocking);
    });
    report.push_back({"Sel+SSL+B+PP",
                      evaluate(predictions_to_id_sets(cat, predictions, sentinel), truth).mean_f05,
                      elapsed_seconds(t3)});
  }
  return report;
}

void save_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  CsvWriter w(path);
  w.write_row({"variant", "mean_f05", "seconds"});
  for (const auto& r : rows) {
    w.write_row({r.variant, format_double(r.mean_f05), format_double(r.seconds)});
  }
  w.close();
}

}  // namespace xdm
