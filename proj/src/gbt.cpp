#include "xdmatch/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "xdmatch/common.hpp"

namespace xdm {

void BoostParams::validate() const {
  if (rounds < 1) throw std::runtime_error("rounds must be >= 1");
  if (max_depth < 1) throw std::runtime_error("max_depth must be >= 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw std::runtime_error("subsample must be in (0,1]");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw std::runtime_error("learning_rate must be in (0,1]");
  if (min_child_weight < 0.0) throw std::runtime_error("min_child_weight must be >= 0");
  if (min_split_gain < 0.0) throw std::runtime_error("min_split_gain must be >= 0");
  if (l2_reg < 0.0) throw std::runtime_error("l2_reg must be >= 0");
  if (!(base_score > 0.0 && base_score < 1.0)) throw std::runtime_error("base_score must be in (0,1)");
}

double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

double logistic_loss(double margin, int label) {
  double softplus = margin > 0.0 ? margin + std::log1p(std::exp(-margin))
                                 : std::log1p(std::exp(margin));
  return softplus - (label ? margin : 0.0);
}

std::pair<double, double> logistic_grad_hess(double predicted_prob, int label) {
  return {predicted_prob - double(label), predicted_prob * (1.0 - predicted_prob)};
}

double Tree::value(std::span<const double> row, double missing_code) const {
  int at = 0;
  while (nodes[at].feature >= 0) {
    const TreeNode& nd = nodes[at];
    double v = row[nd.feature];
    bool left = (v == missing_code) ? nd.missing_left : (v < nd.threshold);
    at = left ? nd.left : nd.right;
  }
  return nodes[at].weight;
}

int Tree::n_leaves() const {
  int n = 0;
  for (const auto& nd : nodes) n += nd.feature < 0;
  return n;
}

void Dataset::add_row(std::span<const double> values, int label) {
  if (static_cast<int>(values.size()) != n_features_) {
    throw std::runtime_error("row width does not match dataset feature count");
  }
  if (label != 0 && label != 1) throw std::runtime_error("label must be 0 or 1");
  values_.insert(values_.end(), values.begin(), values.end());
  labels_.push_back(static_cast<uint8_t>(label));
}

void Dataset::add_row(std::span<const double> values) { add_row(values, 0); }

double BoostedModel::base_margin() const {
  return std::log(params.base_score / (1.0 - params.base_score));
}

double BoostedModel::predict_margin(std::span<const double> row) const {
  double m = base_margin();
  for (const auto& t : trees) m += params.learning_rate * t.value(row, params.missing_code);
  return m;
}

double BoostedModel::predict_prob(std::span<const double> row) const {
  return sigmoid(predict_margin(row));
}

std::vector<double> BoostedModel::predict(const Dataset& data, int n_threads) const {
  std::vector<double> out(data.n_rows());
  parallel_for(data.n_rows(), n_threads, [&](int r) { out[r] = predict_prob(data.row(r)); });
  return out;
}

double BaggedEnsemble::predict_prob(std::span<const double> row) const {
  double s = 0.0;
  for (const auto& m : models) s += m.predict_prob(row);
  return s / double(models.size());
}

std::vector<double> BaggedEnsemble::predict(const Dataset& data, int n_threads) const {
  std::vector<double> out(data.n_rows());
  parallel_for(data.n_rows(), n_threads, [&](int r) { out[r] = predict_prob(data.row(r)); });
  return out;
}

namespace {

// Column-major copy of the data plus one sort per feature, shared by every
// round (and every bag member) trained on the same rows.
struct Presorted {
  int n_rows = 0;
  int n_features = 0;
  double missing_code = -1.0;
  std::vector<double> columns;        // [f * n_rows + r]
  std::vector<uint32_t> order;        // [f * n_rows + j], ascending by value, ties by row
  std::vector<double> sorted_values;  // aligned with order
  std::vector<uint8_t> has_missing;

  const double* column(int f) const { return columns.data() + size_t(f) * n_rows; }

  static Presorted build(const Dataset& data, double missing_code, int n_threads) {
    Presorted ps;
    ps.n_rows = data.n_rows();
    ps.n_features = data.n_features();
    ps.missing_code = missing_code;
    size_t total = size_t(ps.n_rows) * ps.n_features;
    ps.columns.resize(total);
    ps.order.resize(total);
    ps.sorted_values.resize(total);
    ps.has_missing.assign(ps.n_features, 0);
    for (int r = 0; r < ps.n_rows; ++r) {
      auto row = data.row(r);
      for (int f = 0; f < ps.n_features; ++f) ps.columns[size_t(f) * ps.n_rows + r] = row[f];
    }
    parallel_for(ps.n_features, n_threads, [&](int f) {
      const double* col = ps.column(f);
      uint32_t* ord = ps.order.data() + size_t(f) * ps.n_rows;
      double* vals = ps.sorted_values.data() + size_t(f) * ps.n_rows;
      std::iota(ord, ord + ps.n_rows, 0u);
      std::sort(ord, ord + ps.n_rows, [col](uint32_t a, uint32_t b) {
        if (col[a] != col[b]) return col[a] < col[b];
        return a < b;
      });
      bool missing = false;
      for (int j = 0; j < ps.n_rows; ++j) {
        vals[j] = col[ord[j]];
        missing |= vals[j] == missing_code;
      }
      ps.has_missing[f] = missing;
    });
    return ps;
  }
};

struct FitResult {
  Tree tree;
  std::vector<int> leaf_of;  // final node per row; -1 for rows outside the sample
};

FitResult fit_tree_core(const Presorted& ps, std::span<const double> g, std::span<const double> h,
                        const std::vector<int8_t>& in_sample, const BoostParams& prm) {
  const int n = ps.n_rows;
  const double lambda = prm.l2_reg;

  Tree tree;
  tree.nodes.push_back(TreeNode{});
  std::vector<double> node_g = {0.0}, node_h = {0.0};
  std::vector<int> pos(n);
  for (int r = 0; r < n; ++r) {
    bool in = in_sample.empty() || in_sample[r];
    pos[r] = in ? 0 : -1;
    if (in) {
      node_g[0] += g[r];
      node_h[0] += h[r];
    }
  }

  std::vector<int> open = {0};
  for (int level = 0; level < prm.max_depth && !open.empty(); ++level) {
    const int n_slots = static_cast<int>(open.size());
    const int n_nodes_before = static_cast<int>(tree.nodes.size());
    std::vector<int> slot_of(n_nodes_before, -1);
    for (int s = 0; s < n_slots; ++s) slot_of[open[s]] = s;

    struct FeatureBest {
      double gain = 0.0;
      double threshold = 0.0;
      uint8_t missing_left = 0;
      uint8_t valid = 0;
    };
    std::vector<FeatureBest> bests(size_t(ps.n_features) * n_slots);

    parallel_for(ps.n_features, prm.n_threads, [&](int f) {
      const uint32_t* ord = ps.order.data() + size_t(f) * n;
      const double* vals = ps.sorted_values.data() + size_t(f) * n;
      const bool feature_missing = ps.has_missing[f] != 0;
      FeatureBest* best = bests.data() + size_t(f) * n_slots;

      // non-missing totals per open node (equal to node totals when the
      // feature has no missing-coded values)
      std::vector<double> gnm(n_slots), hnm(n_slots);
      if (feature_missing) {
        std::fill(gnm.begin(), gnm.end(), 0.0);
        std::fill(hnm.begin(), hnm.end(), 0.0);
        for (int j = 0; j < n; ++j) {
          if (vals[j] == ps.missing_code) continue;
          int node = pos[ord[j]];
          if (node < 0 || node >= n_nodes_before) continue;
          int s = slot_of[node];
          if (s < 0) continue;
          gnm[s] += g[ord[j]];
          hnm[s] += h[ord[j]];
        }
      } else {
        for (int s = 0; s < n_slots; ++s) {
          gnm[s] = node_g[open[s]];
          hnm[s] = node_h[open[s]];
        }
      }

      std::vector<double> gl(n_slots, 0.0), hl(n_slots, 0.0), last(n_slots, 0.0);
      std::vector<uint8_t> started(n_slots, 0);
      for (int j = 0; j < n; ++j) {
        const uint32_t r = ord[j];
        const int node = pos[r];
        if (node < 0 || node >= n_nodes_before) continue;
        const int s = slot_of[node];
        if (s < 0) continue;
        const double v = vals[j];
        if (v == ps.missing_code) continue;
        if (started[s] && v != last[s]) {
          double thr = 0.5 * (last[s] + v);
          if (!(thr > last[s])) thr = v;  // adjacent representable values
          const double gn = node_g[open[s]], hn = node_h[open[s]];
          const double gm = gn - gnm[s], hm = hn - hnm[s];
          const double parent_term = gn * gn / (hn + lambda);
          // missing goes right first, then left; strict improvement keeps
          // the earlier candidate, so ties resolve to the lowest threshold
          const int n_dirs = feature_missing ? 2 : 1;
          for (int dir = 0; dir < n_dirs; ++dir) {
            const double gl_eff = dir ? gl[s] + gm : gl[s];
            const double hl_eff = dir ? hl[s] + hm : hl[s];
            const double gr_eff = gn - gl_eff;
            const double hr_eff = hn - hl_eff;
            if (hl_eff < prm.min_child_weight || hr_eff < prm.min_child_weight) continue;
            const double gain = 0.5 * (gl_eff * gl_eff / (hl_eff + lambda) +
                                       gr_eff * gr_eff / (hr_eff + lambda) - parent_term);
            if (!std::isfinite(gain) || gain < prm.min_split_gain) continue;
            if (!best[s].valid || gain > best[s].gain) {
              best[s] = FeatureBest{gain, thr, static_cast<uint8_t>(dir), 1};
            }
          }
        }
        gl[s] += g[r];
        hl[s] += h[r];
        last[s] = v;
        started[s] = 1;
      }
    });

    // deterministic reduce: strict improvement over ascending feature index
    struct Chosen {
      bool valid = false;
      double gain = 0.0, threshold = 0.0;
      int feature = -1;
      bool missing_left = false;
    };
    std::vector<Chosen> chosen(n_slots);
    for (int f = 0; f < ps.n_features; ++f) {
      const FeatureBest* best = bests.data() + size_t(f) * n_slots;
      for (int s = 0; s < n_slots; ++s) {
        if (!best[s].valid) continue;
        if (!chosen[s].valid || best[s].gain > chosen[s].gain) {
          chosen[s] = Chosen{true, best[s].gain, best[s].threshold, f, best[s].missing_left != 0};
        }
      }
    }

    std::vector<uint8_t> was_split(n_nodes_before, 0);
    std::vector<int> next_open;
    for (int s = 0; s < n_slots; ++s) {
      if (!chosen[s].valid) continue;  // node stays a leaf
      const int id = open[s];
      const int li = static_cast<int>(tree.nodes.size());
      const int ri = li + 1;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& nd = tree.nodes[id];
      nd.feature = chosen[s].feature;
      nd.threshold = chosen[s].threshold;
      nd.missing_left = chosen[s].missing_left;
      nd.left = li;
      nd.right = ri;
      nd.gain = chosen[s].gain;
      node_g.resize(tree.nodes.size(), 0.0);
      node_h.resize(tree.nodes.size(), 0.0);
      was_split[id] = 1;
      next_open.push_back(li);
      next_open.push_back(ri);
    }
    if (next_open.empty()) break;

    for (int r = 0; r < n; ++r) {
      const int node = pos[r];
      if (node < 0 || node >= n_nodes_before || !was_split[node]) continue;
      const TreeNode& nd = tree.nodes[node];
      const double v = ps.column(nd.feature)[r];
      const bool left = (v == ps.missing_code) ? nd.missing_left : (v < nd.threshold);
      const int child = left ? nd.left : nd.right;
      pos[r] = child;
      node_g[child] += g[r];
      node_h[child] += h[r];
    }
    open = std::move(next_open);
  }

  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    if (tree.nodes[i].feature >= 0) continue;
    const double denom = node_h[i] + lambda;
    tree.nodes[i].weight = denom > 0.0 ? -node_g[i] / denom : 0.0;
  }
  return FitResult{std::move(tree), std::move(pos)};
}

BoostedModel train_core(const Presorted& ps, const Dataset& data, std::span<const double> weights,
                        const BoostParams& prm, uint64_t seed) {
  const int n = ps.n_rows;
  const bool has_w = !weights.empty();
  if (has_w && static_cast<int>(weights.size()) != n) {
    throw std::runtime_error("weight vector size mismatch");
  }
  int64_t n_pos = 0, n_neg = 0;
  for (int r = 0; r < n; ++r) {
    if (has_w && !(weights[r] > 0.0)) continue;
    (data.label(r) ? n_pos : n_neg)++;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::runtime_error("training data must contain both classes");
  }

  BoostedModel model;
  model.params = prm;
  const double base = model.base_margin();
  std::vector<double> margins(n, base);
  double sum_w = 0.0;
  if (has_w) {
    for (double w : weights) sum_w += w;
  } else {
    sum_w = double(n);
  }

  auto mean_loss = [&]() {
    double s = 0.0;
    for (int r = 0; r < n; ++r) {
      const double l = logistic_loss(margins[r], data.label(r));
      s += has_w ? weights[r] * l : l;
    }
    return s / sum_w;
  };
  model.train_loss.reserve(prm.rounds + 1);
  model.train_loss.push_back(mean_loss());

  Rng rng(seed);
  std::vector<double> g(n), h(n);
  std::vector<int8_t> in_sample;
  const bool need_mask = has_w || prm.subsample < 1.0;
  if (need_mask) in_sample.resize(n);

  for (int round = 0; round < prm.rounds; ++round) {
    for (int r = 0; r < n; ++r) {
      const double p = sigmoid(margins[r]);
      auto [gr, hr] = logistic_grad_hess(p, data.label(r));
      if (has_w) {
        gr *= weights[r];
        hr *= weights[r];
      }
      g[r] = gr;
      h[r] = hr;
    }
    if (need_mask) {
      for (int r = 0; r < n; ++r) {
        bool draw = true;
        if (prm.subsample < 1.0) draw = rng.next_bool(prm.subsample);
        in_sample[r] = static_cast<int8_t>(draw && (!has_w || weights[r] > 0.0));
      }
    }
    FitResult fit = fit_tree_core(ps, g, h, in_sample, prm);
    for (int r = 0; r < n; ++r) {
      const int leaf = fit.leaf_of[r];
      const double w = leaf >= 0 ? fit.tree.nodes[leaf].weight
                                 : fit.tree.value(data.row(r), prm.missing_code);
      margins[r] += prm.learning_rate * w;
    }
    model.trees.push_back(std::move(fit.tree));
    model.train_loss.push_back(mean_loss());
  }
  return model;
}

}  // namespace

Tree fit_tree(const Dataset& data, std::span<const double> gradients,
              std::span<const double> hessians, const BoostParams& params) {
  params.validate();
  if (data.n_rows() == 0) throw std::runtime_error("fit_tree requires at least one row");
  if (static_cast<int>(gradients.size()) != data.n_rows() ||
      static_cast<int>(hessians.size()) != data.n_rows()) {
    throw std::runtime_error("gradient/hessian size mismatch");
  }
  Presorted ps = Presorted::build(data, params.missing_code, params.n_threads);
  return fit_tree_core(ps, gradients, hessians, {}, params).tree;
}

BoostedModel train(const Dataset& data, const BoostParams& params, uint64_t seed) {
  params.validate();
  if (data.n_rows() == 0) throw std::runtime_error("empty training data");
  Presorted ps = Presorted::build(data, params.missing_code, params.n_threads);
  return train_core(ps, data, {}, params, seed);
}

BoostedModel train_weighted(const Dataset& data, std::span<const double> weights,
                            const BoostParams& params, uint64_t seed) {
  params.validate();
  if (data.n_rows() == 0) throw std::runtime_error("empty training data");
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::runtime_error("weights must be non-negative");
  }
  Presorted ps = Presorted::build(data, params.missing_code, params.n_threads);
  return train_core(ps, data, weights, params, seed);
}

BaggedEnsemble train_bagged(const Dataset& data, const BoostParams& params, int n_bags,
                            uint64_t master_seed, bool bootstrap, int outer_threads) {
  params.validate();
  if (n_bags < 1) throw std::runtime_error("n_bags must be >= 1");
  if (data.n_rows() == 0) throw std::runtime_error("empty training data");
  Presorted ps = Presorted::build(data, params.missing_code, params.n_threads);

  BaggedEnsemble ens;
  ens.models.resize(n_bags);
  ens.seeds.resize(n_bags);
  for (int i = 0; i < n_bags; ++i) ens.seeds[i] = master_seed + uint64_t(i);

  std::vector<std::string> errors(n_bags);
  parallel_for(n_bags, outer_threads, [&](int i) {
    try {
      std::vector<double> w;
      if (bootstrap) {
        // resample seed decorrelated from the member's subsampling stream
        Rng boot(ens.seeds[i] ^ 0xB5EC7A6D3F0C9A21ULL);
        w.assign(data.n_rows(), 0.0);
        for (int d = 0; d < data.n_rows(); ++d) {
          w[boot.next_index(uint64_t(data.n_rows()))] += 1.0;
        }
      }
      ens.models[i] = train_core(ps, data, w, params, ens.seeds[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
  return ens;
}

}  // namespace xdm
