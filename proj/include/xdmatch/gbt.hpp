#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace xdm {

struct BoostParams {
  int rounds = 200;
  int max_depth = 10;
  double subsample = 1.0;
  double min_child_weight = 4.0;   // minimum hessian sum per child
  double learning_rate = 0.1;
  double min_split_gain = 5.0;     // gamma-style gate on the split gain
  double l2_reg = 1.0;
  double base_score = 0.5;
  double missing_code = -1.0;
  int n_threads = 1;               // split-search parallelism; output identical at any value

  void validate() const;
};

// log-loss derivatives w.r.t. the margin: (p - y, p (1 - p))
std::pair<double, double> logistic_grad_hess(double predicted_prob, int label);

double sigmoid(double margin);
// numerically stable -[y log p + (1-y) log(1-p)] evaluated from the margin
double logistic_loss(double margin, int label);

struct TreeNode {
  int feature = -1;       // -1 marks a leaf
  double threshold = 0.0; // value < threshold goes left
  bool missing_left = false;
  int left = -1;
  int right = -1;
  double weight = 0.0;    // leaf log-odds contribution, unscaled
  double gain = 0.0;      // recorded split gain on internal nodes
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double value(std::span<const double> row, double missing_code) const;
  int n_leaves() const;
};

// Row-major training/prediction container for the learner.
class Dataset {
 public:
  explicit Dataset(int n_features) : n_features_(n_features) {}

  void add_row(std::span<const double> values, int label);
  void add_row(std::span<const double> values);  // unlabeled, prediction only

  int n_rows() const { return static_cast<int>(labels_.size()); }
  int n_features() const { return n_features_; }
  std::span<const double> row(int r) const {
    return {values_.data() + static_cast<size_t>(r) * n_features_, static_cast<size_t>(n_features_)};
  }
  int label(int r) const { return labels_[r]; }
  const std::vector<uint8_t>& labels() const { return labels_; }

 private:
  int n_features_;
  std::vector<double> values_;
  std::vector<uint8_t> labels_;
};

struct BoostedModel {
  BoostParams params;
  std::vector<Tree> trees;
  std::vector<double> train_loss;  // [0] = constant model, then one entry per round

  double base_margin() const;
  double predict_margin(std::span<const double> row) const;
  double predict_prob(std::span<const double> row) const;
  std::vector<double> predict(const Dataset& data, int n_threads = 1) const;
};

// Exact greedy split search over sorted unique thresholds, one Newton step
// per leaf. Missing-coded values are routed to whichever side gains more.
Tree fit_tree(const Dataset& data, std::span<const double> gradients,
              std::span<const double> hessians, const BoostParams& params);

BoostedModel train(const Dataset& data, const BoostParams& params, uint64_t seed);
// per-row multiplicities; a zero excludes the row from fitting and loss
BoostedModel train_weighted(const Dataset& data, std::span<const double> weights,
                            const BoostParams& params, uint64_t seed);

struct BaggedEnsemble {
  std::vector<BoostedModel> models;
  std::vector<uint64_t> seeds;

  double predict_prob(std::span<const double> row) const;
  std::vector<double> predict(const Dataset& data, int n_threads = 1) const;
};

// Each member fits a full-size bootstrap resample (seed = master_seed + bag
// index); with bootstrap off every member sees the original rows.
BaggedEnsemble train_bagged(const Dataset& data, const BoostParams& params, int n_bags,
                            uint64_t master_seed, bool bootstrap = true, int outer_threads = 1);

// model/ensemble text format; round-trips predictions bit-exactly
void save_model(const BoostedModel& model, const std::string& path);
BoostedModel load_model(const std::string& path);
void save_ensemble(const BaggedEnsemble& ensemble, const std::string& path);
BaggedEnsemble load_ensemble(const std::string& path);

struct CvPoint {
  BoostParams params;
  double mean_logloss = 0.0;
  double mean_f05 = 0.0;  // pair-level F0.5 at a 0.5 cutoff, averaged over folds
};

std::vector<int> cv_fold_assignment(int n_rows, int k, uint64_t seed);
std::vector<CvPoint> cross_validate(const Dataset& data, std::span<const BoostParams> grid,
                                    int k, uint64_t seed);

}  // namespace xdm
