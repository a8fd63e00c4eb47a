#include <numeric>
#include <stdexcept>

#include "xdmatch/common.hpp"
#include "xdmatch/gbt.hpp"

namespace xdm {

std::vector<int> cv_fold_assignment(int n_rows, int k, uint64_t seed) {
  if (k < 2) throw std::runtime_error("cross validation needs k >= 2");
  if (n_rows < k) throw std::runtime_error("fewer rows than folds");
  std::vector<int> idx(n_rows);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = n_rows - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.next_index(uint64_t(i) + 1)]);
  }
  std::vector<int> fold(n_rows);
  for (int j = 0; j < n_rows; ++j) fold[idx[j]] = j % k;
  return fold;
}

namespace {

double pair_f05(int64_t tp, int64_t fp, int64_t fn) {
  const double p = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
  const double r = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
  if (p == 0.0 && r == 0.0) return 0.0;
  return 1.25 * p * r / (0.25 * p + r);
}

}  // namespace

std::vector<CvPoint> cross_validate(const Dataset& data, std::span<const BoostParams> grid,
                                    int k, uint64_t seed) {
  const std::vector<int> fold = cv_fold_assignment(data.n_rows(), k, seed);
  std::vector<CvPoint> out;
  out.reserve(grid.size());
  for (const BoostParams& params : grid) {
    double sum_ll = 0.0, sum_f = 0.0;
    for (int fi = 0; fi < k; ++fi) {
      Dataset tr(data.n_features());
      Dataset va(data.n_features());
      for (int r = 0; r < data.n_rows(); ++r) {
        (fold[r] == fi ? va : tr).add_row(data.row(r), data.label(r));
      }
      BoostedModel model = train(tr, params, seed + uint64_t(fi));
      double ll = 0.0;
      int64_t tp = 0, fp = 0, fn = 0;
      for (int r = 0; r < va.n_rows(); ++r) {
        const double margin = model.predict_margin(va.row(r));
        ll += logistic_loss(margin, va.label(r));
        const bool positive = sigmoid(margin) > 0.5;
        if (positive && va.label(r)) ++tp;
        else if (positive && !va.label(r)) ++fp;
        else if (!positive && va.label(r)) ++fn;
      }
      sum_ll += ll / double(va.n_rows());
      sum_f += pair_f05(tp, fp, fn);
    }
    CvPoint point;
    point.params = params;
    point.mean_logloss = sum_ll / double(k);
    point.mean_f05 = sum_f / double(k);
    out.push_back(point);
  }
  return out;
}

}  // namespace xdm
