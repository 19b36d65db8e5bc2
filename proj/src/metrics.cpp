#include "msgr/metrics.hpp"

#include "msgr/error.hpp"

#include <cmath>

namespace msgr {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> indicator(const EdgeList& edges, int p, const char* which) {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> m = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(p, p, false);
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= p || j >= p || i == j)
      throw data_error("DimensionMismatch", std::string(which) + " edge (" + std::to_string(i) + ", " +
                                                std::to_string(j) + ") outside p = " + std::to_string(p));
    m(std::min(i, j), std::max(i, j)) = true;
  }
  return m;
}

}  // namespace

ConfusionMetrics confusion_from_counts(long tp, long fp, long tn, long fn) {
  ConfusionMetrics m{tp, fp, tn, fn};
  const double dtp = static_cast<double>(tp), dfp = static_cast<double>(fp);
  const double dtn = static_cast<double>(tn), dfn = static_cast<double>(fn);
  const double den = std::sqrt((dtp + dfp) * (dtp + dfn) * (dtn + dfp) * (dtn + dfn));
  m.mcc = ratio(dtp * dtn - dfp * dfn, den);
  m.tpr = ratio(dtp, dtp + dfn);
  m.fpr = ratio(dfp, dfp + dtn);
  m.fdr = ratio(dfp, dtp + dfp);
  return m;
}

ConfusionMetrics score(const std::vector<EdgeList>& estimated, const std::vector<EdgeList>& truth, int p, int K) {
  if (static_cast<int>(estimated.size()) != K || static_cast<int>(truth.size()) != K)
    throw data_error("DimensionMismatch", "edge sets cover " + std::to_string(estimated.size()) + " and " +
                                              std::to_string(truth.size()) + " FOVs, expected " + std::to_string(K));
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (int k = 0; k < K; ++k) {
    const auto e = indicator(estimated[k], p, "estimated");
    const auto t = indicator(truth[k], p, "true");
    for (int i = 0; i < p; ++i) {
      for (int j = i + 1; j < p; ++j) {
        if (e(i, j)) (t(i, j) ? tp : fp)++;
        else (t(i, j) ? fn : tn)++;
      }
    }
  }
  return confusion_from_counts(tp, fp, tn, fn);
}

}  // namespace msgr
