#pragma once

#include "msgr/postprocess.hpp"

namespace msgr {

struct ConfusionMetrics {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double mcc = 0.0, tpr = 0.0, fpr = 0.0, fdr = 0.0;
};

/// Rates from raw counts. Zero denominators give 0 (MCC, TPR, FPR, FDR alike).
ConfusionMetrics confusion_from_counts(long tp, long fp, long tn, long fn);

/// Confusion over all unordered pairs (i < j) of every FOV.
ConfusionMetrics score(const std::vector<EdgeList>& estimated, const std::vector<EdgeList>& truth, int p, int K);

}  // namespace msgr
