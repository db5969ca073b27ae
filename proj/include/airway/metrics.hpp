#pragma once

#include <vector>

#include "airway/volume.hpp"

namespace airway {

// 2|P∩G| / (|P| + |G|); both empty -> 1.0.
double dice_score(const Volume& pred_mask, const Volume& gt_mask);

struct ClassMetrics {
    double accuracy = 0.0;
    double precision = 0.0;  // macro over classes present in ground truth
    double recall = 0.0;
    double f1 = 0.0;         // mean of per-class f1 over classes present in gt
};

// Per-class precision/recall with 0/0 -> 0, macro-averaged over classes that occur
// in the ground truth.
ClassMetrics classification_metrics(const std::vector<int>& pred, const std::vector<int>& gt,
                                    int n_classes);

}  // namespace airway
