#pragma once

#include <vector>

#include "airway/volume.hpp"

namespace airway {

// dilate26(gt \ trachea): the ground-truth voxels outside the easy main trachea,
// grown by one voxel.
Volume hard_region(const Volume& gt_mask, const Volume& trachea_mask);

// levels[h-1] = maxpool_stride2 applied h times to the base hard-region mask.
struct SupervisionPyramid {
    std::vector<Volume> levels;
};

SupervisionPyramid build_pyramid(const Volume& y_hr, int levels);

struct DiceResult {
    double loss;
    Volume grad;  // d(loss)/d(pred) per voxel
};

// loss = 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps), eps = 1.
// pred must lie in [0,1], target must be binary.
DiceResult dice_loss(const Volume& pred, const Volume& target);

struct LossReport {
    double total = 0.0;
    double dice_full = 0.0;
    std::vector<double> hr_terms;
};

// total = dice(pred_full, gt) + sum over levels of dice(pred_hr[h], pyramid[h]).
LossReport seg_loss(const Volume& pred_full, const std::vector<Volume>& pred_hr,
                    const Volume& gt, const SupervisionPyramid& pyramid);

// Free logit volumes standing in for the segmentation backbone: one at full
// resolution plus one auxiliary head per pyramid level.
struct LogitsStack {
    Volume full;
    std::vector<Volume> levels;
};

struct StackLoss {
    LossReport report;
    LogitsStack grad;  // d(total)/d(logit) through the sigmoids
};

// seg_loss of sigmoid(stack) against (gt, pyramid), with analytic gradients.
StackLoss seg_loss_on_logits(const LogitsStack& logits, const Volume& gt,
                             const SupervisionPyramid& pyramid);

struct LogitsDemoResult {
    std::vector<double> dice_trajectory;  // hard dice (pred > 0.5 vs gt) after each step
    Volume final_pred;                    // sigmoid probabilities, full resolution
    LossReport final_report;
};

// Gradient-descends the logit stack under seg_loss. Exercises the loss family end
// to end without a segmentation network.
LogitsDemoResult optimize_logits_demo(const Volume& gt, const Volume& trachea, int levels,
                                      int steps, double lr);

}  // namespace airway
