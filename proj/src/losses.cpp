#include "airway/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "airway/metrics.hpp"
#include "airway/morphology.hpp"

namespace airway {

Volume hard_region(const Volume& gt_mask, const Volume& trachea_mask) {
    if (!gt_mask.same_dims(trachea_mask))
        throw std::invalid_argument("hard_region: dim mismatch");
    Volume diff(gt_mask.nx, gt_mask.ny, gt_mask.nz);
    for (std::size_t i = 0; i < gt_mask.size(); ++i)
        diff.data[i] = (gt_mask.data[i] != 0.0 && trachea_mask.data[i] == 0.0) ? 1.0 : 0.0;
    return dilate26(diff);
}

SupervisionPyramid build_pyramid(const Volume& y_hr, int levels) {
    if (levels < 1) throw std::invalid_argument("build_pyramid: levels must be >= 1");
    SupervisionPyramid pyr;
    Volume cur = y_hr;
    for (int h = 0; h < levels; ++h) {
        cur = maxpool_stride2(cur);
        pyr.levels.push_back(cur);
    }
    return pyr;
}

DiceResult dice_loss(const Volume& pred, const Volume& target) {
    if (!pred.same_dims(target)) throw std::invalid_argument("dice_loss: dim mismatch");
    if (!target.is_binary()) throw std::invalid_argument("dice_loss: target must be binary");
    for (double v : pred.data)
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("dice_loss: pred values must lie in [0,1]");

    constexpr double eps = 1.0;
    double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += pred.data[i] * target.data[i];
        sum_p += pred.data[i];
        sum_t += target.data[i];
    }
    const double num = 2.0 * inter + eps;
    const double den = sum_p + sum_t + eps;

    DiceResult res;
    res.loss = 1.0 - num / den;
    res.grad = Volume(pred.nx, pred.ny, pred.nz);
    // d/dp_i [1 - num/den] = (num - 2*t_i*den) / den^2
    const double den2 = den * den;
    for (std::size_t i = 0; i < pred.size(); ++i)
        res.grad.data[i] = (num - 2.0 * target.data[i] * den) / den2;
    return res;
}

LossReport seg_loss(const Volume& pred_full, const std::vector<Volume>& pred_hr,
                    const Volume& gt, const SupervisionPyramid& pyramid) {
    if (pred_hr.size() != pyramid.levels.size())
        throw std::invalid_argument("seg_loss: level count mismatch");
    LossReport rep;
    rep.dice_full = dice_loss(pred_full, gt).loss;
    rep.total = rep.dice_full;
    for (std::size_t h = 0; h < pred_hr.size(); ++h) {
        if (!pred_hr[h].same_dims(pyramid.levels[h]))
            throw std::invalid_argument("seg_loss: level dim mismatch");
        double term = dice_loss(pred_hr[h], pyramid.levels[h]).loss;
        rep.hr_terms.push_back(term);
        rep.total += term;
    }
    return rep;
}

namespace {

Volume sigmoid_of(const Volume& logits) {
    Volume prob(logits.nx, logits.ny, logits.nz);
    for (std::size_t i = 0; i < logits.size(); ++i)
        prob.data[i] = 1.0 / (1.0 + std::exp(-logits.data[i]));
    return prob;
}

}  // namespace

StackLoss seg_loss_on_logits(const LogitsStack& logits, const Volume& gt,
                             const SupervisionPyramid& pyramid) {
    if (!logits.full.same_dims(gt))
        throw std::invalid_argument("seg_loss_on_logits: dim mismatch");
    if (logits.levels.size() != pyramid.levels.size())
        throw std::invalid_argument("seg_loss_on_logits: level count mismatch");

    StackLoss out;
    Volume prob = sigmoid_of(logits.full);
    DiceResult full = dice_loss(prob, gt);
    out.report.dice_full = full.loss;
    out.report.total = full.loss;
    out.grad.full = Volume(gt.nx, gt.ny, gt.nz);
    for (std::size_t i = 0; i < prob.size(); ++i)
        out.grad.full.data[i] = full.grad.data[i] * prob.data[i] * (1.0 - prob.data[i]);

    for (std::size_t h = 0; h < pyramid.levels.size(); ++h) {
        Volume lp = sigmoid_of(logits.levels[h]);
        DiceResult lvl = dice_loss(lp, pyramid.levels[h]);
        out.report.hr_terms.push_back(lvl.loss);
        out.report.total += lvl.loss;
        Volume g(lp.nx, lp.ny, lp.nz);
        for (std::size_t i = 0; i < lp.size(); ++i)
            g.data[i] = lvl.grad.data[i] * lp.data[i] * (1.0 - lp.data[i]);
        out.grad.levels.push_back(std::move(g));
    }
    return out;
}

LogitsDemoResult optimize_logits_demo(const Volume& gt, const Volume& trachea, int levels,
                                      int steps, double lr) {
    if (steps < 1) throw std::invalid_argument("optimize_logits_demo: steps must be >= 1");
    const Volume hr = hard_region(gt, trachea);
    const SupervisionPyramid pyramid = build_pyramid(hr, levels);

    LogitsStack stack;
    stack.full = Volume(gt.nx, gt.ny, gt.nz, 0.0);
    for (const Volume& lvl : pyramid.levels)
        stack.levels.emplace_back(lvl.nx, lvl.ny, lvl.nz, 0.0);

    LogitsDemoResult result;
    for (int step = 0; step < steps; ++step) {
        StackLoss sl = seg_loss_on_logits(stack, gt, pyramid);
        for (std::size_t i = 0; i < stack.full.size(); ++i)
            stack.full.data[i] -= lr * sl.grad.full.data[i];
        for (std::size_t h = 0; h < stack.levels.size(); ++h)
            for (std::size_t i = 0; i < stack.levels[h].size(); ++i)
                stack.levels[h].data[i] -= lr * sl.grad.levels[h].data[i];

        // Hard dice of the thresholded full prediction after the update.
        Volume hard(gt.nx, gt.ny, gt.nz);
        for (std::size_t i = 0; i < stack.full.size(); ++i)
            hard.data[i] = stack.full.data[i] > 0.0 ? 1.0 : 0.0;
        result.dice_trajectory.push_back(dice_score(hard, gt));
    }

    Volume prob = sigmoid_of(stack.full);
    std::vector<Volume> pred_hr;
    for (const Volume& lvl : stack.levels) pred_hr.push_back(sigmoid_of(lvl));
    result.final_report = seg_loss(prob, pred_hr, gt, pyramid);
    result.final_pred = std::move(prob);
    return result;
}

}  // namespace airway
