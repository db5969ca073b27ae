#include "airway/metrics.hpp"

#include <stdexcept>

namespace airway {

double dice_score(const Volume& pred_mask, const Volume& gt_mask) {
    if (!pred_mask.same_dims(gt_mask)) throw std::invalid_argument("dice_score: dim mismatch");
    if (!pred_mask.is_binary() || !gt_mask.is_binary())
        throw std::invalid_argument("dice_score: masks must be binary");
    std::int64_t inter = 0, p = 0, g = 0;
    for (std::size_t i = 0; i < pred_mask.size(); ++i) {
        bool pv = pred_mask.data[i] != 0.0;
        bool gv = gt_mask.data[i] != 0.0;
        inter += pv && gv;
        p += pv;
        g += gv;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

ClassMetrics classification_metrics(const std::vector<int>& pred, const std::vector<int>& gt,
                                    int n_classes) {
    if (pred.size() != gt.size() || pred.empty())
        throw std::invalid_argument("classification_metrics: inputs must be equal-length and nonempty");

    std::vector<std::int64_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0),
        support(n_classes, 0);
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        int p = pred[i], g = gt[i];
        if (p < 0 || p >= n_classes || g < 0 || g >= n_classes)
            throw std::invalid_argument("classification_metrics: label out of range");
        support[g]++;
        if (p == g) {
            tp[g]++;
            correct++;
        } else {
            fp[p]++;
            fn[g]++;
        }
    }

    ClassMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    int present = 0;
    for (int c = 0; c < n_classes; ++c) {
        if (support[c] == 0) continue;  // macro average over classes present in gt
        ++present;
        double prec = tp[c] + fp[c] == 0
                          ? 0.0
                          : static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]);
        double rec = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
        double f1 = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
        m.precision += prec;
        m.recall += rec;
        m.f1 += f1;
    }
    m.precision /= present;
    m.recall /= present;
    m.f1 /= present;
    return m;
}

}  // namespace airway
