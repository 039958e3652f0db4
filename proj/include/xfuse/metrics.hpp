#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "tensor.hpp"

namespace xfuse {

namespace detail {

inline void check_binary_grid(const Tensor& t, const char* who) {
    for (size_t i = 0; i < t.numel(); ++i)
        if (t.at(i) != 0.0 && t.at(i) != 1.0)
            throw ValidationError(std::string(who) + ": grid value " + std::to_string(t.at(i)) +
                                  " is not 0 or 1");
}

} // namespace detail

// 2|P∩G| / (|P|+|G|), with vacuous agreement (both empty) scored 1.
inline double dice(const Tensor& pred, const Tensor& gt) {
    check_same_shape(pred, gt, "dice");
    detail::check_binary_grid(pred, "dice");
    detail::check_binary_grid(gt, "dice");
    double inter = 0.0, total = 0.0;
    for (size_t i = 0; i < pred.numel(); ++i) {
        inter += pred.at(i) * gt.at(i);
        total += pred.at(i) + gt.at(i);
    }
    return total == 0.0 ? 1.0 : 2.0 * inter / total;
}

// |P∩G| / |P∪G|, both-empty scored 1.
inline double iou(const Tensor& pred, const Tensor& gt) {
    check_same_shape(pred, gt, "iou");
    detail::check_binary_grid(pred, "iou");
    detail::check_binary_grid(gt, "iou");
    double inter = 0.0, uni = 0.0;
    for (size_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred.at(i) != 0.0, g = gt.at(i) != 0.0;
        inter += (p && g) ? 1.0 : 0.0;
        uni += (p || g) ? 1.0 : 0.0;
    }
    return uni == 0.0 ? 1.0 : inter / uni;
}

inline Tensor binarize(const Tensor& probs, double threshold) {
    Tensor out(probs.shape());
    for (size_t i = 0; i < probs.numel(); ++i) out.at(i) = probs.at(i) >= threshold ? 1.0 : 0.0;
    return out;
}

struct ConfusionMatrix {
    size_t tp = 0, fp = 0, tn = 0, fn = 0;
    size_t total() const { return tp + fp + tn + fn; }
};

// Predict positive iff score >= threshold.
inline ConfusionMatrix confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                                 double threshold) {
    if (scores.empty()) throw ValidationError("confusion: no samples");
    if (scores.size() != labels.size())
        throw ValidationError("confusion: " + std::to_string(scores.size()) + " scores vs " +
                              std::to_string(labels.size()) + " labels");
    ConfusionMatrix cm;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw ValidationError("confusion: label " + std::to_string(labels[i]) +
                                  " is not 0 or 1");
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1)
            pred ? ++cm.tp : ++cm.fn;
        else
            pred ? ++cm.fp : ++cm.tn;
    }
    return cm;
}

struct Rates {
    std::optional<double> tpr, tnr; // absent when the class itself is absent
    double acc = 0.0;
};

inline Rates tpr_tnr_acc(const ConfusionMatrix& cm) {
    Rates r;
    if (cm.tp + cm.fn > 0)
        r.tpr = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (cm.tn + cm.fp > 0)
        r.tnr = static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
    r.acc = cm.total() == 0
                ? 0.0
                : static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    return r;
}

struct RocPoint {
    double threshold;
    double fpr, tpr;
};

struct RocCurve {
    std::vector<RocPoint> points; // thresholds strictly decreasing
};

// Sweep thresholds over the unique scores (descending) with a +inf sentinel
// so the curve always starts at (0,0) and ends at (1,1).
inline RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw ValidationError("roc_curve: bad input lengths");
    size_t pos = 0, neg = 0;
    for (int l : labels) {
        if (l != 0 && l != 1)
            throw ValidationError("roc_curve: label " + std::to_string(l) + " is not 0 or 1");
        l == 1 ? ++pos : ++neg;
    }
    if (pos == 0 || neg == 0) throw ValidationError("roc_curve: need both classes present");

    std::vector<double> uniq = scores;
    std::sort(uniq.begin(), uniq.end(), std::greater<double>());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    // walking down the sorted scores accumulates counts incrementally
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    size_t tp = 0, fp = 0, at = 0;
    for (double t : uniq) {
        while (at < order.size() && scores[order[at]] >= t) {
            labels[order[at]] == 1 ? ++tp : ++fp;
            ++at;
        }
        curve.points.push_back({t, static_cast<double>(fp) / static_cast<double>(neg),
                                static_cast<double>(tp) / static_cast<double>(pos)});
    }
    return curve;
}

// Trapezoid over fpr; with the full threshold sweep this equals the
// Mann-Whitney pairwise statistic.
inline double auc(const RocCurve& curve) {
    double area = 0.0;
    for (size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    return area;
}

inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    return auc(roc_curve(scores, labels));
}

// Point closest to (fpr,tpr) = (0,1); ties resolved toward the larger
// threshold.
inline double optimal_threshold(const RocCurve& curve) {
    if (curve.points.empty()) throw ValidationError("optimal_threshold: empty curve");
    double best_d2 = std::numeric_limits<double>::infinity();
    double best_t = curve.points.front().threshold;
    for (const auto& p : curve.points) {
        const double d2 = p.fpr * p.fpr + (1.0 - p.tpr) * (1.0 - p.tpr);
        if (d2 < best_d2 || (d2 == best_d2 && p.threshold > best_t)) {
            best_d2 = d2;
            best_t = p.threshold;
        }
    }
    return best_t;
}

} // namespace xfuse
