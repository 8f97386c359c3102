#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gepc/core/error.hpp"
#include "gepc/core/tensor.hpp"

namespace gepc {

struct RocPoint {
    real fpr = 0;
    real tpr = 0;
    real threshold = 0;
};

struct RocReport {
    real auc = 0;
    std::vector<RocPoint> curve;  // from (0,0) to (1,1)
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

/// Area under the ROC curve for anomaly scores (label 1 = abnormal, higher
/// score = more abnormal). AUC is the Mann–Whitney statistic with ties
/// counted as one half; the curve sweeps every distinct score.
inline RocReport roc_auc(const std::vector<real>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
    RocReport r;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) throw NumericError("roc_auc: NaN score");
        if (labels[i] != 0 && labels[i] != 1) throw SchemaError("roc_auc: labels must be 0 or 1");
        (labels[i] ? r.positives : r.negatives)++;
    }
    if (r.positives == 0 || r.negatives == 0) throw SchemaError("roc_auc: labels contain a single class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the number of correctly ordered (positive, negative) pairs, ties as 1.
    std::uint64_t twice_correct = 0, neg_below = 0;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> groups;  // (pos, neg) per distinct score, ascending
    std::vector<real> group_score;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::uint64_t pos = 0, neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? pos : neg)++;
            ++j;
        }
        twice_correct += pos * (2 * neg_below + neg);
        neg_below += neg;
        groups.emplace_back(pos, neg);
        group_score.push_back(scores[order[i]]);
        i = j;
    }
    const real np = static_cast<real>(r.positives), nn = static_cast<real>(r.negatives);
    r.auc = static_cast<real>(twice_correct) / (2 * np * nn);

    r.curve.push_back({0, 0, std::numeric_limits<real>::infinity()});
    std::uint64_t tp = 0, fp = 0;
    for (std::size_t g = groups.size(); g-- > 0;) {
        tp += groups[g].first;
        fp += groups[g].second;
        r.curve.push_back({static_cast<real>(fp) / nn, static_cast<real>(tp) / np, group_score[g]});
    }
    return r;
}

/// Trapezoid integral of a stored curve.
inline real trapezoid_auc(const std::vector<RocPoint>& curve) {
    real a = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        a += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2;
    return a;
}

inline nlohmann::json to_json(const RocReport& r) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : r.curve) {
        nlohmann::json pt{{"fpr", p.fpr}, {"tpr", p.tpr}};
        if (std::isfinite(p.threshold)) pt["threshold"] = p.threshold;
        curve.push_back(std::move(pt));
    }
    return {{"auc", r.auc}, {"positives", r.positives}, {"negatives", r.negatives}, {"curve", std::move(curve)}};
}

}  // namespace gepc
