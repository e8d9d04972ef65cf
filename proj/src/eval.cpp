#include "pathonet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "pathonet/serial.hpp"

namespace pathonet {

namespace {

// One sweep serves both curves: thresholds at every distinct score,
// descending, preceded by the all-negative endpoint.
EvalCurve sweep(const ScoredLabelSet& set) {
    if (set.scores.size() != set.labels.size())
        throw DataError("eval: " + std::to_string(set.scores.size()) + " scores vs " +
                        std::to_string(set.labels.size()) + " labels");
    if (set.scores.empty()) throw DataError("eval: empty set");

    EvalCurve curve;
    for (std::uint8_t l : set.labels)
        (l ? curve.positives : curve.negatives) += 1;
    if (curve.positives == 0 || curve.negatives == 0)
        throw DataError("eval: need both classes present (have " +
                        std::to_string(curve.positives) + " positives, " +
                        std::to_string(curve.negatives) + " negatives)");

    std::vector<std::size_t> order(set.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return set.scores[a] > set.scores[b];
    });

    const double P = static_cast<double>(curve.positives);
    const double N = static_cast<double>(curve.negatives);

    curve.points.push_back({std::numeric_limits<float>::infinity(), 0, 0, 0, 0});

    std::int64_t tp = 0, fp = 0;
    double auc = 0, ap = 0;
    double prev_fpr = 0, prev_tpr = 0, prev_recall = 0;

    std::size_t i = 0;
    while (i < order.size()) {
        const float thr = set.scores[order[i]];
        while (i < order.size() && set.scores[order[i]] == thr) {
            (set.labels[order[i]] ? tp : fp) += 1;
            ++i;
        }
        const double tpr = static_cast<double>(tp) / P;
        const double fpr = static_cast<double>(fp) / N;
        const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
        curve.points.push_back({thr, static_cast<float>(tpr), static_cast<float>(fpr),
                                static_cast<float>(prec), static_cast<float>(tpr)});
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        ap += (tpr - prev_recall) * prec;
        prev_fpr = fpr;
        prev_tpr = tpr;
        prev_recall = tpr;
    }
    curve.auc = auc;
    curve.ap = ap;
    return curve;
}

} // namespace

EvalCurve roc(const ScoredLabelSet& set) { return sweep(set); }

EvalCurve precision_recall(const ScoredLabelSet& set) { return sweep(set); }

Confusion confusion_at(const ScoredLabelSet& set, float threshold) {
    if (set.scores.size() != set.labels.size())
        throw DataError("confusion_at: score/label length mismatch");
    Confusion c;
    for (std::size_t i = 0; i < set.scores.size(); ++i) {
        const bool pred = set.scores[i] >= threshold;
        const bool truth = set.labels[i] != 0;
        if (pred && truth) c.tp += 1;
        else if (pred && !truth) c.fp += 1;
        else if (!pred && truth) c.fn += 1;
        else c.tn += 1;
    }
    const auto ratio = [](std::int64_t num, std::int64_t den) {
        return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
    };
    c.accuracy = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn);
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.recall = ratio(c.tp, c.tp + c.fn);
    c.f1 = (c.precision + c.recall) > 0
               ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
               : 0.0;
    return c;
}

std::string curve_to_csv(const EvalCurve& curve) {
    std::string out = "threshold,fpr,tpr,precision,recall\n";
    char line[160];
    for (const CurvePoint& p : curve.points) {
        std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      static_cast<double>(p.threshold), static_cast<double>(p.fpr),
                      static_cast<double>(p.tpr), static_cast<double>(p.precision),
                      static_cast<double>(p.recall));
        out += line;
    }
    return out;
}

std::string curve_summary_json(const EvalCurve& curve) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"ap\":%.6g,\"auc\":%.6g,\"negatives\":%lld,\"points\":%zu,"
                  "\"positives\":%lld}\n",
                  curve.ap, curve.auc, static_cast<long long>(curve.negatives),
                  curve.points.size(), static_cast<long long>(curve.positives));
    return buf;
}

void export_curves(const EvalCurve& curve, const std::string& csv_path,
                   const std::string& json_path) {
    write_text_file(csv_path, curve_to_csv(curve));
    write_text_file(json_path, curve_summary_json(curve));
}

} // namespace pathonet
