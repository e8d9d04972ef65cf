#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathonet/errors.hpp"

namespace pathonet {

struct ScoredLabelSet {
    std::vector<float> scores;        // in [0,1]
    std::vector<std::uint8_t> labels; // 0/1
};

struct CurvePoint {
    float threshold = 0; // +inf marks the leading all-negative endpoint
    float tpr = 0;
    float fpr = 0;
    float precision = 0;
    float recall = 0;
};

struct EvalCurve {
    std::vector<CurvePoint> points; // thresholds descending
    double auc = 0;
    double ap = 0;
    std::int64_t positives = 0;
    std::int64_t negatives = 0;
};

/// ROC sweep with thresholds at every distinct score; AUC by trapezoidal
/// integration over (fpr, tpr), which credits cross-class ties 1/2 per
/// pair (the Mann-Whitney convention).
EvalCurve roc(const ScoredLabelSet& set);

/// PR sweep; AP is the step sum over descending-score thresholds,
/// sum_n (R_n - R_{n-1}) P_n.
EvalCurve precision_recall(const ScoredLabelSet& set);

struct Confusion {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

/// Predict positive iff score >= threshold; 0/0 rates are 0.
Confusion confusion_at(const ScoredLabelSet& set, float threshold);

/// CSV (threshold,fpr,tpr,precision,recall; %.9g so floats parse back
/// exactly) plus a summary JSON (auc, ap, counts; 6 significant digits).
void export_curves(const EvalCurve& curve, const std::string& csv_path,
                   const std::string& json_path);

std::string curve_to_csv(const EvalCurve& curve);
std::string curve_summary_json(const EvalCurve& curve);

} // namespace pathonet
