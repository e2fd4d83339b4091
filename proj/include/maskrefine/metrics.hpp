#pragma once

// Standard change-detection metrics over binary masks, counting the
// foreground class: precision, recall, F-measure, percentage of wrong
// classifications (PWC) and intersection-over-union.

#include <cstdint>
#include <span>
#include <vector>

#include "maskrefine/errors.hpp"
#include "maskrefine/image.hpp"

namespace maskrefine {

struct MetricsRecord {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f_measure = 0.0, pwc = 0.0, iou = 0.0;
};

// Derived metrics from raw counts. Undefined ratios resolve to 0, except IoU
// which is 1 when both masks are empty (no foreground anywhere is a perfect
// match, not a failure).
inline MetricsRecord from_counts(std::int64_t tp, std::int64_t fp, std::int64_t tn,
                                 std::int64_t fn) {
    if (tp < 0 || fp < 0 || tn < 0 || fn < 0 || tp + fp + tn + fn == 0)
        throw ValueError("from_counts: counts must be nonnegative and not all zero");
    MetricsRecord r;
    r.tp = tp;
    r.fp = fp;
    r.tn = tn;
    r.fn = fn;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f_measure = r.precision + r.recall > 0.0
                      ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                      : 0.0;
    r.pwc = 100.0 * static_cast<double>(fp + fn) / static_cast<double>(tp + tn + fp + fn);
    r.iou = tp + fp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp + fn) : 1.0;
    return r;
}

inline MetricsRecord evaluate(const Mask& pred, const Mask& gt) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw DimError("evaluate: pred and gt dims mismatch");
    if (!is_binary(pred) || !is_binary(gt))
        throw ValueError("evaluate: masks must be binary");
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < pred.px.size(); ++i) {
        if (pred.px[i]) {
            ++(gt.px[i] ? tp : fp);
        } else {
            ++(gt.px[i] ? fn : tn);
        }
    }
    return from_counts(tp, fp, tn, fn);
}

// Summary row: counts are summed; the real-valued metrics are the plain mean
// of the per-sample values (so every sample weighs equally regardless of its
// foreground size).
inline MetricsRecord mean_metrics(std::span<const MetricsRecord> records) {
    if (records.empty())
        throw ValueError("mean_metrics: no records");
    MetricsRecord m;
    for (const MetricsRecord& r : records) {
        m.tp += r.tp;
        m.fp += r.fp;
        m.tn += r.tn;
        m.fn += r.fn;
        m.precision += r.precision;
        m.recall += r.recall;
        m.f_measure += r.f_measure;
        m.pwc += r.pwc;
        m.iou += r.iou;
    }
    const double n = static_cast<double>(records.size());
    m.precision /= n;
    m.recall /= n;
    m.f_measure /= n;
    m.pwc /= n;
    m.iou /= n;
    return m;
}

} // namespace maskrefine
