#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "weakseg/raster.hpp"

namespace weakseg {

struct PRPoint {
    double t = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Dataset-level evaluation at one shared threshold: ods is the maximum
/// over the grid of the mean per-image F1, best_t the first threshold
/// attaining it.
struct EvalReport {
    double ods = 0.0;
    double best_t = 0.0;
    std::vector<double> per_image_f1_at_best_t;
    std::vector<double> threshold_grid;
    std::size_t n = 0;
};

/// Precision/recall/F1 with predictions prob > t. Conventions: no predicted
/// positives gives precision 1, empty ground truth gives recall 1, and
/// F1 = 0 when precision = recall = 0.
inline PRPoint pr_at_threshold(const ProbMap& prob, const BinaryMask& gt, double t) {
    if (!prob.same_size(gt)) throw std::invalid_argument("pr_at_threshold: dimension mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const bool pred = prob.data()[i] > t;
        const bool truth = gt.data()[i] != 0;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
    }
    PRPoint p;
    p.t = t;
    p.precision = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    p.f1 = (p.precision + p.recall) > 0.0
               ? 2.0 * p.precision * p.recall / (p.precision + p.recall)
               : 0.0;
    return p;
}

/// The default evaluation grid: 0.01, 0.02, ..., 0.99 (or coarser steps).
inline std::vector<double> threshold_grid(double step = 0.01) {
    if (step <= 0.0 || step >= 1.0) throw std::invalid_argument("threshold_grid: bad step");
    std::vector<double> grid;
    for (int i = 1; static_cast<double>(i) * step < 1.0 - 1e-12; ++i)
        grid.push_back(static_cast<double>(i) * step);
    return grid;
}

inline EvalReport ods(const std::vector<ProbMap>& probs, const std::vector<BinaryMask>& gts,
                      const std::vector<double>& grid) {
    if (probs.empty()) throw std::invalid_argument("ods: empty dataset");
    if (probs.size() != gts.size()) throw std::invalid_argument("ods: prob/gt count mismatch");
    if (grid.empty()) throw std::invalid_argument("ods: empty threshold grid");
    for (double t : grid)
        if (t <= 0.0 || t >= 1.0) throw std::invalid_argument("ods: grid must lie in (0,1)");

    EvalReport report;
    report.threshold_grid = grid;
    report.n = probs.size();
    double best_mean = -1.0;
    std::vector<double> f1s(probs.size(), 0.0);
    std::vector<double> best_f1s;
    for (double t : grid) {
        double mean = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            f1s[i] = pr_at_threshold(probs[i], gts[i], t).f1;
            mean += f1s[i];
        }
        mean /= static_cast<double>(probs.size());
        if (mean > best_mean) {
            best_mean = mean;
            report.best_t = t;
            best_f1s = f1s;
        }
    }
    report.ods = best_mean;
    report.per_image_f1_at_best_t = std::move(best_f1s);
    return report;
}

/// Verification mode: evaluates at the thresholds actually realizable from
/// the data. Predictions only change when t crosses a pixel value, so one
/// representative per interval between consecutive distinct values covers
/// every achievable configuration exactly.
inline EvalReport ods_exact(const std::vector<ProbMap>& probs,
                            const std::vector<BinaryMask>& gts) {
    if (probs.empty()) throw std::invalid_argument("ods_exact: empty dataset");
    std::vector<double> boundaries;
    for (const auto& p : probs)
        for (double v : p.data())
            if (v > 0.0 && v < 1.0) boundaries.push_back(v);
    std::sort(boundaries.begin(), boundaries.end());
    boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());
    std::vector<double> candidates;
    if (boundaries.empty()) {
        candidates.push_back(0.5);
    } else {
        candidates.push_back(boundaries.front() / 2.0);
        candidates.insert(candidates.end(), boundaries.begin(), boundaries.end());
    }
    return ods(probs, gts, candidates);
}

struct SensSpec {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double f1 = 0.0;
};

/// Fixed-threshold evaluation (default 0.5), conventions as above; an image
/// with no negatives has specificity 1.
inline SensSpec sens_spec(const ProbMap& prob, const BinaryMask& gt, double t = 0.5) {
    if (!prob.same_size(gt)) throw std::invalid_argument("sens_spec: dimension mismatch");
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const bool pred = prob.data()[i] > t;
        const bool truth = gt.data()[i] != 0;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
        tn += !pred && !truth;
    }
    SensSpec s;
    s.sensitivity = (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    s.specificity = (tn + fp) == 0 ? 1.0 : static_cast<double>(tn) / static_cast<double>(tn + fp);
    const double precision =
        (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    s.f1 = (precision + s.sensitivity) > 0.0
               ? 2.0 * precision * s.sensitivity / (precision + s.sensitivity)
               : 0.0;
    return s;
}

}  // namespace weakseg
