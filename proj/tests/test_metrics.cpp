#include <catch_amalgamated.hpp>

#include <algorithm>

#include "weakseg/metrics.hpp"
#include "weakseg/rng.hpp"

using namespace weakseg;

namespace {

// Independent mean-F1 sweep used to cross-check the library's ODS.
double oracle_mean_f1(const std::vector<ProbMap>& probs, const std::vector<BinaryMask>& gts,
                      double t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t k = 0; k < probs[i].size(); ++k) {
            const bool pred = probs[i].data()[k] > t;
            const bool truth = gts[i].data()[k] != 0;
            if (pred && truth) ++tp;
            if (pred && !truth) ++fp;
            if (!pred && truth) ++fn;
        }
        const double precision = (tp + fp) == 0 ? 1.0 : double(tp) / double(tp + fp);
        const double recl = (tp + fn) == 0 ? 1.0 : double(tp) / double(tp + fn);
        sum += (precision + recl) > 0 ? 2.0 * precision * recl / (precision + recl) : 0.0;
    }
    return sum / static_cast<double>(probs.size());
}

// Exhaustive oracle: evaluates between every pair of consecutive distinct
// values (midpoints), plus below the smallest and above the largest.
double oracle_exhaustive_ods(const std::vector<ProbMap>& probs,
                             const std::vector<BinaryMask>& gts) {
    std::vector<double> values;
    for (const auto& p : probs)
        for (double v : p.data()) values.push_back(v);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::vector<double> candidates;
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
        candidates.push_back((values[i] + values[i + 1]) / 2.0);
    if (!values.empty()) {
        candidates.push_back(values.front() / 2.0);
        candidates.push_back((values.back() + 1.0) / 2.0);
    }
    candidates.push_back(0.5);
    double best = -1.0;
    for (double t : candidates)
        if (t > 0.0 && t < 1.0) best = std::max(best, oracle_mean_f1(probs, gts, t));
    return best;
}

ProbMap prob_from(const std::vector<std::vector<double>>& rows) {
    ProbMap p(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()), 0.0);
    for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < p.width(); ++x) p.at(x, y) = rows[y][x];
    return p;
}

BinaryMask mask_from(const std::vector<std::vector<int>>& rows) {
    BinaryMask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()), 0);
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) m.at(x, y) = rows[y][x] != 0;
    return m;
}

// 8x8 image whose pixels take the given (value, gt, count) triples, rest 0.
void lay_out(ProbMap& prob, BinaryMask& gt,
             const std::vector<std::tuple<double, bool, int>>& spec) {
    int idx = 0;
    for (const auto& [value, truth, count] : spec)
        for (int k = 0; k < count; ++k, ++idx) {
            prob.data()[idx] = value;
            gt.data()[idx] = truth;
        }
}

}  // namespace

TEST_CASE("pr_at_threshold: exact prediction and conventions") {
    const ProbMap prob = prob_from({{1.0, 0.0}, {0.0, 1.0}});
    const BinaryMask gt = mask_from({{1, 0}, {0, 1}});
    const PRPoint p = pr_at_threshold(prob, gt, 0.5);
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 1.0);
    CHECK(p.f1 == 1.0);

    // Empty gt and empty prediction: F1 = 1 by the double convention.
    const PRPoint empty = pr_at_threshold(ProbMap(3, 3, 0.0), BinaryMask(3, 3, 0), 0.5);
    CHECK(empty.precision == 1.0);
    CHECK(empty.recall == 1.0);
    CHECK(empty.f1 == 1.0);

    CHECK_THROWS_AS(pr_at_threshold(ProbMap(2, 2, 0.0), BinaryMask(3, 2, 0), 0.5),
                    std::invalid_argument);
}

TEST_CASE("pr_at_threshold: half-right prediction counts") {
    // gt: 4 px; prediction covers 2 of them plus 2 false positives.
    const ProbMap prob = prob_from({{0.9, 0.9, 0.0, 0.0},
                                    {0.9, 0.9, 0.0, 0.0}});
    const BinaryMask gt = mask_from({{1, 0, 1, 0},
                                     {1, 0, 1, 0}});
    const PRPoint p = pr_at_threshold(prob, gt, 0.5);
    CHECK(p.precision == 0.5);
    CHECK(p.recall == 0.5);
    CHECK(p.f1 == 0.5);
}

TEST_CASE("pr_at_threshold: recall is non-increasing in the threshold") {
    Rng rng(3);
    ProbMap prob(8, 8, 0.0);
    for (auto& v : prob.data()) v = rng.uniform01();
    BinaryMask gt(8, 8, 0);
    for (auto& v : gt.data()) v = rng.uniform01() < 0.4;
    double prev = 2.0;
    for (double t = 0.05; t < 1.0; t += 0.05) {
        const double r = pr_at_threshold(prob, gt, t).recall;
        CHECK(r <= prev);
        prev = r;
    }
}

TEST_CASE("ods: single-image fixture peaks at 1.0 with best_t 0.60") {
    const std::vector<ProbMap> probs{prob_from({{0.9, 0.6}, {0.2, 0.1}})};
    const std::vector<BinaryMask> gts{mask_from({{1, 0}, {0, 0}})};
    const EvalReport r = ods(probs, gts, threshold_grid(0.01));
    CHECK(r.ods == 1.0);
    CHECK(r.best_t >= 0.60 - 1e-12);
    CHECK(r.best_t <= 0.89 + 1e-12);
    CHECK_THAT(r.best_t, Catch::Matchers::WithinAbs(0.60, 1e-9));  // first maximizer
    REQUIRE(r.per_image_f1_at_best_t.size() == 1);
    CHECK(r.per_image_f1_at_best_t[0] == 1.0);
    CHECK(r.n == 1);
}

TEST_CASE("ods: shared threshold compromises between per-image peaks") {
    // Image A peaks (F1 0.9) on thresholds around 0.3, image B around 0.7;
    // away from its peak each image contributes 0.5, so the shared-threshold
    // optimum is (0.9 + 0.5)/2 = 0.7.
    ProbMap prob_a(8, 8, 0.0);
    BinaryMask gt_a(8, 8, 0);
    lay_out(prob_a, gt_a,
            {{0.98, true, 7}, {0.35, true, 11}, {0.98, false, 3}, {0.35, false, 1},
             {0.05, false, 32}});
    ProbMap prob_b(8, 8, 0.0);
    BinaryMask gt_b(8, 8, 0);
    lay_out(prob_b, gt_b,
            {{0.98, true, 18}, {0.55, true, 1}, {0.98, false, 3}, {0.55, false, 35}});

    const std::vector<ProbMap> probs{prob_a, prob_b};
    const std::vector<BinaryMask> gts{gt_a, gt_b};

    // Sanity: each image alone peaks at 0.9 in its own window.
    CHECK_THAT(oracle_mean_f1({prob_a}, {gt_a}, 0.30), Catch::Matchers::WithinAbs(0.9, 1e-12));
    CHECK_THAT(oracle_mean_f1({prob_a}, {gt_a}, 0.70), Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(oracle_mean_f1({prob_b}, {gt_b}, 0.70), Catch::Matchers::WithinAbs(0.9, 1e-12));
    CHECK_THAT(oracle_mean_f1({prob_b}, {gt_b}, 0.30), Catch::Matchers::WithinAbs(0.5, 1e-12));

    const EvalReport r = ods(probs, gts, threshold_grid(0.01));
    CHECK_THAT(r.ods, Catch::Matchers::WithinAbs(0.7, 1e-12));
    CHECK_THAT(ods_exact(probs, gts).ods, Catch::Matchers::WithinAbs(0.7, 1e-12));
    CHECK_THAT(oracle_exhaustive_ods(probs, gts), Catch::Matchers::WithinAbs(0.7, 1e-12));
}

TEST_CASE("ods: dominance over every individual grid threshold") {
    Rng rng(5);
    std::vector<ProbMap> probs;
    std::vector<BinaryMask> gts;
    for (int i = 0; i < 4; ++i) {
        ProbMap p(6, 6, 0.0);
        for (auto& v : p.data()) v = rng.uniform01();
        BinaryMask g(6, 6, 0);
        for (auto& v : g.data()) v = rng.uniform01() < 0.3;
        probs.push_back(std::move(p));
        gts.push_back(std::move(g));
    }
    const auto grid = threshold_grid(0.01);
    const EvalReport r = ods(probs, gts, grid);
    for (double t : grid) CHECK(r.ods >= oracle_mean_f1(probs, gts, t) - 1e-12);
    double mean_at_best = 0.0;
    for (double f1 : r.per_image_f1_at_best_t) mean_at_best += f1;
    CHECK_THAT(r.ods, Catch::Matchers::WithinAbs(mean_at_best / r.n, 1e-12));
}

TEST_CASE("ods: grid equals the exhaustive sweep on lattice-valued maps") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        ProbMap p(4, 4, 0.0);
        for (auto& v : p.data()) v = 0.05 * static_cast<double>(rng.uniform_int(0, 20));
        BinaryMask g(4, 4, 0);
        for (auto& v : g.data()) v = rng.uniform01() < rng.uniform(0.0, 0.8);
        const std::vector<ProbMap> probs{p};
        const std::vector<BinaryMask> gts{g};
        const double grid_ods = ods(probs, gts, threshold_grid(0.01)).ods;
        const double exact_ods = ods_exact(probs, gts).ods;
        const double brute = oracle_exhaustive_ods(probs, gts);
        CHECK(grid_ods == exact_ods);
        CHECK_THAT(exact_ods, Catch::Matchers::WithinAbs(brute, 1e-12));
    }
}

TEST_CASE("ods: refining the threshold grid never decreases the score") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        ProbMap p(5, 5, 0.0);
        for (auto& v : p.data()) v = rng.uniform01();  // continuous values
        BinaryMask g(5, 5, 0);
        for (auto& v : g.data()) v = rng.uniform01() < 0.4;
        const std::vector<ProbMap> probs{p};
        const std::vector<BinaryMask> gts{g};
        const double coarse = ods(probs, gts, threshold_grid(0.1)).ods;
        const double fine = ods(probs, gts, threshold_grid(0.01)).ods;
        const double exact = ods_exact(probs, gts).ods;
        CHECK(coarse <= fine + 1e-12);
        CHECK(fine <= exact + 1e-12);
    }
}

TEST_CASE("ods: argument validation") {
    CHECK_THROWS_AS(ods({}, {}, threshold_grid(0.01)), std::invalid_argument);
    const std::vector<ProbMap> probs{ProbMap(2, 2, 0.5)};
    const std::vector<BinaryMask> gts{BinaryMask(2, 2, 0)};
    CHECK_THROWS_AS(ods(probs, gts, {}), std::invalid_argument);
    CHECK_THROWS_AS(ods(probs, gts, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(ods(probs, gts, {1.0}), std::invalid_argument);
}

TEST_CASE("sens_spec: fixtures and conventions") {
    const ProbMap exact = prob_from({{1.0, 0.0}, {0.0, 1.0}});
    const BinaryMask gt = mask_from({{1, 0}, {0, 1}});
    const SensSpec perfect = sens_spec(exact, gt);
    CHECK(perfect.sensitivity == 1.0);
    CHECK(perfect.specificity == 1.0);
    CHECK(perfect.f1 == 1.0);

    // All-zero prediction against a non-empty, non-full gt.
    const SensSpec none = sens_spec(ProbMap(2, 2, 0.0), gt);
    CHECK(none.sensitivity == 0.0);
    CHECK(none.specificity == 1.0);

    // 2 positives, 2 negatives; prediction hits 1 positive, flags 1 negative.
    const ProbMap mixed = prob_from({{0.9, 0.0}, {0.9, 0.0}});
    const BinaryMask gt2 = mask_from({{1, 1}, {0, 0}});
    const SensSpec s = sens_spec(mixed, gt2);
    CHECK(s.sensitivity == 0.5);
    CHECK(s.specificity == 0.5);
}
