#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "symmflow/core/errors.hpp"

namespace symmflow {

inline double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw InvalidArgument("accuracy: length mismatch");
    if (predictions.empty()) throw InvalidArgument("accuracy: empty input");
    long hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

struct AucResult {
    double macro = 0.0;
    std::vector<double> per_class;
    std::vector<int> skipped;  // classes absent from the labels
};

// One-vs-rest AUC per class via the rank formulation of the Mann-Whitney
// statistic; average ranks give tied pairs the 0.5 convention. Macro is the
// unweighted mean over classes present in the labels; for binary problems the
// positive-class value is reported (identical to the mean when rows sum to 1).
inline AucResult auc_ovr(const Eigen::MatrixXd& scores, const std::vector<int>& labels) {
    const long n = scores.rows();
    const int k = static_cast<int>(scores.cols());
    if (static_cast<long>(labels.size()) != n)
        throw InvalidArgument("auc_ovr: scores/labels length mismatch");
    if (n == 0) throw InvalidArgument("auc_ovr: empty input");

    std::vector<long> class_count(static_cast<std::size_t>(k), 0);
    for (int l : labels) {
        if (l < 0 || l >= k) throw InvalidArgument("auc_ovr: label outside score columns");
        ++class_count[static_cast<std::size_t>(l)];
    }
    int present = 0;
    for (long c : class_count)
        if (c > 0) ++present;
    if (present < 2) throw UndefinedMetric("auc_ovr: labels contain a single class");

    AucResult res;
    res.per_class.assign(static_cast<std::size_t>(k), 0.0);
    std::vector<long> order(static_cast<std::size_t>(n));
    std::vector<double> ranks(static_cast<std::size_t>(n));

    double macro_sum = 0.0;
    int macro_n = 0;
    for (int c = 0; c < k; ++c) {
        const long pos = class_count[static_cast<std::size_t>(c)];
        if (pos == 0 || pos == n) {
            res.skipped.push_back(c);
            res.per_class[static_cast<std::size_t>(c)] = std::nan("");
            continue;
        }
        std::iota(order.begin(), order.end(), 0L);
        std::sort(order.begin(), order.end(),
                  [&](long a, long b) { return scores(a, c) < scores(b, c); });
        // average ranks over tie groups, 1-based
        long i = 0;
        while (i < n) {
            long j = i;
            while (j + 1 < n && scores(order[static_cast<std::size_t>(j + 1)], c) ==
                                    scores(order[static_cast<std::size_t>(i)], c))
                ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (long t = i; t <= j; ++t) ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = avg;
            i = j + 1;
        }
        double rank_sum = 0.0;
        for (long r = 0; r < n; ++r)
            if (labels[static_cast<std::size_t>(r)] == c) rank_sum += ranks[static_cast<std::size_t>(r)];
        const double u = rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
        const double auc = u / (static_cast<double>(pos) * static_cast<double>(n - pos));
        res.per_class[static_cast<std::size_t>(c)] = auc;
        macro_sum += auc;
        ++macro_n;
    }
    res.macro = macro_sum / static_cast<double>(macro_n);
    if (k == 2 && class_count[1] > 0 && class_count[1] < n)
        res.macro = res.per_class[1];  // binary: positive-class AUC
    return res;
}

struct ArcPoint {
    double fraction = 0.0;
    double retained_accuracy = 0.0;
    long retained_count = 0;
};

// Drops the ceil(fraction * N) most uncertain samples (ties resolved toward
// the higher original index) and reports accuracy on the rest.
inline std::vector<ArcPoint> arc_curve(const std::vector<bool>& correct,
                                       const std::vector<double>& uncertainties,
                                       const std::vector<double>& fractions) {
    const long n = static_cast<long>(correct.size());
    if (static_cast<long>(uncertainties.size()) != n)
        throw InvalidArgument("arc_curve: length mismatch");
    if (n == 0) throw InvalidArgument("arc_curve: empty input");
    for (double f : fractions)
        if (f < 0.0 || f >= 1.0)
            throw InvalidArgument("arc_curve: fractions must lie in [0, 1)");

    std::vector<long> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0L);
    std::sort(order.begin(), order.end(), [&](long a, long b) {
        if (uncertainties[static_cast<std::size_t>(a)] != uncertainties[static_cast<std::size_t>(b)])
            return uncertainties[static_cast<std::size_t>(a)] > uncertainties[static_cast<std::size_t>(b)];
        return a > b;  // ties: drop higher index first
    });

    std::vector<ArcPoint> out;
    for (double f : fractions) {
        const long drop = static_cast<long>(std::ceil(f * static_cast<double>(n)));
        const long kept = n - drop;
        if (kept <= 0)
            throw InvalidArgument("arc_curve: fraction leaves no samples");
        long hits = 0;
        for (long i = drop; i < n; ++i)
            if (correct[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) ++hits;
        out.push_back({f, static_cast<double>(hits) / static_cast<double>(kept), kept});
    }
    return out;
}

// sample mean and twice the n-1 standard deviation
inline std::pair<double, double> aggregate_runs(const std::vector<double>& values) {
    if (values.size() < 2)
        throw InvalidArgument("aggregate_runs: need at least 2 runs");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return {mean, 2.0 * sd};
}

struct MetricsReport {
    std::vector<double> per_run_accuracy;
    std::vector<double> per_run_auc;
    double accuracy_mean = 0.0, accuracy_two_sigma = 0.0;
    double auc_mean = 0.0, auc_two_sigma = 0.0;
    double aggregate_accuracy = 0.0;  // majority-vote predictions
    std::vector<ArcPoint> arc;
};

}  // namespace symmflow
