#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mwalign/evaluation.hpp"
#include "mwalign/rng.hpp"

namespace mwalign {

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

std::size_t histogram_bin(double cosine) {
    const double scaled = std::floor((cosine + 1.0) * 20.0);
    if (!(scaled > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(scaled), kHistogramBins - 1);
}

HistogramResult histogram_separation(const Matrix& a, const Matrix& b, std::size_t n, std::uint64_t seed) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("histogram: sides must be row-aligned");
    if (n < 2) throw std::invalid_argument("histogram: n must be at least 2 for a derangement");
    if (a.rows() < n)
        throw std::invalid_argument("histogram: " + std::to_string(a.rows()) + " instances, fewer than n=" + std::to_string(n));

    Rng rng(seed);
    std::vector<std::size_t> sample(a.rows());
    std::iota(sample.begin(), sample.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) std::swap(sample[i], sample[i + rng.index(sample.size() - i)]);
    sample.resize(n);

    // Sattolo's algorithm yields a single n-cycle, hence no fixed points.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i)]);

    auto cosine = [](std::span<const double> x, std::span<const double> y) {
        const double nx = norm(x), ny = norm(y);
        if (!(nx > 0.0) || !(ny > 0.0)) throw std::invalid_argument("histogram: zero-norm vector");
        return std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0);
    };

    HistogramResult h;
    h.matched_counts.assign(kHistogramBins, 0);
    h.shuffled_counts.assign(kHistogramBins, 0);
    double sum_matched = 0.0, sum_shuffled = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double m = cosine(a.row(sample[k]), b.row(sample[k]));
        const double s = cosine(a.row(sample[k]), b.row(sample[perm[k]]));
        h.matched.push_back(m);
        h.shuffled.push_back(s);
        ++h.matched_counts[histogram_bin(m)];
        ++h.shuffled_counts[histogram_bin(s)];
        sum_matched += m;
        sum_shuffled += s;
    }
    h.separation = (sum_matched - sum_shuffled) / static_cast<double>(n);
    return h;
}

void write_histogram_csv(const HistogramResult& h, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write histogram " + path.string());
    out << "bin_low,bin_high,matched_count,shuffled_count\n";
    char buf[96];
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
        const double low = -1.0 + 0.05 * static_cast<double>(b);
        std::snprintf(buf, sizeof buf, "%.2f,%.2f,%zu,%zu\n", low, low + 0.05, h.matched_counts[b], h.shuffled_counts[b]);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

namespace {

// Continued fraction for I_x(a, b), modified Lentz evaluation.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return regularized_incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

// ---------------------------------------------------------------------------
// Paired tests
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kExactWilcoxonLimit = 25;

// Two-sided exact p for W = sum of ranks with a negative sign, counting all
// 2^n equally likely sign assignments. Ranks are multiples of 1/2, so the
// counting runs over doubled ranks.
double wilcoxon_exact_p(const std::vector<double>& ranks, double w) {
    std::vector<std::size_t> doubled;
    std::size_t total = 0;
    for (double r : ranks) {
        doubled.push_back(static_cast<std::size_t>(std::lround(2.0 * r)));
        total += doubled.back();
    }
    std::vector<double> ways(total + 1, 0.0);
    ways[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t r : doubled) {
        for (std::size_t s = reach + 1; s-- > 0;)
            if (ways[s] != 0.0) ways[s + r] += ways[s];
        reach += r;
    }
    const auto w2 = static_cast<std::size_t>(std::lround(2.0 * w));
    double below = 0.0, above = 0.0, all = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
        all += ways[s];
        if (s <= w2) below += ways[s];
        if (s >= w2) above += ways[s];
    }
    return std::min(1.0, 2.0 * std::min(below, above) / all);
}

}  // namespace

PairedTestResult paired_tests(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("paired_tests: length mismatch");
    std::vector<double> diff(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] = y[i] - x[i];

    std::vector<double> nonzero;
    for (double d : diff)
        if (d != 0.0) nonzero.push_back(d);
    if (nonzero.empty()) throw NoDifference("paired_tests: all differences are zero");
    if (nonzero.size() < 2) throw std::invalid_argument("paired_tests: fewer than 2 nonzero differences");

    PairedTestResult out;

    const double n = static_cast<double>(diff.size());
    const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : diff) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    // Differences equal up to rounding count as constant: the statistic diverges.
    if (sd <= 1e-12 * std::abs(mean)) {
        out.t_statistic = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        out.t_pvalue = 0.0;
    } else {
        out.t_statistic = mean / (sd / std::sqrt(n));
        out.t_pvalue = student_t_two_sided_p(out.t_statistic, n - 1.0);
    }

    std::vector<double> magnitudes(nonzero.size());
    for (std::size_t i = 0; i < nonzero.size(); ++i) magnitudes[i] = std::abs(nonzero[i]);
    const auto ranks = average_ranks(magnitudes);
    double w = 0.0;
    for (std::size_t i = 0; i < nonzero.size(); ++i)
        if (nonzero[i] < 0.0) w += ranks[i];
    out.wilcoxon_w = w;
    out.n_nonzero = nonzero.size();

    if (nonzero.size() <= kExactWilcoxonLimit) {
        out.exact = true;
        out.wilcoxon_pvalue = wilcoxon_exact_p(ranks, w);
    } else {
        out.exact = false;
        const double m = static_cast<double>(nonzero.size());
        const double mu = m * (m + 1.0) / 4.0;
        double var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0;
        std::vector<double> sorted = magnitudes;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size();) {
            std::size_t j = i;
            while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i);
            var -= (t * t * t - t) / 48.0;
            i = j;
        }
        const double z = (w - mu) / std::sqrt(var);
        out.wilcoxon_pvalue = std::erfc(std::abs(z) / std::sqrt(2.0));
    }
    return out;
}

}  // namespace mwalign
