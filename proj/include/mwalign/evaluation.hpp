#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mwalign/matrix.hpp"

namespace mwalign {

struct LabeledEmbeddings {
    Matrix vectors;
    std::vector<int> labels;
    std::vector<std::string> languages;  // optional, empty or one per row

    void validate() const;
};

struct BitextSide {
    Matrix vectors;
    std::vector<std::int64_t> ids;
};

struct BitextPair {
    BitextSide a;
    BitextSide b;
    std::set<std::pair<std::int64_t, std::int64_t>> gold;

    void validate() const;
};

struct EvalReport {
    std::string task;
    std::string dataset;
    std::string lang_pair;
    std::string metric;
    std::optional<double> value;  // nullopt: metric undefined on this input
    std::size_t support = 0;
    std::string scheme;
    std::string anchor_mode;
    std::uint64_t seed = 0;
};

void write_report_csv(const std::vector<EvalReport>& rows, const std::filesystem::path& path, bool append = false);

// ---------------------------------------------------------------------------
// Bitext mining
// ---------------------------------------------------------------------------

// Entry (i, j) = cos(a_i, b_j). Throws on a zero-norm row, naming it.
Matrix cosine_matrix(const Matrix& a, const Matrix& b);

// Fraction of side-a items whose nearest side-b item (ties: lowest index) is
// a gold match.
double bitext_accuracy(const BitextPair& pair);

struct MinedPair {
    std::int64_t a_id;
    std::int64_t b_id;
    double score;
};

// Pairs that are each other's nearest neighbor by cosine.
std::vector<MinedPair> mutual_nearest_neighbors(const BitextPair& pair);

struct ThresholdPolicy {
    enum class Kind { fixed, dev_tuned } kind = Kind::fixed;
    double threshold = 0.0;
    const BitextPair* dev = nullptr;  // required for dev_tuned

    static ThresholdPolicy fixed(double t) { return {Kind::fixed, t, nullptr}; }
    static ThresholdPolicy dev_tuned(const BitextPair& dev) { return {Kind::dev_tuned, 0.0, &dev}; }
};

struct BitextScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double threshold = 0.0;
};

BitextScores bitext_f1(const BitextPair& pair, const ThresholdPolicy& policy);

// ---------------------------------------------------------------------------
// STS
// ---------------------------------------------------------------------------

// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of average ranks; nullopt when either side is constant.
std::optional<double> spearman(std::span<const double> pred, std::span<const double> gold);

// Row i of `a` is paired with row i of `b`.
EvalReport sts_eval(const Matrix& a, const Matrix& b, std::span<const double> gold);

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct LogRegModel {
    std::size_t classes = 0;
    Matrix weights;  // classes x (dim + 1), last column is the bias
    std::vector<double> loss_history;  // one entry per accepted step, plus the start
    std::size_t iterations = 0;
};

// Softmax regression by full-batch gradient descent with backtracking line
// search, at most max_iter iterations.
LogRegModel fit_logreg(const LabeledEmbeddings& train, std::size_t max_iter = 100);
std::vector<int> predict(const LogRegModel& model, const Matrix& x);
double logreg_classify(const LabeledEmbeddings& train, const LabeledEmbeddings& test, std::size_t max_iter = 100);

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

std::vector<int> minibatch_kmeans(const Matrix& x, std::size_t k, std::size_t batch_size = 32,
                                  std::uint64_t seed = 0, std::size_t iterations = 100);

struct VMeasure {
    double homogeneity = 0.0;
    double completeness = 0.0;
    double v = 0.0;
};

VMeasure v_measure_parts(std::span<const int> gold, std::span<const int> clusters);
double v_measure(std::span<const int> gold, std::span<const int> clusters);

// ---------------------------------------------------------------------------
// Matched vs shuffled cosine histograms
// ---------------------------------------------------------------------------

inline constexpr std::size_t kHistogramBins = 40;  // width 0.05 over [-1, 1]

struct HistogramResult {
    std::vector<double> matched;
    std::vector<double> shuffled;
    double separation = 0.0;  // mean(matched) - mean(shuffled)
    std::vector<std::size_t> matched_counts;
    std::vector<std::size_t> shuffled_counts;
};

std::size_t histogram_bin(double cosine);
// Row i of `a` is the translation of row i of `b`.
HistogramResult histogram_separation(const Matrix& a, const Matrix& b, std::size_t n = 100, std::uint64_t seed = 0);
void write_histogram_csv(const HistogramResult& h, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Paired significance tests
// ---------------------------------------------------------------------------

class NoDifference : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PairedTestResult {
    double t_statistic = 0.0;
    double t_pvalue = 1.0;
    double wilcoxon_w = 0.0;  // rank sum of negative differences y - x
    double wilcoxon_pvalue = 1.0;
    std::size_t n_nonzero = 0;
    bool exact = true;
};

// Differences are y - x, so t > 0 when y tends to exceed x.
PairedTestResult paired_tests(std::span<const double> x, std::span<const double> y);

double regularized_incomplete_beta(double a, double b, double x);
double student_t_two_sided_p(double t, double dof);

}  // namespace mwalign
