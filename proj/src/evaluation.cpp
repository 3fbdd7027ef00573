#include "mwalign/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "mwalign/rng.hpp"

namespace mwalign {

void LabeledEmbeddings::validate() const {
    if (vectors.rows() != labels.size()) throw std::invalid_argument("labels and vectors differ in length");
    if (!languages.empty() && languages.size() != labels.size())
        throw std::invalid_argument("language tags and vectors differ in length");
    for (int l : labels)
        if (l < 0) throw std::invalid_argument("labels must be nonnegative");
}

void BitextPair::validate() const {
    if (a.vectors.rows() == 0 || b.vectors.rows() == 0) throw std::invalid_argument("bitext sides must be nonempty");
    if (a.vectors.rows() != a.ids.size() || b.vectors.rows() != b.ids.size())
        throw std::invalid_argument("bitext ids and vectors differ in length");
    if (a.vectors.cols() != b.vectors.cols()) throw std::invalid_argument("bitext sides differ in dimension");
    const std::set<std::int64_t> ia(a.ids.begin(), a.ids.end()), ib(b.ids.begin(), b.ids.end());
    for (const auto& [x, y] : gold)
        if (!ia.contains(x) || !ib.contains(y)) throw std::invalid_argument("gold pair references a missing id");
}

void write_report_csv(const std::vector<EvalReport>& rows, const std::filesystem::path& path, bool append) {
    const bool header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, append ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write results " + path.string());
    if (header) out << "task,dataset,lang_pair,metric,value,scheme,anchor_mode,seed\n";
    char buf[64];
    for (const auto& r : rows) {
        std::string value = "undefined";
        if (r.value) {
            std::snprintf(buf, sizeof buf, "%.17g", *r.value);
            value = buf;
        }
        out << r.task << ',' << r.dataset << ',' << r.lang_pair << ',' << r.metric << ',' << value << ','
            << r.scheme << ',' << r.anchor_mode << ',' << r.seed << '\n';
    }
    if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Bitext
// ---------------------------------------------------------------------------

namespace {

std::vector<double> row_norms(const Matrix& m, const char* side) {
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out[i] = norm(m.row(i));
        if (!(out[i] > 0.0))
            throw std::invalid_argument(std::string("zero-norm vector at index ") + std::to_string(i) + " of " + side);
    }
    return out;
}

// Column of the row maximum; ties break to the lowest index.
std::size_t argmax_row(const Matrix& m, std::size_t r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols(); ++c)
        if (m(r, c) > m(r, best)) best = c;
    return best;
}

std::size_t argmax_col(const Matrix& m, std::size_t c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < m.rows(); ++r)
        if (m(r, c) > m(best, c)) best = r;
    return best;
}

BitextScores score_predictions(const std::vector<MinedPair>& candidates, double threshold,
                               const std::set<std::pair<std::int64_t, std::int64_t>>& gold) {
    std::size_t predicted = 0, correct = 0;
    for (const auto& c : candidates) {
        if (c.score < threshold) continue;
        ++predicted;
        if (gold.contains({c.a_id, c.b_id})) ++correct;
    }
    BitextScores s;
    s.threshold = threshold;
    s.precision = predicted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(predicted);
    s.recall = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
    s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

}  // namespace

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("cosine_matrix: dimension mismatch");
    const auto na = row_norms(a, "A");
    const auto nb = row_norms(b, "B");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j)
            out(i, j) = std::clamp(dot(a.row(i), b.row(j)) / (na[i] * nb[j]), -1.0, 1.0);
    return out;
}

double bitext_accuracy(const BitextPair& pair) {
    pair.validate();
    const Matrix sim = cosine_matrix(pair.a.vectors, pair.b.vectors);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < sim.rows(); ++i)
        if (pair.gold.contains({pair.a.ids[i], pair.b.ids[argmax_row(sim, i)]})) ++hits;
    return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

std::vector<MinedPair> mutual_nearest_neighbors(const BitextPair& pair) {
    pair.validate();
    const Matrix sim = cosine_matrix(pair.a.vectors, pair.b.vectors);
    std::vector<MinedPair> out;
    for (std::size_t i = 0; i < sim.rows(); ++i) {
        const std::size_t j = argmax_row(sim, i);
        if (argmax_col(sim, j) == i) out.push_back({pair.a.ids[i], pair.b.ids[j], sim(i, j)});
    }
    return out;
}

BitextScores bitext_f1(const BitextPair& pair, const ThresholdPolicy& policy) {
    double threshold = policy.threshold;
    if (policy.kind == ThresholdPolicy::Kind::dev_tuned) {
        if (policy.dev == nullptr) throw std::invalid_argument("dev_tuned threshold needs a dev gold set");
        auto dev_candidates = mutual_nearest_neighbors(*policy.dev);
        std::sort(dev_candidates.begin(), dev_candidates.end(),
                  [](const MinedPair& x, const MinedPair& y) { return x.score > y.score; });
        // Nothing passes an infinite threshold; any candidate beats it on F1.
        threshold = std::numeric_limits<double>::infinity();
        double best_f1 = -1.0;
        for (const auto& c : dev_candidates) {
            const auto s = score_predictions(dev_candidates, c.score, policy.dev->gold);
            if (s.f1 > best_f1) {
                best_f1 = s.f1;
                threshold = c.score;
            }
        }
    }
    return score_predictions(mutual_nearest_neighbors(pair), threshold, pair.gold);
}

// ---------------------------------------------------------------------------
// STS
// ---------------------------------------------------------------------------

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    std::vector<double> ranks(values.size());
    std::size_t start = 0;
    while (start < order.size()) {
        std::size_t stop = start + 1;
        while (stop < order.size() && values[order[stop]] == values[order[start]]) ++stop;
        // Positions start..stop-1 hold ranks start+1..stop.
        const double rank = 0.5 * static_cast<double>(start + 1 + stop);
        for (std::size_t k = start; k < stop; ++k) ranks[order[k]] = rank;
        start = stop;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> pred, std::span<const double> gold) {
    if (pred.size() != gold.size()) throw std::invalid_argument("spearman: length mismatch");
    if (pred.size() < 2) throw std::invalid_argument("spearman: needs at least 2 observations");
    const auto rp = average_ranks(pred);
    const auto rg = average_ranks(gold);
    const double n = static_cast<double>(rp.size());
    const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
    const double mg = std::accumulate(rg.begin(), rg.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) {
        const double dx = rp[i] - mp, dy = rg[i] - mg;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

EvalReport sts_eval(const Matrix& a, const Matrix& b, std::span<const double> gold) {
    if (a.rows() != b.rows() || a.rows() != gold.size()) throw std::invalid_argument("sts_eval: length mismatch");
    std::vector<double> pred(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double na = norm(a.row(i)), nb = norm(b.row(i));
        if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("sts_eval: zero-norm vector at pair " + std::to_string(i));
        pred[i] = dot(a.row(i), b.row(i)) / (na * nb);
    }
    EvalReport r;
    r.task = "sts";
    r.metric = "spearman";
    r.value = spearman(pred, gold);
    r.support = pred.size();
    return r;
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

namespace {

// Mean softmax cross-entropy; fills the gradient when `grad` is non-null.
double logreg_loss(const Matrix& w, const Matrix& x, std::span<const int> y, Matrix* grad) {
    const std::size_t n = x.rows(), d = x.cols(), k = w.rows();
    if (grad) *grad = Matrix(k, d + 1);
    std::vector<double> scores(k);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = x.row(i);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            double s = w(c, d);
            for (std::size_t j = 0; j < d; ++j) s += w(c, j) * xi[j];
            scores[c] = s;
            top = std::max(top, s);
        }
        double sum = 0.0;
        for (double& s : scores) {
            s = std::exp(s - top);
            sum += s;
        }
        const auto yi = static_cast<std::size_t>(y[i]);
        loss += std::log(sum) - std::log(scores[yi]);
        if (!grad) continue;
        for (std::size_t c = 0; c < k; ++c) {
            const double coef = scores[c] / sum - (c == yi ? 1.0 : 0.0);
            for (std::size_t j = 0; j < d; ++j) (*grad)(c, j) += coef * xi[j];
            (*grad)(c, d) += coef;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad)
        for (double& g : grad->flat()) g *= inv_n;
    return loss * inv_n;
}

}  // namespace

LogRegModel fit_logreg(const LabeledEmbeddings& train, std::size_t max_iter) {
    train.validate();
    if (train.labels.empty()) throw std::invalid_argument("logistic regression needs training data");
    const std::set<int> distinct(train.labels.begin(), train.labels.end());
    if (distinct.size() < 2) throw std::invalid_argument("logistic regression needs at least 2 classes in training data");

    LogRegModel model;
    model.classes = static_cast<std::size_t>(*distinct.rbegin()) + 1;
    model.weights = Matrix(model.classes, train.vectors.cols() + 1);

    Matrix grad;
    double loss = logreg_loss(model.weights, train.vectors, train.labels, &grad);
    model.loss_history.push_back(loss);
    double step = 1.0;
    constexpr double kArmijo = 1e-4;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        model.iterations = iter + 1;
        double gsq = 0.0;
        for (double g : grad.flat()) gsq += g * g;
        if (gsq < 1e-24) break;

        bool accepted = false;
        Matrix trial = model.weights;
        for (int halvings = 0; halvings < 60; ++halvings) {
            auto w = model.weights.flat();
            auto t = trial.flat();
            auto g = grad.flat();
            for (std::size_t k = 0; k < t.size(); ++k) t[k] = w[k] - step * g[k];
            const double trial_loss = logreg_loss(trial, train.vectors, train.labels, nullptr);
            if (trial_loss <= loss - kArmijo * step * gsq) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        model.weights = std::move(trial);
        loss = logreg_loss(model.weights, train.vectors, train.labels, &grad);
        model.loss_history.push_back(loss);
        step = std::min(step * 2.0, 1e3);
    }
    return model;
}

std::vector<int> predict(const LogRegModel& model, const Matrix& x) {
    const std::size_t d = model.weights.cols() - 1;
    if (x.cols() != d) throw std::invalid_argument("predict: dimension mismatch");
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < model.classes; ++c) {
            double s = model.weights(c, d);
            for (std::size_t j = 0; j < d; ++j) s += model.weights(c, j) * x(i, j);
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

double logreg_classify(const LabeledEmbeddings& train, const LabeledEmbeddings& test, std::size_t max_iter) {
    test.validate();
    if (test.vectors.cols() != train.vectors.cols()) throw std::invalid_argument("train/test dimension mismatch");
    if (test.labels.empty()) throw std::invalid_argument("empty test set");
    const auto model = fit_logreg(train, max_iter);
    const auto pred = predict(model, test.vectors);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == test.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::size_t nearest_center(const Matrix& centers, std::span<const double> x) {
    std::size_t best = 0;
    double best_d = squared_distance(centers.row(0), x);
    for (std::size_t c = 1; c < centers.rows(); ++c) {
        const double d = squared_distance(centers.row(c), x);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

std::vector<int> minibatch_kmeans(const Matrix& x, std::size_t k, std::size_t batch_size, std::uint64_t seed,
                                  std::size_t iterations) {
    const std::size_t n = x.rows();
    if (k == 0) throw std::invalid_argument("k must be positive");
    if (k > n) throw std::invalid_argument("k exceeds the number of points");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    Rng rng(seed);

    // k-means++ seeding.
    Matrix centers(k, x.cols());
    std::vector<bool> chosen(n, false);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.index(n);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t pick = first;
        if (c > 0) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) total += dist[i];
            if (total > 0.0) {
                double target = rng.uniform() * total;
                pick = n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (dist[i] <= 0.0) continue;
                    pick = i;
                    target -= dist[i];
                    if (target < 0.0) break;
                }
            } else {
                // Every remaining point duplicates a center.
                std::vector<std::size_t> free;
                for (std::size_t i = 0; i < n; ++i)
                    if (!chosen[i]) free.push_back(i);
                pick = free[rng.index(free.size())];
            }
        }
        chosen[pick] = true;
        std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], squared_distance(x.row(i), centers.row(c)));
    }

    // Mini-batch updates with per-center learning rate 1 / count.
    std::vector<std::size_t> counts(k, 0);
    std::vector<std::size_t> batch(batch_size), assigned(batch_size);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t b = 0; b < batch_size; ++b) {
            batch[b] = rng.index(n);
            assigned[b] = nearest_center(centers, x.row(batch[b]));
        }
        for (std::size_t b = 0; b < batch_size; ++b) {
            const std::size_t c = assigned[b];
            ++counts[c];
            const double eta = 1.0 / static_cast<double>(counts[c]);
            auto center = centers.row(c);
            auto xb = x.row(batch[b]);
            for (std::size_t j = 0; j < center.size(); ++j) center[j] += eta * (xb[j] - center[j]);
        }
    }

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(nearest_center(centers, x.row(i)));
    return labels;
}

VMeasure v_measure_parts(std::span<const int> gold, std::span<const int> clusters) {
    if (gold.size() != clusters.size()) throw std::invalid_argument("v_measure: length mismatch");
    if (gold.empty()) throw std::invalid_argument("v_measure: empty input");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> class_count, cluster_count;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        joint[{gold[i], clusters[i]}] += 1.0;
        class_count[gold[i]] += 1.0;
        cluster_count[clusters[i]] += 1.0;
    }
    const double n = static_cast<double>(gold.size());
    auto entropy = [n](const std::map<int, double>& counts) {
        double h = 0.0;
        for (const auto& [_, c] : counts) h -= c / n * std::log(c / n);
        return h;
    };
    const double h_class = entropy(class_count);
    const double h_cluster = entropy(cluster_count);
    double h_class_given_cluster = 0.0, h_cluster_given_class = 0.0;
    for (const auto& [key, c] : joint) {
        h_class_given_cluster -= c / n * std::log(c / cluster_count[key.second]);
        h_cluster_given_class -= c / n * std::log(c / class_count[key.first]);
    }
    VMeasure out;
    out.homogeneity = h_class == 0.0 ? 1.0 : 1.0 - h_class_given_cluster / h_class;
    out.completeness = h_cluster == 0.0 ? 1.0 : 1.0 - h_cluster_given_class / h_cluster;
    const double denom = out.homogeneity + out.completeness;
    out.v = denom == 0.0 ? 0.0 : 2.0 * out.homogeneity * out.completeness / denom;
    return out;
}

double v_measure(std::span<const int> gold, std::span<const int> clusters) { return v_measure_parts(gold, clusters).v; }

}  // namespace mwalign
