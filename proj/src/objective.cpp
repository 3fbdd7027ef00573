#include "mwalign/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace mwalign {

void AlignmentConfig::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be nonnegative");
}

std::string to_string(AnchorMode mode) { return mode == AnchorMode::all_languages ? "all_languages" : "pivot_only"; }

AnchorMode anchor_mode_from_string(const std::string& name) {
    if (name == "all_languages") return AnchorMode::all_languages;
    if (name == "pivot_only") return AnchorMode::pivot_only;
    throw std::invalid_argument("unknown anchor_mode '" + name + "'");
}

std::string to_string(Denominator d) { return d == Denominator::as_written ? "as_written" : "include_positives"; }

Denominator denominator_from_string(const std::string& name) {
    if (name == "as_written") return Denominator::as_written;
    if (name == "include_positives") return Denominator::include_positives;
    throw std::invalid_argument("unknown denominator '" + name + "'");
}

BatchGroups build_groups(std::span<const SentenceTag> tags, const AlignmentConfig& cfg) {
    const std::size_t n = tags.size();
    std::set<std::int64_t> instances;
    for (const auto& t : tags) instances.insert(t.instance_id);
    if (instances.size() < 2)
        throw std::invalid_argument("batch needs at least 2 distinct instances (negative sets would be empty)");

    BatchGroups g;
    g.positives.resize(n);
    g.negatives.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (tags[j].instance_id == tags[i].instance_id)
                g.positives[i].push_back(j);
            else
                g.negatives[i].push_back(j);
        }
        if (cfg.anchor_mode == AnchorMode::all_languages || tags[i].language == cfg.pivot) g.anchors.push_back(i);
    }
    if (g.anchors.empty())
        throw std::invalid_argument("pivot_only anchors but no '" + cfg.pivot + "' sentence in batch");
    return g;
}

namespace {

struct Normalized {
    Matrix u;
    std::vector<double> norms;
};

Normalized normalize_rows(const Matrix& z) {
    Normalized out{z, std::vector<double>(z.rows(), 1.0)};
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double len = norm(z.row(i));
        if (!(len > 0.0)) throw std::invalid_argument("cannot normalize a zero embedding (row " + std::to_string(i) + ")");
        out.norms[i] = len;
        for (double& v : out.u.row(i)) v /= len;
    }
    return out;
}

void require_finite(const Matrix& z) {
    for (double v : z.flat())
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite embedding value");
}

}  // namespace

BoostWeights boost_weights(const Matrix& z, const BatchGroups& groups, const AlignmentConfig& cfg) {
    const Matrix u = cfg.normalize_for_logits ? normalize_rows(z).u : z;
    BoostWeights w(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        w[i].reserve(groups.positives[i].size());
        for (std::size_t p : groups.positives[i]) w[i].push_back(std::exp(-dot(u.row(i), u.row(p))));
    }
    return w;
}

LossWithGrad contrastive_loss(const Matrix& z, const BatchGroups& groups, const AlignmentConfig& cfg,
                              const BoostWeights* frozen) {
    cfg.validate();
    if (z.rows() != groups.size()) throw std::invalid_argument("contrastive_loss: embeddings and groups differ in size");
    require_finite(z);

    const std::size_t n = z.rows();
    Normalized norm_z;
    if (cfg.normalize_for_logits) norm_z = normalize_rows(z);
    const Matrix& u = cfg.normalize_for_logits ? norm_z.u : z;

    BoostWeights computed;
    if (cfg.boost && frozen == nullptr) {
        computed = boost_weights(z, groups, cfg);
        frozen = &computed;
    }

    // Similarities and dL/dsim, both n x n.
    Matrix sim(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) sim(i, j) = sim(j, i) = dot(u.row(i), u.row(j));
    Matrix dsim(n, n);

    const double inv_tau = 1.0 / cfg.tau;
    double total = 0.0;
    std::vector<std::size_t> denom;
    std::vector<double> logits;
    for (std::size_t i : groups.anchors) {
        const auto& pos = groups.positives[i];
        if (pos.empty()) continue;
        const auto& neg = groups.negatives[i];
        if (neg.empty()) throw std::invalid_argument("anchor " + std::to_string(i) + " has an empty negative set");

        denom = neg;
        if (cfg.denominator == Denominator::include_positives) denom.insert(denom.end(), pos.begin(), pos.end());

        logits.resize(denom.size());
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < denom.size(); ++k) {
            logits[k] = sim(i, denom[k]) * inv_tau;
            top = std::max(top, logits[k]);
        }
        double sum = 0.0;
        for (double& l : logits) {
            l = std::exp(l - top);
            sum += l;
        }
        const double lse = top + std::log(sum);

        const double inv_pos = 1.0 / static_cast<double>(pos.size());
        double numer = 0.0;
        for (std::size_t k = 0; k < pos.size(); ++k) {
            const double w = cfg.boost ? (*frozen)[i][k] : 1.0;
            numer += w * sim(i, pos[k]) * inv_tau;
            dsim(i, pos[k]) -= w * inv_tau * inv_pos;
        }
        // Each positive contributes the same log-denominator, so the mean over
        // P(i) leaves exactly one copy.
        total += lse - numer * inv_pos;
        for (std::size_t k = 0; k < denom.size(); ++k) dsim(i, denom[k]) += logits[k] / sum * inv_tau;
    }

    // sim(i,j) = u_i . u_j, so dL/du_i collects both orientations.
    Matrix grad_u(n, z.cols());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double c = dsim(i, j);
            if (c == 0.0) continue;
            auto gi = grad_u.row(i);
            auto gj = grad_u.row(j);
            auto ui = u.row(i);
            auto uj = u.row(j);
            for (std::size_t c2 = 0; c2 < z.cols(); ++c2) {
                gi[c2] += c * uj[c2];
                gj[c2] += c * ui[c2];
            }
        }
    }

    if (!cfg.normalize_for_logits) return {total, std::move(grad_u)};

    // u = z / |z|  =>  dL/dz = (g - (g . u) u) / |z|
    Matrix grad_z(n, z.cols());
    for (std::size_t i = 0; i < n; ++i) {
        auto g = grad_u.row(i);
        auto ui = u.row(i);
        const double radial = dot(g, ui);
        auto out = grad_z.row(i);
        for (std::size_t c = 0; c < z.cols(); ++c) out[c] = (g[c] - radial * ui[c]) / norm_z.norms[i];
    }
    return {total, std::move(grad_z)};
}

LossWithGrad regularizer(const Matrix& z, const Matrix& z_orig) {
    if (z.rows() != z_orig.rows() || z.cols() != z_orig.cols())
        throw std::invalid_argument("regularizer: shape mismatch");
    const std::size_t n = z.rows();
    LossWithGrad out{0.0, Matrix(n, z.cols())};
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < z.cols(); ++c) {
            const double diff = z(i, c) - z_orig(i, c);
            out.value += diff * diff;
            out.grad(i, c) = 2.0 * diff * inv_n;
        }
    }
    out.value *= inv_n;
    return out;
}

ObjectiveValue total_objective(const Matrix& z, const Matrix& z_orig, const BatchGroups& groups,
                               const AlignmentConfig& cfg, const BoostWeights* frozen) {
    auto con = contrastive_loss(z, groups, cfg, frozen);
    auto reg = regularizer(z, z_orig);

    ObjectiveValue out;
    out.contrastive = con.value;
    out.regularizer = reg.value;
    out.total = con.value + cfg.lambda * reg.value;
    out.grad_z = std::move(con.grad);
    if (cfg.lambda != 0.0) {
        auto g = out.grad_z.flat();
        auto r = reg.grad.flat();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += cfg.lambda * r[k];
    }
    for (std::size_t i : groups.anchors)
        if (!groups.positives[i].empty()) ++out.anchors_used;
    return out;
}

double finite_difference_check(const Matrix& z, const Matrix& z_orig, const BatchGroups& groups,
                               const AlignmentConfig& cfg, double h) {
    BoostWeights weights;
    const BoostWeights* frozen = nullptr;
    if (cfg.boost) {
        weights = boost_weights(z, groups, cfg);
        frozen = &weights;
    }
    const auto analytic = total_objective(z, z_orig, groups, cfg, frozen);

    double worst = 0.0;
    Matrix probe = z;
    for (std::size_t k = 0; k < probe.flat().size(); ++k) {
        const double saved = probe.flat()[k];
        probe.flat()[k] = saved + h;
        const double up = total_objective(probe, z_orig, groups, cfg, frozen).total;
        probe.flat()[k] = saved - h;
        const double down = total_objective(probe, z_orig, groups, cfg, frozen).total;
        probe.flat()[k] = saved;

        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic.grad_z.flat()[k];
        const double scale = std::max({std::abs(a), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(a - numeric) / scale);
    }
    return worst;
}

}  // namespace mwalign
