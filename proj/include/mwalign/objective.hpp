#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mwalign/corpus.hpp"
#include "mwalign/matrix.hpp"

namespace mwalign {

enum class AnchorMode { all_languages, pivot_only };

// as_written: the softmax denominator sums over A(i) only, i.e. the anchor
// and all of its translations are excluded. include_positives adds P(i) back,
// which is the more common supervised-contrastive variant.
enum class Denominator { as_written, include_positives };

struct AlignmentConfig {
    double tau = 0.1;
    double lambda = 0.1;
    AnchorMode anchor_mode = AnchorMode::all_languages;
    // Scale each positive logit by the constant exp(-z_i . z_p).
    bool boost = false;
    // Unit-normalize z before taking dot products (gradient flows through it).
    bool normalize_for_logits = true;
    Denominator denominator = Denominator::as_written;
    std::string pivot = "en";

    void validate() const;
};

std::string to_string(AnchorMode mode);
AnchorMode anchor_mode_from_string(const std::string& name);
std::string to_string(Denominator d);
Denominator denominator_from_string(const std::string& name);

// For sentence i: P(i) = other sentences of the same instance, A(i) = every
// sentence that is neither i nor in P(i). Anchors are the indices whose loss
// term is summed: all of them, or only pivot-language sentences.
struct BatchGroups {
    std::vector<std::vector<std::size_t>> positives;
    std::vector<std::vector<std::size_t>> negatives;
    std::vector<std::size_t> anchors;

    std::size_t size() const { return positives.size(); }
};

BatchGroups build_groups(std::span<const SentenceTag> tags, const AlignmentConfig& cfg);

struct LossWithGrad {
    double value = 0.0;
    Matrix grad;
};

// weights[i][k] multiplies the logit of anchor i with its k-th positive.
using BoostWeights = std::vector<std::vector<double>>;

// exp(-z_i . z_p) on the (normalized, if configured) embeddings.
BoostWeights boost_weights(const Matrix& z, const BatchGroups& groups, const AlignmentConfig& cfg);

// Multi-positive contrastive loss summed over anchors. With cfg.boost set the
// weights are treated as constants: pass `frozen` to hold them fixed,
// otherwise they are computed from z.
LossWithGrad contrastive_loss(const Matrix& z, const BatchGroups& groups, const AlignmentConfig& cfg,
                              const BoostWeights* frozen = nullptr);

// Mean squared distance to the pretrained embeddings, on raw z.
LossWithGrad regularizer(const Matrix& z, const Matrix& z_orig);

struct ObjectiveValue {
    double total = 0.0;
    double contrastive = 0.0;
    double regularizer = 0.0;
    Matrix grad_z;
    std::size_t anchors_used = 0;
};

ObjectiveValue total_objective(const Matrix& z, const Matrix& z_orig, const BatchGroups& groups,
                               const AlignmentConfig& cfg, const BoostWeights* frozen = nullptr);

// Max over coordinates of |analytic - central difference| divided by
// max(|analytic|, |numeric|, 1e-12). Boost weights stay frozen at z.
double finite_difference_check(const Matrix& z, const Matrix& z_orig, const BatchGroups& groups,
                               const AlignmentConfig& cfg, double h = 1e-5);

}  // namespace mwalign
