#include "mwalign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <utility>

#include "mwalign/rng.hpp"

namespace mwalign {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw std::invalid_argument("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (patience < 1 || patience > epochs) throw std::invalid_argument("patience must be in [1, epochs]");
    if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be nonnegative");
    if (!(clip_norm >= 0.0)) throw std::invalid_argument("clip_norm must be nonnegative");
    alignment.validate();
}

namespace {

// Batches with a single instance, or without a pivot sentence under
// pivot-only anchoring, have no defined loss and are skipped.
bool usable(const Batch& batch, const AlignmentConfig& cfg) {
    std::set<std::int64_t> ids;
    bool has_anchor = cfg.anchor_mode == AnchorMode::all_languages;
    for (const auto& tag : batch.tags) {
        ids.insert(tag.instance_id);
        if (tag.language == cfg.pivot) has_anchor = true;
    }
    return ids.size() >= 2 && has_anchor;
}

void clip_gradient(EncoderParams& grad, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (auto block : std::as_const(grad).blocks())
        for (double g : block) sq += g * g;
    const double total = std::sqrt(sq);
    if (total <= max_norm) return;
    const double scale = max_norm / total;
    for (auto block : grad.blocks())
        for (double& g : block) g *= scale;
}

void apply_update(TrainState& state, const EncoderParams& grad, const TrainConfig& cfg) {
    ++state.step;
    auto params = state.params.blocks();
    auto grads = grad.blocks();
    if (cfg.optimizer == OptimizerKind::sgd) {
        for (std::size_t b = 0; b < params.size(); ++b)
            for (std::size_t k = 0; k < params[b].size(); ++k) params[b][k] -= cfg.learning_rate * grads[b][k];
        return;
    }
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double correct2 = 1.0 - std::pow(cfg.adam_beta2, t);
    std::size_t flat = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t k = 0; k < params[b].size(); ++k, ++flat) {
            const double g = grads[b][k];
            double& m = state.adam_m[flat];
            double& v = state.adam_v[flat];
            m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
            v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
            params[b][k] -= cfg.learning_rate * (m / correct1) / (std::sqrt(v / correct2) + cfg.adam_epsilon);
        }
    }
}

}  // namespace

double evaluate_loss(const Corpus& rows, const EncoderParams& params, const TrainConfig& cfg) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& batch : ordered_batches(rows, cfg.batch_size)) {
        if (!usable(batch, cfg.alignment)) continue;
        const auto groups = build_groups(batch.tags, cfg.alignment);
        const Matrix z = forward(params, batch.embeddings);
        sum += total_objective(z, batch.embeddings, groups, cfg.alignment).total;
        ++count;
    }
    return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

TrainResult train(const Corpus& train_rows, const Corpus& valid_rows, const TrainConfig& cfg) {
    cfg.validate();
    const bool early_stopping = cfg.patience < cfg.epochs;
    if (early_stopping && valid_rows.instances.empty())
        throw std::invalid_argument("early stopping needs a nonempty validation split");
    if (train_rows.instances.empty()) throw std::invalid_argument("no training rows");

    TrainState state;
    state.params = init_identity(train_rows.dim, cfg.arch, cfg.hidden, derive_seed(cfg.seed, 0x1417));
    state.adam_m.assign(state.params.parameter_count(), 0.0);
    state.adam_v.assign(state.params.parameter_count(), 0.0);

    const bool have_valid = !valid_rows.instances.empty();
    auto validation_loss = [&](const EncoderParams& p) {
        return have_valid ? evaluate_loss(valid_rows, p, cfg) : evaluate_loss(train_rows, p, cfg);
    };

    EpochRecord initial{0, evaluate_loss(train_rows, state.params, cfg), validation_loss(state.params), 0};
    if (!std::isfinite(initial.valid_loss)) throw TrainingDiverged(0, 0);
    state.history.push_back(initial);
    state.best_valid_loss = initial.valid_loss;
    EncoderParams best = state.params;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        state.epoch = epoch;
        const auto batches = iter_batches(train_rows, cfg.batch_size, cfg.seed ^ epoch);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            if (!usable(batch, cfg.alignment)) {
                ++state.skipped_batches;
                continue;
            }
            const auto groups = build_groups(batch.tags, cfg.alignment);
            const Matrix z = forward(state.params, batch.embeddings);
            if (!std::all_of(z.flat().begin(), z.flat().end(), [](double v) { return std::isfinite(v); }))
                throw TrainingDiverged(epoch, b);
            const auto obj = total_objective(z, batch.embeddings, groups, cfg.alignment);
            if (!std::isfinite(obj.total)) throw TrainingDiverged(epoch, b);
            auto grad = backward_through(state.params, batch.embeddings, obj.grad_z).params;
            if (!grad.all_finite()) throw TrainingDiverged(epoch, b);
            clip_gradient(grad, cfg.clip_norm);
            apply_update(state, grad, cfg);
            if (!state.params.all_finite()) throw TrainingDiverged(epoch, b);
        }

        EpochRecord rec{epoch, evaluate_loss(train_rows, state.params, cfg), validation_loss(state.params), 0};
        if (!std::isfinite(rec.valid_loss) || !std::isfinite(rec.train_loss)) throw TrainingDiverged(epoch, batches.size());
        if (rec.valid_loss < state.best_valid_loss) {
            state.best_valid_loss = rec.valid_loss;
            state.best_epoch = epoch;
            state.epochs_since_best = 0;
            best = state.params;
        } else {
            ++state.epochs_since_best;
        }
        rec.epochs_since_best = state.epochs_since_best;
        state.history.push_back(rec);
        if (state.epochs_since_best >= cfg.patience) break;
    }
    return {std::move(best), std::move(state)};
}

void write_history_csv(const TrainState& state, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write history " + path.string());
    out << "epoch,train_loss,valid_loss,epochs_since_best\n";
    char buf[128];
    for (const auto& rec : state.history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu\n", rec.epoch, rec.train_loss, rec.valid_loss,
                      rec.epochs_since_best);
        out << buf;
    }
}

}  // namespace mwalign
