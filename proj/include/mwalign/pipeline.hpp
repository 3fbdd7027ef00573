#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mwalign/config.hpp"
#include "mwalign/corpus.hpp"
#include "mwalign/encoder.hpp"
#include "mwalign/evaluation.hpp"
#include "mwalign/trainer.hpp"

namespace mwalign {

// Everything a run needs, derived deterministically from a RunConfig.
struct PreparedData {
    Corpus full;
    // Latent meanings and blob labels, indexed like `full.instances`; empty
    // for loaded corpora.
    Matrix latents;
    std::vector<int> labels;
    std::map<std::int64_t, std::size_t> row_of_id;

    Corpus pool;  // training pool, before the train/valid split
    Corpus eval;  // trailing instances reserved for evaluation
    DataSplit split;
    MaterializedRows train_rows;
    MaterializedRows valid_rows;

    bool has_latents() const { return !latents.empty(); }
};

PreparedData prepare_data(const RunConfig& cfg);

std::vector<LanguagePair> eval_pairs(const RunConfig& cfg, const Corpus& corpus);

// Reports for one stage ("before" = identity encoder, "after" = trained).
std::vector<EvalReport> evaluate_stage(const RunConfig& cfg, const PreparedData& data, const EncoderParams& params,
                                       const std::string& stage);

// Summary numbers keyed by name, e.g. bitext_accuracy_mean, bitext_accuracy_hi,
// classification_hi, bitext_accuracy_held_out.
using RunMetrics = std::map<std::string, double>;
RunMetrics summarize(const RunConfig& cfg, const PreparedData& data, const std::vector<EvalReport>& reports);

struct HistogramOutcome {
    LanguagePair pair;
    HistogramResult before;
    HistogramResult after;
};

std::vector<HistogramOutcome> compute_histograms(const RunConfig& cfg, const PreparedData& data,
                                                 const EncoderParams& trained,
                                                 const std::vector<LanguagePair>& pairs);

// ---------------------------------------------------------------------------
// Ablation matrix
// ---------------------------------------------------------------------------

RunConfig variant_config(const RunConfig& base, const std::string& variant, std::uint64_t seed);

struct VariantRun {
    std::string variant;
    std::uint64_t seed = 0;
    std::uint64_t world_seed = 0;
    std::vector<std::int64_t> eval_ids;
    std::size_t rows = 0;
    std::size_t pair_count = 0;
    RunMetrics metrics;
    std::vector<EvalReport> reports;
};

struct ComparisonRow {
    std::string candidate;
    std::string baseline;
    std::string metric;
    double mean_candidate = 0.0;
    double mean_baseline = 0.0;
    double difference = 0.0;
    std::optional<PairedTestResult> test;
    std::string status;  // "ok", "no_difference" or "too_few_differences"
};

struct AblationOutcome {
    std::vector<VariantRun> runs;
    std::vector<ComparisonRow> summary;

    std::vector<double> metric_by_seed(const std::string& variant, const std::string& metric) const;
    double mean(const std::string& variant, const std::string& metric) const;
};

AblationOutcome run_ablation(const RunConfig& cfg);
ComparisonRow compare(const AblationOutcome& outcome, const std::string& candidate, const std::string& baseline,
                      const std::string& metric);

// ---------------------------------------------------------------------------
// Commands: each writes the resolved config next to its outputs.
// ---------------------------------------------------------------------------

void cmd_gen(const RunConfig& cfg, const std::filesystem::path& out_dir);
TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir);
std::vector<EvalReport> cmd_eval(const RunConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                                 const std::filesystem::path& out_dir);
AblationOutcome cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out_dir);
std::vector<HistogramOutcome> cmd_hist(const RunConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                                       const std::filesystem::path& out_dir);

}  // namespace mwalign
