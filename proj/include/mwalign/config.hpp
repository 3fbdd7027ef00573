#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mwalign/corpus.hpp"
#include "mwalign/trainer.hpp"

namespace mwalign {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using LanguagePair = std::pair<std::string, std::string>;

struct CorpusSource {
    std::filesystem::path path;
    std::vector<std::string> held_out;
};

struct EvalSpec {
    // Trailing instances of the world / file reserved for evaluation.
    std::size_t instances = 100;
    std::vector<std::string> tasks{"bitext", "sts", "classification", "clustering"};
    // Empty: pivot paired with every other language, held-out ones included.
    std::vector<LanguagePair> pairs;
    std::size_t sts_pairs = 200;
    std::size_t hist_n = 100;
    std::vector<std::string> stages{"before", "after"};
    bool normalize_for_classification = false;
    std::uint64_t seed = 0;
};

struct AblationSpec {
    std::vector<std::string> variants{"aligned", "en_anchor", "en_ablate", "par_a", "par_b",
                                      "eh",      "eh_euro",   "eh_asian",  "eh_all"};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    // (candidate, baseline): differences are candidate - baseline.
    std::vector<LanguagePair> comparisons{{"par_a", "par_b"}, {"aligned", "en_anchor"}, {"eh_all", "eh"}};
    std::vector<std::string> metrics{"bitext_accuracy_mean"};
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    std::string pivot = "en";
    std::optional<SyntheticWorldSpec> world;
    std::optional<CorpusSource> corpus;
    double train_fraction = 0.9;
    double valid_fraction = 0.1;
    std::uint64_t split_seed = 0;
    SchemeSpec scheme;
    TrainConfig train;
    EvalSpec eval;
    AblationSpec ablation;
};

// Missing per-section seeds are derived from the global seed; the optional
// override replaces the global seed before derivation. Unknown keys throw.
RunConfig parse_run_config(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

// Every field explicit; parse_run_config(to_json(c)) == c.
nlohmann::json to_json(const RunConfig& cfg);

// Same config with every seed re-derived from `seed`.
RunConfig reseeded(const RunConfig& cfg, std::uint64_t seed);

}  // namespace mwalign
