#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwalign/matrix.hpp"

namespace mwalign {

enum class LanguageRole { pivot, target, held_out };

struct LanguageId {
    std::string code;
    LanguageRole role = LanguageRole::target;

    bool operator==(const LanguageId&) const = default;
};

struct Entry {
    std::vector<double> vec;
    std::optional<std::string> text;

    bool operator==(const Entry&) const = default;
};

// One multi-way parallel row: the same meaning rendered in several languages.
struct SemanticInstance {
    std::int64_t id = 0;
    std::map<std::string, Entry> entries;

    bool operator==(const SemanticInstance&) const = default;
};

enum class Provenance { synthetic, loaded };

struct Corpus {
    std::vector<LanguageId> pool;
    std::vector<SemanticInstance> instances;
    std::size_t dim = 0;
    Provenance provenance = Provenance::synthetic;

    bool operator==(const Corpus&) const = default;

    const LanguageId* find_language(const std::string& code) const;
    // Code of the pivot language, if the pool declares one.
    std::optional<std::string> pivot() const;
    std::vector<std::string> codes_with_role(LanguageRole role) const;
    // Throws CorpusError on duplicate ids, unknown languages or a ragged dimension.
    void validate() const;
};

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Synthetic worlds
// ---------------------------------------------------------------------------

enum class TransformKind { rotation, affine, identity };

// Latent meanings s_i ~ N(0, I_d). Each language L sees T_L s_i + b_L + noise,
// where T_L = Q0 * blockdiag(I_shared, R_L): all languages agree on the first
// `shared_dims` latent directions (in the common frame Q0) and are rotated
// independently on the rest. `identity` sets T_L = I, b_L = 0 for tests.
struct SyntheticWorldSpec {
    std::size_t num_instances = 600;
    std::size_t dim = 16;
    std::vector<LanguageId> languages;
    TransformKind transform = TransformKind::rotation;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
    std::size_t shared_dims = 8;
    // Class / cluster gold: index of the nearest of `num_blobs` seeded centers.
    std::size_t num_blobs = 5;
    // Standard deviation of the per-language bias in affine mode.
    double bias_scale = 1.0;

    std::vector<std::string> held_out() const;
    void validate() const;
};

struct SyntheticWorld {
    Corpus corpus;
    Matrix latents;              // row i belongs to corpus.instances[i]
    std::vector<int> blob_labels;
    Matrix blob_centers;
    std::map<std::string, Matrix> transforms;
    std::map<std::string, std::vector<double>> biases;
};

SyntheticWorld generate_world(const SyntheticWorldSpec& spec);
Corpus generate_synthetic_world(const SyntheticWorldSpec& spec);

// Haar-distributed orthogonal n x n matrix.
Matrix random_orthogonal(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// JSONL IO
// ---------------------------------------------------------------------------

// Languages found in the file become targets except `pivot`.
Corpus load_corpus(const std::filesystem::path& path, const std::string& pivot = "en");
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Sampling schemes
// ---------------------------------------------------------------------------

enum class SchemeKind { full_multiway, par_a, par_b, eh, eh_euro, eh_asian, eh_all, en_ablate };

struct SchemeSpec {
    SchemeKind kind = SchemeKind::full_multiway;
    std::size_t columns_per_row = 4;
    std::vector<std::string> euro{"fr", "de", "es"};
    std::vector<std::string> asian{"zh", "ja"};
    // Fixed second column of the eh family.
    std::string designated = "hi";
    std::uint64_t seed = 0;

    // par_b and eh are bilingual; everything else uses columns_per_row.
    std::size_t effective_columns() const;
};

struct MaterializedRows {
    Corpus rows;
    // Sum over rows of C(k_row, 2).
    std::size_t pair_count = 0;
};

MaterializedRows apply_scheme(const Corpus& corpus, const SchemeSpec& scheme);
std::size_t count_pairs(const Corpus& rows);

std::string to_string(SchemeKind kind);
SchemeKind scheme_kind_from_string(const std::string& name);
std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Splits and batches
// ---------------------------------------------------------------------------

struct DataSplit {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> valid;
    double train_fraction = 0.9;
    double valid_fraction = 0.1;
    std::uint64_t seed = 0;
};

DataSplit split_corpus(const Corpus& corpus, double train_fraction, double valid_fraction,
                       std::uint64_t seed);

// Instances whose id is in `ids`, in the order of `ids`.
Corpus subset(const Corpus& corpus, const std::vector<std::int64_t>& ids);

struct SentenceTag {
    std::int64_t instance_id = 0;
    std::string language;

    bool operator==(const SentenceTag&) const = default;
};

// Rows flattened into sentences: row order, then language order within a row.
struct Batch {
    std::vector<SentenceTag> tags;
    Matrix embeddings;
    std::size_t row_count = 0;
};

std::vector<Batch> iter_batches(const Corpus& rows, std::size_t batch_size, std::uint64_t epoch_seed);
// Fixed row order, no shuffle.
std::vector<Batch> ordered_batches(const Corpus& rows, std::size_t batch_size);

}  // namespace mwalign
