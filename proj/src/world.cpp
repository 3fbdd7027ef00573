#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mwalign/corpus.hpp"
#include "mwalign/rng.hpp"

namespace mwalign {

namespace {

// Stream tags for derive_seed; fixed so adding a language never perturbs
// the latents or another language's map.
constexpr std::uint64_t kLatentStream = 1;
constexpr std::uint64_t kBlobStream = 2;
constexpr std::uint64_t kFrameStream = 3;
constexpr std::uint64_t kLanguageStream = 100;
constexpr std::uint64_t kNoiseStream = 10000;

}  // namespace

std::vector<std::string> SyntheticWorldSpec::held_out() const {
    std::vector<std::string> out;
    for (const auto& lang : languages)
        if (lang.role == LanguageRole::held_out) out.push_back(lang.code);
    return out;
}

void SyntheticWorldSpec::validate() const {
    if (dim < 2) throw std::invalid_argument("world dim must be at least 2");
    if (num_instances < 2) throw std::invalid_argument("world needs at least 2 instances");
    if (languages.size() < 2) throw std::invalid_argument("world needs at least 2 languages");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be nonnegative");
    if (shared_dims > dim) throw std::invalid_argument("shared_dims exceeds dim");
    if (!(bias_scale >= 0.0)) throw std::invalid_argument("bias_scale must be nonnegative");
    std::set<std::string> codes;
    int pivots = 0;
    for (const auto& lang : languages) {
        if (lang.code.empty()) throw std::invalid_argument("empty language code");
        if (!codes.insert(lang.code).second) throw std::invalid_argument("duplicate language '" + lang.code + "'");
        if (lang.role == LanguageRole::pivot) ++pivots;
    }
    if (pivots > 1) throw std::invalid_argument("at most one pivot language");
}

Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Matrix g(n, n);
    for (auto& x : g.flat()) x = rng.normal();

    // Modified Gram-Schmidt on the columns, applied twice for orthogonality
    // to rounding. The positive-diagonal R makes the result Haar distributed.
    Matrix q = g;
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < j; ++k) {
                double proj = 0.0;
                for (std::size_t i = 0; i < n; ++i) proj += q(i, k) * q(i, j);
                for (std::size_t i = 0; i < n; ++i) q(i, j) -= proj * q(i, k);
            }
            double len = 0.0;
            for (std::size_t i = 0; i < n; ++i) len += q(i, j) * q(i, j);
            len = std::sqrt(len);
            for (std::size_t i = 0; i < n; ++i) q(i, j) /= len;
        }
    }
    return q;
}

SyntheticWorld generate_world(const SyntheticWorldSpec& spec) {
    spec.validate();
    const std::size_t d = spec.dim;
    const std::size_t n = spec.num_instances;

    SyntheticWorld world;
    world.corpus.dim = d;
    world.corpus.provenance = Provenance::synthetic;
    world.corpus.pool = spec.languages;

    world.latents = Matrix(n, d);
    {
        Rng rng(derive_seed(spec.seed, kLatentStream));
        for (auto& x : world.latents.flat()) x = rng.normal();
    }

    world.blob_labels.assign(n, 0);
    if (spec.num_blobs > 0) {
        Rng rng(derive_seed(spec.seed, kBlobStream));
        world.blob_centers = Matrix(spec.num_blobs, d);
        for (auto& x : world.blob_centers.flat()) x = rng.normal();
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t g = 0; g < spec.num_blobs; ++g) {
                double dist = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = world.latents(i, c) - world.blob_centers(g, c);
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    world.blob_labels[i] = static_cast<int>(g);
                }
            }
        }
    }

    const Matrix frame = random_orthogonal(d, derive_seed(spec.seed, kFrameStream));
    const std::size_t private_dims = d - spec.shared_dims;
    for (std::size_t l = 0; l < spec.languages.size(); ++l) {
        const auto& code = spec.languages[l].code;
        Matrix transform;
        std::vector<double> bias(d, 0.0);
        if (spec.transform == TransformKind::identity) {
            transform = Matrix::identity(d);
        } else {
            const std::uint64_t lang_seed = derive_seed(spec.seed, kLanguageStream + l);
            Matrix block = Matrix::identity(d);
            if (private_dims > 0) {
                const Matrix r = random_orthogonal(private_dims, lang_seed);
                for (std::size_t i = 0; i < private_dims; ++i)
                    for (std::size_t j = 0; j < private_dims; ++j)
                        block(spec.shared_dims + i, spec.shared_dims + j) = r(i, j);
            }
            transform = multiply(frame, block);
            if (spec.transform == TransformKind::affine) {
                Rng rng(derive_seed(lang_seed, 7));
                for (auto& b : bias) b = spec.bias_scale * rng.normal();
            }
        }
        world.transforms.emplace(code, std::move(transform));
        world.biases.emplace(code, std::move(bias));
    }

    world.corpus.instances.resize(n);
    for (std::size_t i = 0; i < n; ++i) world.corpus.instances[i].id = static_cast<std::int64_t>(i);
    for (std::size_t l = 0; l < spec.languages.size(); ++l) {
        const auto& code = spec.languages[l].code;
        const Matrix& t = world.transforms.at(code);
        const auto& bias = world.biases.at(code);
        Rng noise(derive_seed(spec.seed, kNoiseStream + l));
        for (std::size_t i = 0; i < n; ++i) {
            Entry entry;
            entry.vec = multiply(t, world.latents.row(i));
            for (std::size_t c = 0; c < d; ++c) {
                entry.vec[c] += bias[c];
                // Draw unconditionally so sigma does not change the stream.
                const double eps = noise.normal();
                if (spec.noise_sigma > 0.0) entry.vec[c] += spec.noise_sigma * eps;
            }
            world.corpus.instances[i].entries.emplace(code, std::move(entry));
        }
    }
    return world;
}

Corpus generate_synthetic_world(const SyntheticWorldSpec& spec) { return generate_world(spec).corpus; }

}  // namespace mwalign
