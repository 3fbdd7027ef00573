#include <algorithm>
#include <map>

#include "mwalign/corpus.hpp"
#include "mwalign/rng.hpp"

namespace mwalign {

namespace {

const std::map<SchemeKind, std::string>& scheme_names() {
    static const std::map<SchemeKind, std::string> names{
        {SchemeKind::full_multiway, "full_multiway"}, {SchemeKind::par_a, "par_a"},
        {SchemeKind::par_b, "par_b"},                 {SchemeKind::eh, "eh"},
        {SchemeKind::eh_euro, "eh_euro"},             {SchemeKind::eh_asian, "eh_asian"},
        {SchemeKind::eh_all, "eh_all"},               {SchemeKind::en_ablate, "en_ablate"},
    };
    return names;
}

std::size_t choose2(std::size_t k) { return k < 2 ? 0 : k * (k - 1) / 2; }

// k distinct items drawn uniformly without replacement (partial Fisher-Yates).
std::vector<std::string> sample_without_replacement(std::vector<std::string> items, std::size_t k, Rng& rng) {
    k = std::min(k, items.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(items[i], items[i + rng.index(items.size() - i)]);
    items.resize(k);
    return items;
}

std::vector<std::string> available(const SemanticInstance& inst, const std::vector<std::string>& codes) {
    std::vector<std::string> out;
    for (const auto& c : codes)
        if (inst.entries.contains(c)) out.push_back(c);
    return out;
}

void require_in_pool(const std::vector<std::string>& trainable, const std::string& code, const char* what) {
    if (std::find(trainable.begin(), trainable.end(), code) == trainable.end())
        throw std::invalid_argument(std::string("scheme ") + what + " language '" + code +
                                    "' is not a training language of the pool");
}

SemanticInstance keep(const SemanticInstance& inst, const std::vector<std::string>& codes) {
    SemanticInstance row;
    row.id = inst.id;
    for (const auto& c : codes) row.entries.emplace(c, inst.entries.at(c));
    return row;
}

}  // namespace

std::string to_string(SchemeKind kind) { return scheme_names().at(kind); }

SchemeKind scheme_kind_from_string(const std::string& name) {
    for (const auto& [kind, n] : scheme_names())
        if (n == name) return kind;
    throw std::invalid_argument("unknown scheme kind '" + name + "'");
}

std::string to_string(TransformKind kind) {
    switch (kind) {
        case TransformKind::rotation: return "rotation";
        case TransformKind::affine: return "affine";
        case TransformKind::identity: return "identity";
    }
    return "?";
}

TransformKind transform_kind_from_string(const std::string& name) {
    if (name == "rotation") return TransformKind::rotation;
    if (name == "affine") return TransformKind::affine;
    if (name == "identity") return TransformKind::identity;
    throw std::invalid_argument("unknown transform kind '" + name + "'");
}

std::size_t SchemeSpec::effective_columns() const {
    if (kind == SchemeKind::par_b || kind == SchemeKind::eh) return 2;
    return columns_per_row;
}

std::size_t count_pairs(const Corpus& rows) {
    std::size_t total = 0;
    for (const auto& inst : rows.instances) total += choose2(inst.entries.size());
    return total;
}

MaterializedRows apply_scheme(const Corpus& corpus, const SchemeSpec& scheme) {
    const std::size_t columns = scheme.effective_columns();
    if (columns < 2) throw std::invalid_argument("columns_per_row must be at least 2");

    const auto pivot = corpus.pivot();
    const auto targets = corpus.codes_with_role(LanguageRole::target);
    std::vector<std::string> trainable = targets;
    if (pivot) trainable.insert(trainable.begin(), *pivot);

    const bool needs_pivot = scheme.kind != SchemeKind::en_ablate;
    if (needs_pivot && !pivot) throw std::invalid_argument("scheme " + to_string(scheme.kind) + " needs a pivot language");
    if (targets.empty()) throw std::invalid_argument("pool has no target languages");

    // Second-and-later columns of the eh family.
    std::vector<std::string> partition;
    const bool eh_family = scheme.kind == SchemeKind::eh || scheme.kind == SchemeKind::eh_euro ||
                           scheme.kind == SchemeKind::eh_asian || scheme.kind == SchemeKind::eh_all;
    if (eh_family) {
        require_in_pool(trainable, scheme.designated, "designated");
        if (scheme.designated == *pivot) throw std::invalid_argument("designated language must differ from the pivot");
        if (scheme.kind == SchemeKind::eh_euro) partition = scheme.euro;
        if (scheme.kind == SchemeKind::eh_asian) partition = scheme.asian;
        if (scheme.kind == SchemeKind::eh_all)
            for (const auto& t : targets)
                if (t != scheme.designated) partition.push_back(t);
        for (const auto& code : partition) {
            require_in_pool(trainable, code, "partition");
            if (code == scheme.designated || code == *pivot)
                throw std::invalid_argument("partition must not contain the pivot or designated language");
        }
        if (scheme.kind != SchemeKind::eh && partition.empty())
            throw std::invalid_argument("scheme " + to_string(scheme.kind) + " has an empty partition");
    }

    Rng rng(scheme.seed);
    std::vector<const SemanticInstance*> source;
    source.reserve(corpus.instances.size());
    for (const auto& inst : corpus.instances) source.push_back(&inst);

    if (scheme.kind == SchemeKind::par_a) {
        // Keep N / C(k,2) instances so the pair budget matches par_b's N pairs.
        rng.shuffle(std::span(source));
        source.resize(source.size() / choose2(columns));
    }

    MaterializedRows out;
    out.rows.pool = corpus.pool;
    out.rows.dim = corpus.dim;
    out.rows.provenance = corpus.provenance;

    for (const SemanticInstance* inst : source) {
        std::vector<std::string> codes;
        switch (scheme.kind) {
            case SchemeKind::full_multiway:
            case SchemeKind::par_a:
            case SchemeKind::par_b: {
                if (!inst->entries.contains(*pivot)) continue;
                codes.push_back(*pivot);
                auto picked = sample_without_replacement(available(*inst, targets), columns - 1, rng);
                codes.insert(codes.end(), picked.begin(), picked.end());
                break;
            }
            case SchemeKind::eh:
            case SchemeKind::eh_euro:
            case SchemeKind::eh_asian:
            case SchemeKind::eh_all: {
                if (!inst->entries.contains(*pivot) || !inst->entries.contains(scheme.designated)) continue;
                codes = {*pivot, scheme.designated};
                if (scheme.kind != SchemeKind::eh) {
                    auto picked = sample_without_replacement(available(*inst, partition), columns - 2, rng);
                    codes.insert(codes.end(), picked.begin(), picked.end());
                }
                break;
            }
            case SchemeKind::en_ablate:
                codes = sample_without_replacement(available(*inst, trainable), columns, rng);
                break;
        }
        if (codes.size() < 2) continue;
        out.rows.instances.push_back(keep(*inst, codes));
    }
    out.pair_count = count_pairs(out.rows);
    return out;
}

}  // namespace mwalign
