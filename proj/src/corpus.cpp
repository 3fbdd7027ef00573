#include "mwalign/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mwalign/rng.hpp"

namespace mwalign {

using nlohmann::json;

const LanguageId* Corpus::find_language(const std::string& code) const {
    for (const auto& lang : pool)
        if (lang.code == code) return &lang;
    return nullptr;
}

std::optional<std::string> Corpus::pivot() const {
    for (const auto& lang : pool)
        if (lang.role == LanguageRole::pivot) return lang.code;
    return std::nullopt;
}

std::vector<std::string> Corpus::codes_with_role(LanguageRole role) const {
    std::vector<std::string> out;
    for (const auto& lang : pool)
        if (lang.role == role) out.push_back(lang.code);
    return out;
}

void Corpus::validate() const {
    std::set<std::string> codes;
    int pivots = 0;
    for (const auto& lang : pool) {
        if (!codes.insert(lang.code).second) throw CorpusError("duplicate language code '" + lang.code + "'");
        if (lang.role == LanguageRole::pivot) ++pivots;
    }
    if (pivots > 1) throw CorpusError("more than one pivot language in pool");

    std::set<std::int64_t> ids;
    for (const auto& inst : instances) {
        if (!ids.insert(inst.id).second)
            throw CorpusError("duplicate instance_id " + std::to_string(inst.id));
        for (const auto& [code, entry] : inst.entries) {
            if (!codes.contains(code))
                throw CorpusError("instance " + std::to_string(inst.id) + " uses language '" + code +
                                  "' absent from pool");
            if (entry.vec.size() != dim)
                throw CorpusError("instance " + std::to_string(inst.id) + " language '" + code +
                                  "' has dimension " + std::to_string(entry.vec.size()) + ", expected " +
                                  std::to_string(dim));
        }
    }
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

Corpus load_corpus(const std::filesystem::path& path, const std::string& pivot) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open corpus file " + path.string());

    Corpus corpus;
    corpus.provenance = Provenance::loaded;
    std::set<std::int64_t> ids;
    std::set<std::string> codes;
    bool have_dim = false;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(line_no);

        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError(where + ": malformed line: " + e.what());
        }
        if (!doc.is_object() || !doc.contains("id") || !doc.contains("entries") ||
            !doc["id"].is_number_integer() || !doc["entries"].is_object())
            throw CorpusError(where + ": expected {\"id\": <int>, \"entries\": {...}}");

        SemanticInstance inst;
        inst.id = doc["id"].get<std::int64_t>();
        if (!ids.insert(inst.id).second)
            throw CorpusError(where + ": duplicate instance_id " + std::to_string(inst.id));

        for (const auto& [code, value] : doc["entries"].items()) {
            if (!value.is_object() || !value.contains("vec") || !value["vec"].is_array())
                throw CorpusError(where + ": entry '" + code + "' lacks a \"vec\" array");
            Entry entry;
            for (const auto& x : value["vec"]) {
                if (!x.is_number()) throw CorpusError(where + ": non-numeric vector component");
                entry.vec.push_back(x.get<double>());
            }
            if (value.contains("text")) {
                if (!value["text"].is_string()) throw CorpusError(where + ": \"text\" must be a string");
                entry.text = value["text"].get<std::string>();
            }
            if (!have_dim) {
                corpus.dim = entry.vec.size();
                have_dim = true;
            } else if (entry.vec.size() != corpus.dim) {
                throw CorpusError(where + ": dimension mismatch: '" + code + "' has " +
                                  std::to_string(entry.vec.size()) + " components, corpus dimension is " +
                                  std::to_string(corpus.dim));
            }
            codes.insert(code);
            inst.entries.emplace(code, std::move(entry));
        }
        corpus.instances.push_back(std::move(inst));
    }

    if (codes.contains(pivot)) corpus.pool.push_back({pivot, LanguageRole::pivot});
    for (const auto& code : codes)
        if (code != pivot) corpus.pool.push_back({code, LanguageRole::target});
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write corpus file " + path.string());
    for (const auto& inst : corpus.instances) {
        json entries = json::object();
        for (const auto& [code, entry] : inst.entries) {
            json e = {{"vec", entry.vec}};
            if (entry.text) e["text"] = *entry.text;
            entries[code] = std::move(e);
        }
        json doc = {{"id", inst.id}, {"entries", std::move(entries)}};
        out << doc.dump() << '\n';
    }
    if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Splits and batches
// ---------------------------------------------------------------------------

DataSplit split_corpus(const Corpus& corpus, double train_fraction, double valid_fraction,
                       std::uint64_t seed) {
    if (train_fraction < 0.0 || valid_fraction < 0.0 || std::abs(train_fraction + valid_fraction - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must be nonnegative and sum to 1");

    DataSplit split;
    split.train_fraction = train_fraction;
    split.valid_fraction = valid_fraction;
    split.seed = seed;

    std::vector<std::int64_t> ids;
    ids.reserve(corpus.instances.size());
    for (const auto& inst : corpus.instances) ids.push_back(inst.id);
    Rng rng(seed);
    rng.shuffle(std::span(ids));

    const auto n = ids.size();
    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
    n_train = std::min(n_train, n);
    if (valid_fraction > 0.0 && n_train == n)
        throw std::invalid_argument("corpus of " + std::to_string(n) + " instances is too small for a nonempty validation split");

    split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.valid.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    return split;
}

Corpus subset(const Corpus& corpus, const std::vector<std::int64_t>& ids) {
    std::map<std::int64_t, std::size_t> index;
    for (std::size_t i = 0; i < corpus.instances.size(); ++i) index.emplace(corpus.instances[i].id, i);
    Corpus out;
    out.pool = corpus.pool;
    out.dim = corpus.dim;
    out.provenance = corpus.provenance;
    out.instances.reserve(ids.size());
    for (auto id : ids) {
        auto it = index.find(id);
        if (it == index.end()) throw CorpusError("instance_id " + std::to_string(id) + " not in corpus");
        out.instances.push_back(corpus.instances[it->second]);
    }
    return out;
}

namespace {

std::vector<Batch> make_batches(const Corpus& rows, const std::vector<std::size_t>& order,
                                std::size_t batch_size) {
    if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t stop = std::min(order.size(), start + batch_size);
        std::size_t sentences = 0;
        for (std::size_t k = start; k < stop; ++k) sentences += rows.instances[order[k]].entries.size();

        Batch batch;
        batch.row_count = stop - start;
        batch.embeddings = Matrix(sentences, rows.dim);
        batch.tags.reserve(sentences);
        std::size_t s = 0;
        for (std::size_t k = start; k < stop; ++k) {
            const auto& inst = rows.instances[order[k]];
            for (const auto& [code, entry] : inst.entries) {
                batch.tags.push_back({inst.id, code});
                std::copy(entry.vec.begin(), entry.vec.end(), batch.embeddings.row(s).begin());
                ++s;
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace

std::vector<Batch> iter_batches(const Corpus& rows, std::size_t batch_size, std::uint64_t epoch_seed) {
    std::vector<std::size_t> order(rows.instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(epoch_seed);
    rng.shuffle(std::span(order));
    return make_batches(rows, order, batch_size);
}

std::vector<Batch> ordered_batches(const Corpus& rows, std::size_t batch_size) {
    std::vector<std::size_t> order(rows.instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    return make_batches(rows, order, batch_size);
}

}  // namespace mwalign
