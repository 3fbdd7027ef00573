#include "mwalign/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "mwalign/rng.hpp"

namespace mwalign {

using nlohmann::json;

namespace {

enum SeedTag : std::uint64_t { kWorldSeed = 1, kSchemeSeed = 2, kTrainSeed = 3, kSplitSeed = 4, kEvalSeed = 5 };

// Object reader that rejects keys nobody asked for.
class Section {
public:
    Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
        if (!doc_.is_object()) throw ConfigError(name_ + " must be a JSON object");
    }

    bool has(const std::string& key) {
        used_.insert(key);
        return doc_.contains(key);
    }

    template <typename T>
    std::optional<T> get(const std::string& key) {
        if (!has(key)) return std::nullopt;
        try {
            return doc_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }

    template <typename T>
    T get_or(const std::string& key, T fallback) {
        auto v = get<T>(key);
        return v ? *v : fallback;
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return doc_.at(key);
    }

    void finish() const {
        for (const auto& [key, _] : doc_.items())
            if (!used_.contains(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }

private:
    const json& doc_;
    std::string name_;
    std::set<std::string> used_;
};

template <typename Fn>
auto convert(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

std::vector<LanguagePair> parse_pairs(const std::vector<std::vector<std::string>>& raw, const std::string& where) {
    std::vector<LanguagePair> out;
    for (const auto& p : raw) {
        if (p.size() != 2) throw ConfigError(where + ": each entry must be a 2-element array");
        out.emplace_back(p[0], p[1]);
    }
    return out;
}

json pairs_to_json(const std::vector<LanguagePair>& pairs) {
    json out = json::array();
    for (const auto& [a, b] : pairs) out.push_back({a, b});
    return out;
}

void parse_world(Section& s, RunConfig& cfg, std::uint64_t seed) {
    SyntheticWorldSpec w;
    w.num_instances = s.get_or<std::size_t>("num_instances", w.num_instances);
    w.dim = s.get_or<std::size_t>("dim", w.dim);
    const auto codes = s.get_or<std::vector<std::string>>("languages", {"en", "fr", "de", "es", "zh", "ja", "hi"});
    cfg.pivot = s.get_or<std::string>("pivot", cfg.pivot);
    const auto held = s.get_or<std::vector<std::string>>("held_out", {});
    const std::set<std::string> held_set(held.begin(), held.end());
    if (held_set.contains(cfg.pivot)) throw ConfigError("world.held_out must not contain the pivot");
    for (const auto& h : held)
        if (std::find(codes.begin(), codes.end(), h) == codes.end())
            throw ConfigError("world.held_out language '" + h + "' is not in world.languages");
    if (std::find(codes.begin(), codes.end(), cfg.pivot) == codes.end())
        throw ConfigError("pivot '" + cfg.pivot + "' is not in world.languages");
    for (const auto& c : codes) {
        LanguageRole role = LanguageRole::target;
        if (c == cfg.pivot) role = LanguageRole::pivot;
        if (held_set.contains(c)) role = LanguageRole::held_out;
        w.languages.push_back({c, role});
    }
    w.transform = convert("world.transform", [&] {
        return transform_kind_from_string(s.get_or<std::string>("transform", to_string(w.transform)));
    });
    w.noise_sigma = s.get_or<double>("noise_sigma", w.noise_sigma);
    w.seed = s.get_or<std::uint64_t>("seed", derive_seed(seed, kWorldSeed));
    w.shared_dims = s.get_or<std::size_t>("shared_dims", w.dim / 2);
    w.num_blobs = s.get_or<std::size_t>("num_blobs", w.num_blobs);
    w.bias_scale = s.get_or<double>("bias_scale", w.bias_scale);
    s.finish();
    convert("world", [&] {
        w.validate();
        return 0;
    });
    cfg.world = std::move(w);
}

}  // namespace

RunConfig parse_run_config(const json& doc, std::optional<std::uint64_t> seed_override) {
    Section root(doc, "config");
    RunConfig cfg;
    cfg.seed = root.get_or<std::uint64_t>("seed", 0);
    if (seed_override) cfg.seed = *seed_override;
    const std::uint64_t seed = cfg.seed;
    cfg.output_dir = root.get_or<std::string>("output_dir", cfg.output_dir.string());

    const bool has_world = root.has("world");
    const bool has_corpus = root.has("corpus");
    if (has_world == has_corpus) throw ConfigError("config needs exactly one of 'world' or 'corpus'");
    if (has_world) {
        Section s(root.raw("world"), "world");
        parse_world(s, cfg, seed);
    } else {
        Section s(root.raw("corpus"), "corpus");
        CorpusSource src;
        const auto path = s.get<std::string>("path");
        if (!path) throw ConfigError("corpus.path is required");
        src.path = *path;
        cfg.pivot = s.get_or<std::string>("pivot", cfg.pivot);
        src.held_out = s.get_or<std::vector<std::string>>("held_out", {});
        s.finish();
        cfg.corpus = std::move(src);
    }

    if (root.has("split")) {
        Section s(root.raw("split"), "split");
        cfg.train_fraction = s.get_or<double>("train", cfg.train_fraction);
        cfg.valid_fraction = s.get_or<double>("valid", cfg.valid_fraction);
        cfg.split_seed = s.get_or<std::uint64_t>("seed", derive_seed(seed, kSplitSeed));
        s.finish();
    } else {
        cfg.split_seed = derive_seed(seed, kSplitSeed);
    }

    cfg.scheme.seed = derive_seed(seed, kSchemeSeed);
    if (root.has("scheme")) {
        Section s(root.raw("scheme"), "scheme");
        auto& sc = cfg.scheme;
        sc.kind = convert("scheme.kind", [&] { return scheme_kind_from_string(s.get_or<std::string>("kind", to_string(sc.kind))); });
        sc.columns_per_row = s.get_or<std::size_t>("columns_per_row", sc.columns_per_row);
        sc.euro = s.get_or<std::vector<std::string>>("euro", sc.euro);
        sc.asian = s.get_or<std::vector<std::string>>("asian", sc.asian);
        sc.designated = s.get_or<std::string>("designated", sc.designated);
        sc.seed = s.get_or<std::uint64_t>("seed", sc.seed);
        s.finish();
    }
    if (cfg.scheme.effective_columns() < 2) throw ConfigError("scheme.columns_per_row must be at least 2");

    auto& tr = cfg.train;
    tr.seed = derive_seed(seed, kTrainSeed);
    if (root.has("train")) {
        Section s(root.raw("train"), "train");
        tr.epochs = s.get_or<std::size_t>("epochs", tr.epochs);
        tr.patience = s.get_or<std::size_t>("patience", tr.patience);
        tr.batch_size = s.get_or<std::size_t>("batch_size", tr.batch_size);
        tr.learning_rate = s.get_or<double>("learning_rate", tr.learning_rate);
        tr.optimizer = convert("train.optimizer", [&] { return optimizer_from_string(s.get_or<std::string>("optimizer", to_string(tr.optimizer))); });
        tr.adam_beta1 = s.get_or<double>("adam_beta1", tr.adam_beta1);
        tr.adam_beta2 = s.get_or<double>("adam_beta2", tr.adam_beta2);
        tr.adam_epsilon = s.get_or<double>("adam_epsilon", tr.adam_epsilon);
        tr.clip_norm = s.get_or<double>("clip_norm", tr.clip_norm);
        tr.seed = s.get_or<std::uint64_t>("seed", tr.seed);
        tr.arch = convert("train.arch", [&] { return encoder_arch_from_string(s.get_or<std::string>("arch", to_string(tr.arch))); });
        tr.hidden = s.get_or<std::size_t>("hidden", tr.hidden);
        s.finish();
    }

    auto& al = tr.alignment;
    if (root.has("alignment")) {
        Section s(root.raw("alignment"), "alignment");
        al.tau = s.get_or<double>("tau", al.tau);
        al.lambda = s.get_or<double>("lambda", al.lambda);
        al.anchor_mode = convert("alignment.anchor_mode", [&] { return anchor_mode_from_string(s.get_or<std::string>("anchor_mode", to_string(al.anchor_mode))); });
        al.boost = s.get_or<bool>("boost", al.boost);
        al.normalize_for_logits = s.get_or<bool>("normalize_for_logits", al.normalize_for_logits);
        al.denominator = convert("alignment.denominator", [&] { return denominator_from_string(s.get_or<std::string>("denominator", to_string(al.denominator))); });
        s.finish();
    }
    al.pivot = cfg.pivot;
    convert("train", [&] {
        tr.validate();
        return 0;
    });

    cfg.eval.seed = derive_seed(seed, kEvalSeed);
    if (root.has("eval")) {
        Section s(root.raw("eval"), "eval");
        auto& ev = cfg.eval;
        ev.instances = s.get_or<std::size_t>("instances", ev.instances);
        ev.tasks = s.get_or<std::vector<std::string>>("tasks", ev.tasks);
        if (s.has("pairs")) ev.pairs = parse_pairs(s.get<std::vector<std::vector<std::string>>>("pairs").value(), "eval.pairs");
        ev.sts_pairs = s.get_or<std::size_t>("sts_pairs", ev.sts_pairs);
        ev.hist_n = s.get_or<std::size_t>("hist_n", ev.hist_n);
        ev.stages = s.get_or<std::vector<std::string>>("stages", ev.stages);
        ev.normalize_for_classification = s.get_or<bool>("normalize_for_classification", ev.normalize_for_classification);
        ev.seed = s.get_or<std::uint64_t>("seed", ev.seed);
        s.finish();
        static const std::set<std::string> known_tasks{"bitext", "sts", "classification", "clustering"};
        for (const auto& t : ev.tasks)
            if (!known_tasks.contains(t)) throw ConfigError("eval.tasks: unknown task '" + t + "'");
        for (const auto& st : ev.stages)
            if (st != "before" && st != "after") throw ConfigError("eval.stages: unknown stage '" + st + "'");
    }

    if (root.has("ablation")) {
        Section s(root.raw("ablation"), "ablation");
        auto& ab = cfg.ablation;
        ab.variants = s.get_or<std::vector<std::string>>("variants", ab.variants);
        ab.seeds = s.get_or<std::vector<std::uint64_t>>("seeds", ab.seeds);
        if (s.has("comparisons"))
            ab.comparisons = parse_pairs(s.get<std::vector<std::vector<std::string>>>("comparisons").value(), "ablation.comparisons");
        ab.metrics = s.get_or<std::vector<std::string>>("metrics", ab.metrics);
        s.finish();
    }
    root.finish();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(doc, seed_override);
}

json to_json(const RunConfig& cfg) {
    json doc;
    doc["seed"] = cfg.seed;
    doc["output_dir"] = cfg.output_dir.string();
    if (cfg.world) {
        const auto& w = *cfg.world;
        std::vector<std::string> codes;
        for (const auto& l : w.languages) codes.push_back(l.code);
        doc["world"] = {{"num_instances", w.num_instances}, {"dim", w.dim},
                        {"languages", codes},               {"pivot", cfg.pivot},
                        {"held_out", w.held_out()},         {"transform", to_string(w.transform)},
                        {"noise_sigma", w.noise_sigma},     {"seed", w.seed},
                        {"shared_dims", w.shared_dims},     {"num_blobs", w.num_blobs},
                        {"bias_scale", w.bias_scale}};
    } else {
        doc["corpus"] = {{"path", cfg.corpus->path.string()}, {"pivot", cfg.pivot}, {"held_out", cfg.corpus->held_out}};
    }
    doc["split"] = {{"train", cfg.train_fraction}, {"valid", cfg.valid_fraction}, {"seed", cfg.split_seed}};
    const auto& sc = cfg.scheme;
    doc["scheme"] = {{"kind", to_string(sc.kind)}, {"columns_per_row", sc.columns_per_row}, {"euro", sc.euro},
                     {"asian", sc.asian},          {"designated", sc.designated},          {"seed", sc.seed}};
    const auto& tr = cfg.train;
    doc["train"] = {{"epochs", tr.epochs},         {"patience", tr.patience},
                    {"batch_size", tr.batch_size}, {"learning_rate", tr.learning_rate},
                    {"optimizer", to_string(tr.optimizer)},
                    {"adam_beta1", tr.adam_beta1}, {"adam_beta2", tr.adam_beta2},
                    {"adam_epsilon", tr.adam_epsilon},
                    {"clip_norm", tr.clip_norm},   {"seed", tr.seed},
                    {"arch", to_string(tr.arch)},  {"hidden", tr.hidden}};
    const auto& al = tr.alignment;
    doc["alignment"] = {{"tau", al.tau},
                        {"lambda", al.lambda},
                        {"anchor_mode", to_string(al.anchor_mode)},
                        {"boost", al.boost},
                        {"normalize_for_logits", al.normalize_for_logits},
                        {"denominator", to_string(al.denominator)}};
    const auto& ev = cfg.eval;
    doc["eval"] = {{"instances", ev.instances}, {"tasks", ev.tasks}, {"pairs", pairs_to_json(ev.pairs)},
                   {"sts_pairs", ev.sts_pairs}, {"hist_n", ev.hist_n}, {"stages", ev.stages},
                   {"normalize_for_classification", ev.normalize_for_classification}, {"seed", ev.seed}};
    const auto& ab = cfg.ablation;
    doc["ablation"] = {{"variants", ab.variants}, {"seeds", ab.seeds},
                       {"comparisons", pairs_to_json(ab.comparisons)}, {"metrics", ab.metrics}};
    return doc;
}

RunConfig reseeded(const RunConfig& cfg, std::uint64_t seed) {
    RunConfig out = cfg;
    out.seed = seed;
    if (out.world) out.world->seed = derive_seed(seed, kWorldSeed);
    out.scheme.seed = derive_seed(seed, kSchemeSeed);
    out.train.seed = derive_seed(seed, kTrainSeed);
    out.split_seed = derive_seed(seed, kSplitSeed);
    out.eval.seed = derive_seed(seed, kEvalSeed);
    return out;
}

}  // namespace mwalign
