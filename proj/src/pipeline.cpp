#include "mwalign/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "mwalign/rng.hpp"

namespace mwalign {

using nlohmann::json;

namespace {

constexpr std::uint64_t kEncoderInitTag = 0x1417;

std::string source_name(const RunConfig& cfg) { return cfg.world ? "synthetic" : "corpus"; }

void write_json(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    write_json(to_json(cfg), out_dir / "config.resolved.json");
}

void ensure_dir(const std::filesystem::path& dir) { std::filesystem::create_directories(dir); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Rows of `ids` in language `lang`, as a matrix of base embeddings.
Matrix gather(const Corpus& corpus, const std::vector<std::int64_t>& ids, const std::string& lang) {
    std::map<std::int64_t, const SemanticInstance*> by_id;
    for (const auto& inst : corpus.instances) by_id.emplace(inst.id, &inst);
    Matrix m(ids.size(), corpus.dim);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const auto& vec = by_id.at(ids[r])->entries.at(lang).vec;
        std::copy(vec.begin(), vec.end(), m.row(r).begin());
    }
    return m;
}

std::vector<std::int64_t> common_ids(const Corpus& corpus, const LanguagePair& pair) {
    std::vector<std::int64_t> ids;
    for (const auto& inst : corpus.instances)
        if (inst.entries.contains(pair.first) && inst.entries.contains(pair.second)) ids.push_back(inst.id);
    return ids;
}

std::string pair_name(const LanguagePair& p) { return p.first + "-" + p.second; }

EncoderParams identity_params(const RunConfig& cfg, std::size_t dim) {
    return init_identity(dim, cfg.train.arch, cfg.train.hidden, derive_seed(cfg.train.seed, kEncoderInitTag));
}

EncoderParams resolve_checkpoint(const std::optional<std::filesystem::path>& checkpoint,
                                 const std::filesystem::path& out_dir, const char* command) {
    std::filesystem::path path;
    if (checkpoint)
        path = *checkpoint;
    else if (std::filesystem::exists(out_dir / "checkpoint.json"))
        path = out_dir / "checkpoint.json";
    else
        throw ConfigError(std::string(command) + ": trained embeddings requested but no checkpoint given");
    return load_checkpoint(path);
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg) {
    PreparedData data;
    if (cfg.world) {
        auto world = generate_world(*cfg.world);
        data.full = std::move(world.corpus);
        data.latents = std::move(world.latents);
        data.labels = std::move(world.blob_labels);
    } else {
        data.full = load_corpus(cfg.corpus->path, cfg.pivot);
        for (const auto& code : cfg.corpus->held_out) {
            auto it = std::find_if(data.full.pool.begin(), data.full.pool.end(),
                                   [&](const LanguageId& l) { return l.code == code; });
            if (it == data.full.pool.end()) throw ConfigError("corpus.held_out language '" + code + "' not found in corpus");
            if (it->role == LanguageRole::pivot) throw ConfigError("corpus.held_out must not contain the pivot");
            it->role = LanguageRole::held_out;
        }
    }
    data.full.validate();
    for (std::size_t i = 0; i < data.full.instances.size(); ++i) data.row_of_id.emplace(data.full.instances[i].id, i);

    const std::size_t n = data.full.instances.size();
    if (cfg.eval.instances + 2 > n)
        throw ConfigError("eval.instances=" + std::to_string(cfg.eval.instances) + " leaves fewer than 2 training instances");
    std::vector<std::int64_t> pool_ids, eval_ids;
    for (std::size_t i = 0; i < n; ++i)
        (i < n - cfg.eval.instances ? pool_ids : eval_ids).push_back(data.full.instances[i].id);
    data.pool = subset(data.full, pool_ids);
    data.eval = subset(data.full, eval_ids);

    data.split = split_corpus(data.pool, cfg.train_fraction, cfg.valid_fraction, cfg.split_seed);
    data.train_rows = apply_scheme(subset(data.pool, data.split.train), cfg.scheme);
    SchemeSpec valid_scheme = cfg.scheme;
    valid_scheme.seed = derive_seed(cfg.scheme.seed, 1);
    data.valid_rows = apply_scheme(subset(data.pool, data.split.valid), valid_scheme);
    return data;
}

std::vector<LanguagePair> eval_pairs(const RunConfig& cfg, const Corpus& corpus) {
    if (!cfg.eval.pairs.empty()) {
        for (const auto& [a, b] : cfg.eval.pairs)
            if (!corpus.find_language(a) || !corpus.find_language(b))
                throw ConfigError("eval pair " + a + "-" + b + " references a language absent from the corpus");
        return cfg.eval.pairs;
    }
    std::vector<LanguagePair> out;
    for (const auto& lang : corpus.pool)
        if (lang.code != cfg.pivot) out.emplace_back(cfg.pivot, lang.code);
    return out;
}

std::vector<EvalReport> evaluate_stage(const RunConfig& cfg, const PreparedData& data, const EncoderParams& params,
                                       const std::string& stage) {
    const auto& tasks = cfg.eval.tasks;
    auto wants = [&](const char* task) { return std::find(tasks.begin(), tasks.end(), task) != tasks.end(); };

    std::vector<EvalReport> out;
    auto report = [&](const char* task, const LanguagePair& pair, const char* metric, std::optional<double> value,
                      std::size_t support) {
        EvalReport r;
        r.task = task;
        r.dataset = source_name(cfg) + ":" + stage;
        r.lang_pair = pair_name(pair);
        r.metric = metric;
        r.value = value;
        r.support = support;
        r.scheme = to_string(cfg.scheme.kind);
        r.anchor_mode = to_string(cfg.train.alignment.anchor_mode);
        r.seed = cfg.seed;
        out.push_back(std::move(r));
    };

    for (const auto& pair : eval_pairs(cfg, data.eval)) {
        const auto ids = common_ids(data.eval, pair);
        if (ids.size() < 4) throw std::invalid_argument("eval pair " + pair_name(pair) + " has fewer than 4 instances");
        const Matrix za = forward(params, gather(data.eval, ids, pair.first));
        const Matrix zb = forward(params, gather(data.eval, ids, pair.second));
        const std::size_t half = ids.size() / 2;

        if (wants("bitext")) {
            BitextPair full{{za, ids}, {zb, ids}, {}};
            for (auto id : ids) full.gold.insert({id, id});
            report("bitext", pair, "accuracy", bitext_accuracy(full), ids.size());

            // Threshold tuned on the first half, scored on the second.
            auto slice = [&](std::size_t from, std::size_t to) {
                BitextPair p;
                p.a.vectors = Matrix(to - from, za.cols());
                p.b.vectors = Matrix(to - from, zb.cols());
                for (std::size_t r = from; r < to; ++r) {
                    std::copy(za.row(r).begin(), za.row(r).end(), p.a.vectors.row(r - from).begin());
                    std::copy(zb.row(r).begin(), zb.row(r).end(), p.b.vectors.row(r - from).begin());
                    p.a.ids.push_back(ids[r]);
                    p.b.ids.push_back(ids[r]);
                    p.gold.insert({ids[r], ids[r]});
                }
                return p;
            };
            const BitextPair dev = slice(0, half);
            const BitextPair test = slice(half, ids.size());
            const auto f1 = bitext_f1(test, ThresholdPolicy::dev_tuned(dev));
            report("bitext", pair, "f1", f1.f1, ids.size() - half);
            report("bitext", pair, "precision", f1.precision, ids.size() - half);
            report("bitext", pair, "recall", f1.recall, ids.size() - half);
        }

        if (wants("sts") && data.has_latents() && cfg.eval.sts_pairs > 0) {
            Rng rng(cfg.eval.seed);
            Matrix a(cfg.eval.sts_pairs, za.cols()), b(cfg.eval.sts_pairs, zb.cols());
            std::vector<double> gold(cfg.eval.sts_pairs);
            for (std::size_t k = 0; k < cfg.eval.sts_pairs; ++k) {
                const std::size_t i = rng.index(ids.size());
                std::size_t j = rng.index(ids.size() - 1);
                if (j >= i) ++j;
                std::copy(za.row(i).begin(), za.row(i).end(), a.row(k).begin());
                std::copy(zb.row(j).begin(), zb.row(j).end(), b.row(k).begin());
                const auto si = data.latents.row(data.row_of_id.at(ids[i]));
                const auto sj = data.latents.row(data.row_of_id.at(ids[j]));
                gold[k] = dot(si, sj) / (norm(si) * norm(sj));
            }
            const auto r = sts_eval(a, b, gold);
            report("sts", pair, "spearman", r.value, r.support);
        }

        std::vector<int> labels;
        if (data.has_latents())
            for (auto id : ids) labels.push_back(data.labels[data.row_of_id.at(id)]);

        if (wants("classification") && !labels.empty()) {
            // Cross-lingual transfer: fit on the first language, test on the second.
            LabeledEmbeddings train_set, test_set;
            train_set.vectors = Matrix(half, za.cols());
            test_set.vectors = Matrix(ids.size() - half, zb.cols());
            for (std::size_t r = 0; r < ids.size(); ++r) {
                auto& dst = r < half ? train_set : test_set;
                const auto src = r < half ? za.row(r) : zb.row(r);
                const std::size_t row = r < half ? r : r - half;
                std::copy(src.begin(), src.end(), dst.vectors.row(row).begin());
                if (cfg.eval.normalize_for_classification) {
                    const double len = norm(dst.vectors.row(row));
                    for (double& v : dst.vectors.row(row)) v /= len;
                }
                dst.labels.push_back(labels[r]);
            }
            const std::set<int> classes(train_set.labels.begin(), train_set.labels.end());
            std::optional<double> acc;
            if (classes.size() >= 2) acc = logreg_classify(train_set, test_set, 100);
            report("classification", pair, "accuracy", acc, test_set.labels.size());
        }

        if (wants("clustering") && !labels.empty()) {
            Matrix both(2 * ids.size(), za.cols());
            std::vector<int> gold;
            for (std::size_t r = 0; r < ids.size(); ++r) {
                std::copy(za.row(r).begin(), za.row(r).end(), both.row(r).begin());
                std::copy(zb.row(r).begin(), zb.row(r).end(), both.row(ids.size() + r).begin());
            }
            gold.insert(gold.end(), labels.begin(), labels.end());
            gold.insert(gold.end(), labels.begin(), labels.end());
            const std::size_t k = std::set<int>(labels.begin(), labels.end()).size();
            const auto clusters = minibatch_kmeans(both, k, 32, cfg.eval.seed, 100);
            report("clustering", pair, "v_measure", v_measure(gold, clusters), gold.size());
        }
    }
    return out;
}

RunMetrics summarize(const RunConfig& cfg, const PreparedData& data, const std::vector<EvalReport>& reports) {
    RunMetrics m;
    std::map<std::string, std::vector<double>> trained, held;
    const std::string prefix = cfg.pivot + "-";
    for (const auto& r : reports) {
        if (!r.value || r.lang_pair.rfind(prefix, 0) != 0) continue;
        std::string base;
        if (r.task == "bitext" && r.metric == "accuracy") base = "bitext_accuracy";
        else if (r.task == "bitext" && r.metric == "f1") base = "bitext_f1";
        else if (r.task == "sts") base = "sts";
        else if (r.task == "classification") base = "classification";
        else if (r.task == "clustering") base = "clustering";
        else continue;
        const std::string other = r.lang_pair.substr(prefix.size());
        m[base + "_" + other] = *r.value;
        const LanguageId* lang = data.full.find_language(other);
        if (lang && lang->role == LanguageRole::target) trained[base].push_back(*r.value);
        if (lang && lang->role == LanguageRole::held_out) held[base].push_back(*r.value);
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    for (const auto& [base, v] : trained) m[base + "_mean"] = mean(v);
    for (const auto& [base, v] : held) m[base + "_held_out"] = mean(v);
    return m;
}

std::vector<HistogramOutcome> compute_histograms(const RunConfig& cfg, const PreparedData& data,
                                                 const EncoderParams& trained, const std::vector<LanguagePair>& pairs) {
    const EncoderParams base = identity_params(cfg, data.full.dim);
    std::vector<HistogramOutcome> out;
    for (const auto& pair : pairs) {
        const auto ids = common_ids(data.eval, pair);
        const Matrix xa = gather(data.eval, ids, pair.first);
        const Matrix xb = gather(data.eval, ids, pair.second);
        HistogramOutcome h;
        h.pair = pair;
        h.before = histogram_separation(forward(base, xa), forward(base, xb), cfg.eval.hist_n, cfg.eval.seed);
        h.after = histogram_separation(forward(trained, xa), forward(trained, xb), cfg.eval.hist_n, cfg.eval.seed);
        out.push_back(std::move(h));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

RunConfig variant_config(const RunConfig& base, const std::string& variant, std::uint64_t seed) {
    RunConfig c = reseeded(base, seed);
    c.train.alignment.anchor_mode = AnchorMode::all_languages;
    if (variant == "aligned") {
        c.scheme.kind = SchemeKind::full_multiway;
    } else if (variant == "en_anchor") {
        c.scheme.kind = SchemeKind::full_multiway;
        c.train.alignment.anchor_mode = AnchorMode::pivot_only;
    } else {
        try {
            c.scheme.kind = scheme_kind_from_string(variant);
        } catch (const std::invalid_argument&) {
            throw ConfigError("unknown ablation variant '" + variant + "'");
        }
        if (c.scheme.kind == SchemeKind::full_multiway) throw ConfigError("use 'aligned' for the full_multiway variant");
    }
    return c;
}

std::vector<double> AblationOutcome::metric_by_seed(const std::string& variant, const std::string& metric) const {
    std::vector<double> out;
    for (const auto& run : runs) {
        if (run.variant != variant) continue;
        auto it = run.metrics.find(metric);
        if (it == run.metrics.end())
            throw std::invalid_argument("metric '" + metric + "' missing for variant " + variant);
        out.push_back(it->second);
    }
    return out;
}

double AblationOutcome::mean(const std::string& variant, const std::string& metric) const {
    const auto v = metric_by_seed(variant, metric);
    if (v.empty()) throw std::invalid_argument("no runs for variant " + variant);
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

ComparisonRow compare(const AblationOutcome& outcome, const std::string& candidate, const std::string& baseline,
                      const std::string& metric) {
    // Pairing requires each seed's runs to share the world and eval split.
    std::map<std::uint64_t, const VariantRun*> base_runs;
    for (const auto& r : outcome.runs)
        if (r.variant == baseline) base_runs[r.seed] = &r;
    for (const auto& r : outcome.runs) {
        if (r.variant != candidate) continue;
        auto it = base_runs.find(r.seed);
        if (it == base_runs.end()) throw std::logic_error("comparison " + candidate + " vs " + baseline + " lacks seed " + std::to_string(r.seed));
        if (it->second->world_seed != r.world_seed || it->second->eval_ids != r.eval_ids)
            throw std::logic_error("comparison " + candidate + " vs " + baseline + " is not paired");
    }

    ComparisonRow row;
    row.candidate = candidate;
    row.baseline = baseline;
    row.metric = metric;
    const auto ys = outcome.metric_by_seed(candidate, metric);
    const auto xs = outcome.metric_by_seed(baseline, metric);
    row.mean_candidate = outcome.mean(candidate, metric);
    row.mean_baseline = outcome.mean(baseline, metric);
    row.difference = row.mean_candidate - row.mean_baseline;
    try {
        row.test = paired_tests(xs, ys);
        row.status = "ok";
    } catch (const NoDifference&) {
        row.status = "no_difference";
    } catch (const std::invalid_argument&) {
        row.status = "too_few_differences";
    }
    return row;
}

AblationOutcome run_ablation(const RunConfig& cfg) {
    if (cfg.ablation.seeds.size() < 2) throw ConfigError("ablation needs at least 2 seeds for paired tests");
    AblationOutcome outcome;
    for (std::uint64_t seed : cfg.ablation.seeds) {
        for (const auto& variant : cfg.ablation.variants) {
            const RunConfig vc = variant_config(cfg, variant, seed);
            const PreparedData data = prepare_data(vc);
            const auto result = train(data.train_rows.rows, data.valid_rows.rows, vc.train);

            VariantRun run;
            run.variant = variant;
            run.seed = seed;
            run.world_seed = vc.world ? vc.world->seed : 0;
            for (const auto& inst : data.eval.instances) run.eval_ids.push_back(inst.id);
            run.rows = data.train_rows.rows.instances.size();
            run.pair_count = data.train_rows.pair_count;
            run.reports = evaluate_stage(vc, data, result.params, "after");
            run.metrics = summarize(vc, data, run.reports);
            outcome.runs.push_back(std::move(run));
        }
    }
    for (const auto& [candidate, baseline] : cfg.ablation.comparisons)
        for (const auto& metric : cfg.ablation.metrics) outcome.summary.push_back(compare(outcome, candidate, baseline, metric));
    return outcome;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_gen(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    if (!cfg.world) throw ConfigError("gen needs a 'world' section");
    ensure_dir(out_dir);
    const auto world = generate_world(*cfg.world);
    write_corpus(world.corpus, out_dir / "world.jsonl");

    json languages = json::array();
    for (const auto& l : world.corpus.pool) {
        const char* role = l.role == LanguageRole::pivot ? "pivot" : l.role == LanguageRole::target ? "target" : "held_out";
        languages.push_back({{"code", l.code}, {"role", role}});
    }
    const std::size_t n = world.corpus.instances.size();
    json manifest = {{"file", "world.jsonl"},
                     {"num_instances", n},
                     {"dim", world.corpus.dim},
                     {"seed", cfg.world->seed},
                     {"languages", languages},
                     {"held_out", cfg.world->held_out()},
                     {"eval_instances", cfg.eval.instances},
                     {"spec", to_json(cfg)["world"]}};
    write_json(manifest, out_dir / "manifest.json");
    write_resolved_config(cfg, out_dir);
}

TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    ensure_dir(out_dir);
    write_resolved_config(cfg, out_dir);
    const PreparedData data = prepare_data(cfg);
    auto result = train(data.train_rows.rows, data.valid_rows.rows, cfg.train);
    save_checkpoint(result.params, out_dir / "checkpoint.json");
    write_history_csv(result.state, out_dir / "history.csv");
    json summary = {{"train_rows", data.train_rows.rows.instances.size()},
                    {"train_pairs", data.train_rows.pair_count},
                    {"valid_rows", data.valid_rows.rows.instances.size()},
                    {"epochs_run", result.state.history.size() - 1},
                    {"best_epoch", result.state.best_epoch},
                    {"best_valid_loss", result.state.best_valid_loss},
                    {"skipped_batches", result.state.skipped_batches}};
    write_json(summary, out_dir / "train_summary.json");
    return result;
}

std::vector<EvalReport> cmd_eval(const RunConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                                 const std::filesystem::path& out_dir) {
    ensure_dir(out_dir);
    const auto& stages = cfg.eval.stages;
    const bool want_after = std::find(stages.begin(), stages.end(), "after") != stages.end();
    std::optional<EncoderParams> trained;
    if (want_after) trained = resolve_checkpoint(checkpoint, out_dir, "eval");

    write_resolved_config(cfg, out_dir);
    const PreparedData data = prepare_data(cfg);
    std::vector<EvalReport> rows;
    for (const auto& stage : stages) {
        const EncoderParams params = stage == "after" ? *trained : identity_params(cfg, data.full.dim);
        auto part = evaluate_stage(cfg, data, params, stage);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    write_report_csv(rows, out_dir / "results.csv");
    return rows;
}

std::vector<HistogramOutcome> cmd_hist(const RunConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                                       const std::filesystem::path& out_dir) {
    ensure_dir(out_dir);
    const EncoderParams trained = resolve_checkpoint(checkpoint, out_dir, "hist");
    write_resolved_config(cfg, out_dir);
    const PreparedData data = prepare_data(cfg);
    const auto outcomes = compute_histograms(cfg, data, trained, eval_pairs(cfg, data.eval));

    std::ofstream sep(out_dir / "separation.csv", std::ios::binary);
    if (!sep) throw std::ios_base::failure("cannot write separation.csv");
    sep << "lang_pair,stage,separation\n";
    for (const auto& h : outcomes) {
        const std::string name = pair_name(h.pair);
        write_histogram_csv(h.before, out_dir / ("hist_" + name + "_before.csv"));
        write_histogram_csv(h.after, out_dir / ("hist_" + name + "_after.csv"));
        sep << name << ",before," << fmt(h.before.separation) << '\n';
        sep << name << ",after," << fmt(h.after.separation) << '\n';
    }
    return outcomes;
}

AblationOutcome cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    ensure_dir(out_dir);
    write_resolved_config(cfg, out_dir);
    auto outcome = run_ablation(cfg);

    std::vector<EvalReport> all;
    for (const auto& run : outcome.runs) {
        for (auto r : run.reports) {
            r.dataset += "/" + run.variant;
            all.push_back(std::move(r));
        }
    }
    write_report_csv(all, out_dir / "ablation_results.csv");

    std::ofstream budgets(out_dir / "ablation_budgets.csv", std::ios::binary);
    if (!budgets) throw std::ios_base::failure("cannot write ablation_budgets.csv");
    budgets << "variant,seed,rows,pair_count\n";
    for (const auto& run : outcome.runs)
        budgets << run.variant << ',' << run.seed << ',' << run.rows << ',' << run.pair_count << '\n';

    std::ofstream summary(out_dir / "ablation_summary.csv", std::ios::binary);
    if (!summary) throw std::ios_base::failure("cannot write ablation_summary.csv");
    summary << "candidate,baseline,metric,mean_candidate,mean_baseline,difference,t_statistic,t_pvalue,wilcoxon_w,"
               "wilcoxon_pvalue,n,status\n";
    for (const auto& row : outcome.summary) {
        summary << row.candidate << ',' << row.baseline << ',' << row.metric << ',' << fmt(row.mean_candidate) << ','
                << fmt(row.mean_baseline) << ',' << fmt(row.difference) << ',';
        if (row.test) {
            summary << fmt(row.test->t_statistic) << ',' << fmt(row.test->t_pvalue) << ',' << fmt(row.test->wilcoxon_w)
                    << ',' << fmt(row.test->wilcoxon_pvalue) << ',' << row.test->n_nonzero;
        } else {
            summary << ",,,,0";
        }
        summary << ',' << row.status << '\n';
    }
    return outcome;
}

}  // namespace mwalign
