#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/config.hpp"
#include "lexprobe/corpus.hpp"
#include "lexprobe/embedding_probes.hpp"
#include "lexprobe/freq_analysis.hpp"
#include "lexprobe/lemma_stats.hpp"
#include "lexprobe/metrics.hpp"
#include "lexprobe/report.hpp"
#include "lexprobe/runner.hpp"
#include "lexprobe/split_builder.hpp"

namespace lexprobe {

namespace fs = std::filesystem;

/// Paths of every artifact under the work directory.
struct WorkLayout {
    fs::path root;

    fs::path splits() const { return root / "splits"; }
    fs::path results() const { return root / "results"; }
    fs::path report() const { return root / "report"; }
    fs::path model() const { return root / "model"; }
    fs::path predictions() const { return root / "predictions"; }
    fs::path embeddings() const { return root / "embeddings"; }
    fs::path stages() const { return root / "stages"; }
    fs::path logs() const { return root / "logs"; }
    fs::path runner_configs() const { return root / "runner"; }

    fs::path manifest() const { return splits() / "manifest.json"; }
    fs::path split_stats() const { return splits() / "stats.json"; }
    fs::path filtered_train() const { return splits() / "filtered_train.jsonl"; }
    fs::path filtered_train_masked() const { return splits() / "filtered_train.masked.jsonl"; }
    fs::path train_masked() const { return splits() / "train.masked.jsonl"; }
    fs::path eval_set(const std::string& set, bool masked = false) const {
        return splits() / (set + (masked ? "_eval.masked.jsonl" : "_eval.jsonl"));
    }
    fs::path scores() const { return results() / "scores.tsv"; }
    fs::path geometry() const { return results() / "geometry.tsv"; }
    fs::path correlation() const { return results() / "correlation.tsv"; }
    fs::path sweep() const { return results() / "sweep.tsv"; }
    fs::path per_lemma(const std::string& condition, const std::string& set) const {
        return results() / ("per_lemma_" + condition + "_" + set + ".tsv");
    }
};

inline const std::vector<std::string>& eval_set_names() {
    static const std::vector<std::string> names = {"exposed", "held_out"};
    return names;
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Fn>
auto read_optional(const fs::path& path, Fn&& parse) -> std::optional<decltype(parse(std::declval<std::istream&>()))> {
    if (!fs::is_regular_file(path)) return std::nullopt;
    std::ifstream in(path);
    return parse(in);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// stats

struct StatsResult {
    DatasetStats stats;
    LemmaTable table;
};

inline StatsResult cmd_stats(const fs::path& corpus_path, const ParseOptions& opts = {}) {
    const auto corpus = read_corpus_file(corpus_path, corpus_path.stem().string(), opts);
    return {corpus_stats(corpus), build_lemma_table(corpus)};
}

// ---------------------------------------------------------------------------
// split

struct SplitResult {
    SplitManifest manifest;
    DatasetStats train, test, filtered_train, held_out_eval, exposed_eval;
};

/// Provenance hash over split parameters and the content of both corpora.
inline std::string split_provenance(const PipelineConfig& cfg) {
    std::uint64_t h = fnv1a64(split_parameters(cfg));
    h = fnv1a64(hex64(file_digest(cfg.train)), h);
    h = fnv1a64(hex64(file_digest(cfg.test)), h);
    return hex64(h);
}

/// Builds every split and writes it under work/splits. Files are staged in a
/// sibling directory and moved into place only when all of them succeed.
inline SplitResult cmd_split(const PipelineConfig& cfg) {
    validate_config(cfg);
    const WorkLayout layout{cfg.work_dir};
    ParseOptions opts;
    opts.pos_filter = cfg.pos_filter;
    const auto train = read_corpus_file(cfg.train, "train", opts);
    const auto test = read_corpus_file(cfg.test, "test", opts);

    const auto train_table = build_lemma_table(train);
    const auto test_table = build_lemma_table(test);
    const auto held_out = select_held_out(train_table, cfg.min_freq_heldout);
    const auto exposed = select_exposed(train_table, test_table, held_out, cfg.min_freq_exposed);
    const auto filtered = build_filtered_train(train, held_out);
    const auto held_out_eval = stratified_downsample(train, held_out, cfg.n_heldout, cfg.seed);
    const auto exposed_eval = stratified_downsample(test, exposed, cfg.n_exposed, cfg.seed);

    SplitResult result;
    result.manifest = build_manifest(
        {train, test, held_out, exposed, filtered, held_out_eval, exposed_eval, cfg.seed, split_provenance(cfg)});
    result.train = corpus_stats(train);
    result.test = corpus_stats(test);
    result.filtered_train = corpus_stats(filtered);
    result.held_out_eval = corpus_stats(held_out_eval.instances);
    result.exposed_eval = corpus_stats(exposed_eval.instances);

    const fs::path staging = layout.root / "splits.tmp";
    fs::remove_all(staging);
    try {
        fs::create_directories(staging);
        detail::write_text(staging / "manifest.json", serialize_manifest(result.manifest));
        const nlohmann::json stats = {{"train", stats_json(result.train)},
                                      {"test", stats_json(result.test)},
                                      {"filtered_train", stats_json(result.filtered_train)},
                                      {"held_out_eval", stats_json(result.held_out_eval)},
                                      {"exposed_eval", stats_json(result.exposed_eval)}};
        detail::write_text(staging / "stats.json", stats.dump(2) + "\n");
        write_corpus_file(staging / "filtered_train.jsonl", filtered.instances);
        const auto masked_train = emit_masked_variant(EvalSet{filtered.instances, 0, cfg.seed, false}, cfg.mask_token);
        write_corpus_file(staging / "filtered_train.masked.jsonl", masked_train.instances);
        const auto masked_full_train = emit_masked_variant(EvalSet{train.instances, 0, cfg.seed, false}, cfg.mask_token);
        write_corpus_file(staging / "train.masked.jsonl", masked_full_train.instances);
        for (const auto& [name, eval] : {std::pair<std::string, const EvalSet*>{"held_out", &held_out_eval},
                                         {"exposed", &exposed_eval}}) {
            write_corpus_file(staging / (name + "_eval.jsonl"), eval->instances);
            write_corpus_file(staging / (name + "_eval.masked.jsonl"),
                              emit_masked_variant(*eval, cfg.mask_token).instances);
        }
        {
            std::ofstream out(staging / "train_lemmas.tsv", std::ios::binary);
            write_lemma_table_tsv(out, train_table);
        }
        {
            std::ofstream out(staging / "test_lemmas.tsv", std::ios::binary);
            write_lemma_table_tsv(out, test_table);
        }
        fs::remove_all(layout.splits());
        fs::rename(staging, layout.splits());
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
    return result;
}

// ---------------------------------------------------------------------------
// score

struct ScoreEntry {
    std::string condition;
    std::string set;
    fs::path gold;
    fs::path predictions;
};

struct ScoreResult {
    std::vector<ReportRow> rows;
    std::map<std::string, std::map<std::string, PRF>> per_lemma;  // "<condition>/<set>" -> lemma -> PRF
};

/// Scores each entry and appends one random-baseline row per distinct set,
/// using that set's gold positive rate.
inline ScoreResult cmd_score(const std::vector<ScoreEntry>& entries) {
    ScoreResult out;
    std::map<std::string, double> base_rate;
    for (const auto& e : entries) {
        const auto gold = read_corpus_file(e.gold, e.set);
        const auto preds = read_predictions_file(e.predictions);
        out.rows.push_back({e.condition, e.set, score(preds, gold.instances)});
        out.per_lemma[e.condition + "/" + e.set] = per_lemma_f1(preds, gold.instances);
        if (!base_rate.count(e.set)) base_rate[e.set] = corpus_stats(gold).met_pct;
    }
    for (const auto& set : eval_set_names()) {
        if (auto it = base_rate.find(set); it != base_rate.end()) out.rows.push_back({"random", set, random_baseline(it->second)});
    }
    for (const auto& [set, rate] : base_rate) {
        if (std::find(eval_set_names().begin(), eval_set_names().end(), set) == eval_set_names().end()) {
            out.rows.push_back({"random", set, random_baseline(rate)});
        }
    }
    return out;
}

inline void write_score_result(const WorkLayout& layout, const ScoreResult& result) {
    std::ostringstream rows;
    write_report_rows(rows, result.rows);
    detail::write_text(layout.scores(), rows.str());
    for (const auto& [key, per_lemma] : result.per_lemma) {
        const auto slash = key.find('/');
        std::ostringstream tsv;
        write_per_lemma_tsv(tsv, per_lemma);
        detail::write_text(layout.per_lemma(key.substr(0, slash), key.substr(slash + 1)), tsv.str());
    }
}

// ---------------------------------------------------------------------------
// correlate

inline CorrelationResult cmd_correlate(const fs::path& per_lemma_file, const fs::path& freq_file) {
    std::ifstream in(per_lemma_file);
    if (!in) throw InputError("cannot open per-lemma file " + per_lemma_file.string());
    return correlate_f1_frequency(read_per_lemma_f1(in), read_freq_table_file(freq_file));
}

// ---------------------------------------------------------------------------
// probe

struct KnnResult {
    std::vector<PredictionRecord> predictions;
    PRF metrics;
    double purity = 0.0;
};

inline KnnResult probe_knn(const EmbeddingSet& eval, const EmbeddingSet& reference, std::size_t k) {
    KnnResult out;
    out.predictions = knn_classify(eval, reference, k);
    out.metrics = score(out.predictions, gold_from_embeddings(eval));
    out.purity = neighborhood_purity(eval, reference, k);
    return out;
}

struct WordProbeResult {
    ProbeModel model;
    std::vector<PredictionRecord> predictions;
    PRF metrics;
};

inline WordProbeResult probe_word_only(const EmbeddingSet& train, const EmbeddingSet& eval, const ProbeOptions& opts) {
    WordProbeResult out;
    out.model = train_word_probe(train, opts);
    out.predictions = apply_word_probe(out.model, eval);
    out.metrics = score(out.predictions, gold_from_embeddings(eval));
    return out;
}

// ---------------------------------------------------------------------------
// report

struct ReportOutcome {
    std::vector<Table> tables;
    std::vector<std::string> missing;
};

/// Renders the five tables from whatever result files exist. Pure in the
/// files it reads; missing inputs produce marked gaps.
inline ReportOutcome render_report(const WorkLayout& layout) {
    std::optional<SplitManifest> manifest;
    if (fs::is_regular_file(layout.manifest())) manifest = parse_manifest(detail::read_text(layout.manifest()));
    std::map<std::string, std::vector<Instance>> evals;
    for (const auto& set : eval_set_names()) {
        if (fs::is_regular_file(layout.eval_set(set))) evals[set] = read_corpus_file(layout.eval_set(set), set).instances;
    }
    std::optional<nlohmann::json> stats;
    if (fs::is_regular_file(layout.split_stats())) stats = nlohmann::json::parse(detail::read_text(layout.split_stats()));

    ReportOutcome out;
    out.tables.push_back(lemma_table(manifest, evals));
    out.tables.push_back(dataset_table(stats));
    out.tables.push_back(sweep_table(detail::read_optional(layout.sweep(), [](std::istream& in) { return read_sweep_tsv(in); })));
    out.tables.push_back(performance_table(
        detail::read_optional(layout.scores(), [](std::istream& in) { return read_report_rows(in); }),
        detail::read_optional(layout.correlation(), [](std::istream& in) { return read_correlation_tsv(in); })));
    out.tables.push_back(
        geometry_table(detail::read_optional(layout.geometry(), [](std::istream& in) { return read_geometry_tsv(in); })));
    for (const auto& t : out.tables) {
        for (const auto& note : t.notes) {
            if (note.rfind("missing input: ", 0) == 0) out.missing.push_back(note.substr(15));
        }
    }
    return out;
}

inline ReportOutcome cmd_report(const WorkLayout& layout) {
    auto outcome = render_report(layout);
    std::string text;
    for (const auto& t : outcome.tables) {
        detail::write_text(layout.report() / (t.name + ".tsv"), t.to_tsv());
        text += t.to_text() + "\n";
    }
    detail::write_text(layout.report() / "report.txt", text);
    return outcome;
}

// ---------------------------------------------------------------------------
// stage checkpoints

/// Content key of a stage: its name, parameters and input file digests.
inline std::string stage_key(const std::string& stage, const std::string& params, const std::vector<fs::path>& inputs) {
    std::uint64_t h = fnv1a64(stage);
    h = fnv1a64(params, h);
    for (const auto& p : inputs) h = fnv1a64(fs::is_regular_file(p) ? hex64(file_digest(p)) : "<missing>", h);
    return hex64(h);
}

inline bool stage_is_current(const WorkLayout& layout, const std::string& stage, const std::string& key,
                             const std::vector<fs::path>& outputs) {
    const auto marker = layout.stages() / (stage + ".key");
    if (!fs::is_regular_file(marker) || detail::read_text(marker) != key) return false;
    return std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) { return fs::exists(p); });
}

inline void mark_stage(const WorkLayout& layout, const std::string& stage, const std::string& key) {
    detail::write_text(layout.stages() / (stage + ".key"), key);
}

// ---------------------------------------------------------------------------
// sweep

/// Reads the validation summary a finetune run leaves in `<checkpoint>/summary.json`.
inline SweepRow read_finetune_summary(const fs::path& checkpoint, std::uint64_t seed) {
    const auto path = checkpoint / "summary.json";
    try {
        const auto obj = nlohmann::json::parse(detail::read_text(path));
        return {seed, obj.at("precision").get<double>(), obj.at("recall").get<double>(), obj.at("f1").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw RunnerError("malformed finetune summary " + path.string() + ": " + e.what());
    } catch (const InputError&) {
        throw RunnerError("finetune summary missing: " + path.string());
    }
}

inline RunnerCall finetune_call(const PipelineConfig& cfg, const WorkLayout& layout, const fs::path& train,
                                const fs::path& checkpoint, std::uint64_t seed, const std::string& tag) {
    RunnerCall call;
    call.action = "finetune";
    call.config = runner_config_json(cfg, seed);
    call.config_path = layout.runner_configs() / ("finetune_" + tag + ".json");
    call.input = train;
    call.output = checkpoint;
    call.log = layout.logs() / ("finetune_" + tag + ".log");
    return call;
}

/// Fine-tunes one model per seed on the standard train set (at most
/// `runner.parallelism` at a time) and writes results/sweep.tsv.
inline SweepSummary cmd_sweep(const PipelineConfig& cfg) {
    validate_config(cfg, false);
    if (cfg.train.empty() || !fs::is_regular_file(cfg.train)) throw ValidationError("sweep: train corpus not found");
    if (cfg.sweep_seeds.empty()) throw ValidationError("sweep: no sweep_seeds configured");
    const WorkLayout layout{cfg.work_dir};
    std::vector<SweepRow> rows(cfg.sweep_seeds.size());
    std::vector<std::exception_ptr> errors(cfg.sweep_seeds.size());
    for (std::size_t start = 0; start < cfg.sweep_seeds.size(); start += cfg.runner.parallelism) {
        const std::size_t stop = std::min(cfg.sweep_seeds.size(), start + cfg.runner.parallelism);
        std::vector<std::future<void>> batch;
        for (std::size_t i = start; i < stop; ++i) {
            batch.push_back(std::async(std::launch::async, [&, i] {
                try {
                    const auto seed = cfg.sweep_seeds[i];
                    const auto tag = "seed_" + std::to_string(seed);
                    const auto checkpoint = layout.model() / "sweep" / tag;
                    invoke_runner(cfg.runner, finetune_call(cfg, layout, cfg.train, checkpoint, seed, "sweep_" + tag));
                    rows[i] = read_finetune_summary(checkpoint, seed);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }));
        }
        for (auto& f : batch) f.get();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::ostringstream tsv;
    write_sweep_tsv(tsv, rows);
    detail::write_text(layout.sweep(), tsv.str());
    return summarize_sweep(rows);
}

// ---------------------------------------------------------------------------
// run-all

struct RunAllOptions {
    bool no_model = false;
    std::ostream* log = nullptr;
};

struct RunAllResult {
    std::vector<std::string> executed;
    std::vector<std::string> skipped;
    ReportOutcome report;
};

/// split -> [sweep] -> finetune -> predict -> embed -> probe -> score ->
/// correlate -> report. Each stage is skipped when its content key matches
/// the recorded one and its outputs exist.
inline RunAllResult cmd_run_all(const PipelineConfig& cfg, const RunAllOptions& opts = {}) {
    validate_config(cfg);
    const WorkLayout layout{cfg.work_dir};
    fs::create_directories(layout.root);
    RunAllResult result;
    auto note = [&](const std::string& msg) {
        if (opts.log) *opts.log << msg << '\n';
    };
    auto stage = [&](const std::string& name, const std::string& params, const std::vector<fs::path>& inputs,
                     const std::vector<fs::path>& outputs, const std::function<void()>& body) {
        const auto key = stage_key(name, params, inputs);
        if (stage_is_current(layout, name, key, outputs)) {
            result.skipped.push_back(name);
            note("[skip] " + name);
            return;
        }
        note("[run ] " + name);
        body();
        mark_stage(layout, name, key);
        result.executed.push_back(name);
    };

    stage("split", split_parameters(cfg), {cfg.train, cfg.test},
          {layout.manifest(), layout.eval_set("held_out"), layout.eval_set("exposed")}, [&] { cmd_split(cfg); });

    if (!opts.no_model) {
        const auto runner_params = cfg.runner.command + "|" + cfg.runner.base_model + "|" + cfg.mask_token;
        std::uint64_t model_seed = cfg.model_seed;
        if (!cfg.sweep_seeds.empty()) {
            std::string seeds;
            for (auto s : cfg.sweep_seeds) seeds += std::to_string(s) + ",";
            stage("sweep", runner_params + "|" + seeds, {cfg.train}, {layout.sweep()}, [&] { cmd_sweep(cfg); });
            std::ifstream in(layout.sweep());
            model_seed = summarize_sweep(read_sweep_tsv(in)).selected_row().seed;
        }

        const auto checkpoint = layout.model() / "filtered";
        stage("finetune", runner_params + "|seed=" + std::to_string(model_seed), {layout.filtered_train()},
              {checkpoint / "summary.json"}, [&] {
                  invoke_runner(cfg.runner,
                                finetune_call(cfg, layout, layout.filtered_train(), checkpoint, model_seed, "filtered"));
              });
        const auto checkpoint_digest = hex64(file_digest(checkpoint / "summary.json"));

        auto model_call = [&](const std::string& action, const std::string& tag, const fs::path& in, const fs::path& out,
                              std::optional<EmbeddingKind> kind) {
            RunnerCall call;
            call.action = action;
            call.config = runner_config_json(cfg, model_seed);
            call.config["checkpoint"] = checkpoint.string();
            if (kind) call.config["kind"] = std::string(to_string(*kind));
            call.config_path = layout.runner_configs() / (action + "_" + tag + ".json");
            call.input = in;
            call.output = out;
            call.log = layout.logs() / (action + "_" + tag + ".log");
            invoke_runner(cfg.runner, call);
        };

        std::vector<fs::path> pred_files;
        for (const auto& set : eval_set_names()) {
            for (bool masked : {false, true}) {
                const std::string tag = set + (masked ? "_masked" : "");
                const auto out = layout.predictions() / (tag + ".jsonl");
                pred_files.push_back(out);
                stage("predict_" + tag, runner_params + "|" + checkpoint_digest, {layout.eval_set(set, masked)}, {out},
                      [&] { model_call("predict", tag, layout.eval_set(set, masked), out, std::nullopt); });
            }
        }

        const fs::path reference_in = cfg.reference_space == "standard" ? cfg.train : layout.filtered_train();
        const fs::path reference_masked_in =
            cfg.reference_space == "standard" ? layout.train_masked() : layout.filtered_train_masked();
        struct EmbedJob {
            std::string tag;
            fs::path input;
            EmbeddingKind kind;
        };
        std::vector<EmbedJob> jobs = {{"reference_contextual", reference_in, EmbeddingKind::contextual},
                                      {"reference_masked_contextual", reference_masked_in, EmbeddingKind::contextual},
                                      {"train_static", layout.filtered_train(), EmbeddingKind::static_layer}};
        for (const auto& set : eval_set_names()) {
            jobs.push_back({set + "_contextual", layout.eval_set(set), EmbeddingKind::contextual});
            jobs.push_back({set + "_masked_contextual", layout.eval_set(set, true), EmbeddingKind::contextual});
            jobs.push_back({set + "_static", layout.eval_set(set), EmbeddingKind::static_layer});
        }
        auto emb = [&](const std::string& tag) { return layout.embeddings() / (tag + ".jsonl"); };
        for (const auto& job : jobs) {
            stage("embed_" + job.tag, runner_params + "|" + checkpoint_digest, {job.input}, {emb(job.tag)},
                  [&] { model_call("embed", job.tag, job.input, emb(job.tag), job.kind); });
        }

        std::vector<fs::path> probe_inputs;
        for (const auto& job : jobs) probe_inputs.push_back(emb(job.tag));
        std::ostringstream probe_params;
        probe_params << "k=" << cfg.k << ";l2=" << cfg.l2 << ";max_iter=" << cfg.probe_max_iter << ";tol=" << cfg.probe_tol;
        std::vector<fs::path> word_preds;
        for (const auto& set : eval_set_names()) word_preds.push_back(layout.predictions() / (set + "_word_only.jsonl"));
        stage("probe", probe_params.str(), probe_inputs, {layout.geometry(), word_preds[0], word_preds[1]}, [&] {
            const auto reference = read_embeddings_file(emb("reference_contextual"));
            const auto reference_masked = read_embeddings_file(emb("reference_masked_contextual"));
            const auto train_static = read_embeddings_file(emb("train_static"));
            ProbeOptions popts{cfg.l2, cfg.probe_max_iter, cfg.probe_tol};
            const auto probe = train_word_probe(train_static, popts);
            std::vector<GeometryRow> geometry;
            for (const auto& cond : {std::string("full"), std::string("context_only")}) {
                for (std::size_t i = 0; i < eval_set_names().size(); ++i) {
                    const auto& set = eval_set_names()[i];
                    const bool masked = cond == "context_only";
                    const auto eval = read_embeddings_file(emb(set + (masked ? "_masked_contextual" : "_contextual")));
                    const auto knn = probe_knn(eval, masked ? reference_masked : reference, cfg.k);
                    geometry.push_back({cond, set, knn.purity, knn.metrics.f1});
                }
            }
            for (std::size_t i = 0; i < eval_set_names().size(); ++i) {
                const auto eval_static = read_embeddings_file(emb(eval_set_names()[i] + "_static"));
                std::ostringstream preds;
                write_predictions(preds, apply_word_probe(probe, eval_static));
                detail::write_text(word_preds[i], preds.str());
            }
            std::ostringstream tsv;
            write_geometry_tsv(tsv, geometry);
            detail::write_text(layout.geometry(), tsv.str());
        });

        std::vector<ScoreEntry> entries;
        std::vector<fs::path> score_inputs;
        for (std::size_t i = 0; i < eval_set_names().size(); ++i) {
            const auto& set = eval_set_names()[i];
            entries.push_back({"full", set, layout.eval_set(set), layout.predictions() / (set + ".jsonl")});
            entries.push_back({"context_only", set, layout.eval_set(set, true), layout.predictions() / (set + "_masked.jsonl")});
            entries.push_back({"word_only", set, layout.eval_set(set), word_preds[i]});
        }
        for (const auto& e : entries) {
            score_inputs.push_back(e.gold);
            score_inputs.push_back(e.predictions);
        }
        stage("score", "", score_inputs, {layout.scores()}, [&] { write_score_result(layout, cmd_score(entries)); });

        if (!cfg.freq.empty()) {
            std::vector<fs::path> inputs = {cfg.freq};
            for (const auto& set : eval_set_names()) inputs.push_back(layout.per_lemma("full", set));
            stage("correlate", "", inputs, {layout.correlation()}, [&] {
                std::vector<CorrelationRow> rows;
                for (const auto& set : eval_set_names()) rows.push_back({set, cmd_correlate(layout.per_lemma("full", set), cfg.freq)});
                std::ostringstream tsv;
                write_correlation_tsv(tsv, rows);
                detail::write_text(layout.correlation(), tsv.str());
            });
        }
    }

    note("[run ] report");
    result.report = cmd_report(layout);
    result.executed.push_back("report");
    return result;
}

}  // namespace lexprobe
