// Command-line front end: stats, split, score, correlate, probe, sweep, report, run-all.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lexprobe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lexprobe;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRunner = 3;

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string train, test, freq, work_dir, mask_token;
    std::optional<std::size_t> min_freq_heldout, min_freq_exposed, n_heldout, n_exposed, k;
    std::optional<std::uint64_t> seed;
    std::optional<double> l2;

    void attach(CLI::App* app, bool split_flags) {
        app->add_option("--config", config_path, "key = value config file");
        app->add_option("--set", overrides, "override a config key (key=value)");
        app->add_option("--train", train, "train corpus JSONL");
        app->add_option("--test", test, "test corpus JSONL");
        app->add_option("--freq", freq, "frequency TSV");
        app->add_option("--work-dir", work_dir, "work directory");
        if (split_flags) {
            app->add_option("--min-freq-heldout", min_freq_heldout);
            app->add_option("--min-freq-exposed", min_freq_exposed);
            app->add_option("--n-heldout", n_heldout);
            app->add_option("--n-exposed", n_exposed);
            app->add_option("--seed", seed);
            app->add_option("--mask-token", mask_token);
            app->add_option("--k", k);
            app->add_option("--l2", l2);
        }
    }

    /// Config file, then environment, then flags.
    PipelineConfig resolve() const {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config_file(config_path);
        apply_environment(cfg);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
            apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (!train.empty()) cfg.train = train;
        if (!test.empty()) cfg.test = test;
        if (!freq.empty()) cfg.freq = freq;
        if (!work_dir.empty()) cfg.work_dir = work_dir;
        if (!mask_token.empty()) cfg.mask_token = mask_token;
        if (min_freq_heldout) cfg.min_freq_heldout = *min_freq_heldout;
        if (min_freq_exposed) cfg.min_freq_exposed = *min_freq_exposed;
        if (n_heldout) cfg.n_heldout = *n_heldout;
        if (n_exposed) cfg.n_exposed = *n_exposed;
        if (seed) cfg.seed = *seed;
        if (k) cfg.k = *k;
        if (l2) cfg.l2 = *l2;
        return cfg;
    }
};

void print_stats(const std::string& name, const DatasetStats& s) {
    std::printf("%-16s n_samples=%zu met_pct=%.4f n_lemmas=%zu%s\n", name.c_str(), s.n_samples, s.met_pct, s.n_lemmas,
                s.empty_warning ? " (warning: empty corpus)" : "");
}

void print_prf(const std::string& label, const PRF& m) {
    std::printf("%s\tprecision=%s\trecall=%s\tf1=%s\ttp=%zu\tfp=%zu\tfn=%zu\ttn=%zu\n", label.c_str(),
                format_metric(m.precision).c_str(), format_metric(m.recall).c_str(), format_metric(m.f1).c_str(),
                m.counts.tp, m.counts.fp, m.counts.fn, m.counts.tn);
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lexical hold-out evaluation harness"};
    app.require_subcommand(1);

    // stats
    auto* stats = app.add_subcommand("stats", "dataset statistics of a corpus file");
    std::string stats_corpus, stats_pos, stats_table;
    stats->add_option("--corpus", stats_corpus, "corpus JSONL")->required();
    stats->add_option("--pos", stats_pos, "keep only instances with this pos tag");
    stats->add_option("--lemma-table", stats_table, "write the per-lemma table as TSV");

    // split
    auto* split = app.add_subcommand("split", "build held-out / exposed splits");
    ConfigArgs split_args;
    split_args.attach(split, true);

    // score
    auto* score_cmd = app.add_subcommand("score", "score prediction files against gold eval sets");
    std::string gold, pred, condition = "full", set = "held_out", per_lemma_out, rows_out;
    std::vector<std::string> entries;
    score_cmd->add_option("--gold", gold, "gold eval JSONL");
    score_cmd->add_option("--pred", pred, "prediction JSONL");
    score_cmd->add_option("--condition", condition, "condition label");
    score_cmd->add_option("--set", set, "set label");
    score_cmd->add_option("--entry", entries, "condition,set,gold,pred (repeatable)");
    score_cmd->add_option("--per-lemma", per_lemma_out, "per-lemma TSV for a single --gold/--pred pair");
    score_cmd->add_option("--out", rows_out, "write report rows TSV here");

    // correlate
    auto* correlate = app.add_subcommand("correlate", "Spearman correlation of per-lemma F1 with frequency");
    std::string corr_per_lemma, corr_freq;
    correlate->add_option("--per-lemma", corr_per_lemma, "per-lemma TSV (lemma, f1 columns)")->required();
    correlate->add_option("--freq", corr_freq, "frequency TSV (lemma, frequency)")->required();

    // probe
    auto* probe = app.add_subcommand("probe", "embedding probes");
    std::string probe_mode, probe_reference, probe_eval, probe_out;
    std::size_t probe_k = 10;
    double probe_l2 = 1.0;
    std::size_t probe_iter = 10000;
    double probe_tol = 1e-6;
    probe->add_option("mode", probe_mode, "purity | knn | wordonly")
        ->required()
        ->check(CLI::IsMember({"purity", "knn", "wordonly"}));
    probe->add_option("--reference", probe_reference, "reference (or probe training) embeddings JSONL")->required();
    probe->add_option("--eval", probe_eval, "eval embeddings JSONL")->required();
    probe->add_option("--k", probe_k, "neighbours");
    probe->add_option("--l2", probe_l2, "L2 strength of the word probe");
    probe->add_option("--max-iter", probe_iter, "word probe iteration cap");
    probe->add_option("--tol", probe_tol, "word probe gradient-norm tolerance");
    probe->add_option("--out", probe_out, "write predictions JSONL here");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "seed sweep: fine-tune per seed and pick the median run");
    ConfigArgs sweep_args;
    sweep_args.attach(sweep, false);
    std::string sweep_from;
    sweep->add_option("--from", sweep_from, "summarize an existing sweep TSV instead of running");

    // report
    auto* report = app.add_subcommand("report", "render result tables");
    ConfigArgs report_args;
    report_args.attach(report, false);

    // run-all
    auto* run_all = app.add_subcommand("run-all", "run every stage, resuming from checkpoints");
    ConfigArgs run_args;
    run_args.attach(run_all, true);
    bool no_model = false;
    run_all->add_flag("--no-model", no_model, "skip all runner stages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*stats) {
            ParseOptions opts;
            if (!stats_pos.empty()) opts.pos_filter = stats_pos;
            const auto res = cmd_stats(stats_corpus, opts);
            print_stats(fs::path(stats_corpus).filename().string(), res.stats);
            if (!stats_table.empty()) {
                std::ostringstream tsv;
                write_lemma_table_tsv(tsv, res.table);
                write_file(stats_table, tsv.str());
            }
        } else if (*split) {
            const auto cfg = split_args.resolve();
            const auto res = cmd_split(cfg);
            print_stats("train", res.train);
            print_stats("test", res.test);
            print_stats("filtered_train", res.filtered_train);
            print_stats("exposed_eval", res.exposed_eval);
            print_stats("held_out_eval", res.held_out_eval);
            std::printf("manifest: %s (provenance %s)\n", WorkLayout{cfg.work_dir}.manifest().c_str(),
                        res.manifest.provenance.c_str());
        } else if (*score_cmd) {
            std::vector<ScoreEntry> list;
            if (!gold.empty() || !pred.empty()) {
                if (gold.empty() || pred.empty()) throw ValidationError("--gold and --pred go together");
                list.push_back({condition, set, gold, pred});
            }
            for (const auto& e : entries) {
                std::vector<std::string> parts;
                std::istringstream ss(e);
                std::string item;
                while (std::getline(ss, item, ',')) parts.push_back(item);
                if (parts.size() != 4) throw ValidationError("--entry expects condition,set,gold,pred");
                list.push_back({parts[0], parts[1], parts[2], parts[3]});
            }
            if (list.empty()) throw ValidationError("score: nothing to score (use --gold/--pred or --entry)");
            const auto res = cmd_score(list);
            std::ostringstream tsv;
            write_report_rows(tsv, res.rows);
            std::cout << tsv.str();
            if (!rows_out.empty()) write_file(rows_out, tsv.str());
            if (!per_lemma_out.empty()) {
                std::ostringstream pl;
                write_per_lemma_tsv(pl, res.per_lemma.at(list.front().condition + "/" + list.front().set));
                write_file(per_lemma_out, pl.str());
            }
        } else if (*correlate) {
            const auto res = cmd_correlate(corr_per_lemma, corr_freq);
            std::printf("rho=%.6f\tp=%.6f\tn=%zu\n", res.rho, res.p_value, res.n);
            for (const auto& m : res.missing_lemmas) std::printf("missing frequency: %s\n", m.c_str());
        } else if (*probe) {
            const auto reference = read_embeddings_file(probe_reference);
            const auto eval = read_embeddings_file(probe_eval);
            std::vector<PredictionRecord> preds;
            if (probe_mode == "purity") {
                std::printf("purity=%s\n", format_metric(neighborhood_purity(eval, reference, probe_k)).c_str());
            } else if (probe_mode == "knn") {
                const auto res = probe_knn(eval, reference, probe_k);
                std::printf("purity=%s\n", format_metric(res.purity).c_str());
                print_prf("knn", res.metrics);
                preds = res.predictions;
            } else {
                const auto res = probe_word_only(reference, eval, {probe_l2, probe_iter, probe_tol});
                std::printf("iterations=%zu\tloss=%.6g\tgrad_norm=%.3g\tconverged=%s\n", res.model.meta.iterations,
                            res.model.meta.final_loss, res.model.meta.gradient_norm,
                            res.model.meta.converged ? "yes" : "no");
                print_prf("wordonly", res.metrics);
                preds = res.predictions;
            }
            if (!probe_out.empty()) {
                std::ostringstream out;
                write_predictions(out, preds);
                write_file(probe_out, out.str());
            }
        } else if (*sweep) {
            SweepSummary summary;
            if (!sweep_from.empty()) {
                std::ifstream in(sweep_from);
                if (!in) throw InputError("cannot open " + sweep_from);
                summary = summarize_sweep(read_sweep_tsv(in));
            } else {
                summary = cmd_sweep(sweep_args.resolve());
            }
            std::cout << sweep_table(summary.rows).to_text();
        } else if (*report) {
            const auto cfg = report_args.resolve();
            const auto outcome = cmd_report(WorkLayout{cfg.work_dir});
            for (const auto& t : outcome.tables) std::cout << t.to_text() << '\n';
            for (const auto& m : outcome.missing) std::cerr << "missing: " << m << '\n';
        } else if (*run_all) {
            const auto cfg = run_args.resolve();
            RunAllOptions opts;
            opts.no_model = no_model;
            opts.log = &std::cerr;
            const auto res = cmd_run_all(cfg, opts);
            for (const auto& t : res.report.tables) std::cout << t.to_text() << '\n';
        }
    } catch (const RunnerError& e) {
        std::cerr << "runner failure: " << e.what() << '\n';
        return kExitRunner;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
