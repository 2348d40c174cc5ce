#include "simrec/cli.hpp"

#include "simrec/corpus.hpp"
#include "simrec/eval.hpp"
#include "simrec/io.hpp"
#include "simrec/manifest.hpp"
#include "simrec/net.hpp"
#include "simrec/rng.hpp"
#include "simrec/simtable.hpp"
#include "simrec/train.hpp"
#include "simrec/types.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace simrec::cli {

namespace {

using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// JSON bindings

void check_keys(const ordered_json& obj, const std::vector<std::string>& allowed,
                const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

NetConfig net_config_from_json(const ordered_json& j) {
    check_keys(j, {"hidden_size", "num_blocks", "num_heads", "max_seq_len", "dropout_rate",
                   "vocab_size", "ffn_hidden"},
               "net config");
    NetConfig cfg;
    cfg.hidden_size = j.value("hidden_size", cfg.hidden_size);
    cfg.num_blocks = j.value("num_blocks", cfg.num_blocks);
    cfg.num_heads = j.value("num_heads", cfg.num_heads);
    cfg.max_seq_len = j.value("max_seq_len", cfg.max_seq_len);
    cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
    cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
    cfg.ffn_hidden = j.value("ffn_hidden", cfg.ffn_hidden);
    return cfg;
}

ordered_json net_config_to_json(const NetConfig& cfg) {
    return {{"hidden_size", cfg.hidden_size}, {"num_blocks", cfg.num_blocks},
            {"num_heads", cfg.num_heads},     {"max_seq_len", cfg.max_seq_len},
            {"dropout_rate", cfg.dropout_rate}, {"vocab_size", cfg.vocab_size},
            {"ffn_hidden", cfg.ffn_hidden}};
}

TrainConfig train_config_from_json(const ordered_json& j) {
    check_keys(j, {"lambda0", "warmup_steps", "epochs", "batch_size", "learning_rate",
                   "adam_beta1", "adam_beta2", "adam_eps", "seed", "net", "warmup_mode",
                   "checkpoint_every", "init_embeddings_path"},
               "train config");
    TrainConfig cfg;
    cfg.lambda0 = j.value("lambda0", cfg.lambda0);
    cfg.warmup_steps = j.value("warmup_steps", cfg.warmup_steps);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("net")) cfg.net = net_config_from_json(j.at("net"));
    const std::string mode = j.value("warmup_mode", std::string("hold_then_decay"));
    if (mode == "hold_then_decay") cfg.warmup_mode = WarmupMode::HoldThenDecay;
    else if (mode == "ramp_up") cfg.warmup_mode = WarmupMode::RampUp;
    else throw ConfigError("train config: warmup_mode must be hold_then_decay or ramp_up");
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.init_embeddings_path = j.value("init_embeddings_path", cfg.init_embeddings_path);
    return cfg;
}

ordered_json train_config_to_json(const TrainConfig& cfg) {
    return {{"lambda0", cfg.lambda0},
            {"warmup_steps", cfg.warmup_steps},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"learning_rate", cfg.learning_rate},
            {"adam_beta1", cfg.adam_beta1},
            {"adam_beta2", cfg.adam_beta2},
            {"adam_eps", cfg.adam_eps},
            {"seed", cfg.seed},
            {"net", net_config_to_json(cfg.net)},
            {"warmup_mode",
             cfg.warmup_mode == WarmupMode::HoldThenDecay ? "hold_then_decay" : "ramp_up"},
            {"checkpoint_every", cfg.checkpoint_every},
            {"init_embeddings_path", cfg.init_embeddings_path}};
}

TrainConfig load_train_config(const std::string& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return train_config_from_json(j);
}

std::string bucket_key(std::int32_t bucket) {
    return bucket >= kColdStartBucketCap ? "10+" : std::to_string(bucket);
}

ordered_json buckets_to_json(const std::map<std::int32_t, BucketStats>& buckets) {
    ordered_json out = ordered_json::object();
    for (const auto& [bucket, stats] : buckets)
        out[bucket_key(bucket)] = {{"count", stats.count}, {"hr", stats.hr}, {"ndcg", stats.ndcg}};
    return out;
}

ordered_json report_to_json(const EvalReport& report, const Corpus& corpus,
                            bool include_ranks) {
    ordered_json j;
    j["config"] = {{"k", report.config.k},
                   {"num_negatives", report.config.num_negatives},
                   {"repeats", report.config.repeats},
                   {"seed", report.config.seed},
                   {"target",
                    report.config.target == EvalConfig::Target::Test ? "test" : "valid"}};
    j["scorer"] = report.scorer_kind;
    ordered_json reps = ordered_json::array();
    for (std::size_t r = 0; r < report.per_repeat_hr.size(); ++r)
        reps.push_back({{"hr", report.per_repeat_hr[r]}, {"ndcg", report.per_repeat_ndcg[r]}});
    j["per_repeat"] = reps;
    j["mean_hr"] = report.mean_hr;
    j["mean_ndcg"] = report.mean_ndcg;
    j["buckets"] = buckets_to_json(report.buckets);
    if (include_ranks) {
        ordered_json users = ordered_json::array();
        for (std::size_t u = 0; u < report.users.size(); ++u) {
            const auto& ur = report.users[u];
            users.push_back({{"user", corpus.user_ids[u]},
                             {"target", corpus.item_ids[static_cast<std::size_t>(ur.target)]},
                             {"target_freq", ur.target_freq},
                             {"ranks", ur.ranks}});
        }
        j["per_user_ranks"] = users;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces

Corpus load_corpus_checked(const std::string& path) { return load_corpus(path); }

void save_optimizer_sidecar(const std::string& path, const OptimizerState& state) {
    ByteWriter w;
    w.raw("SIMREC-OPT\x01", 11);
    w.u64(static_cast<std::uint64_t>(state.step));
    auto dump = [&](ModelParams<double>& p) {
        for (const auto& ref : tensor_refs(p)) {
            w.u32(static_cast<std::uint32_t>(ref.rows));
            w.u32(static_cast<std::uint32_t>(ref.cols));
            const auto m = ref.map();
            for (Eigen::Index r = 0; r < ref.rows; ++r)
                for (Eigen::Index c = 0; c < ref.cols; ++c) w.f32(static_cast<float>(m(r, c)));
        }
    };
    dump(const_cast<ModelParams<double>&>(state.m));
    dump(const_cast<ModelParams<double>&>(state.v));
    write_file(path, w.bytes());
}

struct TrainOutcome {
    ModelParams<double> params;
    TrainConfig cfg;
};

TrainOutcome run_training(const Corpus& corpus, const SplitCorpus& split,
                          const SimilarityTable& simtable, TrainConfig cfg, bool baseline_bce,
                          const std::string& out_path, const std::string& log_path) {
    if (baseline_bce) cfg.lambda0 = 0.0;  // the SASRec objective
    if (cfg.net.vocab_size == 0) cfg.net.vocab_size = corpus.item_count;
    if (cfg.net.vocab_size != corpus.item_count)
        throw ConfigError("train: config vocab_size " + std::to_string(cfg.net.vocab_size) +
                          " does not match corpus item count " +
                          std::to_string(corpus.item_count));

    std::ofstream log_stream;
    if (!log_path.empty()) {
        log_stream.open(log_path, std::ios::trunc);
        if (!log_stream) throw DataError("cannot open log file: " + log_path);
    }
    LogSink log_sink = nullptr;
    if (!log_path.empty()) {
        log_sink = [&log_stream](const TrainLogEntry& e) {
            ordered_json j = {{"step", e.step},
                              {"epoch", e.epoch},
                              {"lambda_value", e.lambda_value},
                              {"loss_total", e.loss_total},
                              {"loss_bce", e.loss_bce},
                              {"loss_similarity", e.loss_similarity},
                              {"grad_norm", e.grad_norm},
                              {"wallclock_ms", e.wallclock_ms}};
            log_stream << j.dump() << "\n";
        };
    }
    CheckpointSink checkpoint_sink = nullptr;
    if (cfg.checkpoint_every > 0 && !out_path.empty()) {
        checkpoint_sink = [&out_path](std::int32_t epoch, const ModelParams<double>& p,
                                      const OptimizerState& s) {
            const std::string base = out_path + ".epoch" + std::to_string(epoch);
            save_model(base, p);
            save_optimizer_sidecar(base + ".opt", s);
        };
    }

    TrainOutcome outcome{fit(split, simtable, cfg, checkpoint_sink, log_sink), cfg};
    if (log_stream.is_open()) {
        log_stream.flush();
        if (!log_stream.good()) throw DataError("write failed: " + log_path);
    }
    if (!out_path.empty()) save_model(out_path, outcome.params);
    return outcome;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Subcommand implementations

int cmd_preprocess(const std::string& interactions_path, const std::string& titles_path,
                   std::int64_t min_item_count, std::int32_t min_user_len, bool require_title,
                   const std::string& out_path) {
    std::ifstream interactions(interactions_path);
    if (!interactions) throw DataError("cannot open file: " + interactions_path);
    InteractionLog log = parse_interactions(interactions);
    std::ifstream titles_in(titles_path);
    if (!titles_in) throw DataError("cannot open file: " + titles_path);
    const auto titles = parse_titles(titles_in);

    Corpus corpus = preprocess(log, titles, min_item_count, min_user_len, require_title);
    save_corpus(out_path, corpus);
    write_manifest(out_path, "preprocess",
                   {{"min_item_count", min_item_count},
                    {"min_user_len", min_user_len},
                    {"require_title", require_title}},
                   {interactions_path, titles_path});
    std::cerr << "users=" << corpus.user_count() << " items=" << corpus.item_count
              << " interactions=" << corpus.interaction_count()
              << " density=" << format_double(density(corpus)) << "\n";
    return 0;
}

int cmd_embed(const std::string& corpus_path, std::int32_t dim, std::uint64_t seed,
              const std::string& out_path) {
    const Corpus corpus = load_corpus_checked(corpus_path);
    const EmbeddingSet emb = embed_titles_hashed(corpus, dim, seed);
    save_embeddings(out_path, emb, corpus);
    write_manifest(out_path, "embed", {{"dim", dim}, {"seed", seed}}, {corpus_path});
    return 0;
}

int cmd_simtable(const std::string& embeddings_path, const std::string& corpus_path,
                 const SimilarityConfig& cfg, const std::string& out_path) {
    const Corpus corpus = load_corpus_checked(corpus_path);
    const EmbeddingSet emb = load_embeddings(embeddings_path, corpus);
    const SimilarityTable table = build_similarity_table(emb, cfg);
    save_similarity_table(out_path, table);
    const auto empty = table.empty_rows();
    write_manifest(out_path, "simtable",
                   {{"top_k", cfg.top_k},
                    {"threshold", cfg.threshold},
                    {"temperature", cfg.temperature},
                    {"include_self", cfg.include_self},
                    {"empty_rows", empty.size()}},
                   {embeddings_path, corpus_path});
    std::cerr << "simtable: " << empty.size() << " of " << table.item_count()
              << " rows are empty\n";
    return 0;
}

int cmd_train(const std::string& corpus_path, const std::string& simtable_path,
              const std::string& config_path, const std::string& out_path,
              const std::string& log_path, bool baseline_bce) {
    const Corpus corpus = load_corpus_checked(corpus_path);
    const SplitCorpus split = split_leave_one_out(corpus);
    const SimilarityTable simtable = load_similarity_table(simtable_path);
    TrainConfig cfg = load_train_config(config_path);
    const TrainOutcome outcome =
        run_training(corpus, split, simtable, cfg, baseline_bce, out_path, log_path);
    write_manifest(out_path, "train",
                   {{"config", train_config_to_json(outcome.cfg)},
                    {"baseline_bce", baseline_bce}},
                   {corpus_path, simtable_path, config_path});
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& corpus_path, const EvalConfig& cfg,
             bool toppop, const std::string& report_path) {
    const Corpus corpus = load_corpus_checked(corpus_path);
    const SplitCorpus split = split_leave_one_out(corpus);

    EvalReport report;
    std::vector<std::string> inputs = {corpus_path};
    if (toppop) {
        const FrequencyTable freq = train_frequency(split);
        report = evaluate(TopPopScorer(freq), split, cfg);
    } else {
        const ModelParams<double> params = load_model(model_path);
        if (params.cfg.vocab_size != corpus.item_count)
            throw DataError("eval: model vocabulary " + std::to_string(params.cfg.vocab_size) +
                            " does not match corpus item count " +
                            std::to_string(corpus.item_count));
        inputs.push_back(model_path);
        report = evaluate(ModelScorer(params, split, cfg.target), split, cfg);
    }

    ordered_json j = report_to_json(report, corpus, /*include_ranks=*/true);
    if (!toppop) j["model_hash"] = file_hash(model_path);
    write_file(report_path, j.dump(2) + "\n");
    write_manifest(report_path, "eval",
                   {{"k", cfg.k},
                    {"num_negatives", cfg.num_negatives},
                    {"repeats", cfg.repeats},
                    {"seed", cfg.seed},
                    {"target", cfg.target == EvalConfig::Target::Test ? "test" : "valid"},
                    {"toppop", toppop}},
                   inputs);
    std::cerr << "hr@" << cfg.k << "=" << format_double(report.mean_hr) << " ndcg@" << cfg.k
              << "=" << format_double(report.mean_ndcg) << "\n";
    return 0;
}

int cmd_coldstart(const std::string& report_path, const std::string& corpus_path,
                  const std::string& out_path) {
    const Corpus corpus = load_corpus_checked(corpus_path);
    const SplitCorpus split = split_leave_one_out(corpus);
    const FrequencyTable freq = train_frequency(split);

    ordered_json j;
    try {
        j = ordered_json::parse(read_file(report_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(report_path + ": " + e.what());
    }
    if (!j.contains("per_user_ranks"))
        throw DataError(report_path + ": report lacks per_user_ranks; re-run eval");

    EvalReport report;
    report.config.k = j.at("config").at("k").get<std::int32_t>();
    report.config.repeats = j.at("config").at("repeats").get<std::int32_t>();
    for (const auto& entry : j.at("per_user_ranks")) {
        UserResult ur;
        const std::string item_id = entry.at("target").get<std::string>();
        const auto it = corpus.item_index_of.find(item_id);
        if (it == corpus.item_index_of.end())
            throw DataError("coldstart: target item '" + item_id + "' not present in corpus");
        ur.target = it->second;
        ur.ranks = entry.at("ranks").get<std::vector<std::int32_t>>();
        report.users.push_back(std::move(ur));
    }

    const auto buckets = coldstart_report(report, freq);
    ordered_json out;
    out["k"] = report.config.k;
    out["buckets"] = buckets_to_json(buckets);
    write_file(out_path, out.dump(2) + "\n");
    write_manifest(out_path, "coldstart", {{"k", report.config.k}}, {report_path, corpus_path});
    return 0;
}

int cmd_density(const std::string& corpus_path) {
    const Corpus corpus = load_corpus_checked(corpus_path);
    std::cout << format_double(density(corpus)) << "\n";
    return 0;
}

int cmd_density_sweep(const std::string& interactions_path, const std::string& titles_path,
                      const std::string& thresholds_csv, const std::string& out_dir, bool full,
                      const std::string& config_path, std::int32_t dim,
                      const SimilarityConfig& sim_cfg, EvalConfig eval_cfg) {
    std::vector<std::int64_t> thresholds;
    std::stringstream ss(thresholds_csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            thresholds.push_back(std::stoll(part));
        } catch (const std::exception&) {
            throw ConfigError("density-sweep: bad threshold '" + part + "'");
        }
    }
    if (thresholds.empty()) throw ConfigError("density-sweep: empty threshold list");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (thresholds[i] < 0) throw ConfigError("density-sweep: thresholds must be non-negative");
        if (i > 0 && thresholds[i] <= thresholds[i - 1])
            throw ConfigError("density-sweep: thresholds must be strictly increasing");
    }

    std::ifstream interactions(interactions_path);
    if (!interactions) throw DataError("cannot open file: " + interactions_path);
    const InteractionLog log = parse_interactions(interactions);
    std::ifstream titles_in(titles_path);
    if (!titles_in) throw DataError("cannot open file: " + titles_path);
    const auto titles = parse_titles(titles_in);

    TrainConfig base_cfg;
    if (full) {
        if (config_path.empty()) throw ConfigError("density-sweep: --full requires --config");
        base_cfg = load_train_config(config_path);
    }

    ordered_json rows = ordered_json::array();
    for (const std::int64_t n : thresholds) {
        Corpus corpus;
        try {
            corpus = preprocess(log, titles, n);
        } catch (const DataError& e) {
            throw DataError("density-sweep: stage n=" + std::to_string(n) + " failed: " + e.what());
        }
        const std::string tag = "n" + std::to_string(n);
        const std::string corpus_path = out_dir + "/" + tag + ".corpus";
        save_corpus(corpus_path, corpus);

        ordered_json row = {{"n", n},
                            {"users", corpus.user_count()},
                            {"items", corpus.item_count},
                            {"interactions", corpus.interaction_count()},
                            {"density", density(corpus)}};

        if (full) {
            try {
                const SplitCorpus split = split_leave_one_out(corpus);
                const EmbeddingSet emb = embed_titles_hashed(corpus, dim, base_cfg.seed);
                const SimilarityTable table = build_similarity_table(emb, sim_cfg);

                TrainConfig cfg = base_cfg;
                cfg.net.vocab_size = corpus.item_count;
                // Variants train from independent but reproducible seeds.
                cfg.seed = mix64(mix64(base_cfg.seed) ^ static_cast<std::uint64_t>(n));
                eval_cfg.seed = cfg.seed;

                const std::string sim_model = out_dir + "/" + tag + "_sim.model";
                const std::string bce_model = out_dir + "/" + tag + "_bce.model";
                const TrainOutcome sim_run = run_training(corpus, split, table, cfg,
                                                          /*baseline_bce=*/false, sim_model, "");
                const TrainOutcome bce_run = run_training(corpus, split, table, cfg,
                                                          /*baseline_bce=*/true, bce_model, "");

                const EvalReport sim_report =
                    evaluate(ModelScorer(sim_run.params, split, eval_cfg.target), split, eval_cfg);
                const EvalReport bce_report =
                    evaluate(ModelScorer(bce_run.params, split, eval_cfg.target), split, eval_cfg);
                row["hr_simrec"] = sim_report.mean_hr;
                row["hr_bce"] = bce_report.mean_hr;
                row["hr_gain"] =
                    bce_report.mean_hr > 0.0
                        ? (sim_report.mean_hr - bce_report.mean_hr) / bce_report.mean_hr
                        : 0.0;
                row["ndcg_simrec"] = sim_report.mean_ndcg;
                row["ndcg_bce"] = bce_report.mean_ndcg;
                row["ndcg_gain"] =
                    bce_report.mean_ndcg > 0.0
                        ? (sim_report.mean_ndcg - bce_report.mean_ndcg) / bce_report.mean_ndcg
                        : 0.0;
            } catch (const ConfigError& e) {
                throw ConfigError("density-sweep: stage n=" + std::to_string(n) + " failed: " +
                                  e.what());
            } catch (const std::runtime_error& e) {
                throw DataError("density-sweep: stage n=" + std::to_string(n) + " failed: " +
                                e.what());
            }
        }
        rows.push_back(row);
    }

    const std::string sweep_path = out_dir + "/sweep.json";
    ordered_json out;
    out["thresholds"] = thresholds;
    out["rows"] = rows;
    write_file(sweep_path, out.dump(2) + "\n");
    write_manifest(sweep_path, "density-sweep",
                   {{"thresholds", thresholds}, {"full", full}},
                   {interactions_path, titles_path});
    std::cerr << "sweep report written to " << sweep_path << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"similarity-augmented sequential recommendation toolkit"};
    app.require_subcommand(1);

    // preprocess
    std::string pp_interactions, pp_titles, pp_out;
    std::int64_t pp_min_item_count = 5;
    std::int32_t pp_min_user_len = 5;
    bool pp_no_require_title = false;
    auto* pp = app.add_subcommand("preprocess", "filter a raw interaction log into a corpus");
    pp->add_option("--interactions", pp_interactions)->required();
    pp->add_option("--titles", pp_titles)->required();
    pp->add_option("--min-item-count", pp_min_item_count);
    pp->add_option("--min-user-len", pp_min_user_len);
    pp->add_option("--out", pp_out)->required();
    pp->add_flag("--no-require-title", pp_no_require_title);

    // embed
    std::string em_corpus, em_out;
    std::int32_t em_dim = 64;
    std::uint64_t em_seed = 0;
    auto* em = app.add_subcommand("embed", "hashed-trigram title embeddings");
    em->add_option("--corpus", em_corpus)->required();
    em->add_option("--dim", em_dim);
    em->add_option("--seed", em_seed);
    em->add_option("--out", em_out)->required();

    // simtable
    std::string st_embeddings, st_corpus, st_out;
    SimilarityConfig st_cfg;
    auto* st = app.add_subcommand("simtable", "build the item similarity table");
    st->add_option("--embeddings", st_embeddings)->required();
    st->add_option("--corpus", st_corpus)->required();
    st->add_option("--top-k", st_cfg.top_k);
    st->add_option("--threshold", st_cfg.threshold);
    st->add_option("--temperature", st_cfg.temperature);
    st->add_option("--out", st_out)->required();
    st->add_flag("--include-self", st_cfg.include_self);

    // train
    std::string tr_corpus, tr_simtable, tr_config, tr_out, tr_log;
    bool tr_baseline = false;
    auto* tr = app.add_subcommand("train", "train with the composite objective");
    tr->add_option("--corpus", tr_corpus)->required();
    tr->add_option("--simtable", tr_simtable)->required();
    tr->add_option("--config", tr_config)->required();
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--log", tr_log);
    tr->add_flag("--baseline-bce", tr_baseline, "force lambda0 = 0 (the SASRec objective)");

    // eval
    std::string ev_model, ev_corpus, ev_report, ev_target = "test";
    EvalConfig ev_cfg;
    bool ev_toppop = false;
    auto* ev = app.add_subcommand("eval", "sampled-negative ranking evaluation");
    ev->add_option("--model", ev_model);
    ev->add_option("--corpus", ev_corpus)->required();
    ev->add_option("--k", ev_cfg.k);
    ev->add_option("--negatives", ev_cfg.num_negatives);
    ev->add_option("--repeats", ev_cfg.repeats);
    ev->add_option("--seed", ev_cfg.seed);
    ev->add_option("--target", ev_target)->check(CLI::IsMember({"test", "valid"}));
    ev->add_option("--report", ev_report)->required();
    ev->add_flag("--toppop", ev_toppop);

    // coldstart
    std::string cs_report, cs_corpus, cs_out;
    auto* cs = app.add_subcommand("coldstart", "frequency-bucket breakdown of a report");
    cs->add_option("--report", cs_report)->required();
    cs->add_option("--corpus", cs_corpus)->required();
    cs->add_option("--out", cs_out)->required();

    // density
    std::string de_corpus;
    auto* de = app.add_subcommand("density", "print interactions per item");
    de->add_option("--corpus", de_corpus)->required();

    // density-sweep
    std::string ds_interactions, ds_titles, ds_thresholds = "0,5,10,15,20", ds_out_dir, ds_config;
    bool ds_full = false;
    std::int32_t ds_dim = 64;
    SimilarityConfig ds_sim_cfg;
    EvalConfig ds_eval_cfg;
    auto* ds = app.add_subcommand("density-sweep", "preprocess at several min-item-counts");
    ds->add_option("--interactions", ds_interactions)->required();
    ds->add_option("--titles", ds_titles)->required();
    ds->add_option("--thresholds", ds_thresholds);
    ds->add_option("--out-dir", ds_out_dir)->required();
    ds->add_flag("--full", ds_full, "also train and evaluate lambda0 and lambda=0 variants");
    ds->add_option("--config", ds_config);
    ds->add_option("--dim", ds_dim);
    ds->add_option("--top-k", ds_sim_cfg.top_k);
    ds->add_option("--sim-threshold", ds_sim_cfg.threshold);
    ds->add_option("--temperature", ds_sim_cfg.temperature);
    ds->add_option("--k", ds_eval_cfg.k);
    ds->add_option("--negatives", ds_eval_cfg.num_negatives);
    ds->add_option("--repeats", ds_eval_cfg.repeats);

    std::vector<const char*> argv;
    argv.push_back("simrec");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            std::cout << app.help();
            return 0;
        }
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (pp->parsed())
            return cmd_preprocess(pp_interactions, pp_titles, pp_min_item_count, pp_min_user_len,
                                  !pp_no_require_title, pp_out);
        if (em->parsed()) return cmd_embed(em_corpus, em_dim, em_seed, em_out);
        if (st->parsed()) return cmd_simtable(st_embeddings, st_corpus, st_cfg, st_out);
        if (tr->parsed())
            return cmd_train(tr_corpus, tr_simtable, tr_config, tr_out, tr_log, tr_baseline);
        if (ev->parsed()) {
            if (!ev_toppop && ev_model.empty())
                throw ConfigError("eval: --model is required unless --toppop is given");
            ev_cfg.target =
                ev_target == "valid" ? EvalConfig::Target::Validation : EvalConfig::Target::Test;
            return cmd_eval(ev_model, ev_corpus, ev_cfg, ev_toppop, ev_report);
        }
        if (cs->parsed()) return cmd_coldstart(cs_report, cs_corpus, cs_out);
        if (de->parsed()) return cmd_density(de_corpus);
        if (ds->parsed())
            return cmd_density_sweep(ds_interactions, ds_titles, ds_thresholds, ds_out_dir, ds_full,
                                     ds_config, ds_dim, ds_sim_cfg, ds_eval_cfg);
        std::cerr << "usage error: no subcommand\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace simrec::cli
