#include "simrec/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace simrec {

ItemIndex sample_negative(const std::unordered_set<ItemIndex>& history, std::int32_t vocab_size,
                          Rng& rng) {
    if (static_cast<std::int64_t>(history.size()) >= vocab_size)
        throw DataError("sample_negative: history covers the whole vocabulary");
    for (;;) {
        const auto candidate =
            static_cast<ItemIndex>(rng.below(static_cast<std::uint64_t>(vocab_size)) + 1);
        if (history.find(candidate) == history.end()) return candidate;
    }
}

TrainBatch make_train_batch(const SplitCorpus& split, const std::vector<std::int32_t>& users,
                            std::int32_t max_seq_len, std::int32_t vocab_size,
                            const std::function<Rng(std::int32_t user)>& rng_for_user) {
    const auto n = static_cast<Eigen::Index>(users.size());
    TrainBatch batch;
    batch.inputs = IdxMat::Zero(n, max_seq_len);
    batch.positives = IdxMat::Zero(n, max_seq_len);
    batch.negatives = IdxMat::Zero(n, max_seq_len);

    for (Eigen::Index row = 0; row < n; ++row) {
        const std::int32_t u = users[static_cast<std::size_t>(row)];
        const auto& seq = split.train[static_cast<std::size_t>(u)];
        const auto m = static_cast<std::int32_t>(seq.size());

        std::unordered_set<ItemIndex> full_history(seq.begin(), seq.end());
        full_history.insert(split.valid[static_cast<std::size_t>(u)]);
        full_history.insert(split.test[static_cast<std::size_t>(u)]);

        // Inputs are seq[0..m-2], positives the left-shift; keep the most
        // recent max_seq_len positions when the prefix is longer.
        const std::int32_t k = std::min(m - 1, max_seq_len);
        const std::int32_t start = m - 1 - k;
        Rng rng = rng_for_user(u);
        for (std::int32_t j = 0; j < k; ++j) {
            const std::int32_t col = max_seq_len - k + j;
            batch.inputs(row, col) = seq[static_cast<std::size_t>(start + j)];
            batch.positives(row, col) = seq[static_cast<std::size_t>(start + j + 1)];
            batch.negatives(row, col) = sample_negative(full_history, vocab_size, rng);
        }
    }
    return batch;
}

double lambda_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
    if (cfg.warmup_steps >= total_steps)
        throw ConfigError("lambda_at: warmup_steps " + std::to_string(cfg.warmup_steps) +
                          " must be < total_steps " + std::to_string(total_steps));
    if (step < 0 || step >= total_steps) throw ConfigError("lambda_at: step out of range");
    if (step < cfg.warmup_steps) {
        if (cfg.warmup_mode == WarmupMode::RampUp)
            return cfg.lambda0 *
                   (static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
        return cfg.lambda0;
    }
    const double denom = static_cast<double>(total_steps - cfg.warmup_steps);
    // Ratio-first keeps the decay exactly within [lambda0/(T-W), lambda0];
    // the last step is written in the same form as its documented bound.
    if (step == total_steps - 1) return cfg.lambda0 / denom;
    return cfg.lambda0 * (static_cast<double>(total_steps - step) / denom);
}

void adam_step(ModelParams<double>& params, ModelParams<double>& grads, OptimizerState& state,
               const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));

    auto p_refs = tensor_refs(params);
    auto g_refs = tensor_refs(grads);
    auto m_refs = tensor_refs(state.m);
    auto v_refs = tensor_refs(state.v);
    for (std::size_t i = 0; i < p_refs.size(); ++i) {
        double* p = p_refs[i].data;
        const double* g = g_refs[i].data;
        double* m = m_refs[i].data;
        double* v = v_refs[i].data;
        const auto n = p_refs[i].size();
        for (Eigen::Index j = 0; j < n; ++j) {
            m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g[j];
            v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
    params.item_emb.row(0).setZero();
}

ModelParams<double> fit(const SplitCorpus& split, const SimilarityTable& simtable,
                        const TrainConfig& cfg, const CheckpointSink& checkpoint_sink,
                        const LogSink& log_sink) {
    cfg.validate();
    if (simtable.item_count() != cfg.net.vocab_size)
        throw DataError("fit: similarity table covers " + std::to_string(simtable.item_count()) +
                        " items, vocab is " + std::to_string(cfg.net.vocab_size));
    if (split.corpus->item_count != cfg.net.vocab_size)
        throw DataError("fit: corpus vocabulary does not match net config");

    const std::int32_t n_users = split.user_count();
    const std::int64_t steps_per_epoch =
        (n_users + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = steps_per_epoch * cfg.epochs;
    if (cfg.lambda0 > 0.0 && cfg.warmup_steps >= total_steps)
        throw ConfigError("fit: warmup_steps must be < total steps (" + std::to_string(total_steps) + ")");

    const EmbeddingSet init_emb =
        cfg.init_embeddings_path.empty()
            ? EmbeddingSet{}
            : load_embeddings(cfg.init_embeddings_path, *split.corpus);
    ModelParams<double> params = init_params(
        cfg.net, cfg.seed, cfg.init_embeddings_path.empty() ? nullptr : &init_emb);
    OptimizerState state = OptimizerState::zeros(cfg.net);

    std::vector<std::int32_t> order(static_cast<std::size_t>(n_users));
    std::iota(order.begin(), order.end(), 0);

    std::int64_t step = 0;
    for (std::int32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates from the epoch-keyed stream.
        Rng shuffle_rng = keyed_rng(cfg.seed, stream::kShuffle, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);

        for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
            const auto t_start = std::chrono::steady_clock::now();
            const auto begin = static_cast<std::size_t>(b) * static_cast<std::size_t>(cfg.batch_size);
            const auto end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::int32_t> users(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                            order.begin() + static_cast<std::ptrdiff_t>(end));

            TrainBatch batch = make_train_batch(
                split, users, cfg.net.max_seq_len, cfg.net.vocab_size, [&](std::int32_t user) {
                    return keyed_rng(cfg.seed, stream::kNegative,
                                     static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(user));
                });

            const double lambda = cfg.lambda0 == 0.0 ? 0.0 : lambda_at(step, total_steps, cfg);
            Rng dropout_rng = keyed_rng(cfg.seed, stream::kDropout, static_cast<std::uint64_t>(step));
            LossResult<double> loss =
                compute_loss(params, batch, simtable, lambda, /*train_mode=*/true, &dropout_rng);

            double grad_sq = 0.0;
            for (const auto& ref : tensor_refs(loss.grads)) {
                const Eigen::Map<const Mat<double>> m(ref.data, ref.rows, ref.cols);
                grad_sq += m.squaredNorm();
            }
            adam_step(params, loss.grads, state, cfg);

            if (log_sink) {
                TrainLogEntry entry;
                entry.step = step;
                entry.epoch = epoch;
                entry.lambda_value = lambda;
                entry.loss_total = loss.total;
                entry.loss_bce = loss.bce;
                entry.loss_similarity = loss.similarity;
                entry.grad_norm = std::sqrt(grad_sq);
                entry.wallclock_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t_start)
                        .count();
                log_sink(entry);
            }
            ++step;
        }
        if (checkpoint_sink && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0)
            checkpoint_sink(epoch, params, state);
    }
    return params;
}

}  // namespace simrec
