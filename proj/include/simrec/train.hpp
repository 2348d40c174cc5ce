#pragma once

#include "simrec/corpus.hpp"
#include "simrec/net.hpp"
#include "simrec/simtable.hpp"
#include "simrec/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

namespace simrec {

enum class WarmupMode {
    HoldThenDecay,  // lambda0 for the first W steps, then linear decay to ~0
    RampUp,         // linear 0 -> lambda0 over W steps, then the same decay
};

struct TrainConfig {
    double lambda0 = 0.5;
    std::int64_t warmup_steps = 1000;
    std::int32_t epochs = 210;
    std::int32_t batch_size = 128;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    NetConfig net;
    WarmupMode warmup_mode = WarmupMode::HoldThenDecay;
    std::int32_t checkpoint_every = 0;  // epochs between checkpoints; 0 = off
    std::string init_embeddings_path;   // optional ablation: seed E from embeddings

    void validate() const {
        if (lambda0 < 0.0 || lambda0 > 1.0) throw ConfigError("lambda0 must be in [0, 1]");
        if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
        if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
        net.validate();
    }
};

/// One training batch: left-padded input prefixes, aligned next-item targets,
/// and per-position sampled negatives. Valid positions are those with
/// inputs != 0; at each of them positives[t] = inputs[t+1] (or the final
/// target at the last column) and negatives[t] is outside the user's history.
struct TrainBatch {
    IdxMat inputs, positives, negatives;

    Eigen::Index user_count() const { return inputs.rows(); }
};

/// Uniform over {1..vocab_size} \ history, by rejection.
ItemIndex sample_negative(const std::unordered_set<ItemIndex>& history, std::int32_t vocab_size,
                          Rng& rng);

/// Builds the batch for the given users: inputs are the last max_seq_len
/// prefix items of train_seq, positives the left-shifted targets, negatives
/// sampled per position against the user's full interaction set
/// (train + valid + test).
TrainBatch make_train_batch(const SplitCorpus& split, const std::vector<std::int32_t>& users,
                            std::int32_t max_seq_len, std::int32_t vocab_size,
                            const std::function<Rng(std::int32_t user)>& rng_for_user);

/// Loss-weight schedule: hold (or ramp to) lambda0 during warm-up, then
/// decay linearly so the final step is lambda0 / (T - W).
double lambda_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

template <class S>
struct LossResult {
    double total = 0, bce = 0, similarity = 0;
    ModelParams<S> grads;
};

/// SimRec objective on one batch:
///   bce        = -sum_valid [log sig(r_pos) + log(1 - sig(r_neg))] / batch_users
///   similarity = -sum_valid sum_j shat[pos][j] * log softmax_vocab(r)[j] / batch_users
///   total      = (1 - lambda) * bce + lambda * similarity
/// Gradients are exact analytic derivatives of total for every tensor; the
/// padding row of item_emb is forced to zero. Positions whose positive item
/// has an empty similarity row contribute nothing to the similarity term,
/// and the similarity pass is skipped entirely at lambda = 0.
template <class S>
LossResult<S> compute_loss(const ModelParams<S>& params, const TrainBatch& batch,
                           const SimilarityTable& simtable, double lambda,
                           bool train_mode = false, Rng* dropout_rng = nullptr);

struct OptimizerState {
    ModelParams<double> m, v;
    std::int64_t step = 0;

    static OptimizerState zeros(const NetConfig& cfg) {
        return {ModelParams<double>::zeros(cfg), ModelParams<double>::zeros(cfg), 0};
    }
};

/// Bias-corrected Adam. Re-zeroes row 0 of the item embedding afterwards.
void adam_step(ModelParams<double>& params, ModelParams<double>& grads, OptimizerState& state,
               const TrainConfig& cfg);

struct TrainLogEntry {
    std::int64_t step = 0;
    std::int32_t epoch = 0;
    double lambda_value = 0;
    double loss_total = 0, loss_bce = 0, loss_similarity = 0;
    double grad_norm = 0;
    double wallclock_ms = 0;
};

using LogSink = std::function<void(const TrainLogEntry&)>;
using CheckpointSink =
    std::function<void(std::int32_t epoch, const ModelParams<double>&, const OptimizerState&)>;

/// Full training loop: epochs x ceil(users / batch_size) steps, user order
/// reshuffled and negatives resampled each epoch, lambda from lambda_at with
/// total_steps = epochs * steps_per_epoch.
ModelParams<double> fit(const SplitCorpus& split, const SimilarityTable& simtable,
                        const TrainConfig& cfg, const CheckpointSink& checkpoint_sink = nullptr,
                        const LogSink& log_sink = nullptr);

namespace detail {

inline double log_sigmoid(double x) {
    return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

template <class S>
LossResult<S> compute_loss(const ModelParams<S>& params, const TrainBatch& batch,
                           const SimilarityTable& simtable, double lambda, bool train_mode,
                           Rng* dropout_rng) {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("compute_loss: lambda must be in [0, 1]");
    const auto& cfg = params.cfg;
    const auto L = cfg.max_seq_len;
    const auto V = cfg.vocab_size;
    const auto n_users = batch.inputs.rows();
    if (n_users < 1) throw DataError("compute_loss: empty batch");
    if (batch.inputs.cols() != L)
        throw DataError("compute_loss: batch width != max_seq_len");

    LossResult<S> result;
    result.grads = ModelParams<S>::zeros(cfg);
    const double inv_users = 1.0 / static_cast<double>(n_users);
    const double bce_weight = (1.0 - lambda) * inv_users;
    const double sim_weight = lambda * inv_users;
    Rng null_rng(0);
    Rng& rng = dropout_rng ? *dropout_rng : null_rng;

    double bce_sum = 0.0, sim_sum = 0.0;
    for (Eigen::Index u = 0; u < n_users; ++u) {
        std::vector<ItemIndex> idx(static_cast<std::size_t>(L));
        for (std::int32_t t = 0; t < L; ++t) idx[static_cast<std::size_t>(t)] = batch.inputs(u, t);

        ForwardCache<S> cache;
        const Mat<S> hidden = forward_user(params, idx, train_mode, rng, &cache);
        Mat<S> dhidden = Mat<S>::Zero(L, cfg.hidden_size);

        for (std::int32_t t = cache.first_valid; t < L; ++t) {
            const ItemIndex pos = batch.positives(u, t);
            const ItemIndex neg = batch.negatives(u, t);
            const Vec<S> f = hidden.row(t).transpose();

            const double r_pos = static_cast<double>(params.item_emb.row(pos).dot(f));
            const double r_neg = static_cast<double>(params.item_emb.row(neg).dot(f));
            bce_sum -= detail::log_sigmoid(r_pos) + detail::log_sigmoid(-r_neg);

            const S c_pos = static_cast<S>(bce_weight * (detail::sigmoid(r_pos) - 1.0));
            const S c_neg = static_cast<S>(bce_weight * detail::sigmoid(r_neg));
            dhidden.row(t) += c_pos * params.item_emb.row(pos) + c_neg * params.item_emb.row(neg);
            result.grads.item_emb.row(pos) += c_pos * f.transpose();
            result.grads.item_emb.row(neg) += c_neg * f.transpose();

            if (lambda > 0.0) {
                const auto& sim_items = simtable.items[static_cast<std::size_t>(pos)];
                const auto& sim_probs = simtable.probs[static_cast<std::size_t>(pos)];
                if (sim_items.empty()) continue;

                // Full-vocabulary softmax of r^t in 64-bit with max-subtraction.
                Vec<S> r = params.item_emb.bottomRows(V) * f;  // item j at [j-1]
                const S mx = r.maxCoeff();
                Vec<S> p = (r.array() - mx).exp().matrix();
                const S z = p.sum();
                p /= z;
                const double log_z = static_cast<double>(std::log(z) + mx);
                for (std::size_t e = 0; e < sim_items.size(); ++e)
                    sim_sum -= sim_probs[e] *
                               (static_cast<double>(r(sim_items[e] - 1)) - log_z);

                // dL/dr = p - shat, applied with the similarity weight.
                Vec<S> dr = static_cast<S>(sim_weight) * p;
                for (std::size_t e = 0; e < sim_items.size(); ++e)
                    dr(sim_items[e] - 1) -= static_cast<S>(sim_weight * sim_probs[e]);
                dhidden.row(t) += (params.item_emb.bottomRows(V).transpose() * dr).transpose();
                result.grads.item_emb.bottomRows(V) += dr * f.transpose();
            }
        }
        if (!std::isfinite(bce_sum) || !std::isfinite(sim_sum))
            throw NumericalError("compute_loss: non-finite loss at batch row " + std::to_string(u));
        backward_user(params, idx, cache, dhidden, result.grads);
    }

    result.grads.item_emb.row(0).setZero();
    result.bce = bce_sum * inv_users;
    result.similarity = sim_sum * inv_users;
    result.total = (1.0 - lambda) * result.bce + lambda * result.similarity;
    return result;
}

}  // namespace simrec
