#pragma once

#include "simrec/rng.hpp"
#include "simrec/simtable.hpp"
#include "simrec/types.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace simrec {

struct NetConfig {
    std::int32_t hidden_size = 50;
    std::int32_t num_blocks = 2;
    std::int32_t num_heads = 1;
    std::int32_t max_seq_len = 50;
    double dropout_rate = 0.2;
    std::int32_t vocab_size = 0;
    std::int32_t ffn_hidden = 0;  // 0 = same as hidden_size

    std::int32_t ffn() const { return ffn_hidden > 0 ? ffn_hidden : hidden_size; }
    std::int32_t head_dim() const { return hidden_size / num_heads; }

    void validate() const {
        if (hidden_size < 1 || num_blocks < 1 || num_heads < 1 || max_seq_len < 1)
            throw ConfigError("net: hidden_size, num_blocks, num_heads, max_seq_len must be >= 1");
        if (hidden_size % num_heads != 0)
            throw ConfigError("net: hidden_size " + std::to_string(hidden_size) +
                              " not divisible by num_heads " + std::to_string(num_heads));
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("net: dropout_rate must be in [0, 1)");
        if (vocab_size < 1) throw ConfigError("net: vocab_size must be >= 1");
        if (ffn_hidden < 0) throw ConfigError("net: ffn_hidden must be >= 0");
    }
};

constexpr double kLayerNormEps = 1e-8;

template <class S>
struct BlockParams {
    Mat<S> wq, wk, wv, wo;    // hidden x hidden, no bias
    Mat<S> ffn_w1, ffn_w2;    // hidden x ffn, ffn x hidden
    Vec<S> ffn_b1, ffn_b2;
    Vec<S> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

/// All learnable tensors. Row 0 of item_emb is the padding row and stays
/// zero through init and every optimizer step.
template <class S>
struct ModelParams {
    NetConfig cfg;
    Mat<S> item_emb;  // (vocab_size + 1) x hidden
    Mat<S> pos_emb;   // max_seq_len x hidden
    std::vector<BlockParams<S>> blocks;
    Vec<S> final_gamma, final_beta;

    static ModelParams zeros(const NetConfig& cfg) {
        cfg.validate();
        const auto d = cfg.hidden_size;
        const auto f = cfg.ffn();
        ModelParams p;
        p.cfg = cfg;
        p.item_emb = Mat<S>::Zero(cfg.vocab_size + 1, d);
        p.pos_emb = Mat<S>::Zero(cfg.max_seq_len, d);
        p.blocks.resize(static_cast<std::size_t>(cfg.num_blocks));
        for (auto& b : p.blocks) {
            b.wq = Mat<S>::Zero(d, d);
            b.wk = Mat<S>::Zero(d, d);
            b.wv = Mat<S>::Zero(d, d);
            b.wo = Mat<S>::Zero(d, d);
            b.ffn_w1 = Mat<S>::Zero(d, f);
            b.ffn_w2 = Mat<S>::Zero(f, d);
            b.ffn_b1 = Vec<S>::Zero(f);
            b.ffn_b2 = Vec<S>::Zero(d);
            b.ln1_gamma = Vec<S>::Zero(d);
            b.ln1_beta = Vec<S>::Zero(d);
            b.ln2_gamma = Vec<S>::Zero(d);
            b.ln2_beta = Vec<S>::Zero(d);
        }
        p.final_gamma = Vec<S>::Zero(d);
        p.final_beta = Vec<S>::Zero(d);
        return p;
    }
};

/// Flat view over every tensor in checkpoint order. The order is part of the
/// model file format; see docs/FORMATS.md.
template <class S>
struct TensorRef {
    std::string name;
    S* data;
    Eigen::Index rows, cols;

    Eigen::Index size() const { return rows * cols; }
    Eigen::Map<Mat<S>> map() const { return {data, rows, cols}; }
};

template <class S>
std::vector<TensorRef<S>> tensor_refs(ModelParams<S>& p) {
    std::vector<TensorRef<S>> refs;
    auto add = [&](const std::string& name, auto& t) {
        refs.push_back({name, t.data(), t.rows(), t.cols()});
    };
    add("item_emb", p.item_emb);
    add("pos_emb", p.pos_emb);
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        add(pre + "wq", p.blocks[b].wq);
        add(pre + "wk", p.blocks[b].wk);
        add(pre + "wv", p.blocks[b].wv);
        add(pre + "wo", p.blocks[b].wo);
        add(pre + "ffn_w1", p.blocks[b].ffn_w1);
        add(pre + "ffn_b1", p.blocks[b].ffn_b1);
        add(pre + "ffn_w2", p.blocks[b].ffn_w2);
        add(pre + "ffn_b2", p.blocks[b].ffn_b2);
        add(pre + "ln1_gamma", p.blocks[b].ln1_gamma);
        add(pre + "ln1_beta", p.blocks[b].ln1_beta);
        add(pre + "ln2_gamma", p.blocks[b].ln2_gamma);
        add(pre + "ln2_beta", p.blocks[b].ln2_beta);
    }
    add("final_gamma", p.final_gamma);
    add("final_beta", p.final_beta);
    return refs;
}

/// Glorot-uniform init from a seed-keyed stream per tensor; layer-norm scales
/// start at 1, biases at 0. With init_embeddings given, item embedding rows
/// are set from the (PCA-projected, see project_embeddings) vectors rescaled
/// to Glorot's expected row norm.
ModelParams<double> init_params(const NetConfig& cfg, std::uint64_t seed,
                                const EmbeddingSet* init_embeddings = nullptr);

/// Deterministic, seed-free PCA projection of item vectors to target_dim
/// columns. Identity when dims already match. Component signs are fixed by
/// making the largest-magnitude coordinate positive.
Mat<double> project_embeddings(const EmbeddingSet& emb, std::int32_t target_dim);

template <class S>
struct ForwardCache {
    std::int32_t first_valid = 0;
    Mat<S> x0;                       // embeddings + positions, after dropout
    Mat<S> emb_mask;                 // dropout masks (empty when not training)
    struct Block {
        Mat<S> x_in, xhat1, u;       // input, layer-norm intermediate, normalized
        Vec<S> invstd1;
        Mat<S> q, k, v, attn_out;    // projections and pre-Wo concat output
        std::vector<Vec<S>> alpha;   // per head*L softmax weights over the window
        Mat<S> attn_mask;
        Mat<S> x_mid, xhat2, u2;
        Vec<S> invstd2;
        Mat<S> z1, relu1;            // FFN pre-activation and activation
        Mat<S> ffn_mask;
    };
    std::vector<Block> blocks;
    Mat<S> x_final, xhat_final;
    Vec<S> invstd_final;
};

namespace detail {

/// Row-wise layer norm: writes xhat (pre-scale normalized rows) and invstd,
/// returns gamma .* xhat + beta per row.
template <class S>
Mat<S> layer_norm_rows(const Mat<S>& x, const Vec<S>& gamma, const Vec<S>& beta, Mat<S>& xhat,
                       Vec<S>& invstd) {
    const auto rows = x.rows();
    const auto d = x.cols();
    xhat.resize(rows, d);
    invstd.resize(rows);
    Mat<S> out(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const S mean = x.row(r).mean();
        const S var = (x.row(r).array() - mean).square().mean();
        const S is = S(1) / std::sqrt(var + S(kLayerNormEps));
        invstd(r) = is;
        xhat.row(r) = ((x.row(r).array() - mean) * is).matrix();
        out.row(r) =
            (xhat.row(r).array() * gamma.transpose().array() + beta.transpose().array()).matrix();
    }
    return out;
}

/// Gradient of layer_norm_rows w.r.t. its input given d(gamma .* xhat).
/// Population variance: dx = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat)).
template <class S>
Mat<S> layer_norm_backward_rows(const Mat<S>& dxhat, const Mat<S>& xhat, const Vec<S>& invstd) {
    const auto rows = xhat.rows();
    const auto d = xhat.cols();
    Mat<S> dx(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const S m1 = dxhat.row(r).mean();
        const S m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
        dx.row(r) = (((dxhat.row(r).array() - m1) - xhat.row(r).array() * m2) * invstd(r)).matrix();
    }
    return dx;
}

template <class S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Mat<S> mask(rows, cols);
    const S scale = S(1) / S(1.0 - rate);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            mask(r, c) = rng.uniform() < rate ? S(0) : scale;
    return mask;
}

}  // namespace detail

/// Runs one left-padded sequence through the network. idx has length
/// max_seq_len with zeros only as a prefix. Returns the hidden states
/// (max_seq_len x hidden); rows before the first valid position are
/// never read by loss or evaluation. With train_mode, dropout masks are
/// drawn from rng and recorded in the cache for the backward pass.
template <class S>
Mat<S> forward_user(const ModelParams<S>& params, std::span<const ItemIndex> idx, bool train_mode,
                    Rng& rng, ForwardCache<S>* cache) {
    const auto& cfg = params.cfg;
    const auto L = cfg.max_seq_len;
    const auto d = cfg.hidden_size;
    const auto H = cfg.num_heads;
    const auto dh = cfg.head_dim();
    if (static_cast<std::int32_t>(idx.size()) != L)
        throw DataError("forward: sequence length " + std::to_string(idx.size()) +
                        " != max_seq_len " + std::to_string(L));

    std::int32_t first_valid = L;
    for (std::int32_t t = 0; t < L; ++t) {
        const ItemIndex item = idx[static_cast<std::size_t>(t)];
        if (item < 0 || item > cfg.vocab_size)
            throw DataError("forward: item index " + std::to_string(item) + " out of range");
        if (item != 0 && first_valid == L) first_valid = t;
        if (item == 0 && first_valid < L)
            throw DataError("forward: padding after first valid position (must be left-padded)");
    }

    const bool use_dropout = train_mode && cfg.dropout_rate > 0.0;
    const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));

    Mat<S> x(L, d);
    for (std::int32_t t = 0; t < L; ++t)
        x.row(t) = params.item_emb.row(idx[static_cast<std::size_t>(t)]) + params.pos_emb.row(t);
    if (use_dropout) {
        Mat<S> mask = detail::dropout_mask<S>(L, d, cfg.dropout_rate, rng);
        x.array() *= mask.array();
        if (cache) cache->emb_mask = std::move(mask);
    }
    if (cache) {
        cache->first_valid = first_valid;
        cache->x0 = x;
        cache->blocks.resize(static_cast<std::size_t>(cfg.num_blocks));
    }

    for (std::int32_t b = 0; b < cfg.num_blocks; ++b) {
        const auto& blk = params.blocks[static_cast<std::size_t>(b)];
        typename ForwardCache<S>::Block* cb = cache ? &cache->blocks[static_cast<std::size_t>(b)] : nullptr;

        Mat<S> xhat1;
        Vec<S> invstd1;
        Mat<S> u = detail::layer_norm_rows(x, blk.ln1_gamma, blk.ln1_beta, xhat1, invstd1);

        Mat<S> q = u * blk.wq;
        Mat<S> k = u * blk.wk;
        Mat<S> v = u * blk.wv;

        // Causal attention over the valid window only: queries at padded
        // positions produce zeros, keys at padded positions are never seen.
        Mat<S> attn_out = Mat<S>::Zero(L, d);
        std::vector<Vec<S>> alphas;
        if (cb) alphas.resize(static_cast<std::size_t>(H) * static_cast<std::size_t>(L));
        for (std::int32_t h = 0; h < H; ++h) {
            const auto col0 = h * dh;
            for (std::int32_t t = first_valid; t < L; ++t) {
                const std::int32_t w = t - first_valid + 1;
                Vec<S> scores(w);
                for (std::int32_t j = 0; j < w; ++j)
                    scores(j) = q.row(t).segment(col0, dh).dot(k.row(first_valid + j).segment(col0, dh)) *
                                inv_sqrt_dh;
                const S mx = scores.maxCoeff();
                Vec<S> alpha = (scores.array() - mx).exp().matrix();
                alpha /= alpha.sum();
                for (std::int32_t j = 0; j < w; ++j)
                    attn_out.row(t).segment(col0, dh) += alpha(j) * v.row(first_valid + j).segment(col0, dh);
                if (cb) alphas[static_cast<std::size_t>(h) * static_cast<std::size_t>(L) +
                               static_cast<std::size_t>(t)] = std::move(alpha);
            }
        }
        Mat<S> a = attn_out * blk.wo;
        if (use_dropout) {
            Mat<S> mask = detail::dropout_mask<S>(L, d, cfg.dropout_rate, rng);
            a.array() *= mask.array();
            if (cb) cb->attn_mask = std::move(mask);
        }
        if (cb) {
            cb->x_in = x;
            cb->xhat1 = std::move(xhat1);
            cb->invstd1 = std::move(invstd1);
            cb->u = std::move(u);
            cb->q = std::move(q);
            cb->k = std::move(k);
            cb->v = std::move(v);
            cb->attn_out = std::move(attn_out);
            cb->alpha = std::move(alphas);
        }
        x += a;

        Mat<S> xhat2;
        Vec<S> invstd2;
        Mat<S> u2 = detail::layer_norm_rows(x, blk.ln2_gamma, blk.ln2_beta, xhat2, invstd2);
        Mat<S> z1 = (u2 * blk.ffn_w1).rowwise() + blk.ffn_b1.transpose();
        Mat<S> relu1 = z1.cwiseMax(S(0));
        Mat<S> f = (relu1 * blk.ffn_w2).rowwise() + blk.ffn_b2.transpose();
        if (use_dropout) {
            Mat<S> mask = detail::dropout_mask<S>(L, d, cfg.dropout_rate, rng);
            f.array() *= mask.array();
            if (cb) cb->ffn_mask = std::move(mask);
        }
        if (cb) {
            cb->x_mid = x;
            cb->xhat2 = std::move(xhat2);
            cb->invstd2 = std::move(invstd2);
            cb->u2 = std::move(u2);
            cb->z1 = std::move(z1);
            cb->relu1 = std::move(relu1);
        }
        x += f;
    }

    Mat<S> xhat_final;
    Vec<S> invstd_final;
    Mat<S> hidden = detail::layer_norm_rows(x, params.final_gamma, params.final_beta, xhat_final, invstd_final);
    if (cache) {
        cache->x_final = x;
        cache->xhat_final = std::move(xhat_final);
        cache->invstd_final = std::move(invstd_final);
    }
    return hidden;
}

/// Accumulates parameter gradients for one sequence given dL/dhidden.
/// `idx` must be the sequence passed to forward_user and `grads` a
/// zeros-or-accumulating mirror of the parameters.
template <class S>
void backward_user(const ModelParams<S>& params, std::span<const ItemIndex> idx,
                   const ForwardCache<S>& cache, const Mat<S>& dhidden, ModelParams<S>& grads) {
    const auto& cfg = params.cfg;
    const auto L = cfg.max_seq_len;
    const auto H = cfg.num_heads;
    const auto dh = cfg.head_dim();
    const std::int32_t first_valid = cache.first_valid;
    const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
    const bool used_dropout = cache.emb_mask.size() > 0;

    // Final layer norm.
    Mat<S> dxhat =
        (dhidden.array().rowwise() * params.final_gamma.transpose().array()).matrix();
    grads.final_gamma +=
        (dhidden.array() * cache.xhat_final.array()).colwise().sum().matrix().transpose();
    grads.final_beta += dhidden.colwise().sum().transpose();
    Mat<S> dx = detail::layer_norm_backward_rows(dxhat, cache.xhat_final, cache.invstd_final);

    for (std::int32_t b = cfg.num_blocks - 1; b >= 0; --b) {
        const auto& blk = params.blocks[static_cast<std::size_t>(b)];
        auto& gblk = grads.blocks[static_cast<std::size_t>(b)];
        const auto& cb = cache.blocks[static_cast<std::size_t>(b)];

        // FFN sublayer: x = x_mid + drop(W2 relu(W1 ln2(x_mid) + b1) + b2).
        Mat<S> df = used_dropout ? Mat<S>((dx.array() * cb.ffn_mask.array()).matrix()) : dx;
        gblk.ffn_w2 += cb.relu1.transpose() * df;
        gblk.ffn_b2 += df.colwise().sum().transpose();
        Mat<S> drelu = df * blk.ffn_w2.transpose();
        Mat<S> dz1 =
            ((cb.z1.array() > S(0)).template cast<S>() * drelu.array()).matrix();
        gblk.ffn_w1 += cb.u2.transpose() * dz1;
        gblk.ffn_b1 += dz1.colwise().sum().transpose();
        Mat<S> du2 = dz1 * blk.ffn_w1.transpose();

        Mat<S> dxhat2 = (du2.array().rowwise() * blk.ln2_gamma.transpose().array()).matrix();
        gblk.ln2_gamma += (du2.array() * cb.xhat2.array()).colwise().sum().matrix().transpose();
        gblk.ln2_beta += du2.colwise().sum().transpose();
        dx += detail::layer_norm_backward_rows(dxhat2, cb.xhat2, cb.invstd2);

        // Attention sublayer: x_mid = x_in + drop(attn(ln1(x_in)) * wo).
        Mat<S> da = used_dropout ? Mat<S>((dx.array() * cb.attn_mask.array()).matrix()) : dx;
        gblk.wo += cb.attn_out.transpose() * da;
        Mat<S> dattn = da * blk.wo.transpose();

        Mat<S> dq = Mat<S>::Zero(L, cfg.hidden_size);
        Mat<S> dk = Mat<S>::Zero(L, cfg.hidden_size);
        Mat<S> dv = Mat<S>::Zero(L, cfg.hidden_size);
        for (std::int32_t h = 0; h < H; ++h) {
            const auto col0 = h * dh;
            for (std::int32_t t = first_valid; t < L; ++t) {
                const std::int32_t w = t - first_valid + 1;
                const Vec<S>& alpha = cb.alpha[static_cast<std::size_t>(h) * static_cast<std::size_t>(L) +
                                               static_cast<std::size_t>(t)];
                const Eigen::Matrix<S, 1, Eigen::Dynamic> dout = dattn.row(t).segment(col0, dh);
                Vec<S> dalpha(w);
                for (std::int32_t j = 0; j < w; ++j)
                    dalpha(j) = dout.dot(cb.v.row(first_valid + j).segment(col0, dh));
                const S inner = alpha.dot(dalpha);
                Vec<S> dscores = (alpha.array() * (dalpha.array() - inner)).matrix();
                for (std::int32_t j = 0; j < w; ++j) {
                    dq.row(t).segment(col0, dh) +=
                        dscores(j) * cb.k.row(first_valid + j).segment(col0, dh) * inv_sqrt_dh;
                    dk.row(first_valid + j).segment(col0, dh) +=
                        dscores(j) * cb.q.row(t).segment(col0, dh) * inv_sqrt_dh;
                    dv.row(first_valid + j).segment(col0, dh) += alpha(j) * dout;
                }
            }
        }
        gblk.wq += cb.u.transpose() * dq;
        gblk.wk += cb.u.transpose() * dk;
        gblk.wv += cb.u.transpose() * dv;
        Mat<S> du = dq * blk.wq.transpose() + dk * blk.wk.transpose() + dv * blk.wv.transpose();

        Mat<S> dxhat1 = (du.array().rowwise() * blk.ln1_gamma.transpose().array()).matrix();
        gblk.ln1_gamma += (du.array() * cb.xhat1.array()).colwise().sum().matrix().transpose();
        gblk.ln1_beta += du.colwise().sum().transpose();
        dx += detail::layer_norm_backward_rows(dxhat1, cb.xhat1, cb.invstd1);
    }

    Mat<S> dx0 = used_dropout ? Mat<S>(dx.array() * cache.emb_mask.array()) : dx;
    for (std::int32_t t = 0; t < L; ++t) {
        grads.item_emb.row(idx[static_cast<std::size_t>(t)]) += dx0.row(t);
        grads.pos_emb.row(t) += dx0.row(t);
    }
}

/// Batched forward. Each row of `batch` is one left-padded sequence.
template <class S>
struct ForwardOutput {
    std::vector<Mat<S>> hidden;            // per user, max_seq_len x hidden
    std::vector<std::int32_t> first_valid; // positions before this are padding

    bool valid(std::size_t user, std::int32_t t) const { return t >= first_valid[user]; }
};

template <class S>
ForwardOutput<S> forward(const ModelParams<S>& params, const IdxMat& batch, bool train_mode, Rng& rng) {
    ForwardOutput<S> out;
    out.hidden.reserve(static_cast<std::size_t>(batch.rows()));
    for (Eigen::Index u = 0; u < batch.rows(); ++u) {
        std::vector<ItemIndex> idx(static_cast<std::size_t>(batch.cols()));
        for (Eigen::Index t = 0; t < batch.cols(); ++t) idx[static_cast<std::size_t>(t)] = batch(u, t);
        ForwardCache<S> cache;
        out.hidden.push_back(forward_user(params, idx, train_mode, rng, &cache));
        out.first_valid.push_back(cache.first_valid);
    }
    return out;
}

/// Relevance scores r_i = <f, E_i>. With candidates, scores only those;
/// otherwise scores the whole vocabulary 1..V (entry [0] of the result is
/// item 1). The padding row is never scored.
template <class S>
Vec<S> relevance_scores(const Vec<S>& hidden, const ModelParams<S>& params,
                        const std::vector<ItemIndex>* candidates = nullptr) {
    if (candidates == nullptr)
        return params.item_emb.bottomRows(params.cfg.vocab_size) * hidden;
    Vec<S> scores(static_cast<Eigen::Index>(candidates->size()));
    for (std::size_t c = 0; c < candidates->size(); ++c)
        scores(static_cast<Eigen::Index>(c)) = params.item_emb.row((*candidates)[c]).dot(hidden);
    return scores;
}

// Checkpoint container `SIMREC-MODEL\x01`: NetConfig header, then tensors in
// tensor_refs order as row-major little-endian f32 with (rows, cols) prefixes.
void save_model(const std::string& path, const ModelParams<double>& params);
ModelParams<double> load_model(const std::string& path);

}  // namespace simrec
