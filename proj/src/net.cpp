#include "simrec/net.hpp"

#include "simrec/io.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace simrec {

namespace {

constexpr const char* kModelMagic = "SIMREC-MODEL\x01";

}  // namespace

Mat<double> project_embeddings(const EmbeddingSet& emb, std::int32_t target_dim) {
    const ItemIndex count = emb.item_count();
    if (count < 1) throw DataError("project_embeddings: empty embedding set");
    if (emb.dim == target_dim) return emb.vectors.bottomRows(count);
    if (emb.dim < target_dim)
        throw DataError("project_embeddings: cannot project " + std::to_string(emb.dim) +
                        " dims up to " + std::to_string(target_dim));

    // PCA on the item rows: center, take the top target_dim eigenvectors of
    // the covariance. Sign fixed per component so the result is unique.
    const Mat<double> rows = emb.vectors.bottomRows(count);
    const Eigen::RowVectorXd mean = rows.colwise().mean();
    const Mat<double> centered = rows.rowwise() - mean;
    const Mat<double> cov = centered.transpose() * centered / static_cast<double>(count);
    Eigen::SelfAdjointEigenSolver<Mat<double>> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericalError("project_embeddings: eigensolver failed");

    // Eigenvalues come back ascending; take the last target_dim columns.
    Mat<double> basis = solver.eigenvectors().rightCols(target_dim).rowwise().reverse();
    for (std::int32_t c = 0; c < target_dim; ++c) {
        Eigen::Index argmax = 0;
        basis.col(c).cwiseAbs().maxCoeff(&argmax);
        if (basis(argmax, c) < 0.0) basis.col(c) = -basis.col(c);
    }
    return centered * basis;
}

ModelParams<double> init_params(const NetConfig& cfg, std::uint64_t seed,
                                const EmbeddingSet* init_embeddings) {
    cfg.validate();
    ModelParams<double> params = ModelParams<double>::zeros(cfg);
    auto refs = tensor_refs(params);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        auto& ref = refs[i];
        Rng rng = keyed_rng(seed, stream::kInit, i);
        if (ref.name.find("gamma") != std::string::npos) {
            ref.map().setOnes();
        } else if (ref.name.find("beta") != std::string::npos ||
                   ref.name.find("_b") != std::string::npos) {
            ref.map().setZero();
        } else {
            const double limit =
                std::sqrt(6.0 / static_cast<double>(ref.rows + ref.cols));
            auto m = ref.map();
            // Row-major fill order, independent of Eigen's storage layout.
            for (Eigen::Index r = 0; r < ref.rows; ++r)
                for (Eigen::Index c = 0; c < ref.cols; ++c) m(r, c) = rng.uniform(-limit, limit);
        }
    }
    params.item_emb.row(0).setZero();

    if (init_embeddings != nullptr) {
        if (init_embeddings->item_count() != cfg.vocab_size)
            throw DataError("init_params: embedding set covers " +
                            std::to_string(init_embeddings->item_count()) + " items, vocab is " +
                            std::to_string(cfg.vocab_size));
        const Mat<double> projected = project_embeddings(*init_embeddings, cfg.hidden_size);
        // Match Glorot's expected row norm: entries uniform on [-a, a] have
        // variance a^2/3, so E||row||^2 = d a^2 / 3.
        const double limit = std::sqrt(6.0 / static_cast<double>(cfg.vocab_size + 1 + cfg.hidden_size));
        const double target_norm = limit * std::sqrt(static_cast<double>(cfg.hidden_size) / 3.0);
        for (ItemIndex i = 1; i <= cfg.vocab_size; ++i) {
            const double norm = projected.row(i - 1).norm();
            if (norm > 1e-12) params.item_emb.row(i) = projected.row(i - 1) * (target_norm / norm);
        }
    }
    return params;
}

void save_model(const std::string& path, const ModelParams<double>& params) {
    ByteWriter w;
    w.raw(kModelMagic, 13);
    const auto& cfg = params.cfg;
    w.u32(static_cast<std::uint32_t>(cfg.hidden_size));
    w.u32(static_cast<std::uint32_t>(cfg.num_blocks));
    w.u32(static_cast<std::uint32_t>(cfg.num_heads));
    w.u32(static_cast<std::uint32_t>(cfg.max_seq_len));
    w.f64(cfg.dropout_rate);
    w.u32(static_cast<std::uint32_t>(cfg.vocab_size));
    w.u32(static_cast<std::uint32_t>(cfg.ffn_hidden));
    auto refs = tensor_refs(const_cast<ModelParams<double>&>(params));
    for (const auto& ref : refs) {
        w.u32(static_cast<std::uint32_t>(ref.rows));
        w.u32(static_cast<std::uint32_t>(ref.cols));
        const auto m = ref.map();
        for (Eigen::Index r = 0; r < ref.rows; ++r)
            for (Eigen::Index c = 0; c < ref.cols; ++c) w.f32(static_cast<float>(m(r, c)));
    }
    write_file(path, w.bytes());
}

ModelParams<double> load_model(const std::string& path) {
    const std::string bytes = read_file(path);
    ByteReader r(bytes, path);
    r.expect_magic(std::string(kModelMagic, 13));
    NetConfig cfg;
    cfg.hidden_size = static_cast<std::int32_t>(r.u32());
    cfg.num_blocks = static_cast<std::int32_t>(r.u32());
    cfg.num_heads = static_cast<std::int32_t>(r.u32());
    cfg.max_seq_len = static_cast<std::int32_t>(r.u32());
    cfg.dropout_rate = r.f64();
    cfg.vocab_size = static_cast<std::int32_t>(r.u32());
    cfg.ffn_hidden = static_cast<std::int32_t>(r.u32());
    cfg.validate();
    ModelParams<double> params = ModelParams<double>::zeros(cfg);
    auto refs = tensor_refs(params);
    for (auto& ref : refs) {
        const auto rows = static_cast<Eigen::Index>(r.u32());
        const auto cols = static_cast<Eigen::Index>(r.u32());
        if (rows != ref.rows || cols != ref.cols)
            throw DataError(path + ": tensor " + ref.name + " has shape " + std::to_string(rows) +
                            "x" + std::to_string(cols) + ", expected " + std::to_string(ref.rows) +
                            "x" + std::to_string(ref.cols));
        auto m = ref.map();
        for (Eigen::Index rr = 0; rr < rows; ++rr)
            for (Eigen::Index cc = 0; cc < cols; ++cc) m(rr, cc) = static_cast<double>(r.f32());
    }
    if (!r.at_end()) throw DataError(path + ": trailing bytes after model payload");
    return params;
}

}  // namespace simrec
