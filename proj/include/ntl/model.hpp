#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "ntl/batch.hpp"

namespace ntl {

struct ModelConfig {
    int vocab_size = 0;
    int context_length = 64;
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int d_ff = 256;
    std::uint64_t seed = 0;

    void validate() const {
        if (vocab_size < 1 || context_length < 1 || d_model < 1 || n_heads < 1 ||
            n_layers < 1 || d_ff < 1)
            throw std::invalid_argument("model dimensions must be >= 1");
        if (d_model % n_heads != 0)
            throw std::invalid_argument("d_model must be divisible by n_heads");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// Pre-layernorm decoder block weights. Attention projections carry no bias.
template <typename S>
struct LayerParams {
    Mat<S> wq, wk, wv, wo;      // d_model x d_model
    Mat<S> w1;                  // d_model x d_ff
    Vec<S> b1;                  // d_ff
    Mat<S> w2;                  // d_ff x d_model
    Vec<S> b2;                  // d_model
    Vec<S> ln1_g, ln1_b, ln2_g, ln2_b;
};

template <typename S>
struct Parameters {
    Mat<S> tok_emb;             // vocab x d_model
    Mat<S> pos_emb;             // context x d_model
    std::vector<LayerParams<S>> layers;
    Vec<S> lnf_g, lnf_b;
    Mat<S> head;                // d_model x vocab (untied)
};

/// Visits every parameter tensor in declaration order. The order is the
/// serialization and optimizer-state contract.
template <typename S, typename F>
void for_each_tensor(Parameters<S>& p, F&& f) {
    f(p.tok_emb);
    f(p.pos_emb);
    for (auto& l : p.layers) {
        f(l.wq); f(l.wk); f(l.wv); f(l.wo);
        f(l.w1); f(l.b1); f(l.w2); f(l.b2);
        f(l.ln1_g); f(l.ln1_b); f(l.ln2_g); f(l.ln2_b);
    }
    f(p.lnf_g);
    f(p.lnf_b);
    f(p.head);
}

template <typename S, typename F>
void for_each_tensor(const Parameters<S>& p, F&& f) {
    for_each_tensor(const_cast<Parameters<S>&>(p), [&](auto& t) { f(std::as_const(t)); });
}

template <typename S>
Parameters<S> zeros_like_params(const ModelConfig& c) {
    Parameters<S> p;
    p.tok_emb = Mat<S>::Zero(c.vocab_size, c.d_model);
    p.pos_emb = Mat<S>::Zero(c.context_length, c.d_model);
    p.layers.resize(c.n_layers);
    for (auto& l : p.layers) {
        l.wq = Mat<S>::Zero(c.d_model, c.d_model);
        l.wk = Mat<S>::Zero(c.d_model, c.d_model);
        l.wv = Mat<S>::Zero(c.d_model, c.d_model);
        l.wo = Mat<S>::Zero(c.d_model, c.d_model);
        l.w1 = Mat<S>::Zero(c.d_model, c.d_ff);
        l.b1 = Vec<S>::Zero(c.d_ff);
        l.w2 = Mat<S>::Zero(c.d_ff, c.d_model);
        l.b2 = Vec<S>::Zero(c.d_model);
        l.ln1_g = Vec<S>::Zero(c.d_model);
        l.ln1_b = Vec<S>::Zero(c.d_model);
        l.ln2_g = Vec<S>::Zero(c.d_model);
        l.ln2_b = Vec<S>::Zero(c.d_model);
    }
    p.lnf_g = Vec<S>::Zero(c.d_model);
    p.lnf_b = Vec<S>::Zero(c.d_model);
    p.head = Mat<S>::Zero(c.d_model, c.vocab_size);
    return p;
}

/// Scaled-normal init (std 0.02) for embeddings, projections and head;
/// layernorm gains 1, all biases 0. Deterministic in the seed.
template <typename S>
Parameters<S> init_params(const ModelConfig& c) {
    c.validate();
    Parameters<S> p = zeros_like_params<S>(c);
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    auto fill = [&](Mat<S>& w) {
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = S(normal(rng));
    };
    fill(p.tok_emb);
    fill(p.pos_emb);
    for (auto& l : p.layers) {
        fill(l.wq); fill(l.wk); fill(l.wv); fill(l.wo);
        fill(l.w1); fill(l.w2);
        l.ln1_g.setOnes();
        l.ln2_g.setOnes();
    }
    p.lnf_g.setOnes();
    fill(p.head);
    return p;
}

/// A ragged batch: sequences stored back to back. offsets has B+1 entries;
/// sequence b occupies rows [offsets[b], offsets[b+1]). pad marks positions
/// that attention must ignore (left padding); empty means no padding.
struct TokenBatch {
    std::vector<int> ids;
    std::vector<int> offsets;
    std::vector<bool> pad;

    static TokenBatch single(std::vector<int> seq) {
        TokenBatch b;
        b.offsets = {0, static_cast<int>(seq.size())};
        b.ids = std::move(seq);
        return b;
    }
    int positions() const { return static_cast<int>(ids.size()); }
    int sequences() const { return static_cast<int>(offsets.size()) - 1; }
    bool padded(int i) const { return !pad.empty() && pad[i]; }
};

template <typename S>
struct ForwardCache {
    TokenBatch batch;
    std::vector<int> pos_ids;
    struct Layer {
        Mat<S> ln1_hat, ln1_out;
        Vec<S> ln1_is;
        Mat<S> q, k, v, att_concat;
        std::vector<Mat<S>> att;  // sequences * heads attention matrices
        Mat<S> ln2_hat, ln2_out;
        Vec<S> ln2_is;
        Mat<S> h_pre, h_act;
    };
    std::vector<Layer> layers;
    Mat<S> lnf_hat, lnf_out;
    Vec<S> lnf_is;
};

namespace detail {

constexpr double kLnEps = 1e-5;

template <typename S>
void layernorm_forward(const Mat<S>& x, const Vec<S>& g, const Vec<S>& b,
                       Mat<S>& hat, Mat<S>& out, Vec<S>& inv_std) {
    const Eigen::Index d = x.cols();
    hat.resize(x.rows(), d);
    out.resize(x.rows(), d);
    inv_std.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const S mu = x.row(i).mean();
        const S var = (x.row(i).array() - mu).square().mean();
        const S is = S(1) / std::sqrt(var + S(kLnEps));
        inv_std[i] = is;
        hat.row(i) = (x.row(i).array() - mu) * is;
        out.row(i) = hat.row(i).cwiseProduct(g.transpose()) + b.transpose();
    }
}

/// dx for y = g * hat + b given dy; also accumulates dg, db.
template <typename S>
Mat<S> layernorm_backward(const Mat<S>& dy, const Mat<S>& hat, const Vec<S>& inv_std,
                          const Vec<S>& g, Vec<S>& dg, Vec<S>& db) {
    Mat<S> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        dg += dy.row(i).cwiseProduct(hat.row(i)).transpose();
        db += dy.row(i).transpose();
        const auto dhat = dy.row(i).cwiseProduct(g.transpose());
        const S m1 = dhat.mean();
        const S m2 = dhat.cwiseProduct(hat.row(i)).mean();
        dx.row(i) = inv_std[i] * (dhat.array() - m1 - hat.row(i).array() * m2);
    }
    return dx;
}

template <typename S>
S gelu(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865476)));
}

template <typename S>
S gelu_grad(S x) {
    const S phi = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
    return S(0.5) * (S(1) + std::erf(x * S(0.7071067811865476))) + x * phi;
}

}  // namespace detail

/// Causal forward pass over a ragged batch. Returns logits (positions x vocab)
/// and fills the cache needed for an exact backward pass.
template <typename S>
Mat<S> forward(const Parameters<S>& p, const ModelConfig& c, const TokenBatch& batch,
               ForwardCache<S>& cache) {
    const int P = batch.positions();
    const int B = batch.sequences();
    const int d = c.d_model;
    const int H = c.n_heads;
    const int dh = d / H;
    const S scale = S(1) / std::sqrt(S(dh));

    cache.batch = batch;
    cache.layers.assign(c.n_layers, {});
    cache.pos_ids.resize(P);

    Mat<S> x(P, d);
    for (int b = 0; b < B; ++b) {
        const int r0 = batch.offsets[b], r1 = batch.offsets[b + 1];
        if (r1 - r0 > c.context_length) throw std::invalid_argument("sequence exceeds context");
        int pos = 0;
        for (int i = r0; i < r1; ++i) {
            const int id = batch.ids[i];
            if (id < 0 || id >= c.vocab_size) throw std::out_of_range("token id out of range");
            // Padded positions do not advance the position counter, so a
            // left-padded prompt sees the same positional codes as an
            // unpadded one.
            cache.pos_ids[i] = batch.padded(i) ? 0 : pos++;
            x.row(i) = p.tok_emb.row(id) + p.pos_emb.row(cache.pos_ids[i]);
        }
    }

    for (int layer = 0; layer < c.n_layers; ++layer) {
        auto& L = cache.layers[layer];
        const auto& w = p.layers[layer];
        detail::layernorm_forward(x, w.ln1_g, w.ln1_b, L.ln1_hat, L.ln1_out, L.ln1_is);
        L.q.noalias() = L.ln1_out * w.wq;
        L.k.noalias() = L.ln1_out * w.wk;
        L.v.noalias() = L.ln1_out * w.wv;
        L.att_concat.resize(P, d);
        L.att.resize(static_cast<std::size_t>(B) * H);
        for (int b = 0; b < B; ++b) {
            const int r0 = batch.offsets[b];
            const int len = batch.offsets[b + 1] - r0;
            for (int h = 0; h < H; ++h) {
                auto Q = L.q.block(r0, h * dh, len, dh);
                auto K = L.k.block(r0, h * dh, len, dh);
                auto V = L.v.block(r0, h * dh, len, dh);
                Mat<S>& A = L.att[static_cast<std::size_t>(b) * H + h];
                A.noalias() = Q * K.transpose() * scale;
                for (int i = 0; i < len; ++i) {
                    S mx = std::numeric_limits<S>::lowest();
                    for (int j = 0; j <= i; ++j)
                        if (!batch.padded(r0 + j)) mx = std::max(mx, A(i, j));
                    if (mx == std::numeric_limits<S>::lowest()) {
                        A.row(i).setZero();  // padded query with no valid key
                        continue;
                    }
                    S sum = 0;
                    for (int j = 0; j < len; ++j) {
                        if (j > i || batch.padded(r0 + j)) {
                            A(i, j) = 0;
                        } else {
                            A(i, j) = std::exp(A(i, j) - mx);
                            sum += A(i, j);
                        }
                    }
                    A.row(i) /= sum;
                }
                L.att_concat.block(r0, h * dh, len, dh).noalias() = A * V;
            }
        }
        x.noalias() += L.att_concat * w.wo;

        detail::layernorm_forward(x, w.ln2_g, w.ln2_b, L.ln2_hat, L.ln2_out, L.ln2_is);
        L.h_pre.noalias() = L.ln2_out * w.w1;
        L.h_pre.rowwise() += w.b1.transpose();
        L.h_act = L.h_pre.unaryExpr([](S v) { return detail::gelu(v); });
        x.noalias() += L.h_act * w.w2;
        x.rowwise() += w.b2.transpose();
    }

    detail::layernorm_forward(x, p.lnf_g, p.lnf_b, cache.lnf_hat, cache.lnf_out, cache.lnf_is);
    Mat<S> logits;
    logits.noalias() = cache.lnf_out * p.head;
    return logits;
}

/// Convenience single-sequence forward matching the batched path exactly.
template <typename S>
Mat<S> forward(const Parameters<S>& p, const ModelConfig& c, const std::vector<int>& tokens,
               ForwardCache<S>& cache, const std::vector<bool>& pad_mask = {}) {
    TokenBatch b = TokenBatch::single(tokens);
    if (!pad_mask.empty()) {
        if (pad_mask.size() != tokens.size())
            throw std::invalid_argument("pad mask size mismatch");
        b.pad.resize(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) b.pad[i] = !pad_mask[i];
    }
    return forward(p, c, b, cache);
}

/// Exact reverse-mode gradients of sum(dlogits .* logits) w.r.t. every
/// parameter, replaying the cached forward.
template <typename S>
Parameters<S> backward(const Parameters<S>& p, const ModelConfig& c,
                       const ForwardCache<S>& cache, const Mat<S>& dlogits) {
    const TokenBatch& batch = cache.batch;
    const int P = batch.positions();
    const int B = batch.sequences();
    const int d = c.d_model;
    const int H = c.n_heads;
    const int dh = d / H;
    const S scale = S(1) / std::sqrt(S(dh));
    if (dlogits.rows() != P || dlogits.cols() != c.vocab_size)
        throw std::invalid_argument("dlogits shape mismatch");

    Parameters<S> g = zeros_like_params<S>(c);

    g.head.noalias() = cache.lnf_out.transpose() * dlogits;
    Mat<S> dx;
    dx.noalias() = dlogits * p.head.transpose();
    dx = detail::layernorm_backward(dx, cache.lnf_hat, cache.lnf_is, p.lnf_g, g.lnf_g, g.lnf_b);

    for (int layer = c.n_layers - 1; layer >= 0; --layer) {
        const auto& L = cache.layers[layer];
        const auto& w = p.layers[layer];
        auto& gw = g.layers[layer];

        // MLP block: x += gelu(ln2_out * w1 + b1) * w2 + b2
        gw.b2 = dx.colwise().sum().transpose();
        gw.w2.noalias() = L.h_act.transpose() * dx;
        Mat<S> dh_act;
        dh_act.noalias() = dx * w.w2.transpose();
        Mat<S> dh_pre =
            dh_act.cwiseProduct(L.h_pre.unaryExpr([](S v) { return detail::gelu_grad(v); }));
        gw.b1 = dh_pre.colwise().sum().transpose();
        gw.w1.noalias() = L.ln2_out.transpose() * dh_pre;
        Mat<S> dln2;
        dln2.noalias() = dh_pre * w.w1.transpose();
        dx += detail::layernorm_backward(dln2, L.ln2_hat, L.ln2_is, w.ln2_g, gw.ln2_g, gw.ln2_b);

        // Attention block: x += (softmax(QK^T) V heads) * wo
        gw.wo.noalias() = L.att_concat.transpose() * dx;
        Mat<S> datt;
        datt.noalias() = dx * w.wo.transpose();
        Mat<S> dq = Mat<S>::Zero(P, d), dk = Mat<S>::Zero(P, d), dv = Mat<S>::Zero(P, d);
        for (int b = 0; b < B; ++b) {
            const int r0 = batch.offsets[b];
            const int len = batch.offsets[b + 1] - r0;
            for (int h = 0; h < H; ++h) {
                const Mat<S>& A = L.att[static_cast<std::size_t>(b) * H + h];
                auto Q = L.q.block(r0, h * dh, len, dh);
                auto K = L.k.block(r0, h * dh, len, dh);
                auto V = L.v.block(r0, h * dh, len, dh);
                auto dOut = datt.block(r0, h * dh, len, dh);
                Mat<S> dA;
                dA.noalias() = dOut * V.transpose();
                dv.block(r0, h * dh, len, dh).noalias() = A.transpose() * dOut;
                // softmax backward; masked entries have A == 0 and vanish
                Mat<S> dS(len, len);
                for (int i = 0; i < len; ++i) {
                    const S dot = dA.row(i).cwiseProduct(A.row(i)).sum();
                    dS.row(i) = A.row(i).array() * (dA.row(i).array() - dot);
                }
                dq.block(r0, h * dh, len, dh).noalias() = dS * K * scale;
                dk.block(r0, h * dh, len, dh).noalias() = dS.transpose() * Q * scale;
            }
        }
        gw.wq.noalias() = L.ln1_out.transpose() * dq;
        gw.wk.noalias() = L.ln1_out.transpose() * dk;
        gw.wv.noalias() = L.ln1_out.transpose() * dv;
        Mat<S> dln1;
        dln1.noalias() = dq * w.wq.transpose();
        dln1.noalias() += dk * w.wk.transpose();
        dln1.noalias() += dv * w.wv.transpose();
        dx += detail::layernorm_backward(dln1, L.ln1_hat, L.ln1_is, w.ln1_g, gw.ln1_g, gw.ln1_b);
    }

    for (int i = 0; i < P; ++i) {
        g.tok_emb.row(batch.ids[i]) += dx.row(i);
        g.pos_emb.row(cache.pos_ids[i]) += dx.row(i);
    }
    return g;
}

template <typename S>
struct AdamState {
    Parameters<S> m, v;
    std::int64_t t = 0;

    static AdamState init(const ModelConfig& c) {
        return {zeros_like_params<S>(c), zeros_like_params<S>(c), 0};
    }
};

/// AdamW step with decoupled weight decay and bias-corrected moments.
template <typename S>
void adam_step(Parameters<S>& params, const Parameters<S>& grads, AdamState<S>& state,
               S lr, S weight_decay, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8)) {
    ++state.t;
    const S bc1 = S(1) - std::pow(beta1, S(state.t));
    const S bc2 = S(1) - std::pow(beta2, S(state.t));

    auto step_one = [&](auto& w, const auto& gr, auto& m, auto& v) {
        m = beta1 * m + (S(1) - beta1) * gr;
        v.array() = beta2 * v.array() + (S(1) - beta2) * gr.array().square();
        w.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps) +
                           weight_decay * w.array());
    };
    step_one(params.tok_emb, grads.tok_emb, state.m.tok_emb, state.v.tok_emb);
    step_one(params.pos_emb, grads.pos_emb, state.m.pos_emb, state.v.pos_emb);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& pw = params.layers[l];
        const auto& gw = grads.layers[l];
        auto& mw = state.m.layers[l];
        auto& vw = state.v.layers[l];
        step_one(pw.wq, gw.wq, mw.wq, vw.wq);
        step_one(pw.wk, gw.wk, mw.wk, vw.wk);
        step_one(pw.wv, gw.wv, mw.wv, vw.wv);
        step_one(pw.wo, gw.wo, mw.wo, vw.wo);
        step_one(pw.w1, gw.w1, mw.w1, vw.w1);
        step_one(pw.b1, gw.b1, mw.b1, vw.b1);
        step_one(pw.w2, gw.w2, mw.w2, vw.w2);
        step_one(pw.b2, gw.b2, mw.b2, vw.b2);
        step_one(pw.ln1_g, gw.ln1_g, mw.ln1_g, vw.ln1_g);
        step_one(pw.ln1_b, gw.ln1_b, mw.ln1_b, vw.ln1_b);
        step_one(pw.ln2_g, gw.ln2_g, mw.ln2_g, vw.ln2_g);
        step_one(pw.ln2_b, gw.ln2_b, mw.ln2_b, vw.ln2_b);
    }
    step_one(params.lnf_g, grads.lnf_g, state.m.lnf_g, state.v.lnf_g);
    step_one(params.lnf_b, grads.lnf_b, state.m.lnf_b, state.v.lnf_b);
    step_one(params.head, grads.head, state.m.head, state.v.head);
}

/// Greedy argmax decoding; ties break to the lowest token index. Stops at
/// stop_token, max_new tokens, or the context boundary.
template <typename S>
std::vector<int> generate_greedy(const Parameters<S>& p, const ModelConfig& c,
                                 const std::vector<int>& prompt, int max_new, int stop_token) {
    if (static_cast<int>(prompt.size()) > c.context_length)
        throw std::invalid_argument("prompt exceeds context");
    std::vector<int> seq = prompt;
    ForwardCache<S> cache;
    for (int step = 0; step < max_new; ++step) {
        if (static_cast<int>(seq.size()) >= c.context_length) break;
        const Mat<S> logits = forward(p, c, seq, cache);
        const auto last = logits.row(logits.rows() - 1);
        int best = 0;
        for (int j = 1; j < c.vocab_size; ++j)
            if (last[j] > last[best]) best = j;
        seq.push_back(best);
        if (best == stop_token) break;
    }
    return seq;
}

}  // namespace ntl
