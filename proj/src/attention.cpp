#include "slotpi/attention.hpp"

#include <cmath>

#include "slotpi/errors.hpp"

namespace slotpi {

namespace {

Tensor normal_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
    std::vector<double> d(r * c);
    for (auto& v : d) v = stddev * rng.normal();
    return Tensor::leaf(r, c, std::move(d));
}

Tensor identity_matrix(std::size_t n) {
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
    return Tensor::constant(n, n, std::move(d));
}

// Multi-head scaled dot-product attention on already-normalized streams.
Tensor mha(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p) {
    const std::size_t dh = p.dim / p.heads;
    Tensor q = matmul(q_in, p.wq);
    Tensor k = matmul(kv_in, p.wk);
    Tensor v = matmul(kv_in, p.wv);
    std::vector<Tensor> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        Tensor logits = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
        heads.push_back(matmul(softmax_rows(logits), vh));
    }
    Tensor cat = p.heads == 1 ? heads[0] : concat_cols(heads);
    return matmul(cat, p.wo);
}

Tensor mlp_sublayer(const Tensor& x, const AttentionParams& p) {
    Tensor h = silu(linear(layer_norm(x, p.ln2_g, p.ln2_b), p.mlp_w1, p.mlp_b1));
    return add(x, linear(h, p.mlp_w2, p.mlp_b2));
}

}  // namespace

AttentionParams AttentionParams::init(std::size_t dim, std::size_t heads, Rng& rng) {
    if (heads == 0 || dim % heads != 0) throw ConfigError("attention: dim not divisible by heads");
    AttentionParams p;
    p.dim = dim;
    p.heads = heads;
    const double s = 1.0 / std::sqrt(double(dim));
    p.wq = normal_matrix(dim, dim, s, rng);
    p.wk = normal_matrix(dim, dim, s, rng);
    p.wv = normal_matrix(dim, dim, s, rng);
    p.wo = normal_matrix(dim, dim, s, rng);
    p.ln1_g = Tensor::leaf(1, dim, std::vector<double>(dim, 1.0));
    p.ln1_b = Tensor::leaf(1, dim, std::vector<double>(dim, 0.0));
    p.ln2_g = Tensor::leaf(1, dim, std::vector<double>(dim, 1.0));
    p.ln2_b = Tensor::leaf(1, dim, std::vector<double>(dim, 0.0));
    p.mlp_w1 = normal_matrix(dim, 4 * dim, s, rng);
    p.mlp_b1 = Tensor::leaf(1, 4 * dim, std::vector<double>(4 * dim, 0.0));
    p.mlp_w2 = normal_matrix(4 * dim, dim, 1.0 / std::sqrt(double(4 * dim)), rng);
    p.mlp_b2 = Tensor::leaf(1, dim, std::vector<double>(dim, 0.0));
    return p;
}

AttentionParams AttentionParams::identity_harness(std::size_t dim) {
    AttentionParams p;
    p.dim = dim;
    p.heads = 1;
    p.harness = true;
    p.wq = identity_matrix(dim);
    p.wk = identity_matrix(dim);
    p.wv = identity_matrix(dim);
    p.wo = identity_matrix(dim);
    return p;
}

void AttentionParams::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".wq", wq});
    out.push_back({prefix + ".wk", wk});
    out.push_back({prefix + ".wv", wv});
    out.push_back({prefix + ".wo", wo});
    out.push_back({prefix + ".ln1_g", ln1_g});
    out.push_back({prefix + ".ln1_b", ln1_b});
    out.push_back({prefix + ".ln2_g", ln2_g});
    out.push_back({prefix + ".ln2_b", ln2_b});
    out.push_back({prefix + ".mlp_w1", mlp_w1});
    out.push_back({prefix + ".mlp_b1", mlp_b1});
    out.push_back({prefix + ".mlp_w2", mlp_w2});
    out.push_back({prefix + ".mlp_b2", mlp_b2});
}

std::size_t AttentionParams::param_count() const {
    ParamList l;
    collect("", l);
    std::size_t n = 0;
    for (const auto& p : l) n += p.value.numel();
    return n;
}

Tensor time_encoding_row(std::size_t pos, std::size_t dim) {
    std::vector<double> d(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        double freq = std::pow(10000.0, -double(2 * (i / 2)) / double(dim));
        d[i] = (i % 2 == 0) ? std::sin(double(pos) * freq) : std::cos(double(pos) * freq);
    }
    return Tensor::constant(1, dim, std::move(d));
}

Tensor add_time_encoding(const Tensor& frame, std::size_t pos) {
    return add(frame, broadcast_row(time_encoding_row(pos, frame.cols()), frame.rows()));
}

Tensor self_attention(const Tensor& x, const AttentionParams& p) {
    if (x.cols() != p.dim) throw ShapeError("self_attention: width mismatch");
    if (p.harness) return mha(x, x, p);
    Tensor xn = layer_norm(x, p.ln1_g, p.ln1_b);
    Tensor x1 = add(x, mha(xn, xn, p));
    return mlp_sublayer(x1, p);
}

Tensor cross_attention(const Tensor& xq, const Tensor& xkv, const AttentionParams& p) {
    if (xq.cols() != p.dim || xkv.cols() != p.dim) throw ShapeError("cross_attention: width mismatch");
    if (xkv.rows() < 1) throw ShapeError("cross_attention: empty key/value set");
    if (p.harness) return mha(xq, xkv, p);
    Tensor x1 = add(xq, mha(layer_norm(xq, p.ln1_g, p.ln1_b), layer_norm(xkv, p.ln1_g, p.ln1_b), p));
    return mlp_sublayer(x1, p);
}

Tensor corresponding_temporal_attention(const Tensor& s_t, const std::vector<Tensor>& history,
                                        const AttentionParams& p) {
    if (history.empty()) throw HistoryEmptyError("corresponding_temporal_attention");
    const std::size_t n = s_t.rows(), dh = p.dim / p.heads;
    const std::size_t len = history.size();
    for (const auto& f : history)
        if (f.rows() != n || f.cols() != s_t.cols())
            throw ShapeError("corresponding_temporal_attention: history frame shape");

    std::vector<Tensor> encoded;
    encoded.reserve(len);
    for (std::size_t tau = 0; tau < len; ++tau)
        encoded.push_back(p.harness ? history[tau] : add_time_encoding(history[tau], tau));
    Tensor stacked = concat_rows(encoded);  // (L*N) x D, frame-major

    Tensor qn = p.harness ? s_t : layer_norm(s_t, p.ln1_g, p.ln1_b);
    Tensor kn = p.harness ? stacked : layer_norm(stacked, p.ln1_g, p.ln1_b);
    Tensor q = matmul(qn, p.wq);
    Tensor k = matmul(kn, p.wk);
    Tensor v = matmul(kn, p.wv);

    std::vector<Tensor> slot_rows;
    slot_rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> idx(len);
        for (std::size_t tau = 0; tau < len; ++tau) idx[tau] = tau * n + i;
        Tensor ki = gather_rows(k, idx);  // L x D
        Tensor vi = gather_rows(v, idx);
        Tensor qi = slice_rows(q, i, 1);  // 1 x D
        std::vector<Tensor> heads;
        heads.reserve(p.heads);
        for (std::size_t h = 0; h < p.heads; ++h) {
            Tensor qh = slice_cols(qi, h * dh, dh);
            Tensor kh = slice_cols(ki, h * dh, dh);
            Tensor vh = slice_cols(vi, h * dh, dh);
            Tensor logits = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
            heads.push_back(matmul(softmax_rows(logits), vh));
        }
        slot_rows.push_back(p.heads == 1 ? heads[0] : concat_cols(heads));
    }
    Tensor att = matmul(concat_rows(slot_rows), p.wo);
    if (p.harness) return att;
    return mlp_sublayer(add(s_t, att), p);
}

}  // namespace slotpi
