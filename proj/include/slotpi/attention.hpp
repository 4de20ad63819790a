#pragma once

#include <string>
#include <utility>
#include <vector>

#include "slotpi/rng.hpp"
#include "slotpi/tensor.hpp"

namespace slotpi {

// Named trainable leaf.
struct Param {
    std::string name;
    Tensor value;
};

using ParamList = std::vector<Param>;

// Pre-layer-norm residual attention block: X + MHA(LN(X)), then X' + MLP(LN(X')).
// Heads are column slices of DxD projections. In harness mode (tests) the
// block degenerates to a single-head softmax-weighted average of value rows:
// identity projections, no layer norm, no residual, no MLP, no time encoding.
struct AttentionParams {
    std::size_t dim = 0;
    std::size_t heads = 1;
    bool harness = false;

    Tensor wq, wk, wv, wo;              // DxD
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;  // 1xD
    Tensor mlp_w1, mlp_b1;              // Dx4D, 1x4D
    Tensor mlp_w2, mlp_b2;              // 4DxD, 1xD

    static AttentionParams init(std::size_t dim, std::size_t heads, Rng& rng);
    static AttentionParams identity_harness(std::size_t dim);

    void collect(const std::string& prefix, ParamList& out) const;
    std::size_t param_count() const;
};

// Sinusoidal position row, deterministic in (pos, dim).
Tensor time_encoding_row(std::size_t pos, std::size_t dim);

// Adds time_encoding_row(pos) to every slot row of a frame.
Tensor add_time_encoding(const Tensor& frame, std::size_t pos);

Tensor self_attention(const Tensor& x, const AttentionParams& p);

// Queries from xq, keys/values from xkv (callers attach any time encoding).
Tensor cross_attention(const Tensor& xq, const Tensor& xkv, const AttentionParams& p);

// Slot i attends only to slot i across history frames; time encoding is
// attached per source frame internally (oldest frame = position 0).
Tensor corresponding_temporal_attention(const Tensor& s_t, const std::vector<Tensor>& history,
                                        const AttentionParams& p);

}  // namespace slotpi
