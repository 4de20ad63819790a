#include "slotpi/stmod.hpp"

#include "slotpi/errors.hpp"

namespace slotpi {

STBlockParams STBlockParams::init(std::size_t dim, std::size_t heads, bool full_cross, Rng& rng) {
    STBlockParams p;
    p.temporal = AttentionParams::init(dim, heads, rng);
    p.spatial = AttentionParams::init(dim, heads, rng);
    p.full_cross = full_cross;
    return p;
}

void STBlockParams::collect(const std::string& prefix, ParamList& out) const {
    temporal.collect(prefix + ".temporal", out);
    spatial.collect(prefix + ".spatial", out);
}

STStack STStack::init(std::size_t dim, std::size_t heads, std::size_t n_blocks, bool full_cross,
                      Rng& rng) {
    if (n_blocks < 1) throw ConfigError("st stack: need at least one block");
    STStack s;
    for (std::size_t i = 0; i < n_blocks; ++i)
        s.blocks.push_back(STBlockParams::init(dim, heads, full_cross, rng));
    return s;
}

void STStack::collect(const std::string& prefix, ParamList& out) const {
    for (std::size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(prefix + ".block" + std::to_string(i), out);
}

Tensor st_block(const Tensor& s_t, const std::vector<Tensor>& history, const STBlockParams& p) {
    if (history.empty()) throw HistoryEmptyError("st_block");
    Tensor temporal;
    if (p.full_cross) {
        std::vector<Tensor> encoded;
        encoded.reserve(history.size());
        for (std::size_t tau = 0; tau < history.size(); ++tau)
            encoded.push_back(add_time_encoding(history[tau], tau));
        temporal = cross_attention(s_t, concat_rows(encoded), p.temporal);
    } else {
        temporal = corresponding_temporal_attention(s_t, history, p.temporal);
    }
    return add(temporal, self_attention(s_t, p.spatial));
}

Tensor st_forward(const Tensor& s_t, const std::vector<Tensor>& history, const STStack& stack) {
    Tensor x = s_t;
    for (const auto& b : stack.blocks) x = st_block(x, history, b);
    return x;
}

}  // namespace slotpi
