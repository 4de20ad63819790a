#pragma once

#include <string>
#include <vector>

#include "slotpi/attention.hpp"

namespace slotpi {

// One spatiotemporal block: temporal attention over history plus spatial
// self-attention on the current frame, summed.
struct STBlockParams {
    AttentionParams temporal;
    AttentionParams spatial;
    // Temporal term defaults to corresponding-slot attention (STATM style);
    // full cross-frame attention is selectable via config.
    bool full_cross = false;

    static STBlockParams init(std::size_t dim, std::size_t heads, bool full_cross, Rng& rng);
    void collect(const std::string& prefix, ParamList& out) const;
};

struct STStack {
    std::vector<STBlockParams> blocks;

    static STStack init(std::size_t dim, std::size_t heads, std::size_t n_blocks, bool full_cross,
                        Rng& rng);
    void collect(const std::string& prefix, ParamList& out) const;
};

// History must include the current frame (newest last).
Tensor st_block(const Tensor& s_t, const std::vector<Tensor>& history, const STBlockParams& p);

// Blocks chained on the query stream; history is fixed.
Tensor st_forward(const Tensor& s_t, const std::vector<Tensor>& history, const STStack& stack);

}  // namespace slotpi
