#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "slotpi/rng.hpp"
#include "slotpi/tensor.hpp"

namespace slotpi::test {

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -2.0,
                            double hi = 2.0, bool leaf = true) {
    std::vector<double> d(r * c);
    for (auto& v : d) v = rng.uniform(lo, hi);
    return leaf ? Tensor::leaf(r, c, std::move(d)) : Tensor::constant(r, c, std::move(d));
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Central finite difference of a scalar function along one entry of x.
inline double central_fd(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> x, std::size_t i, double h = 1e-5) {
    x[i] += h;
    double fp = f(x);
    x[i] -= 2 * h;
    double fm = f(x);
    return (fp - fm) / (2 * h);
}

// Triple-loop matmul oracle.
inline std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                         std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace slotpi::test
