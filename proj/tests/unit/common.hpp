#pragma once
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include "kg/spectral.hpp"

namespace kgtest {

using kg::cplx;

inline std::vector<double> random_reals(std::size_t n, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = scale * d(rng);
    return v;
}

inline kg::ModeState random_state(const kg::TorusGrid& grid, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    kg::ModeState u(grid);
    for (auto& z : u.data()) z = scale * cplx(d(rng), d(rng));
    return u;
}

inline double max_abs_diff(const std::vector<cplx>& a, const std::vector<cplx>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs(const std::vector<cplx>& a)
{
    double m = 0.0;
    for (auto z : a) m = std::max(m, std::abs(z));
    return m;
}

/// Naive O(K^2) DFT in natural mode order, u_k = (1/K) sum_x u(x) e^{-ikx}.
inline std::vector<cplx> naive_dft(const kg::TorusGrid& grid, const std::vector<cplx>& f)
{
    const int K = grid.K();
    std::vector<cplx> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const int k = grid.mode(i);
        cplx acc = 0.0;
        for (int m = 0; m < K; ++m)
            acc += f[static_cast<std::size_t>(m)] * std::polar(1.0, -2.0 * M_PI * k * m / K);
        out[i] = acc / static_cast<double>(K);
    }
    return out;
}

}  // namespace kgtest
