#include "kg/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>

#include "kg/errors.hpp"

namespace kg {

TorusGrid::TorusGrid(int K) : K_(K)
{
    if (K < 1) throw ParameterError("grid size K must be positive, got " + std::to_string(K));
}

std::size_t TorusGrid::slot(int k) const
{
    if (!contains(k))
        throw IndexError("mode " + std::to_string(k) + " outside N_K for K=" + std::to_string(K_));
    return static_cast<std::size_t>(k - kmin());
}

int TorusGrid::wrap(long k) const noexcept
{
    long r = (k - kmin()) % K_;
    if (r < 0) r += K_;
    return static_cast<int>(r) + kmin();
}

std::size_t TorusGrid::neg_slot(std::size_t s) const noexcept
{
    return static_cast<std::size_t>(wrap(-static_cast<long>(mode(s))) - kmin());
}

double TorusGrid::point(std::size_t m) const noexcept
{
    return 2.0 * std::numbers::pi * static_cast<double>(m) / K_;
}

FrequencySpec::FrequencySpec(const TorusGrid& grid, double rho) : grid_(grid), rho_(rho)
{
    if (!(rho > 0.0) || !std::isfinite(rho))
        throw ParameterError("mass rho must be positive and finite");
    omega_.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double k = grid.mode(i);
        omega_[i] = std::sqrt(k * k + rho);
    }
}

double FrequencySpec::omega_max() const noexcept
{
    double k = grid_.K() / 2.0;
    return std::sqrt(k * k + rho_);
}

Mollifier Mollifier::identity()
{
    return Mollifier("one", [](double) { return 1.0; });
}

Mollifier Mollifier::sinc()
{
    return Mollifier("sinc", [](double x) {
        if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0 + x * x * x * x / 120.0;
        return std::sin(x) / x;
    });
}

Mollifier Mollifier::custom(std::string id, std::function<double(double)> phi)
{
    if (!phi) throw ParameterError("mollifier function is empty");
    if (phi(0.0) != 1.0) throw ParameterError("mollifier must satisfy phi(0) = 1");
    return Mollifier(std::move(id), std::move(phi));
}

Mollifier Mollifier::by_name(const std::string& id)
{
    if (id == "one" || id == "identity") return identity();
    if (id == "sinc") return sinc();
    throw ParameterError("unknown mollifier '" + id + "'");
}

ModeState::ModeState(const TorusGrid& grid) : grid_(grid), u_(grid.size(), cplx{}) {}

ModeState::ModeState(const TorusGrid& grid, std::vector<cplx> u) : grid_(grid), u_(std::move(u))
{
    if (u_.size() != grid.size())
        throw SizeError("mode vector has " + std::to_string(u_.size()) + " entries, grid has " +
                        std::to_string(grid.size()));
}

namespace {

struct PlanPair {
    fftw_plan fwd;
    fftw_plan bwd;
    fftw_plan r2c;
    fftw_plan c2r;
};

// The FFTW planner is not reentrant; execution of an existing plan is.
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

PlanPair plans_for(int K)
{
    static std::map<int, PlanPair> cache;
    std::lock_guard<std::mutex> lock(planner_mutex());
    auto it = cache.find(K);
    if (it != cache.end()) return it->second;
    fftw_complex* a = fftw_alloc_complex(static_cast<std::size_t>(K));
    fftw_complex* b = fftw_alloc_complex(static_cast<std::size_t>(K));
    unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    double* ra = fftw_alloc_real(static_cast<std::size_t>(K));
    PlanPair pp{fftw_plan_dft_1d(K, a, b, FFTW_FORWARD, flags),
                fftw_plan_dft_1d(K, a, b, FFTW_BACKWARD, flags),
                fftw_plan_dft_r2c_1d(K, ra, a, flags),
                fftw_plan_dft_c2r_1d(K, a, ra, flags | FFTW_DESTROY_INPUT)};
    fftw_free(a);
    fftw_free(b);
    fftw_free(ra);
    cache.emplace(K, pp);
    return pp;
}

}  // namespace

FftEngine::FftEngine(const TorusGrid& grid)
    : grid_(grid), scratch_(grid.size())
{
    PlanPair pp = plans_for(grid.K());
    plan_fwd_ = pp.fwd;
    plan_bwd_ = pp.bwd;
    plan_r2c_ = pp.r2c;
    plan_c2r_ = pp.c2r;
}

void FftEngine::r2c(const double* physical, cplx* half)
{
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_r2c_), const_cast<double*>(physical),
                         reinterpret_cast<fftw_complex*>(half));
}

void FftEngine::c2r(const cplx* half, double* physical)
{
    // c2r overwrites its input
    std::copy(half, half + half_size(), scratch_.begin());
    fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_c2r_),
                         reinterpret_cast<fftw_complex*>(scratch_.data()), physical);
}

void FftEngine::forward(const cplx* physical, cplx* modes)
{
    const int K = grid_.K();
    auto* in = reinterpret_cast<fftw_complex*>(const_cast<cplx*>(physical));
    fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_), in,
                     reinterpret_cast<fftw_complex*>(scratch_.data()));
    const double inv = 1.0 / K;
    const int kmin = grid_.kmin();
    for (int i = 0; i < K; ++i) {
        int n = (kmin + i) % K;
        if (n < 0) n += K;
        modes[i] = scratch_[static_cast<std::size_t>(n)] * inv;
    }
}

void FftEngine::inverse(const cplx* modes, cplx* physical)
{
    const int K = grid_.K();
    const int kmin = grid_.kmin();
    for (int i = 0; i < K; ++i) {
        int n = (kmin + i) % K;
        if (n < 0) n += K;
        scratch_[static_cast<std::size_t>(n)] = modes[i];
    }
    fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_),
                     reinterpret_cast<fftw_complex*>(scratch_.data()),
                     reinterpret_cast<fftw_complex*>(physical));
}

std::vector<cplx> dft_forward(const TorusGrid& grid, const std::vector<cplx>& physical)
{
    if (physical.size() != grid.size()) throw SizeError("dft_forward: size mismatch");
    FftEngine fft(grid);
    std::vector<cplx> out(grid.size());
    fft.forward(physical.data(), out.data());
    return out;
}

std::vector<cplx> dft_inverse(const TorusGrid& grid, const std::vector<cplx>& modes)
{
    if (modes.size() != grid.size()) throw SizeError("dft_inverse: size mismatch");
    FftEngine fft(grid);
    std::vector<cplx> out(grid.size());
    fft.inverse(modes.data(), out.data());
    return out;
}

ModeState to_modes(const RealState& state, const FrequencySpec& freq)
{
    const TorusGrid& grid = freq.grid();
    const std::size_t K = grid.size();
    if (state.q.size() != K || state.p.size() != K)
        throw SizeError("to_modes: state has " + std::to_string(state.q.size()) + "/" +
                        std::to_string(state.p.size()) + " points, grid has " + std::to_string(K));
    FftEngine fft(grid);
    std::vector<cplx> buf(K), qk(K), pk(K);
    for (std::size_t m = 0; m < K; ++m) buf[m] = state.q[m];
    fft.forward(buf.data(), qk.data());
    for (std::size_t m = 0; m < K; ++m) buf[m] = state.p[m];
    fft.forward(buf.data(), pk.data());
    ModeState u(grid);
    const auto& om = freq.table();
    for (std::size_t i = 0; i < K; ++i) {
        double s = std::sqrt(om[i]);
        u.data()[i] = s * qk[i] + cplx(0.0, 1.0) * pk[i] / s;
    }
    return u;
}

void qp_coefficients(const ModeState& u, const FrequencySpec& freq, std::vector<cplx>& qk,
                     std::vector<cplx>& pk)
{
    const TorusGrid& grid = freq.grid();
    const std::size_t K = grid.size();
    if (u.size() != K) throw SizeError("mode state does not match frequency grid");
    const auto& om = freq.table();
    const auto& v = u.data();
    qk.resize(K);
    pk.resize(K);
    for (std::size_t i = 0; i < K; ++i) {
        cplx a = v[i];
        cplx b = std::conj(v[grid.neg_slot(i)]);
        double s = std::sqrt(om[i]);
        qk[i] = (a + b) / (2.0 * s);
        pk[i] = (a - b) * s / cplx(0.0, 2.0);
    }
}

RealState from_modes(const ModeState& u, const FrequencySpec& freq)
{
    const TorusGrid& grid = freq.grid();
    const std::size_t K = grid.size();
    std::vector<cplx> qk, pk;
    qp_coefficients(u, freq, qk, pk);
    FftEngine fft(grid);
    std::vector<cplx> qx(K), px(K);
    fft.inverse(qk.data(), qx.data());
    fft.inverse(pk.data(), px.data());
    RealState out;
    out.q.resize(K);
    out.p.resize(K);
    double scale = 0.0, residue = 0.0;
    for (std::size_t m = 0; m < K; ++m) {
        out.q[m] = qx[m].real();
        out.p[m] = px[m].real();
        scale = std::max({scale, std::abs(qx[m]), std::abs(px[m])});
        residue = std::max({residue, std::abs(qx[m].imag()), std::abs(px[m].imag())});
    }
    if (scale > 0.0 && residue > 1e-10 * scale)
        std::fprintf(stderr, "warning: from_modes discarded imaginary residue %.3e (scale %.3e)\n",
                     residue, scale);
    return out;
}

double super_action(const ModeState& u, int k)
{
    const TorusGrid& grid = u.grid();
    std::size_t s = grid.slot(k);
    std::size_t n = grid.neg_slot(s);
    const auto& v = u.data();
    if (n == s) return std::norm(v[s]);
    return 0.5 * (std::norm(v[s]) + std::norm(v[n]));
}

std::vector<int> canonical_modes(const TorusGrid& grid)
{
    std::vector<int> ks;
    int top = (grid.K() + 1) / 2;
    for (int k = 0; k < top; ++k) ks.push_back(k);
    if (grid.even() && grid.K() >= 2) ks.push_back(-grid.K() / 2);
    return ks;
}

double sobolev_norm(const ModeState& u, double s)
{
    const TorusGrid& grid = u.grid();
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double k = grid.mode(i);
        acc += std::pow(1.0 + k * k, s) * std::norm(u.data()[i]);
    }
    return std::sqrt(acc);
}

double quadratic_energy(const ModeState& u, const FrequencySpec& freq)
{
    if (u.size() != freq.grid().size()) throw SizeError("quadratic_energy: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += freq.table()[i] * std::norm(u.data()[i]);
    return 0.5 * acc;
}

double sobolev_norm_real(const TorusGrid& grid, const std::vector<double>& f, double s)
{
    std::vector<cplx> buf(f.begin(), f.end());
    auto fk = dft_forward(grid, buf);
    double acc = 0.0;
    for (std::size_t i = 0; i < fk.size(); ++i) {
        double k = grid.mode(i);
        acc += std::pow(1.0 + k * k, s) * std::norm(fk[i]);
    }
    return std::sqrt(acc);
}

RealState power_law_initial_data(const TorusGrid& grid, const FrequencySpec& freq, double s0,
                                 double eps)
{
    if (freq.grid().K() != grid.K()) throw SizeError("power_law_initial_data: grid mismatch");
    if (eps < 0.0) throw ParameterError("eps must be nonnegative");
    const std::size_t K = grid.size();
    std::vector<cplx> qk(K);
    double z2 = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        double jk = japanese(grid.mode(i));
        qk[i] = std::pow(jk, -s0 - 0.525);
        z2 += std::pow(jk, -1.05);
    }
    double scale = eps / std::sqrt(z2);
    for (auto& c : qk) c *= scale;
    auto qx = dft_inverse(grid, qk);
    RealState st;
    st.q.resize(K);
    st.p.assign(K, 0.0);
    for (std::size_t m = 0; m < K; ++m) st.q[m] = qx[m].real();
    return st;
}

}  // namespace kg
