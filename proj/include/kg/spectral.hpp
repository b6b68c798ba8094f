#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace kg {

using cplx = std::complex<double>;

/// K equidistant points x_m = 2 pi m / K and the mode set N_K = [-K/2, K/2).
///
/// Mode vectors are stored in natural order: slot i holds mode kmin() + i.
class TorusGrid {
public:
    explicit TorusGrid(int K);

    [[nodiscard]] int K() const noexcept { return K_; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(K_); }
    [[nodiscard]] int kmin() const noexcept { return -(K_ / 2); }
    [[nodiscard]] int kmax() const noexcept { return kmin() + K_ - 1; }
    [[nodiscard]] bool even() const noexcept { return K_ % 2 == 0; }

    [[nodiscard]] bool contains(int k) const noexcept { return k >= kmin() && k <= kmax(); }
    /// Slot of mode k; throws IndexError when k is not in N_K.
    [[nodiscard]] std::size_t slot(int k) const;
    [[nodiscard]] int mode(std::size_t slot) const noexcept { return kmin() + static_cast<int>(slot); }
    /// Representative of k mod K inside N_K.
    [[nodiscard]] int wrap(long k) const noexcept;
    /// Slot of the aliased mode -k.
    [[nodiscard]] std::size_t neg_slot(std::size_t slot) const noexcept;
    [[nodiscard]] double point(std::size_t m) const noexcept;

    bool operator==(const TorusGrid&) const = default;

private:
    int K_;
};

/// omega_k = sqrt(k^2 + rho) over N_K.
class FrequencySpec {
public:
    FrequencySpec(const TorusGrid& grid, double rho);

    [[nodiscard]] const TorusGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] double rho() const noexcept { return rho_; }
    [[nodiscard]] double omega(int k) const { return omega_[grid_.slot(k)]; }
    [[nodiscard]] const std::vector<double>& table() const noexcept { return omega_; }
    /// omega_{K/2} = sqrt((K/2)^2 + rho), the largest frequency on the grid.
    [[nodiscard]] double omega_max() const noexcept;

private:
    TorusGrid grid_;
    double rho_;
    std::vector<double> omega_;
};

/// Filter function phi_m applied as the Fourier multiplier phi_m(h Lambda).
class Mollifier {
public:
    /// phi_m = 1.
    static Mollifier identity();
    /// phi_m(x) = sin(x)/x.
    static Mollifier sinc();
    /// User function; phi(0) must be exactly 1.
    static Mollifier custom(std::string id, std::function<double(double)> phi);
    /// Builtins by id ("one", "sinc").
    static Mollifier by_name(const std::string& id);

    [[nodiscard]] double operator()(double x) const { return phi_(x); }
    [[nodiscard]] const std::string& id() const noexcept { return id_; }
    [[nodiscard]] bool is_identity() const noexcept { return id_ == "one"; }

private:
    Mollifier(std::string id, std::function<double(double)> phi)
        : id_(std::move(id)), phi_(std::move(phi)) {}
    std::string id_;
    std::function<double(double)> phi_;
};

struct RealState {
    std::vector<double> q;
    std::vector<double> p;
};

/// Complex mode vector u in natural order over N_K.
class ModeState {
public:
    ModeState() = default;
    explicit ModeState(const TorusGrid& grid);
    ModeState(const TorusGrid& grid, std::vector<cplx> u);

    [[nodiscard]] const TorusGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t size() const noexcept { return u_.size(); }
    [[nodiscard]] cplx& operator[](int k) { return u_[grid_.slot(k)]; }
    [[nodiscard]] const cplx& operator[](int k) const { return u_[grid_.slot(k)]; }
    [[nodiscard]] std::vector<cplx>& data() noexcept { return u_; }
    [[nodiscard]] const std::vector<cplx>& data() const noexcept { return u_; }

private:
    TorusGrid grid_{1};
    std::vector<cplx> u_;
};

/// Cached FFTW plans for one grid size plus scratch storage. Not shareable
/// across threads; construct one per trajectory.
class FftEngine {
public:
    explicit FftEngine(const TorusGrid& grid);

    /// modes (natural order) from physical values.
    void forward(const cplx* physical, cplx* modes);
    /// physical values from modes (natural order).
    void inverse(const cplx* modes, cplx* physical);

    /// Unnormalized half-spectrum transforms of real data, FFTW layout
    /// (entries n = 0..K/2).
    void r2c(const double* physical, cplx* half);
    void c2r(const cplx* half, double* physical);
    [[nodiscard]] std::size_t half_size() const noexcept { return grid_.size() / 2 + 1; }

private:
    TorusGrid grid_;
    void* plan_fwd_;
    void* plan_bwd_;
    void* plan_r2c_;
    void* plan_c2r_;
    std::vector<cplx> scratch_;
};

/// v_k = (1/K) sum_x v(x) e^{-ikx}, output in natural order.
std::vector<cplx> dft_forward(const TorusGrid& grid, const std::vector<cplx>& physical);
/// v(x) = sum_k v_k e^{ikx}.
std::vector<cplx> dft_inverse(const TorusGrid& grid, const std::vector<cplx>& modes);

ModeState to_modes(const RealState& state, const FrequencySpec& freq);
RealState from_modes(const ModeState& u, const FrequencySpec& freq);

/// Mode coefficients q_k and p_k of the physical variables encoded by u.
void qp_coefficients(const ModeState& u, const FrequencySpec& freq,
                     std::vector<cplx>& qk, std::vector<cplx>& pk);

/// J_k = (|u_k|^2 + |u_{-k}|^2)/2, and |u_{-K/2}|^2 at the unpaired mode.
double super_action(const ModeState& u, int k);
/// Canonical observable modes: 0..ceil(K/2)-1, then -K/2 for even K.
std::vector<int> canonical_modes(const TorusGrid& grid);

/// <k> = sqrt(1 + k^2).
inline double japanese(int k) { return std::sqrt(1.0 + double(k) * double(k)); }

double sobolev_norm(const ModeState& u, double s);
/// T(u) = (1/2) sum_k omega_k |u_k|^2.
double quadratic_energy(const ModeState& u, const FrequencySpec& freq);

/// q(x) = eps Z^{-1} sum_k <k>^{-s0-0.525} e^{ikx}, p = 0, normalized so that
/// ||q||_{H^{s0}} = eps.
RealState power_law_initial_data(const TorusGrid& grid, const FrequencySpec& freq, double s0,
                                 double eps);

/// Sobolev norm of a real grid function through its DFT.
double sobolev_norm_real(const TorusGrid& grid, const std::vector<double>& f, double s);

}  // namespace kg
