#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kg/hampoly.hpp"
#include "kg/integrators.hpp"

namespace kg {

/// Sign of the phi(ad_{hT}) eigenvalue: ad_{hT} X = eps * i h Omega X.
/// Fixed by the order test of the backward error analysis.
inline constexpr int kEpsSign = +1;

/// Omega_{j,sigma} = sum sigma_i omega_{j_i}.
double resonance_modulus(const MonomialKey& key, const FrequencySpec& freq);
double resonance_modulus(const std::vector<Factor>& tuple, const FrequencySpec& freq);

/// (e^z - 1)/z, with a series near zero.
cplx phi_series(cplx z);

/// Coefficient-wise multiplication by phi(eps i h Omega).
PolyHamiltonian apply_phi_ad(const PolyHamiltonian& Q, double h, const FrequencySpec& freq,
                             int eps_sign = kEpsSign);
/// Coefficient-wise division by phi(eps i h Omega). Throws ResonantStepError
/// when the eigenvalue modulus drops below 1e-8.
PolyHamiltonian invert_phi_ad(const PolyHamiltonian& Q, double h, const FrequencySpec& freq,
                              int eps_sign = kEpsSign);

struct CohomologySolution {
    double h;
    int r;
    int eps_sign;
    FrequencySpec freq;
    std::string mollifier;
    /// B[n-1] = B_n(t), u-degree n+2, t-degree <= n.
    std::vector<TimePoly> B;
};

struct CohomologyOptions {
    double tail_tol = 1e-14;
    int eps_sign = kEpsSign;
};

/// Solves phi(ad_{hT}) dB_n/dt = P_n - K_n for n = 1..r with B_n(0) = 0.
CohomologySolution solve_cohomology(int r, const MethodSpec& method, const Nonlinearity& nl,
                                    const CohomologyOptions& opts = {});
/// Same, with the Taylor coefficients P_1..P_r supplied directly.
CohomologySolution solve_cohomology(const std::vector<PolyHamiltonian>& P, double h,
                                    const FrequencySpec& freq, const CohomologyOptions& opts = {},
                                    const std::string& mollifier_id = "one");

/// H_h = T + h^{-1} sum_n B_n(h).
struct ModifiedHamiltonian {
    FrequencySpec freq;
    double h;
    /// Polynomial parts of degrees 3..r+2.
    std::vector<PolyHamiltonian> parts;

    [[nodiscard]] double evaluate(const ModeState& u) const;
    [[nodiscard]] ModeState gradient(const ModeState& u) const;
};

ModifiedHamiltonian modified_hamiltonian(const CohomologySolution& sol);
/// Flow of i du/dt = grad H_h(u) at time t.
ModeState flow_modified(const ModifiedHamiltonian& Hh, const ModeState& u, double t,
                        double tol = 1e-12);

/// kept = orbits with |Omega| >= gamma, removed = the rest.
std::pair<PolyHamiltonian, PolyHamiltonian> project_resonant(const PolyHamiltonian& P, double gamma,
                                                             const FrequencySpec& freq);

struct BirkhoffOutput {
    double gamma;
    std::vector<PolyHamiltonian> chi;  // chi[l-1] has degree l+2
    std::vector<PolyHamiltonian> Q;
    std::vector<PolyHamiltonian> F;
    double min_abs_omega;  // smallest |Omega| over orbits moved into chi
    std::vector<std::size_t> kept_counts;
    std::vector<std::size_t> removed_counts;
};

/// Y[l-1] is the degree-(l+2) part of the perturbation.
BirkhoffOutput birkhoff_normal_form(const std::vector<PolyHamiltonian>& Y, double gamma,
                                    const FrequencySpec& freq);

/// max over l of the coefficients of {chi_l, T} + Pi_gamma F_l.
double birkhoff_self_check(const BirkhoffOutput& out, const FrequencySpec& freq);

/// R(u) = (T + Y)(Phi_chi^{direction}(u)) - (T + Q)(u).
double birkhoff_remainder(const std::vector<PolyHamiltonian>& Y, const BirkhoffOutput& out,
                          const FrequencySpec& freq, const ModeState& u, int direction = -1,
                          double tol = 1e-13);

/// m_k(j, sigma) = sum_a sigma_a 1{|j_a| = |k|}.
int action_charge(const MonomialKey& key, const TorusGrid& grid, int k);

/// True when every orbit of every Q_l has |Omega| < gamma and {J_k, Q_l}
/// vanishes to 1e-12.
bool commutation_check(const std::vector<PolyHamiltonian>& Q, int k, int r,
                       const FrequencySpec& freq, double kappa_proxy);

struct SmallDivisor {
    double value;
    std::vector<Factor> witness;
};

/// Smallest |Omega| over tuples of length 2..r+2 that are not structurally
/// resonant (and with m_k != 0 when k is given). Limited to K <= 16, r <= 3.
SmallDivisor min_small_divisor(const FrequencySpec& freq, int r, std::optional<int> k = {});

struct NormalFormManifest {
    double h = 0.0;
    int r = 0;
    int K = 0;
    double rho = 0.0;
    std::string mollifier = "one";
    int eps_sign = kEpsSign;
    double gamma = 0.0;
};

void write_cohomology(const CohomologySolution& sol, std::ostream& os);
void write_birkhoff(const BirkhoffOutput& out, const NormalFormManifest& manifest, std::ostream& os);
/// Reads a manifest plus labelled polynomial sections written by the two
/// functions above.
std::pair<NormalFormManifest, std::vector<std::pair<std::string, PolyHamiltonian>>>
read_normal_form(std::istream& is);

}  // namespace kg
