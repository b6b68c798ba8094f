#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kg/integrators.hpp"
#include "kg/spectral.hpp"

namespace kg {

inline constexpr int kMaxDegree = 12;

/// One factor u_j^sigma of a monomial (u^{-1} meaning the conjugate).
struct Factor {
    int j;
    int sigma;
};

/// Sorted multiset of factors. Each factor is coded as 2*slot + (sigma > 0)
/// with slot = j - kmin, so keys are only meaningful relative to a grid.
class MonomialKey {
public:
    MonomialKey() = default;
    static MonomialKey from_factors(const TorusGrid& grid, const std::vector<Factor>& fs);
    static MonomialKey from_codes(const std::uint16_t* codes, int degree);

    [[nodiscard]] int degree() const noexcept { return deg_; }
    [[nodiscard]] std::uint16_t code(int i) const noexcept { return codes_[i]; }
    [[nodiscard]] const std::uint16_t* codes() const noexcept { return codes_.data(); }
    [[nodiscard]] Factor factor(const TorusGrid& grid, int i) const;
    [[nodiscard]] std::vector<Factor> factors(const TorusGrid& grid) const;

    /// Same modes with every sigma flipped.
    [[nodiscard]] MonomialKey conjugate() const;
    [[nodiscard]] bool self_conjugate() const { return conjugate() == *this; }
    /// Number of distinct ordered tuples in the orbit: d!/prod(counts!).
    [[nodiscard]] double multiplicity() const;
    /// sum sigma_i j_i (not reduced).
    [[nodiscard]] long momentum(const TorusGrid& grid) const;
    /// sum sigma_i w_{j_i} for a table w indexed by slot.
    [[nodiscard]] double signed_sum(const std::vector<double>& w) const;

    bool operator==(const MonomialKey& o) const noexcept;
    bool operator<(const MonomialKey& o) const noexcept;

    struct Hash {
        std::size_t operator()(const MonomialKey& k) const noexcept;
    };

private:
    std::array<std::uint16_t, kMaxDegree> codes_{};
    std::uint8_t deg_ = 0;
};

/// Real-valued homogeneous polynomial sum_{j,sigma} P_j^sigma prod u_{j_i}^{sigma_i}
/// with symmetric, reality-paired, momentum-conserving coefficients.
///
/// One coefficient is stored per conjugate pair of orbits, under the
/// lexicographically smaller key; the other follows by conjugation.
class PolyHamiltonian {
public:
    struct Term {
        MonomialKey key;
        cplx total;  // multiplicity times symmetric coefficient
    };

    PolyHamiltonian(const TorusGrid& grid, int degree);

    /// Each term gives the coefficient of prod u_{j_i}^{sigma_i} in P.
    /// Tuples are canonicalized mod K and symmetrized; when both members of
    /// a conjugate pair are supplied they are averaged into a real
    /// polynomial, when only one is supplied its conjugate is implied.
    static PolyHamiltonian build(const std::vector<std::pair<std::vector<Factor>, cplx>>& terms,
                                 const TorusGrid& grid, int degree);
    /// From symmetric coefficients keyed by orbit representative (no
    /// validation of representative choice beyond momentum).
    static PolyHamiltonian from_orbits(const TorusGrid& grid, int degree,
                                       std::vector<std::pair<MonomialKey, cplx>> orbits);
    /// From total coefficients of full monomials (both members of each
    /// conjugate pair expected); realified by averaging.
    static PolyHamiltonian from_totals(const TorusGrid& grid, int degree,
                                       const std::vector<std::pair<MonomialKey, cplx>>& totals);

    [[nodiscard]] const TorusGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] int degree() const noexcept { return degree_; }
    [[nodiscard]] std::size_t size() const noexcept { return orbits_.size(); }
    [[nodiscard]] bool is_zero() const noexcept { return orbits_.empty(); }
    /// (representative key, symmetric coefficient), sorted by key.
    [[nodiscard]] const std::vector<std::pair<MonomialKey, cplx>>& orbits() const noexcept
    {
        return orbits_;
    }
    /// Every orbit (both members of conjugate pairs) with its total coefficient.
    [[nodiscard]] const std::vector<Term>& expanded() const noexcept { return expanded_; }
    /// Symmetric coefficient of any orbit (zero when absent).
    [[nodiscard]] cplx coefficient(const MonomialKey& key) const;

    [[nodiscard]] double evaluate(const ModeState& u) const;
    /// Full complex sum; its imaginary part is round-off only.
    [[nodiscard]] cplx evaluate_complex(const ModeState& u) const;
    [[nodiscard]] ModeState gradient(const ModeState& u) const;
    /// Adds 2 d/d(conj u) P into grad (slot-indexed).
    void accumulate_gradient(const std::vector<cplx>& u, std::vector<cplx>& grad) const;
    [[nodiscard]] double h_norm() const;

    /// Multiplies each orbit by f(key, coeff) evaluated on the representative.
    /// f must satisfy f(conj key) = conj f(key) for reality to be preserved.
    [[nodiscard]] PolyHamiltonian map_orbits(
        const std::function<cplx(const MonomialKey&)>& multiplier) const;
    /// Keeps orbits for which pred(key) holds (pred must be conjugation invariant).
    [[nodiscard]] PolyHamiltonian filter(const std::function<bool(const MonomialKey&)>& pred) const;
    /// Drops coefficients below rel * max|coeff|.
    [[nodiscard]] PolyHamiltonian pruned(double rel) const;

    PolyHamiltonian& operator+=(const PolyHamiltonian& o);
    PolyHamiltonian& operator-=(const PolyHamiltonian& o);
    PolyHamiltonian& operator*=(double s);
    friend PolyHamiltonian operator+(PolyHamiltonian a, const PolyHamiltonian& b) { return a += b; }
    friend PolyHamiltonian operator-(PolyHamiltonian a, const PolyHamiltonian& b) { return a -= b; }
    friend PolyHamiltonian operator*(double s, PolyHamiltonian a) { return a *= s; }

    /// Max coefficient difference over the union of orbits.
    [[nodiscard]] double max_abs_diff(const PolyHamiltonian& o) const;

    void write(std::ostream& os) const;
    static PolyHamiltonian read(std::istream& is);

private:
    void rebuild_expanded();

    TorusGrid grid_;
    int degree_;
    std::vector<std::pair<MonomialKey, cplx>> orbits_;
    std::vector<Term> expanded_;
};

/// {P, X} = 2i sum_k (dP/d(conj u_k) dX/du_k - dP/du_k dX/d(conj u_k)).
PolyHamiltonian poisson_bracket(const PolyHamiltonian& P, const PolyHamiltonian& X);

/// {P, Z} for Z = sum_j lambda_j |u_j|^2: multiplies each coefficient by
/// -2i sum sigma_i lambda_{j_i}. lambda is indexed by slot.
PolyHamiltonian ad_quadratic(const PolyHamiltonian& P, const std::vector<double>& lambda);

/// sum_j w_j |u_j|^2 as a degree-2 polynomial (w indexed by slot).
PolyHamiltonian diagonal_quadratic(const TorusGrid& grid, const std::vector<double>& w);
/// T = (1/2) sum omega_k |u_k|^2.
PolyHamiltonian quadratic_T(const FrequencySpec& freq);
/// J_k as a degree-2 polynomial.
PolyHamiltonian super_action_poly(const TorusGrid& grid, int k);

/// Random real polynomial: every momentum-admissible orbit is kept with
/// probability density and given coefficients uniform in the unit square
/// (real for self-conjugate orbits).
PolyHamiltonian random_polynomial(const TorusGrid& grid, int degree, std::uint64_t seed,
                                  double density = 1.0);

/// Degree-(n+2) Taylor coefficient of the filtered potential V.
PolyHamiltonian taylor_of_V(int n, const Nonlinearity& nl, const MethodSpec& method);

/// Flow at time t of i dv/dt = grad(Z + sum chi)(v), Z = (1/2) sum lambda_k |v_k|^2,
/// computed with an adaptive embedded Runge-Kutta pair in the interaction
/// picture. Throws NonConvergenceError on step-size underflow.
ModeState poly_flow(const std::vector<double>& lambda, const std::vector<PolyHamiltonian>& chi,
                    const ModeState& u, double t, double tol = 1e-12);

/// Polynomial in t with PolyHamiltonian coefficients of one u-degree.
class TimePoly {
public:
    TimePoly(const TorusGrid& grid, int degree);
    explicit TimePoly(PolyHamiltonian constant);

    [[nodiscard]] const TorusGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] int degree() const noexcept { return degree_; }
    /// Highest stored power (-1 for the zero polynomial).
    [[nodiscard]] int max_power() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
    [[nodiscard]] PolyHamiltonian coeff(int power) const;
    [[nodiscard]] const std::vector<PolyHamiltonian>& coeffs() const noexcept { return coeffs_; }
    void set_coeff(int power, PolyHamiltonian p);
    void add_to_coeff(int power, const PolyHamiltonian& p);

    [[nodiscard]] PolyHamiltonian at(double t) const;
    [[nodiscard]] TimePoly derivative() const;
    /// Antiderivative vanishing at t = 0.
    [[nodiscard]] TimePoly integral() const;
    [[nodiscard]] bool is_zero() const;
    /// Sum over powers of the coefficient norms.
    [[nodiscard]] double norm() const;

    TimePoly& operator+=(const TimePoly& o);
    TimePoly& operator*=(double s);
    [[nodiscard]] TimePoly map(const std::function<PolyHamiltonian(const PolyHamiltonian&)>& f) const;

private:
    void trim();
    TorusGrid grid_;
    int degree_;
    std::vector<PolyHamiltonian> coeffs_;
};

/// Bracket of t-polynomials (powers convolve).
TimePoly poisson_bracket(const TimePoly& A, const TimePoly& B);

/// grade n -> t-polynomial of u-degree n+2.
using Graded = std::map<int, TimePoly>;

enum class AdSeries {
    Phi,  // sum ad^k / (k+1)!
    Exp,  // sum ad^k / k!
};

/// Truncation to grades <= max_grade of
///     phi(ad_B) Y = sum_{k>=0} ad_B^k Y / (k+1)!   (or exp(ad_B) Y),
/// with ad_B X = sign * {B, X} and B = B_0 + sum_{n>=1} B_n where
/// B_0 = sum_j b0_j |u_j|^2 is diagonal. Terms are summed until on every
/// grade the increment norm falls below tail_tol times the running sum.
Graded exp_ad_graded(const std::vector<double>& b0, const Graded& B, const Graded& Y, int max_grade,
                     double tail_tol = 1e-14, int sign = +1, int max_terms = 200,
                     AdSeries series = AdSeries::Phi);

}  // namespace kg
