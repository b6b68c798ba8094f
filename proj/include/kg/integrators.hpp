#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kg/spectral.hpp"

namespace kg {

/// Polynomial nonlinearity g(y) = sum_p a_p y^p (p >= 2), with primitive
/// G(y) = sum_p a_p y^{p+1}/(p+1). A closed-form override may replace g and G
/// on the simulation path while the coefficient table feeds the normal form.
class Nonlinearity {
public:
    static Nonlinearity zero();
    /// g(y) = c y^p.
    static Nonlinearity monomial(int p, double c);
    /// g(y) = sum a_p y^p from the map p -> a_p.
    static Nonlinearity polynomial(std::map<int, double> coeffs);
    /// Taylor table d_n = G^{(n)}(0), n = 3, 4, ...
    static Nonlinearity from_derivatives(const std::vector<double>& d3_up);
    /// Closed form g, G plus the derivative table G^{(n)}(0), n = 3, 4, ...
    static Nonlinearity custom(std::string id, std::function<double(double)> g,
                               std::function<double(double)> G, const std::vector<double>& d3_up);

    [[nodiscard]] double g(double y) const;
    [[nodiscard]] double G(double y) const;
    /// G^{(n)}(0).
    [[nodiscard]] double G_derivative(int n) const;
    /// c_n = G^{(n+2)}(0)/(n+2)!.
    [[nodiscard]] double taylor_c(int n) const;
    [[nodiscard]] bool is_zero() const;
    [[nodiscard]] const std::map<int, double>& coefficients() const noexcept { return a_; }
    /// Text form accepted by parse_nonlinearity.
    [[nodiscard]] std::string id() const;

    /// Checks g(0) = g'(0) = 0 and G' = g numerically; throws ParameterError.
    void validate() const;

    /// Sum of two nonlinearities (coefficient tables add).
    friend Nonlinearity operator+(const Nonlinearity& a, const Nonlinearity& b);

private:
    void refresh_dense();

    std::map<int, double> a_;
    std::vector<double> dense_;  // dense_[p] = a_p
    std::string custom_id_;
    std::function<double(double)> g_override_;
    std::function<double(double)> G_override_;
};

/// Grammar: "zero", "monomial:p:c", "derivs:d3,d4,...", and '+'-joined sums.
Nonlinearity parse_nonlinearity(const std::string& text);

enum class Scheme { Lie, Strang, TwoStep };
Scheme parse_scheme(const std::string& s);
std::string scheme_name(Scheme s);

struct MethodSpec {
    double h;
    Scheme scheme;
    Mollifier mollifier;
    FrequencySpec freq;

    MethodSpec(double h_, Scheme scheme_, Mollifier moll, FrequencySpec freq_);
};

struct CflReport {
    int r;
    double delta;
    double lhs;
    double rhs;
    bool pass;
};

/// Precomputed multipliers and FFT scratch for one (method, nonlinearity).
/// Instances are cheap to copy but not thread-safe; use one per trajectory.
class SplitStepper {
public:
    SplitStepper(const MethodSpec& method, const Nonlinearity& nl);

    void flow_T(ModeState& u, double t) const;
    void flow_V(ModeState& u, double t);
    void strang(ModeState& u);
    void lie(ModeState& u);
    void step(ModeState& u);

    /// V(u) = (1/K) sum_x G(v(x)), v = phi(h Lambda) q.
    double potential(const ModeState& u);
    /// H = T + V.
    double hamiltonian(const ModeState& u);

    /// Two-step (q,p) update acting on mode coefficients q_k, p_k.
    void two_step(std::vector<cplx>& qk, std::vector<cplx>& pk);

    [[nodiscard]] const MethodSpec& method() const noexcept { return method_; }
    [[nodiscard]] const Nonlinearity& nonlinearity() const noexcept { return nl_; }

private:
    /// Physical values of phi(h Lambda) f for mode coefficients f_k.
    void filtered_physical(const cplx* fk, std::vector<cplx>& out);
    /// Mode coefficients of phi(h Lambda) g(v) given physical v.
    void filtered_force(const std::vector<cplx>& v, std::vector<cplx>& out);

    MethodSpec method_;
    Nonlinearity nl_;
    FftEngine fft_;
    std::vector<double> phi_;   // phi_m(h omega_k)
    std::vector<double> mult_;  // omega_k^{-1/2} phi_m(h omega_k)
    std::vector<std::size_t> neg_;  // slot of -k
    mutable double rot_t_ = 0.0;
    mutable std::vector<cplx> rot_;  // (1 - cos, sin) of -rot_t omega_k
    std::vector<cplx> buf_a_, buf_b_, buf_c_;
    std::vector<double> real_;
    std::size_t zero_slot_ = 0;
};

ModeState flow_T(const ModeState& u, double t, const FrequencySpec& freq);
ModeState flow_V(const ModeState& u, double t, const MethodSpec& method, const Nonlinearity& nl);
ModeState strang_step(const ModeState& u, const MethodSpec& method, const Nonlinearity& nl);
ModeState lie_step(const ModeState& u, const MethodSpec& method, const Nonlinearity& nl);
std::pair<RealState, RealState> two_step_qp(const RealState& qn, const RealState& pn,
                                            const MethodSpec& method, const Nonlinearity& nl);

/// sin(x)/x with a series near zero.
double sinc(double x);

CflReport cfl_check(int r, double delta, const MethodSpec& method, const TorusGrid& grid);

struct DriftRow {
    std::size_t step;
    double time;
    double H;
    double Hh;
    double norm_h12;
    double norm_h1;
    std::vector<double> J;
};

struct DriftSummary {
    std::vector<double> max_action_drift;  // per observed mode
    double max_energy_drift = 0.0;         // |H(t) - H(0)|
    double max_modified_drift = std::numeric_limits<double>::quiet_NaN();  // |H_h(t) - H_h(0)|
    double max_norm_h12 = 0.0;
};

struct DriftReport {
    std::vector<int> modes;
    std::vector<DriftRow> rows;
    DriftSummary summary;

    void recompute_summary();
};

struct SimulateOptions {
    std::size_t n_steps = 0;
    /// Record every stride steps; 0 selects ceil(n_steps/4000).
    std::size_t stride = 0;
    std::vector<int> modes;
    /// Optional modified Hamiltonian evaluator.
    std::function<double(const ModeState&)> modified;
};

/// Runs the chosen scheme; always records the initial and final states.
/// Throws BlowUpError (with the step index) when |u_k| > 1e6 or a value is
/// not finite.
DriftReport simulate(const ModeState& u0, const MethodSpec& method, const Nonlinearity& nl,
                     const SimulateOptions& opts);

}  // namespace kg
