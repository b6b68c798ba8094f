#include "kg/integrators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kg/errors.hpp"

namespace kg {

namespace {

double factorial(int n)
{
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

std::string fmt17(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s)
{
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("not a number: '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError("trailing characters in number '" + s + "'");
    return v;
}

}  // namespace

Nonlinearity Nonlinearity::zero() { return Nonlinearity{}; }

Nonlinearity Nonlinearity::monomial(int p, double c)
{
    if (p < 2) throw ParameterError("g must vanish to second order; monomial power must be >= 2");
    Nonlinearity nl;
    if (c != 0.0) nl.a_[p] = c;
    nl.refresh_dense();
    return nl;
}

Nonlinearity Nonlinearity::polynomial(std::map<int, double> coeffs)
{
    Nonlinearity nl;
    for (auto [p, c] : coeffs) {
        if (c == 0.0) continue;
        if (p < 2) throw ParameterError("g must vanish to second order at 0");
        nl.a_[p] = c;
    }
    nl.refresh_dense();
    return nl;
}

Nonlinearity Nonlinearity::from_derivatives(const std::vector<double>& d3_up)
{
    std::map<int, double> a;
    for (std::size_t i = 0; i < d3_up.size(); ++i) {
        int n = static_cast<int>(i) + 3;
        if (d3_up[i] != 0.0) a[n - 1] = d3_up[i] / factorial(n - 1);
    }
    return polynomial(std::move(a));
}

Nonlinearity Nonlinearity::custom(std::string id, std::function<double(double)> g,
                                  std::function<double(double)> G,
                                  const std::vector<double>& d3_up)
{
    Nonlinearity nl = from_derivatives(d3_up);
    nl.custom_id_ = std::move(id);
    nl.g_override_ = std::move(g);
    nl.G_override_ = std::move(G);
    return nl;
}

void Nonlinearity::refresh_dense()
{
    dense_.assign(a_.empty() ? 0 : static_cast<std::size_t>(a_.rbegin()->first) + 1, 0.0);
    for (auto [p, c] : a_) dense_[static_cast<std::size_t>(p)] = c;
}

double Nonlinearity::g(double y) const
{
    if (g_override_) return g_override_(y);
    double acc = 0.0;
    for (std::size_t p = dense_.size(); p-- > 0;) acc = acc * y + dense_[p];
    return acc;
}

double Nonlinearity::G(double y) const
{
    if (G_override_) return G_override_(y);
    double acc = 0.0;
    for (std::size_t p = dense_.size(); p-- > 0;) acc = acc * y + dense_[p] / double(p + 1);
    return acc * y;
}

double Nonlinearity::G_derivative(int n) const
{
    auto it = a_.find(n - 1);
    if (it == a_.end()) return 0.0;
    return it->second * factorial(n - 1);
}

double Nonlinearity::taylor_c(int n) const
{
    auto it = a_.find(n + 1);
    return it == a_.end() ? 0.0 : it->second / (n + 2);
}

bool Nonlinearity::is_zero() const { return a_.empty() && !g_override_; }

std::string Nonlinearity::id() const
{
    if (!custom_id_.empty()) return custom_id_;
    if (a_.empty()) return "zero";
    std::string out;
    for (auto [p, c] : a_) {
        if (!out.empty()) out += "+";
        out += "monomial:" + std::to_string(p) + ":" + fmt17(c);
    }
    return out;
}

void Nonlinearity::validate() const
{
    const double fd = 1e-5;
    double g0 = g(0.0);
    double dg0 = (g(fd) - g(-fd)) / (2 * fd);
    if (std::abs(g0) > 1e-8 || std::abs(dg0) > 1e-8)
        throw ParameterError("nonlinearity must satisfy g(0) = g'(0) = 0");
    if (G(0.0) != 0.0) throw ParameterError("primitive must satisfy G(0) = 0");
    for (double y : {-0.7, -0.3, 0.2, 0.55}) {
        double dG = (G(y + fd) - G(y - fd)) / (2 * fd);
        if (std::abs(dG - g(y)) > 1e-8 * std::max(1.0, std::abs(g(y))))
            throw ParameterError("primitive G is inconsistent with g");
    }
}

Nonlinearity operator+(const Nonlinearity& a, const Nonlinearity& b)
{
    if (a.g_override_ || b.g_override_)
        throw ParameterError("closed-form nonlinearities cannot be added");
    std::map<int, double> sum = a.a_;
    for (auto [p, c] : b.a_) sum[p] += c;
    return Nonlinearity::polynomial(std::move(sum));
}

Nonlinearity parse_nonlinearity(const std::string& text)
{
    // '+' separates terms except inside an exponent such as 1e+20
    std::vector<std::string> terms(1);
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '+' && !(i > 0 && (text[i - 1] == 'e' || text[i - 1] == 'E') && i >= 2 &&
                          std::isdigit(static_cast<unsigned char>(text[i - 2])) != 0))
            terms.emplace_back();
        else
            terms.back() += c;
    }
    Nonlinearity total = Nonlinearity::zero();
    bool any = false;
    for (std::string term : terms) {
        term = trim(term);
        if (term.empty()) throw ConfigError("empty term in nonlinearity '" + text + "'");
        any = true;
        if (term == "zero") continue;
        if (term.rfind("monomial:", 0) == 0) {
            std::string rest = term.substr(9);
            auto colon = rest.find(':');
            if (colon == std::string::npos)
                throw ConfigError("expected monomial:p:c, got '" + term + "'");
            double pd = parse_double(rest.substr(0, colon));
            int p = static_cast<int>(pd);
            if (pd != p) throw ConfigError("monomial power must be an integer: '" + term + "'");
            double c = parse_double(rest.substr(colon + 1));
            try {
                total = total + Nonlinearity::monomial(p, c);
            } catch (const ParameterError& e) {
                throw ConfigError(e.what());
            }
            continue;
        }
        if (term.rfind("derivs:", 0) == 0) {
            std::vector<double> d;
            std::stringstream ds(term.substr(7));
            std::string item;
            while (std::getline(ds, item, ',')) d.push_back(parse_double(trim(item)));
            total = total + Nonlinearity::from_derivatives(d);
            continue;
        }
        throw ConfigError("unknown nonlinearity term '" + term + "'");
    }
    if (!any) throw ConfigError("empty nonlinearity");
    return total;
}

Scheme parse_scheme(const std::string& s)
{
    if (s == "lie") return Scheme::Lie;
    if (s == "strang") return Scheme::Strang;
    if (s == "twostep") return Scheme::TwoStep;
    throw ConfigError("unknown scheme '" + s + "' (expected lie, strang or twostep)");
}

std::string scheme_name(Scheme s)
{
    switch (s) {
    case Scheme::Lie: return "lie";
    case Scheme::Strang: return "strang";
    case Scheme::TwoStep: return "twostep";
    }
    return "?";
}

MethodSpec::MethodSpec(double h_, Scheme scheme_, Mollifier moll, FrequencySpec freq_)
    : h(h_), scheme(scheme_), mollifier(std::move(moll)), freq(std::move(freq_))
{
    if (!(h > 0.0) || !std::isfinite(h)) throw ParameterError("time step h must be positive");
}

double sinc(double x)
{
    if (std::abs(x) < 1e-4) {
        double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

SplitStepper::SplitStepper(const MethodSpec& method, const Nonlinearity& nl)
    : method_(method), nl_(nl), fft_(method.freq.grid())
{
    const auto& om = method.freq.table();
    const std::size_t K = om.size();
    phi_.resize(K);
    mult_.resize(K);
    for (std::size_t i = 0; i < K; ++i) {
        phi_[i] = method.mollifier(method.h * om[i]);
        mult_[i] = phi_[i] / std::sqrt(om[i]);
    }
    zero_slot_ = method.freq.grid().slot(0);
    real_.resize(K);
    neg_.resize(K);
    for (std::size_t i = 0; i < K; ++i) neg_[i] = method.freq.grid().neg_slot(i);
    buf_a_.resize(K);
    buf_b_.resize(K);
    buf_c_.resize(K);
}

namespace {

// e^{i theta} stored as (1 - cos theta, sin theta); keeps the modulus of the
// applied rotation within roundoff of theta^2 * eps instead of eps.
cplx unit_phase(double theta)
{
    const double h = std::sin(0.5 * theta);
    return {2.0 * h * h, std::sin(theta)};
}

// v * e^{i theta} with the phase given by unit_phase, in extended precision.
cplx rotate(cplx v, cplx r)
{
    const long double a = v.real(), b = v.imag(), c = 1.0L - r.real(), d = r.imag();
    return {static_cast<double>(a * c - b * d), static_cast<double>(a * d + b * c)};
}

}  // namespace

void SplitStepper::flow_T(ModeState& u, double t) const
{
    const auto& om = method_.freq.table();
    if (rot_.empty() || rot_t_ != t) {
        rot_.resize(om.size());
        for (std::size_t i = 0; i < om.size(); ++i) rot_[i] = unit_phase(-t * om[i]);
        rot_t_ = t;
    }
    auto& v = u.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rotate(v[i], rot_[i]);
}

void SplitStepper::flow_V(ModeState& u, double t)
{
    if (t == 0.0 || nl_.is_zero()) return;
    auto& v = u.data();
    const std::size_t K = v.size();
    const std::size_t nh = fft_.half_size();
    // half spectrum (k = 0..K/2) of v = Lambda^{-1/2} phi(h Lambda) Re u
    for (std::size_t n = 0; n < nh; ++n) {
        std::size_t i = (zero_slot_ + n) % K;
        buf_a_[n] = mult_[i] * 0.5 * (v[i] + std::conj(v[neg_[i]]));
    }
    fft_.c2r(buf_a_.data(), real_.data());
    for (std::size_t m = 0; m < K; ++m) real_[m] = nl_.g(real_[m]);
    fft_.r2c(real_.data(), buf_c_.data());
    const double scale = -t / static_cast<double>(K);
    for (std::size_t i = 0; i < K; ++i) {
        long k = static_cast<long>(i) - static_cast<long>(zero_slot_);
        cplx gk = k >= 0 && static_cast<std::size_t>(k) < nh ? buf_c_[static_cast<std::size_t>(k)]
                                                             : std::conj(buf_c_[static_cast<std::size_t>(-k)]);
        v[i] += cplx(0.0, scale) * mult_[i] * gk;
    }
}

void SplitStepper::strang(ModeState& u)
{
    flow_V(u, 0.5 * method_.h);
    flow_T(u, method_.h);
    flow_V(u, 0.5 * method_.h);
}

void SplitStepper::lie(ModeState& u)
{
    flow_T(u, method_.h);
    flow_V(u, method_.h);
}

void SplitStepper::step(ModeState& u)
{
    if (method_.scheme == Scheme::Lie) {
        lie(u);
    } else {
        // The two-step form is algebraically the Strang step.
        strang(u);
    }
}

double SplitStepper::potential(const ModeState& u)
{
    if (nl_.is_zero()) return 0.0;
    const auto& v = u.data();
    const std::size_t K = v.size();
    for (std::size_t i = 0; i < K; ++i)
        buf_a_[i] = mult_[i] * 0.5 * (v[i] + std::conj(v[neg_[i]]));
    fft_.inverse(buf_a_.data(), buf_b_.data());
    double acc = 0.0;
    for (std::size_t m = 0; m < K; ++m) acc += nl_.G(buf_b_[m].real());
    return acc / static_cast<double>(K);
}

double SplitStepper::hamiltonian(const ModeState& u)
{
    return quadratic_energy(u, method_.freq) + potential(u);
}

void SplitStepper::filtered_physical(const cplx* fk, std::vector<cplx>& out)
{
    const std::size_t K = phi_.size();
    for (std::size_t i = 0; i < K; ++i) buf_a_[i] = phi_[i] * fk[i];
    out.resize(K);
    fft_.inverse(buf_a_.data(), out.data());
}

void SplitStepper::filtered_force(const std::vector<cplx>& v, std::vector<cplx>& out)
{
    const std::size_t K = phi_.size();
    for (std::size_t m = 0; m < K; ++m) buf_b_[m] = nl_.g(v[m].real());
    out.resize(K);
    fft_.forward(buf_b_.data(), out.data());
    for (std::size_t i = 0; i < K; ++i) out[i] *= phi_[i];
}

void SplitStepper::two_step(std::vector<cplx>& qk, std::vector<cplx>& pk)
{
    const auto& om = method_.freq.table();
    const std::size_t K = om.size();
    const double h = method_.h;
    std::vector<cplx> vx, f0, f1;
    if (nl_.is_zero()) {
        f0.assign(K, cplx{});
    } else {
        filtered_physical(qk.data(), vx);
        filtered_force(vx, f0);
    }
    std::vector<cplx> q1(K);
    for (std::size_t i = 0; i < K; ++i) {
        double X = h * om[i];
        double sx = sinc(X);
        q1[i] = std::cos(X) * qk[i] + h * sx * pk[i] - 0.5 * h * h * sx * f0[i];
    }
    if (nl_.is_zero()) {
        f1.assign(K, cplx{});
    } else {
        filtered_physical(q1.data(), vx);
        filtered_force(vx, f1);
    }
    for (std::size_t i = 0; i < K; ++i) {
        double X = h * om[i];
        pk[i] = -om[i] * std::sin(X) * qk[i] + std::cos(X) * pk[i] -
                0.5 * h * (std::cos(X) * f0[i] + f1[i]);
    }
    qk = std::move(q1);
}

ModeState flow_T(const ModeState& u, double t, const FrequencySpec& freq)
{
    if (u.size() != freq.grid().size()) throw SizeError("flow_T: size mismatch");
    ModeState out = u;
    const auto& om = freq.table();
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = rotate(out.data()[i], unit_phase(-t * om[i]));
    return out;
}

ModeState flow_V(const ModeState& u, double t, const MethodSpec& method, const Nonlinearity& nl)
{
    SplitStepper st(method, nl);
    ModeState out = u;
    st.flow_V(out, t);
    return out;
}

ModeState strang_step(const ModeState& u, const MethodSpec& method, const Nonlinearity& nl)
{
    SplitStepper st(method, nl);
    ModeState out = u;
    st.strang(out);
    return out;
}

ModeState lie_step(const ModeState& u, const MethodSpec& method, const Nonlinearity& nl)
{
    SplitStepper st(method, nl);
    ModeState out = u;
    st.lie(out);
    return out;
}

std::pair<RealState, RealState> two_step_qp(const RealState& qn, const RealState& pn,
                                            const MethodSpec& method, const Nonlinearity& nl)
{
    const TorusGrid& grid = method.freq.grid();
    const std::size_t K = grid.size();
    if (qn.q.size() != K || pn.p.size() != K) throw SizeError("two_step_qp: size mismatch");
    std::vector<cplx> qx(qn.q.begin(), qn.q.end()), px(pn.p.begin(), pn.p.end());
    auto qk = dft_forward(grid, qx);
    auto pk = dft_forward(grid, px);
    SplitStepper st(method, nl);
    st.two_step(qk, pk);
    auto q1 = dft_inverse(grid, qk);
    auto p1 = dft_inverse(grid, pk);
    RealState a, b;
    a.q.resize(K);
    a.p.assign(K, 0.0);
    b.q.assign(K, 0.0);
    b.p.resize(K);
    for (std::size_t m = 0; m < K; ++m) {
        a.q[m] = q1[m].real();
        b.p[m] = p1[m].real();
    }
    return {a, b};
}

CflReport cfl_check(int r, double delta, const MethodSpec& method, const TorusGrid& grid)
{
    if (!(delta > 0.0 && delta < M_PI)) throw ParameterError("delta must lie in (0, pi)");
    if (r < 1) throw ParameterError("order r must be >= 1");
    double k = grid.K() / 2.0;
    double wmax = std::sqrt(k * k + method.freq.rho());
    CflReport rep{r, delta, (r + 2) * method.h * wmax, 2.0 * M_PI - delta, false};
    rep.pass = rep.lhs <= rep.rhs;
    return rep;
}

void DriftReport::recompute_summary()
{
    summary = DriftSummary{};
    summary.max_action_drift.assign(modes.size(), 0.0);
    if (rows.empty()) return;
    const DriftRow& r0 = rows.front();
    bool have_hh = !std::isnan(r0.Hh);
    if (have_hh) summary.max_modified_drift = 0.0;
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < modes.size(); ++j)
            summary.max_action_drift[j] =
                std::max(summary.max_action_drift[j], std::abs(row.J[j] - r0.J[j]));
        summary.max_energy_drift = std::max(summary.max_energy_drift, std::abs(row.H - r0.H));
        if (have_hh)
            summary.max_modified_drift =
                std::max(summary.max_modified_drift, std::abs(row.Hh - r0.Hh));
        summary.max_norm_h12 = std::max(summary.max_norm_h12, row.norm_h12);
    }
}

namespace {

DriftRow observe(std::size_t step, double time, const ModeState& u, SplitStepper& st,
                 const SimulateOptions& opts)
{
    DriftRow row;
    row.step = step;
    row.time = time;
    row.H = st.hamiltonian(u);
    row.Hh = opts.modified ? opts.modified(u) : std::numeric_limits<double>::quiet_NaN();
    row.norm_h12 = sobolev_norm(u, 0.5);
    row.norm_h1 = sobolev_norm(u, 1.0);
    row.J.reserve(opts.modes.size());
    for (int k : opts.modes) row.J.push_back(super_action(u, k));
    return row;
}

bool blown_up(const ModeState& u)
{
    for (const auto& c : u.data()) {
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return true;
        if (std::abs(c) > 1e6) return true;
    }
    return false;
}

}  // namespace

DriftReport simulate(const ModeState& u0, const MethodSpec& method, const Nonlinearity& nl,
                     const SimulateOptions& opts)
{
    const FrequencySpec& freq = method.freq;
    if (u0.size() != freq.grid().size()) throw SizeError("simulate: state/grid size mismatch");
    for (int k : opts.modes) (void)freq.grid().slot(k);
    const std::size_t n = opts.n_steps;
    std::size_t stride = opts.stride;
    if (stride == 0) stride = std::max<std::size_t>(1, (n + 3999) / 4000);

    SplitStepper st(method, nl);
    DriftReport rep;
    rep.modes = opts.modes;
    ModeState u = u0;
    rep.rows.push_back(observe(0, 0.0, u, st, opts));

    const bool twostep = method.scheme == Scheme::TwoStep;
    std::vector<cplx> qk, pk;
    if (twostep) qp_coefficients(u, freq, qk, pk);
    const auto& om = freq.table();

    // Strang half-kicks between recorded rows are merged into full kicks.
    const bool fuse = method.scheme == Scheme::Strang;
    bool pending = false;
    for (std::size_t s = 1; s <= n; ++s) {
        const bool record = s % stride == 0 || s == n;
        if (fuse) {
            st.flow_V(u, pending ? method.h : 0.5 * method.h);
            st.flow_T(u, method.h);
            pending = true;
            if (record) {
                st.flow_V(u, 0.5 * method.h);
                pending = false;
            }
        } else if (twostep) {
            st.two_step(qk, pk);
            auto& v = u.data();
            for (std::size_t i = 0; i < v.size(); ++i) {
                double w = std::sqrt(om[i]);
                v[i] = w * qk[i] + cplx(0.0, 1.0) * pk[i] / w;
            }
        } else {
            st.step(u);
        }
        if (blown_up(u))
            throw BlowUpError(s, "state blew up at step " + std::to_string(s) + " (t = " +
                                     std::to_string(s * method.h) + ")");
        if (record) rep.rows.push_back(observe(s, s * method.h, u, st, opts));
    }
    rep.recompute_summary();
    return rep;
}

}  // namespace kg
