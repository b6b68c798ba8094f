#include "kg/normalform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "kg/errors.hpp"

namespace kg {

namespace {

std::string fmt17(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

double resonance_modulus(const MonomialKey& key, const FrequencySpec& freq)
{
    return key.signed_sum(freq.table());
}

double resonance_modulus(const std::vector<Factor>& tuple, const FrequencySpec& freq)
{
    double acc = 0.0;
    for (const auto& f : tuple) acc += f.sigma * freq.omega(f.j);
    return acc;
}

cplx phi_series(cplx z)
{
    if (std::abs(z) < 1e-4) return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
    return (std::exp(z) - 1.0) / z;
}

PolyHamiltonian apply_phi_ad(const PolyHamiltonian& Q, double h, const FrequencySpec& freq,
                             int eps_sign)
{
    return Q.map_orbits([&](const MonomialKey& k) {
        return phi_series(cplx(0.0, eps_sign * h * resonance_modulus(k, freq)));
    });
}

PolyHamiltonian invert_phi_ad(const PolyHamiltonian& Q, double h, const FrequencySpec& freq,
                              int eps_sign)
{
    return Q.map_orbits([&](const MonomialKey& k) {
        cplx ev = phi_series(cplx(0.0, eps_sign * h * resonance_modulus(k, freq)));
        if (std::abs(ev) < 1e-8) {
            std::string t;
            for (const auto& f : k.factors(Q.grid()))
                t += "(" + std::to_string(f.j) + "," + std::to_string(f.sigma) + ")";
            throw ResonantStepError("phi(ad_hT) is singular on orbit " + t + " (h*Omega = " +
                                    fmt17(h * resonance_modulus(k, freq)) + ")");
        }
        return 1.0 / ev;
    });
}

CohomologySolution solve_cohomology(const std::vector<PolyHamiltonian>& P, double h,
                                    const FrequencySpec& freq, const CohomologyOptions& opts,
                                    const std::string& mollifier_id)
{
    const int r = static_cast<int>(P.size());
    const TorusGrid& grid = freq.grid();
    CohomologySolution sol{h, r, opts.eps_sign, freq, mollifier_id, {}};
    std::vector<double> b0 = freq.table();
    for (auto& v : b0) v *= 0.5 * h;

    Graded Bsrc, dB;
    for (int n = 1; n <= r; ++n) {
        if (P[std::size_t(n - 1)].degree() != n + 2)
            throw ParameterError("P_" + std::to_string(n) + " must have degree " +
                                 std::to_string(n + 2));
        TimePoly rhs(P[std::size_t(n - 1)]);
        if (n >= 2) {
            Graded S = exp_ad_graded(b0, Bsrc, dB, n, opts.tail_tol, opts.eps_sign);
            auto it = S.find(n);
            if (it != S.end()) {
                TimePoly Kn = it->second;
                Kn *= -1.0;
                rhs += Kn;
            }
        }
        TimePoly dBn = rhs.map([&](const PolyHamiltonian& q) {
            return invert_phi_ad(q, h, freq, opts.eps_sign);
        });
        TimePoly Bn = dBn.integral();
        if (Bn.is_zero()) Bn = TimePoly(grid, n + 2);
        sol.B.push_back(Bn);
        if (!dBn.is_zero()) {
            dB.emplace(n, dBn);
            Bsrc.emplace(n, Bn);
        }
    }
    return sol;
}

CohomologySolution solve_cohomology(int r, const MethodSpec& method, const Nonlinearity& nl,
                                    const CohomologyOptions& opts)
{
    if (r < 1) throw ParameterError("order r must be >= 1");
    std::vector<PolyHamiltonian> P;
    for (int n = 1; n <= r; ++n) P.push_back(taylor_of_V(n, nl, method));
    return solve_cohomology(P, method.h, method.freq, opts, method.mollifier.id());
}

double ModifiedHamiltonian::evaluate(const ModeState& u) const
{
    double acc = quadratic_energy(u, freq);
    for (const auto& p : parts) acc += p.evaluate(u);
    return acc;
}

ModeState ModifiedHamiltonian::gradient(const ModeState& u) const
{
    ModeState g(u.grid());
    for (std::size_t s = 0; s < u.size(); ++s) g.data()[s] = freq.table()[s] * u.data()[s];
    for (const auto& p : parts) p.accumulate_gradient(u.data(), g.data());
    return g;
}

ModifiedHamiltonian modified_hamiltonian(const CohomologySolution& sol)
{
    ModifiedHamiltonian H{sol.freq, sol.h, {}};
    for (const auto& b : sol.B) {
        PolyHamiltonian p = b.at(sol.h);
        p *= 1.0 / sol.h;
        H.parts.push_back(std::move(p));
    }
    return H;
}

ModeState flow_modified(const ModifiedHamiltonian& Hh, const ModeState& u, double t, double tol)
{
    return poly_flow(Hh.freq.table(), Hh.parts, u, t, tol);
}

std::pair<PolyHamiltonian, PolyHamiltonian> project_resonant(const PolyHamiltonian& P, double gamma,
                                                             const FrequencySpec& freq)
{
    if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
    auto keep = [&](const MonomialKey& k) { return std::abs(resonance_modulus(k, freq)) >= gamma; };
    return {P.filter(keep), P.filter([&](const MonomialKey& k) { return !keep(k); })};
}

BirkhoffOutput birkhoff_normal_form(const std::vector<PolyHamiltonian>& Y, double gamma,
                                    const FrequencySpec& freq)
{
    if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
    const int r = static_cast<int>(Y.size());
    const TorusGrid& grid = freq.grid();
    BirkhoffOutput out{gamma, {}, {}, {}, std::numeric_limits<double>::infinity(), {}, {}};

    Graded H;
    H.emplace(0, TimePoly(quadratic_T(freq)));
    for (int l = 1; l <= r; ++l) {
        if (Y[std::size_t(l - 1)].degree() != l + 2)
            throw ParameterError("Y_" + std::to_string(l) + " must have degree " +
                                 std::to_string(l + 2));
        if (!Y[std::size_t(l - 1)].is_zero()) H.emplace(l, TimePoly(Y[std::size_t(l - 1)]));
    }
    const std::vector<double> no_diag(grid.size(), 0.0);
    Graded chi;
    for (int l = 1; l <= r; ++l) {
        Graded S = exp_ad_graded(no_diag, chi, H, l, 0.0, +1, 4 * r + 8, AdSeries::Exp);
        PolyHamiltonian F(grid, l + 2);
        if (auto it = S.find(l); it != S.end()) F = it->second.coeff(0);
        auto [kept, removed] = project_resonant(F, gamma, freq);
        for (const auto& [k, c] : kept.orbits())
            out.min_abs_omega = std::min(out.min_abs_omega, std::abs(resonance_modulus(k, freq)));
        PolyHamiltonian chil = kept.map_orbits(
            [&](const MonomialKey& k) { return 1.0 / cplx(0.0, resonance_modulus(k, freq)); });
        out.kept_counts.push_back(kept.size());
        out.removed_counts.push_back(removed.size());
        out.F.push_back(F);
        out.chi.push_back(chil);
        out.Q.push_back(removed);
        if (!chil.is_zero()) chi.emplace(l, TimePoly(chil));
    }
    return out;
}

double birkhoff_self_check(const BirkhoffOutput& out, const FrequencySpec& freq)
{
    double worst = 0.0;
    PolyHamiltonian T = quadratic_T(freq);
    for (std::size_t l = 0; l < out.chi.size(); ++l) {
        auto kept = project_resonant(out.F[l], out.gamma, freq).first;
        PolyHamiltonian lhs = poisson_bracket(out.chi[l], T);
        if (lhs.degree() != kept.degree()) lhs = PolyHamiltonian(freq.grid(), kept.degree());
        PolyHamiltonian zero(freq.grid(), kept.degree());
        worst = std::max(worst, (lhs + kept).max_abs_diff(zero));
    }
    return worst;
}

double birkhoff_remainder(const std::vector<PolyHamiltonian>& Y, const BirkhoffOutput& out,
                          const FrequencySpec& freq, const ModeState& u, int direction,
                          double tol)
{
    std::vector<double> zero(freq.grid().size(), 0.0);
    ModeState v = poly_flow(zero, out.chi, u, static_cast<double>(direction), tol);
    double lhs = quadratic_energy(v, freq);
    for (const auto& y : Y) lhs += y.evaluate(v);
    double rhs = quadratic_energy(u, freq);
    for (const auto& q : out.Q) rhs += q.evaluate(u);
    return lhs - rhs;
}

int action_charge(const MonomialKey& key, const TorusGrid& grid, int k)
{
    int target = std::abs(grid.wrap(k));
    int m = 0;
    for (int i = 0; i < key.degree(); ++i) {
        Factor f = key.factor(grid, i);
        if (std::abs(f.j) == target) m += f.sigma;
    }
    return m;
}

bool commutation_check(const std::vector<PolyHamiltonian>& Q, int k, int r,
                       const FrequencySpec& freq, double kappa_proxy)
{
    (void)r;
    const TorusGrid& grid = freq.grid();
    PolyHamiltonian J = super_action_poly(grid, k);
    for (const auto& q : Q) {
        for (const auto& [key, c] : q.orbits())
            if (std::abs(resonance_modulus(key, freq)) >= kappa_proxy) return false;
        PolyHamiltonian b = poisson_bracket(J, q);
        for (const auto& [key, c] : b.orbits())
            if (std::abs(c) > 1e-12) return false;
    }
    return true;
}

SmallDivisor min_small_divisor(const FrequencySpec& freq, int r, std::optional<int> k)
{
    const TorusGrid& grid = freq.grid();
    if (grid.K() > 16 || r > 3)
        throw BudgetError("small-divisor enumeration limited to K <= 16 and r <= 3 (got K=" +
                          std::to_string(grid.K()) + ", r=" + std::to_string(r) + ")");
    if (r < 0) throw ParameterError("order r must be nonnegative");
    const int kabs = k ? std::abs(grid.wrap(*k)) : -1;
    if (k) (void)grid.slot(*k);

    // Omega only depends on |j|, so enumerate signed counts per |j| class.
    const int nb = grid.K() / 2 + 1;
    std::vector<double> wb(static_cast<std::size_t>(nb));
    for (int b = 0; b < nb; ++b) wb[std::size_t(b)] = std::sqrt(double(b) * b + freq.rho());

    const int ncodes = 2 * grid.K();
    SmallDivisor best{std::numeric_limits<double>::infinity(), {}};
    std::vector<int> codes(static_cast<std::size_t>(r + 2));
    std::vector<int> charge(static_cast<std::size_t>(nb), 0);
    auto visit = [&](int len) {
        bool structural = true;
        for (int b = 0; b < nb && structural; ++b) structural = charge[std::size_t(b)] == 0;
        if (structural) return;
        if (kabs >= 0 && charge[std::size_t(kabs)] == 0) return;
        double om = 0.0;
        for (int b = 0; b < nb; ++b) om += charge[std::size_t(b)] * wb[std::size_t(b)];
        om = std::abs(om);
        if (om < best.value) {
            best.value = om;
            best.witness.clear();
            for (int i = 0; i < len; ++i) {
                int c = codes[std::size_t(i)];
                best.witness.push_back({grid.kmin() + c / 2, (c & 1) ? 1 : -1});
            }
        }
    };
    auto rec = [&](auto&& self, int depth, int start) -> void {
        if (depth >= 2) visit(depth);
        if (depth == r + 2) return;
        for (int c = start; c < ncodes; ++c) {
            int j = grid.kmin() + c / 2;
            int s = (c & 1) ? 1 : -1;
            codes[std::size_t(depth)] = c;
            charge[std::size_t(std::abs(j))] += s;
            self(self, depth + 1, c);
            charge[std::size_t(std::abs(j))] -= s;
        }
    };
    rec(rec, 0, 0);
    if (!std::isfinite(best.value))
        throw ParameterError("no admissible tuple for the requested small divisor");
    return best;
}

namespace {

void write_manifest(const NormalFormManifest& m, std::ostream& os)
{
    os << "manifest h=" << fmt17(m.h) << " r=" << m.r << " K=" << m.K << " rho=" << fmt17(m.rho)
       << " mollifier=" << m.mollifier << " eps_sign=" << m.eps_sign
       << " gamma=" << fmt17(m.gamma) << '\n';
}

void write_section(const std::string& label, const PolyHamiltonian& p, std::ostream& os)
{
    os << "section " << label << '\n';
    p.write(os);
    os << '\n';
}

}  // namespace

void write_cohomology(const CohomologySolution& sol, std::ostream& os)
{
    NormalFormManifest m{sol.h, sol.r, sol.freq.grid().K(), sol.freq.rho(), sol.mollifier,
                         sol.eps_sign, 0.0};
    write_manifest(m, os);
    for (std::size_t n = 0; n < sol.B.size(); ++n)
        for (int p = 0; p <= sol.B[n].max_power(); ++p)
            write_section("B" + std::to_string(n + 1) + "^" + std::to_string(p), sol.B[n].coeff(p),
                          os);
}

void write_birkhoff(const BirkhoffOutput& out, const NormalFormManifest& manifest, std::ostream& os)
{
    NormalFormManifest m = manifest;
    m.gamma = out.gamma;
    m.r = static_cast<int>(out.chi.size());
    write_manifest(m, os);
    for (std::size_t l = 0; l < out.chi.size(); ++l) {
        write_section("chi" + std::to_string(l + 1), out.chi[l], os);
        write_section("Q" + std::to_string(l + 1), out.Q[l], os);
    }
}

std::pair<NormalFormManifest, std::vector<std::pair<std::string, PolyHamiltonian>>>
read_normal_form(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line.rfind("manifest ", 0) != 0)
        throw IoError("missing normal-form manifest line");
    NormalFormManifest m;
    std::istringstream ms(line.substr(9));
    std::string kv;
    while (ms >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw IoError("bad manifest entry '" + kv + "'");
        std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "h") m.h = std::stod(val);
        else if (key == "r") m.r = std::stoi(val);
        else if (key == "K") m.K = std::stoi(val);
        else if (key == "rho") m.rho = std::stod(val);
        else if (key == "mollifier") m.mollifier = val;
        else if (key == "eps_sign") m.eps_sign = std::stoi(val);
        else if (key == "gamma") m.gamma = std::stod(val);
        else throw IoError("unknown manifest key '" + key + "'");
    }
    std::vector<std::pair<std::string, PolyHamiltonian>> sections;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.rfind("section ", 0) != 0) throw IoError("expected section line, got '" + line + "'");
        std::string label = line.substr(8);
        sections.emplace_back(label, PolyHamiltonian::read(is));
    }
    return {m, std::move(sections)};
}

}  // namespace kg
