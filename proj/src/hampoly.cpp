#include "kg/hampoly.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include <boost/numeric/odeint.hpp>

#include "kg/errors.hpp"

namespace kg {

namespace {

double factorial(int n)
{
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

std::string describe(const TorusGrid& grid, const MonomialKey& key)
{
    std::string s = "(";
    for (int i = 0; i < key.degree(); ++i) {
        Factor f = key.factor(grid, i);
        if (i) s += ",";
        s += "(" + std::to_string(f.j) + "," + (f.sigma > 0 ? "+1" : "-1") + ")";
    }
    return s + ")";
}

void require_same(const PolyHamiltonian& a, const PolyHamiltonian& b, const char* what)
{
    if (!(a.grid() == b.grid()))
        throw SizeError(std::string(what) + ": polynomials live on different grids");
    if (a.degree() != b.degree())
        throw SizeError(std::string(what) + ": degree " + std::to_string(a.degree()) + " vs " +
                        std::to_string(b.degree()));
}

std::vector<cplx> code_values(const ModeState& u)
{
    const auto& v = u.data();
    std::vector<cplx> val(2 * v.size());
    for (std::size_t s = 0; s < v.size(); ++s) {
        val[2 * s] = std::conj(v[s]);
        val[2 * s + 1] = v[s];
    }
    return val;
}

}  // namespace

MonomialKey MonomialKey::from_factors(const TorusGrid& grid, const std::vector<Factor>& fs)
{
    if (fs.size() > static_cast<std::size_t>(kMaxDegree))
        throw ParameterError("monomial degree exceeds " + std::to_string(kMaxDegree));
    MonomialKey k;
    k.deg_ = static_cast<std::uint8_t>(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) {
        if (fs[i].sigma != 1 && fs[i].sigma != -1) throw ParameterError("sigma must be +1 or -1");
        int slot = grid.wrap(fs[i].j) - grid.kmin();
        k.codes_[i] = static_cast<std::uint16_t>(2 * slot + (fs[i].sigma > 0 ? 1 : 0));
    }
    std::sort(k.codes_.begin(), k.codes_.begin() + k.deg_);
    return k;
}

MonomialKey MonomialKey::from_codes(const std::uint16_t* codes, int degree)
{
    MonomialKey k;
    k.deg_ = static_cast<std::uint8_t>(degree);
    std::copy(codes, codes + degree, k.codes_.begin());
    std::sort(k.codes_.begin(), k.codes_.begin() + degree);
    return k;
}

Factor MonomialKey::factor(const TorusGrid& grid, int i) const
{
    int c = codes_[i];
    return {grid.kmin() + c / 2, (c & 1) ? 1 : -1};
}

std::vector<Factor> MonomialKey::factors(const TorusGrid& grid) const
{
    std::vector<Factor> out;
    for (int i = 0; i < deg_; ++i) out.push_back(factor(grid, i));
    return out;
}

MonomialKey MonomialKey::conjugate() const
{
    MonomialKey k = *this;
    for (int i = 0; i < deg_; ++i) k.codes_[i] ^= 1u;
    std::sort(k.codes_.begin(), k.codes_.begin() + deg_);
    return k;
}

double MonomialKey::multiplicity() const
{
    double m = factorial(deg_);
    int run = 1;
    for (int i = 1; i <= deg_; ++i) {
        if (i < deg_ && codes_[i] == codes_[i - 1]) {
            ++run;
        } else {
            m /= factorial(run);
            run = 1;
        }
    }
    return m;
}

long MonomialKey::momentum(const TorusGrid& grid) const
{
    long m = 0;
    for (int i = 0; i < deg_; ++i) {
        Factor f = factor(grid, i);
        m += static_cast<long>(f.sigma) * f.j;
    }
    return m;
}

double MonomialKey::signed_sum(const std::vector<double>& w) const
{
    double acc = 0.0;
    for (int i = 0; i < deg_; ++i) {
        int c = codes_[i];
        acc += (c & 1) ? w[c / 2] : -w[c / 2];
    }
    return acc;
}

bool MonomialKey::operator==(const MonomialKey& o) const noexcept
{
    return deg_ == o.deg_ && std::equal(codes_.begin(), codes_.begin() + deg_, o.codes_.begin());
}

bool MonomialKey::operator<(const MonomialKey& o) const noexcept
{
    if (deg_ != o.deg_) return deg_ < o.deg_;
    return std::lexicographical_compare(codes_.begin(), codes_.begin() + deg_, o.codes_.begin(),
                                        o.codes_.begin() + deg_);
}

std::size_t MonomialKey::Hash::operator()(const MonomialKey& k) const noexcept
{
    std::uint64_t h = 1469598103934665603ull;
    for (int i = 0; i < k.degree(); ++i) {
        h ^= k.code(i);
        h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
}

PolyHamiltonian::PolyHamiltonian(const TorusGrid& grid, int degree) : grid_(grid), degree_(degree)
{
    if (degree < 1 || degree > kMaxDegree)
        throw ParameterError("polynomial degree must lie in [1, " + std::to_string(kMaxDegree) +
                             "]");
}

namespace {

// Realifies a map of total coefficients (full monomial -> coefficient) into
// per-representative symmetric coefficients.
std::vector<std::pair<MonomialKey, cplx>> realify(
    const std::vector<std::pair<MonomialKey, cplx>>& totals)
{
    std::unordered_map<MonomialKey, cplx, MonomialKey::Hash> acc;
    std::vector<MonomialKey> order;
    for (const auto& [k, a] : totals) {
        auto [it, fresh] = acc.try_emplace(k, cplx{});
        if (fresh) order.push_back(k);
        it->second += a;
    }
    std::vector<std::pair<MonomialKey, cplx>> out;
    for (const auto& k : order) {
        MonomialKey c = k.conjugate();
        bool is_rep = !(c < k);
        MonomialKey rep = is_rep ? k : c;
        MonomialKey other = is_rep ? c : k;
        if (!is_rep && acc.count(rep)) continue;  // handled with its representative
        double mult = rep.multiplicity();
        cplx a_rep = acc.count(rep) ? acc.at(rep) : cplx{};
        cplx val;
        if (rep == other) {
            val = cplx(a_rep.real(), 0.0);
        } else if (acc.count(rep) && acc.count(other)) {
            val = 0.5 * (a_rep + std::conj(acc.at(other)));
        } else if (acc.count(rep)) {
            val = a_rep;
        } else {
            val = std::conj(acc.at(other));
        }
        val /= mult;
        if (val != cplx{}) out.emplace_back(rep, val);
    }
    std::sort(out.begin(), out.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    return out;
}

}  // namespace

PolyHamiltonian PolyHamiltonian::build(
    const std::vector<std::pair<std::vector<Factor>, cplx>>& terms, const TorusGrid& grid,
    int degree)
{
    PolyHamiltonian P(grid, degree);
    std::vector<std::pair<MonomialKey, cplx>> totals;
    for (const auto& [fs, a] : terms) {
        if (static_cast<int>(fs.size()) != degree)
            throw ParameterError("term of length " + std::to_string(fs.size()) +
                                 " in a degree-" + std::to_string(degree) + " polynomial");
        MonomialKey k = MonomialKey::from_factors(grid, fs);
        long m = 0;
        for (const auto& f : fs) m += static_cast<long>(f.sigma) * f.j;
        if (m % grid.K() != 0) {
            std::string t = "(";
            for (std::size_t i = 0; i < fs.size(); ++i)
                t += (i ? ",(" : "(") + std::to_string(fs[i].j) + "," +
                     (fs[i].sigma > 0 ? "+1" : "-1") + ")";
            throw MomentumError("tuple " + t + ") has momentum " + std::to_string(m) +
                                " != 0 mod " + std::to_string(grid.K()));
        }
        totals.emplace_back(k, a);
    }
    P.orbits_ = realify(totals);
    P.rebuild_expanded();
    return P;
}

PolyHamiltonian PolyHamiltonian::from_orbits(const TorusGrid& grid, int degree,
                                             std::vector<std::pair<MonomialKey, cplx>> orbits)
{
    PolyHamiltonian P(grid, degree);
    std::map<MonomialKey, cplx> acc;
    for (auto& [k, c] : orbits) {
        if (k.degree() != degree) throw ParameterError("orbit degree mismatch");
        if (k.momentum(grid) % grid.K() != 0)
            throw MomentumError("orbit " + describe(grid, k) + " violates the momentum condition");
        MonomialKey cj = k.conjugate();
        if (cj < k)
            acc[cj] += std::conj(c);
        else if (cj == k)
            acc[k] += c.real();
        else
            acc[k] += c;
    }
    for (auto& [k, c] : acc)
        if (c != cplx{}) P.orbits_.emplace_back(k, c);
    P.rebuild_expanded();
    return P;
}

PolyHamiltonian PolyHamiltonian::from_totals(
    const TorusGrid& grid, int degree, const std::vector<std::pair<MonomialKey, cplx>>& totals)
{
    PolyHamiltonian P(grid, degree);
    P.orbits_ = realify(totals);
    P.rebuild_expanded();
    return P;
}

void PolyHamiltonian::rebuild_expanded()
{
    expanded_.clear();
    expanded_.reserve(2 * orbits_.size());
    for (const auto& [k, c] : orbits_) {
        cplx a = k.multiplicity() * c;
        expanded_.push_back({k, a});
        MonomialKey cj = k.conjugate();
        if (!(cj == k)) expanded_.push_back({cj, std::conj(a)});
    }
}

cplx PolyHamiltonian::coefficient(const MonomialKey& key) const
{
    MonomialKey cj = key.conjugate();
    bool is_rep = !(cj < key);
    const MonomialKey& rep = is_rep ? key : cj;
    auto it = std::lower_bound(orbits_.begin(), orbits_.end(), rep,
                               [](const auto& e, const MonomialKey& k) { return e.first < k; });
    if (it == orbits_.end() || !(it->first == rep)) return {};
    return is_rep ? it->second : std::conj(it->second);
}

cplx PolyHamiltonian::evaluate_complex(const ModeState& u) const
{
    if (u.size() != grid_.size()) throw SizeError("evaluate: state/grid size mismatch");
    auto val = code_values(u);
    cplx acc{};
    for (const auto& t : expanded_) {
        cplx m = t.total;
        for (int i = 0; i < t.key.degree(); ++i) m *= val[t.key.code(i)];
        acc += m;
    }
    return acc;
}

double PolyHamiltonian::evaluate(const ModeState& u) const
{
    if (u.size() != grid_.size()) throw SizeError("evaluate: state/grid size mismatch");
    auto val = code_values(u);
    cplx acc{};
    double scale = 0.0;
    for (const auto& t : expanded_) {
        cplx m = t.total;
        for (int i = 0; i < t.key.degree(); ++i) m *= val[t.key.code(i)];
        acc += m;
        scale += std::abs(m);
    }
    if (std::abs(acc.imag()) > 1e-12 * std::max(std::abs(acc.real()), 1e-3 * scale) &&
        std::abs(acc.imag()) > 1e-300)
        throw ConsistencyError("polynomial evaluated to a non-real value (imag " +
                               std::to_string(acc.imag()) + ")");
    return acc.real();
}

void PolyHamiltonian::accumulate_gradient(const std::vector<cplx>& u,
                                          std::vector<cplx>& grad) const
{
    std::vector<cplx> val(2 * u.size());
    for (std::size_t s = 0; s < u.size(); ++s) {
        val[2 * s] = std::conj(u[s]);
        val[2 * s + 1] = u[s];
    }
    for (const auto& t : expanded_) {
        const int d = t.key.degree();
        for (int i = 0; i < d; ++i) {
            int c = t.key.code(i);
            if (c & 1) continue;
            if (i > 0 && t.key.code(i - 1) == c) continue;
            int n = 1;
            while (i + n < d && t.key.code(i + n) == c) ++n;
            cplx m = 2.0 * t.total * static_cast<double>(n);
            for (int l = 0; l < d; ++l)
                if (l != i) m *= val[t.key.code(l)];
            grad[static_cast<std::size_t>(c / 2)] += m;
        }
    }
}

ModeState PolyHamiltonian::gradient(const ModeState& u) const
{
    if (u.size() != grid_.size()) throw SizeError("gradient: state/grid size mismatch");
    ModeState g(grid_);
    accumulate_gradient(u.data(), g.data());
    return g;
}

double PolyHamiltonian::h_norm() const
{
    double best = 0.0;
    for (const auto& [k, c] : orbits_) {
        double w = std::abs(c);
        for (int i = 0; i < k.degree(); ++i) w *= std::sqrt(japanese(k.factor(grid_, i).j));
        best = std::max(best, w);
    }
    return best;
}

PolyHamiltonian PolyHamiltonian::map_orbits(
    const std::function<cplx(const MonomialKey&)>& multiplier) const
{
    PolyHamiltonian out(grid_, degree_);
    for (const auto& [k, c] : orbits_) {
        cplx v = c * multiplier(k);
        if (k.self_conjugate()) v = v.real();
        if (v != cplx{}) out.orbits_.emplace_back(k, v);
    }
    out.rebuild_expanded();
    return out;
}

PolyHamiltonian PolyHamiltonian::filter(const std::function<bool(const MonomialKey&)>& pred) const
{
    PolyHamiltonian out(grid_, degree_);
    for (const auto& e : orbits_)
        if (pred(e.first)) out.orbits_.push_back(e);
    out.rebuild_expanded();
    return out;
}

PolyHamiltonian PolyHamiltonian::pruned(double rel) const
{
    double mx = 0.0;
    for (const auto& e : orbits_) mx = std::max(mx, std::abs(e.second));
    double cut = rel * mx;
    PolyHamiltonian out(grid_, degree_);
    for (const auto& e : orbits_)
        if (std::abs(e.second) >= cut && e.second != cplx{}) out.orbits_.push_back(e);
    out.rebuild_expanded();
    return out;
}

PolyHamiltonian& PolyHamiltonian::operator+=(const PolyHamiltonian& o)
{
    require_same(*this, o, "addition");
    std::vector<std::pair<MonomialKey, cplx>> merged;
    merged.reserve(orbits_.size() + o.orbits_.size());
    auto a = orbits_.begin();
    auto b = o.orbits_.begin();
    while (a != orbits_.end() || b != o.orbits_.end()) {
        if (b == o.orbits_.end() || (a != orbits_.end() && a->first < b->first)) {
            merged.push_back(*a++);
        } else if (a == orbits_.end() || b->first < a->first) {
            merged.push_back(*b++);
        } else {
            cplx v = a->second + b->second;
            if (v != cplx{}) merged.emplace_back(a->first, v);
            ++a;
            ++b;
        }
    }
    orbits_ = std::move(merged);
    rebuild_expanded();
    return *this;
}

PolyHamiltonian& PolyHamiltonian::operator-=(const PolyHamiltonian& o)
{
    PolyHamiltonian neg = o;
    neg *= -1.0;
    return *this += neg;
}

PolyHamiltonian& PolyHamiltonian::operator*=(double s)
{
    if (s == 0.0) {
        orbits_.clear();
    } else {
        for (auto& e : orbits_) e.second *= s;
    }
    rebuild_expanded();
    return *this;
}

double PolyHamiltonian::max_abs_diff(const PolyHamiltonian& o) const
{
    PolyHamiltonian d = *this;
    d -= o;
    double mx = 0.0;
    for (const auto& e : d.orbits_) mx = std::max(mx, std::abs(e.second));
    return mx;
}

void PolyHamiltonian::write(std::ostream& os) const
{
    char buf[64];
    os << degree_ << ' ' << grid_.K() << '\n';
    for (const auto& [k, c] : orbits_) {
        for (int i = 0; i < k.degree(); ++i) {
            Factor f = k.factor(grid_, i);
            os << f.j << ' ' << f.sigma << ' ';
        }
        std::snprintf(buf, sizeof buf, "%.17g", c.real());
        os << buf << ' ';
        std::snprintf(buf, sizeof buf, "%.17g", c.imag());
        os << buf << '\n';
    }
}

PolyHamiltonian PolyHamiltonian::read(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw IoError("polynomial stream is empty");
    std::istringstream hs(line);
    int degree = 0, K = 0;
    if (!(hs >> degree >> K)) throw IoError("bad polynomial header '" + line + "'");
    TorusGrid grid(K);
    std::vector<std::pair<MonomialKey, cplx>> orbits;
    while (std::getline(is, line)) {
        if (line.empty()) break;
        std::istringstream ls(line);
        std::vector<Factor> fs(static_cast<std::size_t>(degree));
        for (auto& f : fs)
            if (!(ls >> f.j >> f.sigma)) throw IoError("bad polynomial line '" + line + "'");
        double re = 0.0, im = 0.0;
        if (!(ls >> re >> im)) throw IoError("bad coefficient in line '" + line + "'");
        orbits.emplace_back(MonomialKey::from_factors(grid, fs), cplx(re, im));
    }
    return from_orbits(grid, degree, std::move(orbits));
}

PolyHamiltonian poisson_bracket(const PolyHamiltonian& P, const PolyHamiltonian& X)
{
    if (!(P.grid() == X.grid())) throw SizeError("poisson_bracket: different grids");
    const int dp = P.degree(), dx = X.degree();
    const int dr = dp + dx - 2;
    if (dr > kMaxDegree) throw ParameterError("bracket degree exceeds the supported maximum");
    const TorusGrid& grid = P.grid();
    PolyHamiltonian zero(grid, std::max(dr, 1));
    if (P.is_zero() || X.is_zero() || dr < 1) return zero;

    // index: code -> (term, multiplicity of that code in the term)
    const std::size_t ncodes = 2 * grid.size();
    std::vector<std::vector<std::pair<std::uint32_t, int>>> index(ncodes);
    const auto& xt = X.expanded();
    for (std::uint32_t t = 0; t < xt.size(); ++t) {
        const MonomialKey& k = xt[t].key;
        for (int i = 0; i < dx;) {
            int c = k.code(i), n = 1;
            while (i + n < dx && k.code(i + n) == c) ++n;
            index[static_cast<std::size_t>(c)].emplace_back(t, n);
            i += n;
        }
    }

    std::unordered_map<MonomialKey, cplx, MonomialKey::Hash> acc;
    std::vector<MonomialKey> order;
    std::uint16_t rest_p[kMaxDegree], rest_x[kMaxDegree], merged[kMaxDegree];
    const cplx two_i(0.0, 2.0);
    for (const auto& pt : P.expanded()) {
        const MonomialKey& kp = pt.key;
        for (int i = 0; i < dp;) {
            int c = kp.code(i), np = 1;
            while (i + np < dp && kp.code(i + np) == c) ++np;
            // P without one copy of c
            int w = 0;
            for (int l = 0; l < dp; ++l)
                if (l != i) rest_p[w++] = kp.code(l);
            // conj factor in P pairs with plain factor in X and carries +2i
            const int partner = c ^ 1;
            const cplx sgn = (c & 1) ? -two_i : two_i;
            for (const auto& [t, nx] : index[static_cast<std::size_t>(partner)]) {
                const MonomialKey& kx = xt[t].key;
                int wx = 0;
                bool skipped = false;
                for (int l = 0; l < dx; ++l) {
                    if (!skipped && kx.code(l) == partner) {
                        skipped = true;
                        continue;
                    }
                    rest_x[wx++] = kx.code(l);
                }
                std::merge(rest_p, rest_p + (dp - 1), rest_x, rest_x + (dx - 1), merged);
                MonomialKey key = MonomialKey::from_codes(merged, dr);
                cplx v = sgn * pt.total * static_cast<double>(np) * xt[t].total *
                         static_cast<double>(nx);
                auto [it, fresh] = acc.try_emplace(key, cplx{});
                if (fresh) order.push_back(key);
                it->second += v;
            }
            i += np;
        }
    }
    std::vector<std::pair<MonomialKey, cplx>> totals;
    totals.reserve(order.size());
    for (const auto& k : order) totals.emplace_back(k, acc.at(k));
    return PolyHamiltonian::from_totals(grid, dr, totals).pruned(1e-16);
}

PolyHamiltonian ad_quadratic(const PolyHamiltonian& P, const std::vector<double>& lambda)
{
    if (lambda.size() != P.grid().size()) throw SizeError("ad_quadratic: lambda size mismatch");
    return P.map_orbits(
        [&](const MonomialKey& k) { return cplx(0.0, -2.0 * k.signed_sum(lambda)); });
}

PolyHamiltonian diagonal_quadratic(const TorusGrid& grid, const std::vector<double>& w)
{
    if (w.size() != grid.size()) throw SizeError("diagonal_quadratic: weight size mismatch");
    std::vector<std::pair<MonomialKey, cplx>> orbits;
    for (std::size_t s = 0; s < grid.size(); ++s) {
        if (w[s] == 0.0) continue;
        int k = grid.mode(s);
        orbits.emplace_back(MonomialKey::from_factors(grid, {{k, -1}, {k, 1}}), 0.5 * w[s]);
    }
    return PolyHamiltonian::from_orbits(grid, 2, std::move(orbits));
}

PolyHamiltonian quadratic_T(const FrequencySpec& freq)
{
    std::vector<double> w = freq.table();
    for (auto& x : w) x *= 0.5;
    return diagonal_quadratic(freq.grid(), w);
}

PolyHamiltonian super_action_poly(const TorusGrid& grid, int k)
{
    std::size_t s = grid.slot(k);
    std::size_t n = grid.neg_slot(s);
    std::vector<double> w(grid.size(), 0.0);
    w[s] += 0.5;
    w[n] += 0.5;
    return diagonal_quadratic(grid, w);
}

PolyHamiltonian taylor_of_V(int n, const Nonlinearity& nl, const MethodSpec& method)
{
    if (n < 1) throw ParameterError("Taylor order n must be >= 1");
    const FrequencySpec& freq = method.freq;
    const TorusGrid& grid = freq.grid();
    const int d = n + 2;
    PolyHamiltonian zero(grid, d);
    const double cn = nl.taylor_c(n);
    if (cn == 0.0) return zero;

    const int ncodes = 2 * grid.K();
    double count = 1.0;
    for (int i = 0; i < d; ++i) count = count * (ncodes + i) / (i + 1);
    if (count > 5e7)
        throw BudgetError("Taylor coefficient enumeration needs " + std::to_string(count) +
                          " tuples (limit 5e7)");

    std::vector<double> m(grid.size());
    for (std::size_t s = 0; s < grid.size(); ++s) {
        double w = freq.table()[s];
        m[s] = method.mollifier(method.h * w) / std::sqrt(w);
    }
    const double pref = std::pow(0.5, d) * cn;
    const int K = grid.K();
    std::vector<std::pair<MonomialKey, cplx>> orbits;
    std::uint16_t codes[kMaxDegree] = {};
    // depth-first over nondecreasing code sequences
    auto rec = [&](auto&& self, int depth, int start, long mom, double prod) -> void {
        if (depth == d) {
            if (mom % K != 0) return;
            MonomialKey key = MonomialKey::from_codes(codes, d);
            if (key.conjugate() < key) return;
            orbits.emplace_back(key, pref * prod);
            return;
        }
        for (int c = start; c < ncodes; ++c) {
            codes[depth] = static_cast<std::uint16_t>(c);
            long j = grid.kmin() + c / 2;
            self(self, depth + 1, c, mom + ((c & 1) ? j : -j), prod * m[static_cast<std::size_t>(c / 2)]);
        }
    };
    rec(rec, 0, 0, 0L, 1.0);
    return PolyHamiltonian::from_orbits(grid, d, std::move(orbits));
}

PolyHamiltonian random_polynomial(const TorusGrid& grid, int degree, std::uint64_t seed,
                                  double density)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int ncodes = 2 * grid.K();
    const int K = grid.K();
    std::vector<std::pair<MonomialKey, cplx>> orbits;
    std::uint16_t codes[kMaxDegree] = {};
    auto rec = [&](auto&& self, int depth, int start, long mom) -> void {
        if (depth == degree) {
            if (mom % K != 0) return;
            MonomialKey key = MonomialKey::from_codes(codes, degree);
            MonomialKey cj = key.conjugate();
            if (cj < key) return;
            double keep = 0.5 * (unit(rng) + 1.0);
            double re = unit(rng), im = unit(rng);
            if (keep >= density) return;
            orbits.emplace_back(key, cj == key ? cplx(re, 0.0) : cplx(re, im));
            return;
        }
        for (int c = start; c < ncodes; ++c) {
            codes[depth] = static_cast<std::uint16_t>(c);
            long j = grid.kmin() + c / 2;
            self(self, depth + 1, c, mom + ((c & 1) ? j : -j));
        }
    };
    rec(rec, 0, 0, 0L);
    return PolyHamiltonian::from_orbits(grid, degree, std::move(orbits));
}

ModeState poly_flow(const std::vector<double>& lambda, const std::vector<PolyHamiltonian>& chi,
                    const ModeState& u, double t, double tol)
{
    namespace ode = boost::numeric::odeint;
    const TorusGrid& grid = u.grid();
    const std::size_t K = grid.size();
    if (lambda.size() != K) throw SizeError("poly_flow: lambda size mismatch");
    for (const auto& c : chi)
        if (!(c.grid() == grid)) throw SizeError("poly_flow: chi lives on another grid");
    if (t == 0.0) return u;

    const double sgn = t > 0 ? 1.0 : -1.0;
    const double T = std::abs(t);
    using State = std::vector<double>;
    std::vector<cplx> w(K), grad(K);
    // interaction picture: v = e^{i s lambda tau} u
    auto rhs = [&](const State& x, State& dxdt, double tau) {
        for (std::size_t s = 0; s < K; ++s)
            w[s] = cplx(x[2 * s], x[2 * s + 1]) * std::polar(1.0, -sgn * lambda[s] * tau);
        std::fill(grad.begin(), grad.end(), cplx{});
        for (const auto& c : chi) c.accumulate_gradient(w, grad);
        for (std::size_t s = 0; s < K; ++s) {
            cplx dv = cplx(0.0, -sgn) * std::polar(1.0, sgn * lambda[s] * tau) * grad[s];
            dxdt[2 * s] = dv.real();
            dxdt[2 * s + 1] = dv.imag();
        }
    };

    State x(2 * K);
    for (std::size_t s = 0; s < K; ++s) {
        x[2 * s] = u.data()[s].real();
        x[2 * s + 1] = u.data()[s].imag();
    }
    bool active = false;
    for (const auto& c : chi) active = active || !c.is_zero();
    if (active) {
        auto stepper = ode::make_controlled(tol, tol, ode::runge_kutta_fehlberg78<State>());
        double tau = 0.0;
        double dt = std::min(T, 0.05);
        std::size_t attempts = 0;
        while (tau < T) {
            if (tau + dt > T) dt = T - tau;
            if (dt < 1e-14 * std::max(1.0, T))
                throw NonConvergenceError("poly_flow: step size underflow at tau = " +
                                          std::to_string(tau));
            if (++attempts > 2000000) throw NonConvergenceError("poly_flow: too many steps");
            auto res = stepper.try_step(rhs, x, tau, dt);
            (void)res;
            for (double xi : x)
                if (!std::isfinite(xi)) throw NonConvergenceError("poly_flow: non-finite state");
        }
    }
    ModeState out(grid);
    for (std::size_t s = 0; s < K; ++s)
        out.data()[s] = cplx(x[2 * s], x[2 * s + 1]) * std::polar(1.0, -sgn * lambda[s] * T);
    return out;
}

TimePoly::TimePoly(const TorusGrid& grid, int degree) : grid_(grid), degree_(degree) {}

TimePoly::TimePoly(PolyHamiltonian constant)
    : grid_(constant.grid()), degree_(constant.degree())
{
    coeffs_.push_back(std::move(constant));
    trim();
}

PolyHamiltonian TimePoly::coeff(int power) const
{
    if (power < 0 || power > max_power()) return PolyHamiltonian(grid_, degree_);
    return coeffs_[static_cast<std::size_t>(power)];
}

void TimePoly::set_coeff(int power, PolyHamiltonian p)
{
    if (p.degree() != degree_ || !(p.grid() == grid_))
        throw SizeError("TimePoly: coefficient degree/grid mismatch");
    while (max_power() < power) coeffs_.emplace_back(grid_, degree_);
    coeffs_[static_cast<std::size_t>(power)] = std::move(p);
    trim();
}

void TimePoly::add_to_coeff(int power, const PolyHamiltonian& p)
{
    if (p.is_zero()) return;
    while (max_power() < power) coeffs_.emplace_back(grid_, degree_);
    coeffs_[static_cast<std::size_t>(power)] += p;
    trim();
}

void TimePoly::trim()
{
    while (!coeffs_.empty() && coeffs_.back().is_zero()) coeffs_.pop_back();
}

PolyHamiltonian TimePoly::at(double t) const
{
    PolyHamiltonian acc(grid_, degree_);
    double tp = 1.0;
    for (const auto& c : coeffs_) {
        acc += tp * c;
        tp *= t;
    }
    return acc;
}

TimePoly TimePoly::derivative() const
{
    TimePoly out(grid_, degree_);
    for (int p = 1; p <= max_power(); ++p) out.set_coeff(p - 1, double(p) * coeffs_[std::size_t(p)]);
    return out;
}

TimePoly TimePoly::integral() const
{
    TimePoly out(grid_, degree_);
    for (int p = 0; p <= max_power(); ++p)
        out.set_coeff(p + 1, (1.0 / (p + 1)) * coeffs_[std::size_t(p)]);
    return out;
}

bool TimePoly::is_zero() const { return coeffs_.empty(); }

double TimePoly::norm() const
{
    double acc = 0.0;
    for (const auto& c : coeffs_) acc += c.h_norm();
    return acc;
}

TimePoly& TimePoly::operator+=(const TimePoly& o)
{
    if (o.degree_ != degree_ || !(o.grid_ == grid_)) throw SizeError("TimePoly: mismatch in +=");
    for (int p = 0; p <= o.max_power(); ++p) add_to_coeff(p, o.coeffs_[std::size_t(p)]);
    return *this;
}

TimePoly& TimePoly::operator*=(double s)
{
    for (auto& c : coeffs_) c *= s;
    trim();
    return *this;
}

TimePoly TimePoly::map(const std::function<PolyHamiltonian(const PolyHamiltonian&)>& f) const
{
    TimePoly out(grid_, degree_);
    for (int p = 0; p <= max_power(); ++p) out.set_coeff(p, f(coeffs_[std::size_t(p)]));
    return out;
}

TimePoly poisson_bracket(const TimePoly& A, const TimePoly& B)
{
    TimePoly out(A.grid(), A.degree() + B.degree() - 2);
    for (int a = 0; a <= A.max_power(); ++a)
        for (int b = 0; b <= B.max_power(); ++b)
            out.add_to_coeff(a + b, poisson_bracket(A.coeffs()[std::size_t(a)],
                                                    B.coeffs()[std::size_t(b)]));
    return out;
}

Graded exp_ad_graded(const std::vector<double>& b0, const Graded& B, const Graded& Y, int max_grade,
                     double tail_tol, int sign, int max_terms, AdSeries series)
{
    Graded sum;
    for (const auto& [g, y] : Y)
        if (g <= max_grade && !y.is_zero()) sum.emplace(g, y);
    if (sum.empty()) return sum;
    const int min_grade = sum.begin()->first;
    const int span = max_grade - min_grade;
    bool diag = false;
    for (double v : b0) diag = diag || v != 0.0;
    std::vector<double> neg_b0 = b0;
    for (auto& v : neg_b0) v = -v;

    auto add = [](Graded& into, int g, const TimePoly& p) {
        if (p.is_zero()) return;
        auto it = into.find(g);
        if (it == into.end())
            into.emplace(g, p);
        else
            it->second += p;
    };

    Graded term = sum;
    for (int k = 1; k <= max_terms; ++k) {
        Graded next;
        const double div = series == AdSeries::Phi ? double(k + 1) : double(k);
        for (const auto& [g, x] : term) {
            if (diag) {
                // {B_0, X} = -{X, B_0}
                TimePoly d = x.map([&](const PolyHamiltonian& p) { return ad_quadratic(p, neg_b0); });
                add(next, g, d);
            }
            for (const auto& [i, bi] : B) {
                if (i < 1 || g + i > max_grade || bi.is_zero()) continue;
                add(next, g + i, poisson_bracket(bi, x));
            }
        }
        for (auto& [g, x] : next) x *= double(sign) / div;
        term = std::move(next);
        bool converged = true;
        for (const auto& [g, x] : term) {
            add(sum, g, x);
        }
        for (const auto& [g, x] : term) {
            double inc = x.norm();
            auto it = sum.find(g);
            double tot = it == sum.end() ? 0.0 : it->second.norm();
            if (inc > tail_tol * tot) converged = false;
        }
        if (term.empty() || (converged && k >= span)) return sum;
    }
    throw SeriesDivergenceError("phi(ad_B) series did not converge within " +
                                std::to_string(max_terms) + " terms");
}

}  // namespace kg
