#include <doctest.h>

#include <cmath>
#include <sstream>

#include "common.hpp"
#include "kg/errors.hpp"
#include "kg/hampoly.hpp"

using namespace kg;
using kgtest::max_abs;
using kgtest::max_abs_diff;

namespace {

PolyHamiltonian abs_sq(const TorusGrid& g, int k)
{
    return PolyHamiltonian::build({{{{k, +1}, {k, -1}}, 1.0}}, g, 2);
}

/// 2 d/d(conj u) by central differences on real and imaginary parts.
ModeState fd_gradient(const PolyHamiltonian& P, const ModeState& u, double e = 1e-6)
{
    ModeState g(u.grid());
    for (std::size_t i = 0; i < u.size(); ++i) {
        ModeState a = u, b = u, c = u, d = u;
        a.data()[i] += e;
        b.data()[i] -= e;
        c.data()[i] += cplx(0.0, e);
        d.data()[i] -= cplx(0.0, e);
        double dx = (P.evaluate(a) - P.evaluate(b)) / (2 * e);
        double dy = (P.evaluate(c) - P.evaluate(d)) / (2 * e);
        g.data()[i] = {dx, dy};
    }
    return g;
}

/// (i grad P, grad X) in the real L^2 pairing.
double gradient_bracket(const PolyHamiltonian& P, const PolyHamiltonian& X, const ModeState& u)
{
    auto gp = P.gradient(u);
    auto gx = X.gradient(u);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        s += (cplx(0.0, 1.0) * gp.data()[i] * std::conj(gx.data()[i])).real();
    return s;
}

double max_coeff(const PolyHamiltonian& P)
{
    double m = 0.0;
    for (auto& [k, c] : P.orbits()) m = std::max(m, std::abs(c));
    return m;
}

cplx phi_scalar(cplx z)
{
    if (std::abs(z) < 1e-8) return 1.0 + z / 2.0;
    return (std::exp(z) - 1.0) / z;
}

}  // namespace

TEST_CASE("build and evaluate |u_1|^2")
{
    TorusGrid g(8);
    auto P = abs_sq(g, 1);
    CHECK(P.size() == 1);
    auto key = MonomialKey::from_factors(g, {{1, +1}, {1, -1}});
    CHECK(key.multiplicity() == 2.0);
    CHECK(std::abs(P.coefficient(key) - 0.5) < 1e-16);
    ModeState u(g);
    u[1] = cplx(3.0, 4.0);
    CHECK(P.evaluate(u) == doctest::Approx(25.0));
    CHECK(P.h_norm() == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-15));
    CHECK((-3.0 * P).h_norm() == doctest::Approx(3.0 * std::sqrt(2.0) / 2.0));

    auto Z = PolyHamiltonian::build({}, g, 3);
    CHECK(Z.is_zero());
    CHECK(Z.h_norm() == 0.0);
    CHECK(Z.evaluate(kgtest::random_state(g, 1)) == 0.0);
}

TEST_CASE("build symmetrizes and realifies")
{
    TorusGrid g(8);
    // the two orderings of one orbit average; the conjugate is implied
    auto P = PolyHamiltonian::build({{{{1, +1}, {2, +1}, {3, -1}}, 2.0},
                                     {{{2, +1}, {3, -1}, {1, +1}}, 4.0}},
                                    g, 3);
    auto key = MonomialKey::from_factors(g, {{1, +1}, {2, +1}, {3, -1}});
    CHECK(key.multiplicity() == 6.0);
    auto u = kgtest::random_state(g, 5);
    cplx m = u[1] * u[2] * std::conj(u[3]);
    CHECK(P.evaluate(u) == doctest::Approx(2.0 * (6.0 * m).real()).epsilon(1e-13));
    CHECK(std::abs(P.coefficient(key) - 1.0) < 1e-15);
    CHECK(std::abs(P.coefficient(key.conjugate()) - 1.0) < 1e-15);

    // explicit conjugate pair with complex coefficient
    auto R = PolyHamiltonian::build({{{{1, +1}, {1, +1}, {2, -1}}, cplx(0.0, 1.0)},
                                     {{{1, -1}, {1, -1}, {2, +1}}, cplx(0.0, -1.0)}},
                                    g, 3);
    cplx mono = u[1] * u[1] * std::conj(u[2]);
    CHECK(R.evaluate(u) == doctest::Approx(-2.0 * mono.imag()).epsilon(1e-13));
}

TEST_CASE("momentum is enforced")
{
    TorusGrid g(8);
    try {
        (void)PolyHamiltonian::build({{{{1, +1}, {0, -1}}, 1.0}}, g, 2);
        FAIL("expected momentum error");
    } catch (const MomentumError& e) {
        CHECK(std::string(e.what()).find("(1,+1)") != std::string::npos);
    }
    // aliasing: 3 + 5 = 8 = 0 mod 8
    CHECK_NOTHROW(PolyHamiltonian::build({{{{3, +1}, {5, +1}}, 1.0}}, g, 2));
    CHECK_THROWS_AS(PolyHamiltonian::build({{{{1, +1}, {1, -1}}, 1.0}}, g, 3), ParameterError);
}

TEST_CASE("T as a polynomial")
{
    TorusGrid g(9);
    FrequencySpec f(g, 2.0);
    auto T = quadratic_T(f);
    auto u = kgtest::random_state(g, 7);
    CHECK(T.evaluate(u) == doctest::Approx(quadratic_energy(u, f)).epsilon(1e-12));
    auto grad = T.gradient(u);
    for (std::size_t i = 0; i < u.size(); ++i)
        CHECK(std::abs(grad.data()[i] - f.table()[i] * u.data()[i]) < 1e-14);
    CHECK(T.evaluate(ModeState(g)) == 0.0);
}

TEST_CASE("gradients match finite differences")
{
    TorusGrid g(8);
    auto P = abs_sq(g, 1);
    auto u = kgtest::random_state(g, 3);
    auto grad = P.gradient(u);
    CHECK(std::abs(grad[1] - 2.0 * u[1]) < 1e-14);
    CHECK(max_abs_diff(grad.data(), fd_gradient(P, u).data()) < 1e-8);

    for (int deg : {3, 4}) {
        auto R = random_polynomial(g, deg, 40 + deg, 0.5);
        auto v = kgtest::random_state(g, 9, 0.5);
        CHECK(max_abs_diff(R.gradient(v).data(), fd_gradient(R, v).data()) < 1e-7);
    }
}

TEST_CASE("gradient homogeneity")
{
    TorusGrid g(8);
    auto P = random_polynomial(g, 4, 2, 0.5);
    auto u = kgtest::random_state(g, 1, 0.4);
    ModeState v = u;
    for (auto& z : v.data()) z *= 1.7;
    CHECK(sobolev_norm(P.gradient(v), 0.5) ==
          doctest::Approx(std::pow(1.7, 3) * sobolev_norm(P.gradient(u), 0.5)).epsilon(1e-13));
}

TEST_CASE("reality of evaluation")
{
    TorusGrid g(8);
    for (int deg : {3, 4, 5}) {
        auto P = random_polynomial(g, deg, 100 + deg, 0.3);
        for (std::uint64_t s = 0; s < 100; ++s) {
            auto u = kgtest::random_state(g, s);
            cplx z = P.evaluate_complex(u);
            CHECK(std::abs(z.imag()) <= 1e-12 * std::max(1.0, std::abs(z.real())));
        }
    }
}

TEST_CASE("poisson bracket")
{
    TorusGrid g(8);
    FrequencySpec f(g, 1.0);
    auto T = quadratic_T(f);
    for (int k : {0, 1, 3, -4}) CHECK(poisson_bracket(super_action_poly(g, k), T).is_zero());

    auto P = random_polynomial(g, 3, 1, 0.6);
    CHECK(max_coeff(poisson_bracket(P, P)) < 1e-15 * max_coeff(P) * max_coeff(P));

    auto X = random_polynomial(g, 4, 2, 0.4);
    auto PX = poisson_bracket(P, X);
    auto XP = poisson_bracket(X, P);
    CHECK(PX.degree() == 5);
    CHECK(PX.max_abs_diff(-1.0 * XP) < 1e-14 * max_coeff(PX));
    for (auto& [key, c] : PX.orbits()) CHECK(key.momentum(g) % 8 == 0);
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto u = kgtest::random_state(g, 50 + s, 0.5);
        double a = PX.evaluate(u);
        double b = gradient_bracket(P, X, u);
        CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)));
    }
}

TEST_CASE("bracket norm bound")
{
    for (int K : {4, 8}) {
        TorusGrid g(K);
        for (std::uint64_t s = 0; s < 25; ++s) {
            int dp = 3 + static_cast<int>(s % 2);
            int dx = 3 + static_cast<int>((s / 2) % 2);
            auto P = random_polynomial(g, dp, 1000 + s, 0.5);
            auto X = random_polynomial(g, dx, 2000 + s, 0.5);
            double lhs = poisson_bracket(P, X).h_norm();
            CHECK(lhs <= 4.0 * dp * dx * P.h_norm() * X.h_norm());
        }
    }
}

TEST_CASE("jacobi identity")
{
    TorusGrid g(4);
    auto P = random_polynomial(g, 3, 7, 0.5);
    auto X = random_polynomial(g, 3, 8, 0.5);
    auto Y = random_polynomial(g, 4, 9, 0.5);
    auto s = poisson_bracket(P, poisson_bracket(X, Y)) + poisson_bracket(X, poisson_bracket(Y, P)) +
             poisson_bracket(Y, poisson_bracket(P, X));
    CHECK(max_coeff(s) < 1e-10);
}

TEST_CASE("diagonal bracket")
{
    TorusGrid g(8);
    FrequencySpec f(g, 1.0);
    auto P = PolyHamiltonian::build({{{{1, +1}, {2, +1}, {3, -1}}, 1.0}}, g, 3);
    std::vector<double> half(f.table());
    for (auto& w : half) w *= 0.5;
    auto A = ad_quadratic(P, half);
    auto key = MonomialKey::from_factors(g, {{1, +1}, {2, +1}, {3, -1}});
    const double omega = std::sqrt(2.0) + std::sqrt(5.0) - std::sqrt(10.0);
    CHECK(omega == doctest::Approx(0.48800).epsilon(1e-5));
    CHECK(std::abs(A.coefficient(key) - cplx(0.0, -omega) * P.coefficient(key)) < 1e-15);
    CHECK(A.max_abs_diff(poisson_bracket(P, quadratic_T(f))) < 1e-12);
    CHECK(ad_quadratic(P, std::vector<double>(8, 0.0)).is_zero());

    auto R = random_polynomial(g, 4, 3, 0.5);
    auto lam = kgtest::random_reals(8, 4);
    CHECK(ad_quadratic(R, lam).max_abs_diff(poisson_bracket(R, diagonal_quadratic(g, lam))) < 1e-12);
}

TEST_CASE("taylor coefficients of the potential")
{
    TorusGrid g(8);
    MethodSpec method(0.1, Scheme::Strang, Mollifier::sinc(), FrequencySpec(g, 1.0));
    auto nl = Nonlinearity::monomial(5, -1.0);
    for (int n : {1, 2, 3}) CHECK(taylor_of_V(n, nl, method).is_zero());
    auto P4 = taylor_of_V(4, nl, method);
    CHECK(P4.degree() == 6);
    auto fs = std::vector<Factor>{{1, +1}, {1, +1}, {2, -1}, {3, +1}, {3, -1}, {0, -1}};
    auto key = MonomialKey::from_factors(g, fs);
    double expect = -1.0 / 384.0;
    for (auto fct : fs) {
        double w = method.freq.omega(fct.j);
        expect *= method.mollifier(0.1 * w) / std::sqrt(w);
    }
    CHECK(std::abs(P4.coefficient(key) - expect) < 1e-17);
    CHECK(taylor_of_V(1, Nonlinearity::zero(), method).is_zero());
}

TEST_CASE("taylor expansion reproduces a polynomial potential")
{
    // g = y^2 + y^3 makes V a quartic polynomial, so P_1 + P_2 = V exactly,
    // including states that excite the unpaired mode -K/2.
    for (int K : {8, 9}) {
        TorusGrid g(K);
        MethodSpec method(0.2, Scheme::Lie, Mollifier::identity(), FrequencySpec(g, 1.0));
        auto nl = parse_nonlinearity("monomial:2:1+monomial:3:1");
        auto P = taylor_of_V(1, nl, method) + PolyHamiltonian(g, 3);
        auto P2 = taylor_of_V(2, nl, method);
        SplitStepper st(method, nl);
        for (std::uint64_t s = 0; s < 5; ++s) {
            auto u = kgtest::random_state(g, s, 0.5);
            double v = st.potential(u);
            CHECK(P.evaluate(u) + P2.evaluate(u) == doctest::Approx(v).epsilon(1e-13));
        }
    }
}

TEST_CASE("polynomial flow")
{
    TorusGrid g(8);
    FrequencySpec f(g, 2.0);
    auto u = kgtest::random_state(g, 1, 0.1);
    auto lin = poly_flow(f.table(), {}, u, 0.8);
    CHECK(max_abs_diff(lin.data(), flow_T(u, 0.8, f).data()) < 1e-12);
    CHECK(max_abs_diff(poly_flow(f.table(), {}, u, 0.0).data(), u.data()) == 0.0);

    auto chi = 0.2 * random_polynomial(g, 3, 5, 0.5);
    auto chi4 = 0.2 * random_polynomial(g, 4, 6, 0.5);
    auto H = quadratic_T(f);
    const double tol = 1e-12;
    auto v = poly_flow(f.table(), {chi, chi4}, u, 1.0, tol);
    double e0 = H.evaluate(u) + chi.evaluate(u) + chi4.evaluate(u);
    double e1 = H.evaluate(v) + chi.evaluate(v) + chi4.evaluate(v);
    CHECK(std::abs(e1 - e0) <= 10 * tol * std::max(1.0, std::abs(e0)));

    auto back = poly_flow(f.table(), {chi, chi4}, v, -1.0, tol);
    CHECK(max_abs_diff(back.data(), u.data()) < 1e-10);
}

TEST_CASE("time polynomials")
{
    TorusGrid g(4);
    auto A = random_polynomial(g, 3, 1, 1.0);
    auto B = random_polynomial(g, 3, 2, 1.0);
    TimePoly p(g, 3);
    p.set_coeff(0, A);
    p.set_coeff(2, B);
    CHECK(p.max_power() == 2);
    CHECK(p.at(0.0).max_abs_diff(A) == 0.0);
    CHECK(p.at(0.5).max_abs_diff(A + 0.25 * B) < 1e-15);
    auto d = p.derivative();
    CHECK(d.at(1.0).max_abs_diff(2.0 * B) < 1e-15);
    auto I = p.integral();
    CHECK(I.at(0.0).is_zero());
    CHECK(I.derivative().at(0.3).max_abs_diff(p.at(0.3)) < 1e-15);
    CHECK(TimePoly(g, 3).is_zero());
}

TEST_CASE("graded phi series on a diagonal generator")
{
    TorusGrid g(8);
    FrequencySpec f(g, 1.0);
    std::vector<double> b0(f.table());
    for (auto& w : b0) w *= 0.1;
    auto Y = random_polynomial(g, 3, 4, 0.5);
    Graded out = exp_ad_graded(b0, {}, {{1, TimePoly(Y)}}, 1);
    auto expect = Y.map_orbits([&](const MonomialKey& k) {
        return phi_scalar(cplx(0.0, 2.0 * k.signed_sum(b0)));
    });
    CHECK(out.at(1).at(0.0).max_abs_diff(expect) < 1e-13 * max_coeff(Y));

    Graded none = exp_ad_graded(b0, {}, {}, 2);
    bool empty = true;
    for (auto& [n, tp] : none) empty = empty && tp.is_zero();
    CHECK(empty);
}

TEST_CASE("graded phi series against a double sum")
{
    // grade-2 part of phi(D + A) Y is sum_{a,b} D^a A D^b Y / (a+b+2)!
    TorusGrid g(4);
    FrequencySpec f(g, 1.0);
    std::vector<double> b0(f.table());
    for (auto& w : b0) w *= 0.15;
    auto B1 = random_polynomial(g, 3, 11, 1.0);
    auto Y = random_polynomial(g, 3, 12, 1.0);
    Graded out = exp_ad_graded(b0, {{1, TimePoly(B1)}}, {{1, TimePoly(Y)}}, 2);

    auto D = [&](const PolyHamiltonian& X) { return -1.0 * ad_quadratic(X, b0); };
    PolyHamiltonian acc(g, 4);
    PolyHamiltonian DbY = Y;
    double fact = 1.0;  // (b+1)!
    for (int b = 0; b < 40; ++b) {
        fact *= (b + 1);
        auto Zb = poisson_bracket(B1, DbY);
        const double fb = fact;
        acc += Zb.map_orbits([&](const MonomialKey& k) {
            cplx mu(0.0, 2.0 * k.signed_sum(b0));
            cplx s = 0.0, pw = 1.0;
            double fa = fb * (b + 2);  // (a+b+2)! at a = 0
            for (int a = 0; a < 60; ++a) {
                s += pw / fa;
                pw *= mu;
                fa *= (a + b + 3);
            }
            return s;
        });
        DbY = D(DbY);
    }
    CHECK(out.at(2).at(0.0).max_abs_diff(acc) < 1e-13 * std::max(1.0, max_coeff(acc)));
}

TEST_CASE("serialization round trip")
{
    TorusGrid g(8);
    auto P = random_polynomial(g, 4, 77, 0.3);
    std::stringstream ss;
    P.write(ss);
    auto Q = PolyHamiltonian::read(ss);
    CHECK(Q.degree() == 4);
    CHECK(Q.grid().K() == 8);
    CHECK(Q.max_abs_diff(P) == 0.0);
    std::stringstream again;
    Q.write(again);
    std::stringstream first;
    P.write(first);
    CHECK(again.str() == first.str());

    std::stringstream bad("3 8\n1 1 2 1 9\n");
    CHECK_THROWS_AS(PolyHamiltonian::read(bad), IoError);
}

TEST_CASE("pruning")
{
    TorusGrid g(8);
    auto P = PolyHamiltonian::build({{{{1, +1}, {1, -1}}, 1.0}, {{{2, +1}, {2, -1}}, 1e-20}}, g, 2);
    CHECK(P.size() == 2);
    CHECK(P.pruned(1e-16).size() == 1);
}
