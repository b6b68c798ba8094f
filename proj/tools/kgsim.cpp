// kgsim: command-line driver for the Klein-Gordon splitting laboratory.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kg/errors.hpp"
#include "kg/harness.hpp"
#include "kg/normalform.hpp"

namespace {

std::vector<double> parse_eps_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw kg::ConfigError("bad eps level '" + item + "'");
        }
    }
    return out;
}

std::string g17(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

int cmd_simulate(const std::string& path, const std::string& out_override)
{
    kg::ExperimentConfig cfg = kg::load_config(path);
    if (!out_override.empty()) cfg.out = out_override;
    kg::DriftReport rep = kg::run_experiment(cfg);
    if (cfg.out.empty()) kg::emit_csv(rep, std::cout);
    std::fprintf(stderr, "steps=%zu rows=%zu max|dH|=%.3e max|dHh|=%.3e max||u||_H1/2=%.6g\n",
                 cfg.n_steps(), rep.rows.size(), rep.summary.max_energy_drift,
                 rep.summary.max_modified_drift, rep.summary.max_norm_h12);
    for (std::size_t j = 0; j < rep.modes.size(); ++j)
        std::fprintf(stderr, "  J_%d drift %.6e\n", rep.modes[j], rep.summary.max_action_drift[j]);
    return 0;
}

int cmd_scaling(const std::string& path, const std::string& quantity, const std::string& eps)
{
    kg::ExperimentConfig cfg = kg::load_config(path);
    auto q = kg::parse_quantity(quantity);
    auto res = kg::scaling_study(cfg, q, parse_eps_list(eps));
    std::cout << "eps";
    for (const auto& c : res.channels) std::cout << ',' << c;
    std::cout << '\n';
    for (std::size_t i = 0; i < res.eps.size(); ++i) {
        std::cout << g17(res.eps[i]);
        for (double v : res.values[i]) std::cout << ',' << g17(v);
        std::cout << '\n';
    }
    std::cout << "# expected exponent " << kg::expected_exponent(q, cfg.r) << '\n';
    for (std::size_t c = 0; c < res.channels.size(); ++c) {
        std::cout << "# " << res.channels[c] << " exponent ";
        if (res.exact[c])
            std::cout << "exact";
        else
            std::cout << g17(res.exponents[c]);
        std::cout << '\n';
    }
    return 0;
}

int cmd_bea(const std::string& path, int r)
{
    kg::ExperimentConfig cfg = kg::load_config(path);
    if (r > 0) cfg.r = r;
    auto method = cfg.method();
    auto cfl = kg::cfl_check(cfg.r, cfg.delta, method, cfg.grid());
    if (!cfl.pass) {
        std::fprintf(stderr, "warning: CFL fails (%.6g > %.6g)\n", cfl.lhs, cfl.rhs);
        if (cfg.strict) throw kg::ConfigError("CFL condition fails under strict mode");
    }
    auto sol = kg::solve_cohomology(cfg.r, method, cfg.g);
    auto Hh = kg::modified_hamiltonian(sol);
    for (std::size_t n = 0; n < sol.B.size(); ++n)
        std::fprintf(stderr, "B_%zu: t-degree %d, orbits at t=h %zu, ||.||_H %.6e\n", n + 1,
                     sol.B[n].max_power(), Hh.parts[n].size(), Hh.parts[n].h_norm());
    if (!cfg.out.empty()) {
        std::ofstream os(cfg.out);
        if (!os) throw kg::IoError("cannot write '" + cfg.out + "'");
        kg::write_cohomology(sol, os);
    } else {
        kg::write_cohomology(sol, std::cout);
    }
    return 0;
}

int cmd_bnf(const std::string& path, int r, const std::string& gamma_text)
{
    kg::ExperimentConfig cfg = kg::load_config(path);
    if (r > 0) cfg.r = r;
    auto method = cfg.method();
    auto freq = cfg.freq();
    double gamma = 0.0;
    if (gamma_text == "auto") {
        gamma = kg::auto_gamma(freq, cfg.r, cfg.modes);
    } else {
        try {
            gamma = std::stod(gamma_text);
        } catch (const std::exception&) {
            throw kg::ConfigError("bad gamma '" + gamma_text + "'");
        }
    }
    std::vector<kg::PolyHamiltonian> Y;
    for (int n = 1; n <= cfg.r; ++n) Y.push_back(kg::taylor_of_V(n, cfg.g, method));
    auto out = kg::birkhoff_normal_form(Y, gamma, freq);
    std::fprintf(stderr, "gamma=%.17g min|Omega| kept=%.6e self-check=%.3e\n", gamma,
                 out.min_abs_omega, kg::birkhoff_self_check(out, freq));
    for (std::size_t l = 0; l < out.chi.size(); ++l) {
        bool comm = true;
        for (int k : cfg.modes) comm = comm && kg::commutation_check({out.Q[l]}, k, cfg.r, freq, gamma);
        std::fprintf(stderr, "l=%zu: chi orbits %zu, Q orbits %zu, {J_k,Q}=0 for observed k: %s\n",
                     l + 1, out.kept_counts[l], out.removed_counts[l], comm ? "yes" : "no");
    }
    kg::NormalFormManifest m{method.h, cfg.r, cfg.K, cfg.rho, cfg.mollifier, kg::kEpsSign, gamma};
    if (!cfg.out.empty()) {
        std::ofstream os(cfg.out);
        if (!os) throw kg::IoError("cannot write '" + cfg.out + "'");
        kg::write_birkhoff(out, m, os);
    } else {
        kg::write_birkhoff(out, m, std::cout);
    }
    return 0;
}

int cmd_divisors(const std::string& path, int r, const std::optional<int>& k)
{
    kg::ExperimentConfig cfg = kg::load_config(path);
    if (r > 0) cfg.r = r;
    auto sd = kg::min_small_divisor(cfg.freq(), cfg.r, k);
    std::cout << "min_abs_omega " << g17(sd.value) << "\nwitness";
    for (const auto& f : sd.witness) std::cout << ' ' << f.j << ' ' << f.sigma;
    std::cout << '\n';
    return 0;
}

int cmd_check()
{
    auto results = kg::run_invariant_suite();
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        ok = ok && r.pass;
    }
    return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Spectral splitting and normal-form laboratory for nonlinear Klein-Gordon"};
    app.require_subcommand(1);

    std::string config, out, quantity, eps, gamma = "auto";
    int r = 0;
    std::optional<int> k;

    auto* sim = app.add_subcommand("simulate", "run one trajectory and emit CSV");
    sim->add_option("config", config, "config file")->required();
    sim->add_option("-o,--out", out, "CSV path (overrides config)");

    auto* sc = app.add_subcommand("scaling", "eps-scaling study with fitted exponent");
    sc->add_option("config", config, "config file")->required();
    sc->add_option("--quantity", quantity,
                   "bea_defect_lie|bea_defect_full|energy_drift|action_drift|bnf_remainder")
        ->required();
    sc->add_option("--eps", eps, "comma separated eps levels")->required();

    auto* bea = app.add_subcommand("bea", "solve the cohomological system and write B_n");
    bea->add_option("config", config, "config file")->required();
    bea->add_option("--r", r, "order");

    auto* bnf = app.add_subcommand("bnf", "Birkhoff normal form of the Taylor polynomials");
    bnf->add_option("config", config, "config file")->required();
    bnf->add_option("--r", r, "order");
    bnf->add_option("--gamma", gamma, "threshold or 'auto'");

    auto* div = app.add_subcommand("divisors", "brute-force minimal small divisor");
    div->add_option("config", config, "config file")->required();
    div->add_option("--r", r, "order");
    div->add_option("--k", k, "mode whose action charge must be nonzero");

    auto* chk = app.add_subcommand("check", "run the invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*sim) return cmd_simulate(config, out);
        if (*sc) return cmd_scaling(config, quantity, eps);
        if (*bea) return cmd_bea(config, r);
        if (*bnf) return cmd_bnf(config, r, gamma);
        if (*div) return cmd_divisors(config, r, k);
        if (*chk) return cmd_check();
    } catch (const kg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const kg::ParameterError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const kg::BudgetError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const kg::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 4;
    } catch (const kg::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const kg::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
