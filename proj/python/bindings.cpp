#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <sstream>

#include "kg/errors.hpp"
#include "kg/harness.hpp"

namespace py = pybind11;
using namespace kg;

namespace {

using CArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;
using RArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

ModeState to_state(const CArray& a, int K)
{
    if (a.ndim() != 1 || static_cast<int>(a.shape(0)) != K)
        throw SizeError("expected a 1-d array of " + std::to_string(K) + " modes");
    return ModeState(TorusGrid(K), std::vector<cplx>(a.data(), a.data() + K));
}

ModeState to_state(const CArray& a)
{
    if (a.ndim() != 1 || a.shape(0) == 0) throw SizeError("expected a non-empty 1-d mode array");
    return to_state(a, static_cast<int>(a.shape(0)));
}

template <class T>
py::array_t<T> to_array(const std::vector<T>& v)
{
    py::array_t<T> out(v.size());
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const RArray& a)
{
    if (a.ndim() != 1) throw SizeError("expected a 1-d real array");
    return {a.data(), a.data() + a.shape(0)};
}

py::dict report_dict(const DriftReport& rep)
{
    std::size_t n = rep.rows.size();
    py::array_t<long long> step(n);
    py::array_t<double> time(n), H(n), Hh(n), n12(n), n1(n);
    py::array_t<double> J({n, rep.modes.size()});
    auto j = J.mutable_unchecked<2>();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = rep.rows[i];
        step.mutable_data()[i] = static_cast<long long>(r.step);
        time.mutable_data()[i] = r.time;
        H.mutable_data()[i] = r.H;
        Hh.mutable_data()[i] = r.Hh;
        n12.mutable_data()[i] = r.norm_h12;
        n1.mutable_data()[i] = r.norm_h1;
        for (std::size_t c = 0; c < rep.modes.size(); ++c) j(i, c) = r.J[c];
    }
    py::dict summary;
    summary["max_action_drift"] = rep.summary.max_action_drift;
    summary["max_energy_drift"] = rep.summary.max_energy_drift;
    summary["max_modified_drift"] = rep.summary.max_modified_drift;
    summary["max_norm_h12"] = rep.summary.max_norm_h12;
    std::ostringstream csv;
    emit_csv(rep, csv);
    py::dict d;
    d["modes"] = rep.modes;
    d["step"] = step;
    d["time"] = time;
    d["H"] = H;
    d["Hh"] = Hh;
    d["norm_h12"] = n12;
    d["norm_h1"] = n1;
    d["J"] = J;
    d["summary"] = summary;
    d["csv"] = csv.str();
    return d;
}

py::list factors(const std::vector<Factor>& fs)
{
    py::list out;
    for (const auto& f : fs) out.append(py::make_tuple(f.j, f.sigma));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Spectral splitting integrators for the cubic-and-higher Klein-Gordon equation on the torus";

    static py::exception<Error> base(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
    py::register_exception<SizeError>(m, "SizeError", base.ptr());
    py::register_exception<IndexError>(m, "ModeIndexError", base.ptr());
    py::register_exception<MomentumError>(m, "MomentumError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<BudgetError>(m, "BudgetError", base.ptr());
    static py::exception<NumericalError> numerical(m, "NumericalError", base.ptr());
    py::register_exception<BlowUpError>(m, "BlowUpError", numerical.ptr());
    py::register_exception<ResonantStepError>(m, "ResonantStepError", numerical.ptr());

    py::class_<ExperimentConfig>(m, "Config")
        .def(py::init<>())
        .def_static("parse", &parse_config, py::arg("text"))
        .def_static("load", &load_config, py::arg("path"))
        .def("serialize", &serialize_config)
        .def_readwrite("K", &ExperimentConfig::K)
        .def_readwrite("rho", &ExperimentConfig::rho)
        .def_property(
            "g", [](const ExperimentConfig& c) { return c.g.id(); },
            [](ExperimentConfig& c, const std::string& s) { c.g = parse_nonlinearity(s); })
        .def_property(
            "mollifier", [](const ExperimentConfig& c) { return c.mollifier; },
            [](ExperimentConfig& c, const std::string& s) {
                Mollifier::by_name(s);
                c.mollifier = s;
            })
        .def_readwrite("h", &ExperimentConfig::h)
        .def_property(
            "scheme", [](const ExperimentConfig& c) { return scheme_name(c.scheme); },
            [](ExperimentConfig& c, const std::string& s) { c.scheme = parse_scheme(s); })
        .def_readwrite("r", &ExperimentConfig::r)
        .def_readwrite("delta", &ExperimentConfig::delta)
        .def_readwrite("s0", &ExperimentConfig::s0)
        .def_readwrite("eps", &ExperimentConfig::eps)
        .def_readwrite("T", &ExperimentConfig::T)
        .def_readwrite("modes", &ExperimentConfig::modes)
        .def_readwrite("out", &ExperimentConfig::out)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("strict", &ExperimentConfig::strict)
        .def_property_readonly("n_steps", &ExperimentConfig::n_steps)
        .def("__eq__", &ExperimentConfig::operator==)
        .def("__repr__", [](const ExperimentConfig& c) { return "Config(\n" + serialize_config(c) + ")"; });

    m.def("mode_numbers", [](int K) {
        TorusGrid g(K);
        std::vector<int> ks;
        for (int k = g.kmin(); k <= g.kmax(); ++k) ks.push_back(k);
        return ks;
    }, py::arg("K"), "Mode numbers in array order.");

    m.def("to_modes", [](const RArray& q, const RArray& p, double rho) {
        auto qv = to_vector(q), pv = to_vector(p);
        if (qv.size() != pv.size() || qv.empty()) throw SizeError("q and p must have equal non-zero length");
        FrequencySpec f(TorusGrid(static_cast<int>(qv.size())), rho);
        return to_array(to_modes(RealState{qv, pv}, f).data());
    }, py::arg("q"), py::arg("p"), py::arg("rho"), "Physical (q, p) to the complex mode vector u.");

    m.def("from_modes", [](const CArray& u, double rho) {
        ModeState s = to_state(u);
        RealState x = from_modes(s, FrequencySpec(s.grid(), rho));
        return py::make_tuple(to_array(x.q), to_array(x.p));
    }, py::arg("u"), py::arg("rho"));

    m.def("super_action", [](const CArray& u, int k) { return super_action(to_state(u), k); },
          py::arg("u"), py::arg("k"));
    m.def("sobolev_norm", [](const CArray& u, double s) { return sobolev_norm(to_state(u), s); },
          py::arg("u"), py::arg("s"));
    m.def("initial_state", [](const ExperimentConfig& c) { return to_array(initial_state(c).data()); },
          py::arg("config"));
    m.def("random_unit_state", [](int K, std::uint64_t seed) {
        return to_array(random_unit_state(TorusGrid(K), seed).data());
    }, py::arg("K"), py::arg("seed"));

    m.def("step", [](const CArray& u, const ExperimentConfig& c, std::size_t n) {
        ModeState s = to_state(u, c.K);
        SplitStepper st(c.method(), c.g);
        for (std::size_t i = 0; i < n; ++i) st.step(s);
        return to_array(s.data());
    }, py::arg("u"), py::arg("config"), py::arg("n") = 1, "n steps of the configured scheme.");

    m.def("flow_T", [](const CArray& u, double t, const ExperimentConfig& c) {
        return to_array(flow_T(to_state(u, c.K), t, c.freq()).data());
    }, py::arg("u"), py::arg("t"), py::arg("config"));
    m.def("flow_V", [](const CArray& u, double t, const ExperimentConfig& c) {
        return to_array(flow_V(to_state(u, c.K), t, c.method(), c.g).data());
    }, py::arg("u"), py::arg("t"), py::arg("config"));
    m.def("hamiltonian", [](const CArray& u, const ExperimentConfig& c) {
        SplitStepper st(c.method(), c.g);
        return st.hamiltonian(to_state(u, c.K));
    }, py::arg("u"), py::arg("config"));

    m.def("cfl_check", [](const ExperimentConfig& c) {
        CflReport r = cfl_check(c.r, c.delta, c.method(), c.grid());
        py::dict d;
        d["lhs"] = r.lhs;
        d["rhs"] = r.rhs;
        d["pass"] = r.pass;
        return d;
    }, py::arg("config"));

    m.def("run", [](const ExperimentConfig& c, bool warn) {
        RunOptions o;
        o.warn = warn;
        DriftReport rep;
        {
            py::gil_scoped_release release;
            rep = run_experiment(c, o);
        }
        return report_dict(rep);
    }, py::arg("config"), py::arg("warn") = false, "Run an experiment; returns the trajectory table.");

    m.def("simulate", [](const CArray& u, const ExperimentConfig& c, std::size_t n_steps, std::size_t stride) {
        SimulateOptions o;
        o.n_steps = n_steps;
        o.stride = stride;
        o.modes = c.modes;
        ModeState s = to_state(u, c.K);
        DriftReport rep;
        {
            py::gil_scoped_release release;
            rep = simulate(s, c.method(), c.g, o);
        }
        return report_dict(rep);
    }, py::arg("u"), py::arg("config"), py::arg("n_steps"), py::arg("stride") = 0);

    m.def("scaling_study", [](const ExperimentConfig& c, const std::string& quantity,
                              const std::vector<double>& eps, std::optional<double> gamma) {
        ScalingOptions o;
        if (gamma) o.gamma = *gamma;
        ScalingResult r;
        {
            py::gil_scoped_release release;
            r = scaling_study(c, parse_quantity(quantity), eps, o);
        }
        py::dict d;
        d["quantity"] = quantity_name(r.quantity);
        d["eps"] = r.eps;
        d["channels"] = r.channels;
        d["values"] = r.values;
        d["exponents"] = r.exponents;
        d["exact"] = r.exact;
        d["expected"] = expected_exponent(r.quantity, c.r);
        d["max_norm_ratio"] = r.max_norm_ratio;
        return d;
    }, py::arg("config"), py::arg("quantity"), py::arg("eps"), py::arg("gamma") = py::none());

    m.def("fit_exponent", &fit_exponent, py::arg("eps"), py::arg("values"));

    py::class_<PolyHamiltonian>(m, "Poly")
        .def_property_readonly("K", [](const PolyHamiltonian& p) { return p.grid().size(); })
        .def_property_readonly("degree", &PolyHamiltonian::degree)
        .def("__len__", &PolyHamiltonian::size)
        .def("is_zero", &PolyHamiltonian::is_zero)
        .def("h_norm", &PolyHamiltonian::h_norm)
        .def("__call__", [](const PolyHamiltonian& p, const CArray& u) {
            return p.evaluate(to_state(u, static_cast<int>(p.grid().size())));
        }, py::arg("u"))
        .def("gradient", [](const PolyHamiltonian& p, const CArray& u) {
            return to_array(p.gradient(to_state(u, static_cast<int>(p.grid().size()))).data());
        }, py::arg("u"))
        .def("bracket", [](const PolyHamiltonian& p, const PolyHamiltonian& x) { return poisson_bracket(p, x); },
             py::arg("other"), "Poisson bracket {self, other}.")
        .def("__add__", [](const PolyHamiltonian& a, const PolyHamiltonian& b) { return a + b; })
        .def("__sub__", [](const PolyHamiltonian& a, const PolyHamiltonian& b) { return a - b; })
        .def("__rmul__", [](const PolyHamiltonian& a, double s) { return s * a; })
        .def("__mul__", [](const PolyHamiltonian& a, double s) { return s * a; })
        .def("terms", [](const PolyHamiltonian& p) {
            py::list out;
            for (const auto& [key, c] : p.orbits()) {
                std::vector<Factor> fs = key.factors(p.grid());
                out.append(py::make_tuple(factors(fs), c));
            }
            return out;
        }, "Orbit representatives with their coefficients.")
        .def("serialize", [](const PolyHamiltonian& p) {
            std::ostringstream os;
            p.write(os);
            return os.str();
        })
        .def_static("deserialize", [](const std::string& s) {
            std::istringstream is(s);
            return PolyHamiltonian::read(is);
        });

    m.def("random_polynomial", [](int K, int degree, std::uint64_t seed, double scale) {
        return random_polynomial(TorusGrid(K), degree, seed, scale);
    }, py::arg("K"), py::arg("degree"), py::arg("seed"), py::arg("scale") = 1.0);
    m.def("quadratic_T", [](int K, double rho) { return quadratic_T(FrequencySpec(TorusGrid(K), rho)); },
          py::arg("K"), py::arg("rho"));
    m.def("super_action_poly", [](int K, int k) { return super_action_poly(TorusGrid(K), k); },
          py::arg("K"), py::arg("k"));
    m.def("taylor_of_V", [](int n, const ExperimentConfig& c) { return taylor_of_V(n, c.g, c.method()); },
          py::arg("n"), py::arg("config"), "Degree n+2 Taylor coefficient of the potential.");

    m.def("modified_hamiltonian", [](const CArray& u, const ExperimentConfig& c) {
        auto Hh = modified_hamiltonian(solve_cohomology(c.r, c.method(), c.g));
        return Hh.evaluate(to_state(u, c.K));
    }, py::arg("u"), py::arg("config"), "Value of the truncated modified energy at u.");

    m.def("min_small_divisor", [](int K, double rho, int r, std::optional<int> k) {
        SmallDivisor d = min_small_divisor(FrequencySpec(TorusGrid(K), rho), r, k);
        return py::make_tuple(d.value, factors(d.witness));
    }, py::arg("K"), py::arg("rho"), py::arg("r"), py::arg("k") = py::none());

    m.def("birkhoff", [](const ExperimentConfig& c, std::optional<double> gamma) {
        FrequencySpec f = c.freq();
        std::vector<PolyHamiltonian> Y;
        for (int n = 1; n <= c.r; ++n) Y.push_back(taylor_of_V(n, c.g, c.method()));
        double g = gamma ? *gamma : auto_gamma(f, c.r, c.modes);
        BirkhoffOutput out = birkhoff_normal_form(Y, g, f);
        py::dict d;
        d["gamma"] = out.gamma;
        d["chi"] = out.chi;
        d["Q"] = out.Q;
        d["min_abs_omega"] = out.min_abs_omega;
        d["self_check"] = birkhoff_self_check(out, f);
        std::vector<bool> comm;
        for (int k : c.modes) comm.push_back(commutation_check(out.Q, k, c.r, f, g));
        d["commutes"] = comm;
        return d;
    }, py::arg("config"), py::arg("gamma") = py::none(),
       "Birkhoff normal form of T + sum of the first r Taylor terms of the potential.");
}
