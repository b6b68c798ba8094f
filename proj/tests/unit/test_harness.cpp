#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common.hpp"
#include "kg/errors.hpp"
#include "kg/harness.hpp"

using namespace kg;

namespace {

std::string csv_of(const DriftReport& r)
{
    std::ostringstream os;
    emit_csv(r, os);
    return os.str();
}

std::vector<std::string> split(const std::string& s, char d)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, d)) out.push_back(item);
    return out;
}

}  // namespace

TEST_CASE("config parsing")
{
    auto c = parse_config(R"(# comment line
K = 16
rho = sqrt(8)   # trailing comment
g = monomial:5:-1
mollifier = sinc
h = 0.05
scheme = twostep
r = 2
delta = 0.2
s0 = 0.5
eps = 0.3
T = 2
modes = 0..3, -8, 5
out = /tmp/x.csv
seed = 42
strict = true
)");
    CHECK(c.K == 16);
    CHECK(c.rho == std::sqrt(8.0));
    CHECK(c.g.coefficients().at(5) == -1.0);
    CHECK(c.mollifier == "sinc");
    CHECK(c.scheme == Scheme::TwoStep);
    CHECK(c.r == 2);
    CHECK(c.modes == std::vector<int>{0, 1, 2, 3, -8, 5});
    CHECK(c.out == "/tmp/x.csv");
    CHECK(c.seed == 42);
    CHECK(c.strict);
    CHECK(c.n_steps() == 40);

    ExperimentConfig d;
    CHECK(parse_config("") == d);
}

TEST_CASE("config round trip")
{
    auto c = parse_config("K = 9\nrho = 2.25\ng = monomial:2:1 + monomial:3:-0.3\nh = 0.0123\n"
                          "scheme = lie\nmodes = -4..4\neps = 0.1\nT = 0\n");
    auto text = serialize_config(c);
    auto d = parse_config(text);
    CHECK(d == c);
    CHECK(serialize_config(d) == text);
    for (const auto& entry : std::filesystem::directory_iterator(KG_PRESETS)) {
        auto p = load_config(entry.path().string());
        CHECK(parse_config(serialize_config(p)) == p);
    }
}

TEST_CASE("config errors")
{
    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("K = 8.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("h = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("h = 1x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("scheme = euler\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("K = 8\nmodes = 4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("delta = 4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("strict = maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("just a line\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("mollifier = nope\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/dir/x.cfg"), IoError);
}

TEST_CASE("csv emission")
{
    DriftReport empty;
    empty.modes = {0, 3};
    CHECK(csv_of(empty) == "step,time,H,Hh,norm_h12,norm_h1,J_0,J_3\n");

    DriftReport one;
    one.modes = {1};
    one.rows.push_back({7, 0.1, 1.0 / 3.0, std::nan(""), M_PI, 2.0, {1e-300}});
    auto text = csv_of(one);
    auto lines = split(text, '\n');
    REQUIRE(lines.size() == 2);
    auto cells = split(lines[1], ',');
    REQUIRE(cells.size() == 7);
    CHECK(cells[0] == "7");
    CHECK(cells[3] == "nan");
    CHECK(std::stod(cells[2]) == 1.0 / 3.0);
    CHECK(std::stod(cells[4]) == M_PI);
    CHECK(std::stod(cells[6]) == 1e-300);
    CHECK(text.find('\r') == std::string::npos);

    CHECK_THROWS_AS(emit_csv(one, std::string("/nonexistent/dir/out.csv")), IoError);
}

TEST_CASE("experiment runs")
{
    auto c = parse_config("K = 16\nrho = 2\ng = monomial:3:1\nh = 0.05\nT = 1\neps = 0.3\nmodes = 0,1\n");
    RunOptions quiet;
    quiet.warn = false;
    auto a = run_experiment(c, quiet);
    auto b = run_experiment(c, quiet);
    CHECK(a.rows.size() == 21);
    CHECK(csv_of(a) == csv_of(b));
    CHECK(std::isfinite(a.rows.back().Hh));
    auto q0 = from_modes(initial_state(c), c.freq()).q;
    CHECK(sobolev_norm_real(c.grid(), q0, c.s0) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(a.rows[0].norm_h1 == doctest::Approx(sobolev_norm(initial_state(c), 1.0)));

    c.T = 0.0;
    CHECK(run_experiment(c, quiet).rows.size() == 1);

    auto lin = load_config(std::string(KG_PRESETS) + "/linear.cfg");
    lin.T = 10.0;
    auto r = run_experiment(lin, quiet);
    for (double d : r.summary.max_action_drift) CHECK(d <= 1e-12);
    CHECK(r.summary.max_energy_drift <= 1e-12);
    CHECK(r.summary.max_modified_drift <= 1e-12);
}

TEST_CASE("experiment writes its csv")
{
    auto path = (std::filesystem::temp_directory_path() / "kg_unit_run.csv").string();
    auto c = parse_config("K = 8\nrho = 1\ng = monomial:2:1\nh = 0.1\nT = 0.5\neps = 0.1\nmodes = 0\n");
    c.out = path;
    RunOptions quiet;
    quiet.warn = false;
    auto rep = run_experiment(c, quiet);
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == csv_of(rep));
    std::remove(path.c_str());
}

TEST_CASE("strict cfl")
{
    auto c = parse_config("K = 64\nrho = 1\nh = 0.5\nT = 0.5\nstrict = true\n");
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
    c.strict = false;
    RunOptions quiet;
    quiet.warn = false;
    CHECK_NOTHROW(run_experiment(c, quiet));
}

TEST_CASE("exponent fitting")
{
    std::vector<double> e{0.1, 0.05, 0.025};
    std::vector<double> v;
    for (double x : e) v.push_back(3.0 * std::pow(x, 3.0));
    CHECK(fit_exponent(e, v) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(std::isnan(fit_exponent({0.1, 0.05}, {1.0, 2.0})));
    CHECK(std::isnan(fit_exponent(e, {1.0, 0.0, std::nan("")})));
    CHECK(expected_exponent(ScalingQuantity::BeaDefectLie, 2) == 4.0);
    CHECK(expected_exponent(ScalingQuantity::BnfRemainder, 2) == 5.0);
    CHECK(expected_exponent(ScalingQuantity::EnergyDrift, 1) == 3.0);
    CHECK(parse_quantity("action_drift") == ScalingQuantity::ActionDrift);
    CHECK(quantity_name(ScalingQuantity::BeaDefectFull) == "bea_defect_full");
    CHECK_THROWS_AS(parse_quantity("speed"), ConfigError);
}

TEST_CASE("random unit states")
{
    TorusGrid g(16);
    auto a = random_unit_state(g, 3);
    auto b = random_unit_state(g, 3);
    CHECK(sobolev_norm(a, 0.5) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(a.data() == b.data());
    CHECK(a.data() != random_unit_state(g, 4).data());
}

TEST_CASE("scaling study on the linear equation is exact")
{
    auto c = parse_config("K = 16\nrho = 2\ng = zero\nh = 0.05\nmodes = 1\n");
    auto res = scaling_study(c, ScalingQuantity::EnergyDrift, {0.2, 0.1, 0.05});
    REQUIRE(res.exact.size() == 1);
    CHECK(res.exact[0]);
    CHECK(std::isnan(res.exponents[0]));
    for (auto& row : res.values) CHECK(row[0] < 1e-13);
    CHECK_THROWS_AS(scaling_study(c, ScalingQuantity::EnergyDrift, {0.2, 0.1}), ConfigError);
}

TEST_CASE("automatic gamma")
{
    FrequencySpec f(TorusGrid(8), 1.0);
    double g = auto_gamma(f, 2, {0, 1, 2});
    double m = std::min({min_small_divisor(f, 2, 0).value, min_small_divisor(f, 2, 1).value,
                         min_small_divisor(f, 2, 2).value});
    CHECK(g == doctest::Approx(0.5 * m).epsilon(1e-15));
}

TEST_CASE("invariant suite")
{
    for (auto& c : run_invariant_suite()) {
        INFO(c.name << ": " << c.detail);
        CHECK(c.pass);
    }
}
