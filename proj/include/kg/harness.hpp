#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kg/integrators.hpp"
#include "kg/normalform.hpp"
#include "kg/spectral.hpp"

namespace kg {

/// Flat key=value experiment description.
struct ExperimentConfig {
    int K = 32;
    double rho = 1.0;
    Nonlinearity g = Nonlinearity::zero();
    std::string mollifier = "one";
    double h = 1e-2;
    Scheme scheme = Scheme::Strang;
    int r = 1;
    double delta = 0.1;
    double s0 = 1.0;
    double eps = 0.1;
    double T = 1.0;
    std::vector<int> modes{0, 1, 2};
    std::string out;
    std::uint64_t seed = 1;
    bool strict = false;

    [[nodiscard]] TorusGrid grid() const { return TorusGrid(K); }
    [[nodiscard]] FrequencySpec freq() const { return FrequencySpec(grid(), rho); }
    [[nodiscard]] MethodSpec method() const;
    /// round(T/h).
    [[nodiscard]] std::size_t n_steps() const;

    bool operator==(const ExperimentConfig& o) const;
};

/// Keys: K, rho, g, mollifier, h, scheme, r, delta, s0, eps, T, modes, out,
/// seed, strict. '#' starts a comment. rho accepts sqrt(x); modes accepts
/// comma lists and a..b ranges.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

/// Initial state used by run_experiment: power-law data in modal form.
ModeState initial_state(const ExperimentConfig& cfg);

struct RunOptions {
    /// Compute H_h along the trajectory when the orbit count stays below
    /// this budget.
    std::size_t modified_budget = 200000;
    /// Called with the CFL report when the condition fails.
    bool warn = true;
};

DriftReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Header step,time,H,Hh,norm_h12,norm_h1,J_<k>...; values at 17 digits.
void emit_csv(const DriftReport& report, std::ostream& os);
void emit_csv(const DriftReport& report, const std::string& path);

enum class ScalingQuantity { BeaDefectLie, BeaDefectFull, EnergyDrift, ActionDrift, BnfRemainder };
ScalingQuantity parse_quantity(const std::string& s);
std::string quantity_name(ScalingQuantity q);
/// Exponent predicted by the theory for the quantity at order r.
double expected_exponent(ScalingQuantity q, int r);

struct ScalingResult {
    ScalingQuantity quantity;
    std::vector<double> eps;
    std::vector<std::string> channels;
    /// values[i][c] for eps level i and channel c.
    std::vector<std::vector<double>> values;
    std::vector<double> exponents;  // NaN when exact or not fittable
    std::vector<bool> exact;
    /// Largest ||u^n||_{H^{1/2}} / eps seen (drift quantities only).
    double max_norm_ratio = 0.0;
};

struct ScalingOptions {
    /// Birkhoff threshold; NaN selects half the measured minimal divisor.
    double gamma = std::numeric_limits<double>::quiet_NaN();
    /// Direction of the chi flow in the remainder (see birkhoff_remainder).
    int bnf_direction = -1;
    int eps_sign = kEpsSign;
    double flow_tol = 1e-13;
};

ScalingResult scaling_study(const ExperimentConfig& base, ScalingQuantity quantity,
                            const std::vector<double>& eps_levels,
                            const ScalingOptions& opts = {});

/// Least-squares slope of log(value) against log(eps) over finite positive
/// values; NaN with fewer than 3 usable points.
double fit_exponent(const std::vector<double>& eps, const std::vector<double>& values);

/// Seeded random mode state with ||u||_{H^{1/2}} = 1.
ModeState random_unit_state(const TorusGrid& grid, std::uint64_t seed);

/// gamma = min over k in modes of min_small_divisor(k)/2.
double auto_gamma(const FrequencySpec& freq, int r, const std::vector<int>& modes);

struct CheckResult {
    std::string name;
    bool pass;
    std::string detail;
};

/// Quick invariant suite used by the `check` subcommand.
std::vector<CheckResult> run_invariant_suite();

}  // namespace kg
