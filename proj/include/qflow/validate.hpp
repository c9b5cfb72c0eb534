#pragma once

// Consistency checks of the flow against properties every de Broglie-Bohm
// trajectory ensemble must satisfy. Each check returns a scalar statistic, the
// tolerance it was compared with and the raw series behind it.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qflow/qle.hpp"

namespace qflow {

struct CheckOutcome {
    std::string name;
    double statistic = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    /// Failed trajectories (node hits, step underflow); too many make the check invalid.
    std::size_t failures = 0;
    bool invalid = false;
    std::map<std::string, double> extra;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

/// Density along the path, rho(r, t) for the field being checked.
using TimeDensity = std::function<double(const Vec3&, double)>;

/// rho(r(t), t) against rho(r0, 0) exp(-sum_i lambda_i(t) t) at every renormalization time.
/// Statistic: largest relative deviation. Rows: t, rho_path, rho_relation, rel_error.
CheckOutcome density_relation_check(const VelocityProvider& provider, const TimeDensity& density, const Vec3& r0,
                                   double t_max, const IntegratorConfig& cfg, double renorm_interval = 1.0,
                                   double tolerance = 1e-2);
CheckOutcome density_relation_check(const WavepacketSpec& spec, const Vec3& r0, double t_max,
                                   const IntegratorConfig& cfg, double renorm_interval = 1.0,
                                   double tolerance = 1e-2);

/// |sum_i lambda_i(t_max)|. Rows: t, sum, sum_times_t, divergence_integral.
/// extra["identity_error"] is the largest |sum_i lambda_i t - integral of div v| seen.
CheckOutcome sum_rule_check(const VelocityProvider& provider, const Vec3& r0, double t_max,
                            const IntegratorConfig& cfg, double renorm_interval = 1.0, double tolerance = 1e-3);

struct MeasureOptions {
    /// Points are drawn from rho_0 over the region grown by this much on every side,
    /// so that mass entering the region during the flow is represented.
    double padding = 12.0;
    /// Envelope cells per axis for the padded sampler.
    int sampler_cells = 12;
    int sampler_grid = 9;
    double sampler_margin = 0.5;
    /// Reference histogram: Gauss-Legendre of this order on sub-cells of edge <= quadrature_cell.
    int quadrature_order = 4;
    double quadrature_cell = 0.5;
    unsigned jobs = 1;
    double failure_limit = 0.05;
};

/// Total-variation distance between the histogram of flowed rho_0 samples and the
/// integral of |psi(., t)|^2 over bins^3 cells of the region (mass outside the region
/// forms one extra cell). extra["noise_floor"] is the expected distance for exact sampling.
/// Rows: bin, empirical, reference.
CheckOutcome measure_invariance_check(const WavepacketSpec& spec, const SamplingRegion& region,
                                      std::size_t n_points, double t, int bins, std::uint64_t seed,
                                      const IntegratorConfig& cfg, double tolerance = 0.05,
                                      const MeasureOptions& options = {});

struct JitterOptions {
    std::size_t repeats = 100;
    /// Tolerances scaled by 10^u, u uniform in [-decades, decades].
    double tolerance_decades = 0.5;
    /// Renormalization interval scaled by 1 + u, u uniform in [-fraction, fraction].
    double renorm_fraction = 0.2;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    double failure_limit = 0.05;
};

/// lambda_1 of one trajectory under jittered integration settings. Runs still undecided at the
/// time cap contribute their finite-time lambda_1 (counted in extra["undecided"]).
/// Statistic: sigma / mean (sigma itself when the mean is zero). Rows: rel_tol, renorm_interval, lambda1, verdict.
CheckOutcome exponent_robustness_histogram(const VelocityProvider& provider, const Vec3& r0,
                                           const LyapunovConfig& lyap, const IntegratorConfig& cfg,
                                           const JitterOptions& jitter = {}, double tolerance = 0.10);

struct SensitivityOptions {
    /// Index of the coefficient that is perturbed.
    std::size_t term = 0;
    /// When set, perturbation * phi_admix is added instead (orthogonal unless already a term).
    std::optional<hydrogen::QuantumNumbers> admix;
    /// Separation is recorded every sample_dt.
    double sample_dt = 1.0;
    /// Growth is fitted while saturation * 1e-3 <= d <= saturation.
    double saturation = 1.0;
    double window_decades = 3.0;
    /// Accepted ratio band [1/factor, factor] between fitted rate and lambda_1.
    double factor = 2.0;
    /// Largest log-log slope of d(t) on [t_max / 10, t_max] still counted as polynomial.
    double max_power = 3.0;
};

/// Coefficient alpha_k moved by perturbation along its own phase, so ||psi_0 - psi'_0|| = perturbation.
WavepacketSpec perturb_coefficient(const WavepacketSpec& spec, std::size_t term, double perturbation);
/// psi_0 + perturbation * phi_qn (an existing qn term is shifted along its phase instead).
WavepacketSpec admix_state(const WavepacketSpec& spec, const hydrogen::QuantumNumbers& qn, double perturbation);

/// Separation d(t) of trajectories from r0 under psi and the perturbed psi'.
/// extra: rate (ln d slope), lambda1 (BGGS of the unperturbed trajectory), ratio, exponential (0/1),
/// power (log-log slope of the tail). Chaotic lambda1: pass when the ratio lies in the accepted band.
/// Regular: pass when the separation grows at most like a power of t. Rows: t, separation.
CheckOutcome wavefunction_sensitivity(const WavepacketSpec& spec, double perturbation, const Vec3& r0,
                                      double t_max, const IntegratorConfig& cfg, const LyapunovConfig& lyap,
                                      const SensitivityOptions& options = {});

}  // namespace qflow
