#pragma once

// Lyapunov spectra by the Benettin-Galgani-Giorgilli-Strelcyn scheme: three
// tangent vectors are carried by the flow matrix and re-orthonormalized
// (modified Gram-Schmidt) every renorm_interval, accumulating log growth.
// Convergence of lambda_1(t) is judged by least-squares fits on the window
// [0.4 t_k, t_k] for a geometric schedule of t_k.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qflow/flow.hpp"

namespace qflow {

using Frame = std::array<Vec3, 3>;
using Triple = std::array<double, 3>;

/// The standard basis.
Frame canonical_frame();
/// Haar-random orthonormal frame, deterministic in seed.
Frame random_frame(std::uint64_t seed);

struct ExponentSeries {
    /// Elapsed times since the start of the run, one per renormalization.
    std::vector<double> times;
    /// Finite-time exponents sorted so that lambda[k][0] >= lambda[k][1] >= lambda[k][2].
    std::vector<Triple> lambda;
    /// Same exponents in Gram-Schmidt order (entry 0 follows the first seed vector).
    std::vector<Triple> lambda_by_vector;
    /// lambda^(k) of the first vector for each interval.
    std::vector<double> local_rates;
    double renorm_interval = 1.0;
    double start_time = 0.0;
    Frame seeds = canonical_frame();

    std::size_t size() const noexcept { return times.size(); }
    double lambda1(std::size_t k) const { return lambda[k][0]; }
    double sum(std::size_t k) const { return lambda[k][0] + lambda[k][1] + lambda[k][2]; }
};

/// Resumable BGGS run along one trajectory.
class BggsIntegrator {
public:
    BggsIntegrator(const VelocityProvider& provider, const Vec3& r0, double renorm_interval, Frame seeds,
                   const IntegratorConfig& cfg, double t0 = 0.0);

    /// Integrate until the elapsed time reaches (at least) elapsed, in whole renormalization intervals.
    void extend_to(double elapsed);

    const ExponentSeries& series() const noexcept { return series_; }
    const FlowState& state() const noexcept { return state_; }
    double elapsed() const noexcept { return state_.t - series_.start_time; }
    /// Sum of log growths of the three vectors; equals ln |det U(t)| up to round-off.
    double log_volume_growth() const noexcept { return log_sums_[0] + log_sums_[1] + log_sums_[2]; }
    /// Integral of div v along the trajectory so far.
    double divergence_integral() const noexcept { return divergence_integral_; }
    const IntegratorStats& stats() const noexcept { return integrator_.stats(); }

private:
    FlowIntegrator integrator_;
    FlowState state_;
    Mat3 frame_;
    Triple log_sums_{0.0, 0.0, 0.0};
    std::size_t intervals_ = 0;
    double divergence_integral_ = 0.0;
    ExponentSeries series_;
};

ExponentSeries bggs_spectrum(const VelocityProvider& provider, const Vec3& r0, double t_max, double renorm_interval,
                             const Frame& seeds, const IntegratorConfig& cfg);

/// lambda_i(t) = ln(sigma_i(U)) / t from the singular values of the flow matrix, descending.
Triple spectrum_via_svd(const Mat3& u, double t);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rmse = 0.0;
    std::size_t points = 0;
};

/// Ordinary least squares over all points.
LinearFit llsa(std::span<const double> t, std::span<const double> y);
/// Ordinary least squares over the points with lo <= t <= hi.
LinearFit llsa(std::span<const double> t, std::span<const double> y, double lo, double hi);

struct CriteriaParams {
    /// lambda_1 must dip below this on the window for a regular verdict.
    double regular_threshold = 2e-3;
    /// Chaotic when rmse of the lambda_1 t fit < rmse_fraction * slope * window length.
    double rmse_fraction = 0.03;
    double window_start = 0.4;
    int sub_intervals = 5;
};

enum class Verdict { Regular, Chaotic, Undecided };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

struct ConvergenceVerdict {
    Verdict kind = Verdict::Undecided;
    /// 0 for Regular, the fitted slope for Chaotic, the last lambda_1(t) for Undecided.
    double lambda1_estimate = 0.0;
    double fit_rmse = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    /// Fit of lambda_1(t) t over the window.
    LinearFit product_fit;
    /// Fits of lambda_1(t) on the sub-intervals.
    std::vector<LinearFit> sub_fits;
};

ConvergenceVerdict classify(const ExponentSeries& series, double t1, const CriteriaParams& params = {});

struct LyapunovConfig {
    double renorm_interval = 1.0;
    CriteriaParams criteria;
    /// First checkpoint t_1 and growth factor of the schedule t_{k+1} = growth * t_k.
    double t_first = 2000.0;
    double growth = 2.0;

    void validate() const;
};

struct Lambda1Result {
    ConvergenceVerdict verdict;
    ExponentSeries series;
    double t_end = 0.0;
    std::size_t steps = 0;
};

/// Runs BGGS along the schedule until a criterion fires or cfg.max_time is reached.
Lambda1Result estimate_lambda1(const VelocityProvider& provider, const Vec3& r0, const Frame& seeds,
                               const LyapunovConfig& lyap, const IntegratorConfig& cfg, double t0 = 0.0);

}  // namespace qflow
