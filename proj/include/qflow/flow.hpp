#pragma once

// Integration of dr/dt = v(r, t) together with the variational equation
// dU/dt = J(r(t), t) U and the running integral of div v, all advanced by the
// same embedded Dormand-Prince 5(4) steps.

#include <cstddef>
#include <utility>
#include <vector>

#include "qflow/provider.hpp"

namespace qflow {

/// Smallest step the controller may request before giving up.
inline constexpr double kMinStep = 1e-14;

struct IntegratorConfig {
    double rel_tol = 1e-9;
    double abs_tol = 1e-9;
    double initial_step = 1e-2;
    double max_step = 1.0;
    double max_time = 64000.0;

    void validate() const;
    /// Copy with both tolerances multiplied by factor.
    IntegratorConfig scaled(double factor) const;
};

struct FlowState {
    Vec3 r = Vec3::Zero();
    Mat3 u = Mat3::Identity();
    double t = 0.0;
    /// Integral of div v along the path since the last reset.
    double log_volume = 0.0;

    static FlowState start(const Vec3& r0, double t0 = 0.0) { return {r0, Mat3::Identity(), t0, 0.0}; }
};

struct IntegratorStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t evaluations = 0;
};

/// Stateful driver that remembers the step size between calls to advance().
class FlowIntegrator {
public:
    /// With variational = false only the position is integrated (U and log_volume stay untouched).
    FlowIntegrator(const VelocityProvider& provider, IntegratorConfig cfg, bool variational = true);

    void advance(FlowState& state, double t_target);

    const IntegratorStats& stats() const noexcept { return stats_; }
    const IntegratorConfig& config() const noexcept { return cfg_; }

private:
    template <int N, class Rhs>
    void integrate(Eigen::Matrix<double, N, 1>& y, double& t, double t_target, const Rhs& rhs);

    const VelocityProvider& provider_;
    IntegratorConfig cfg_;
    bool variational_;
    double step_;
    double err_old_ = 1e-4;
    IntegratorStats stats_;
};

FlowState advance(const VelocityProvider& provider, FlowState state, double t_target, const IntegratorConfig& cfg);

/// Position at time t0 + t of the trajectory through r0 at t0.
Vec3 flow_map(const VelocityProvider& provider, const Vec3& r0, double t, const IntegratorConfig& cfg,
              double t0 = 0.0);

/// lambda^(k) = ln(|U_k xi_k| / |xi_k|) / dt for k = 0 .. k_max - 1, with xi renormalized each interval.
std::vector<double> local_rates(const VelocityProvider& provider, const Vec3& r0, double dt, std::size_t k_max,
                                const IntegratorConfig& cfg, const Vec3& xi0 = Vec3::UnitX());

/// (ln det U(t), integral of div v along the path); equal by the Abel-Liouville identity.
std::pair<double, double> liouville_check(const VelocityProvider& provider, const Vec3& r0, double t,
                                          const IntegratorConfig& cfg);

}  // namespace qflow
