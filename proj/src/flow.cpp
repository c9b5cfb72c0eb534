#include "qflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace qflow {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

// PI step-size control constants (Hairer & Wanner, DOPRI5).
constexpr double kBeta = 0.04;
constexpr double kExpo = 0.2 - kBeta * 0.75;
constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

using Vec13 = Eigen::Matrix<double, 13, 1>;
using Vec3d = Eigen::Matrix<double, 3, 1>;

}  // namespace

void IntegratorConfig::validate() const
{
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
        throw std::invalid_argument("integrator tolerances must be positive");
    if (!(initial_step > 0.0) || !(max_step > 0.0))
        throw std::invalid_argument("integrator step sizes must be positive");
    if (!(max_time > 0.0))
        throw std::invalid_argument("max_time must be positive");
}

IntegratorConfig IntegratorConfig::scaled(double factor) const
{
    IntegratorConfig c = *this;
    c.rel_tol *= factor;
    c.abs_tol *= factor;
    return c;
}

FlowIntegrator::FlowIntegrator(const VelocityProvider& provider, IntegratorConfig cfg, bool variational)
    : provider_(provider), cfg_(cfg), variational_(variational), step_(cfg.initial_step)
{
    cfg_.validate();
}

template <int N, class Rhs>
void FlowIntegrator::integrate(Eigen::Matrix<double, N, 1>& y, double& t, double t_target, const Rhs& rhs)
{
    using V = Eigen::Matrix<double, N, 1>;
    V k1, k2, k3, k4, k5, k6, k7, y_stage, y_new, err_vec;

    rhs(t, y, k1);
    ++stats_.evaluations;

    double h = std::min(step_, cfg_.max_step);
    while (t < t_target) {
        const double remaining = t_target - t;
        if (remaining <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t_target))) {
            t = t_target;
            break;
        }
        const bool clamped = h >= remaining;
        const double h_try = clamped ? remaining : h;

        double err = 0.0;
        std::optional<NodeProximity> node;
        try {
            y_stage = y + h_try * a21 * k1;
            rhs(t + c2 * h_try, y_stage, k2);
            y_stage = y + h_try * (a31 * k1 + a32 * k2);
            rhs(t + c3 * h_try, y_stage, k3);
            y_stage = y + h_try * (a41 * k1 + a42 * k2 + a43 * k3);
            rhs(t + c4 * h_try, y_stage, k4);
            y_stage = y + h_try * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            rhs(t + c5 * h_try, y_stage, k5);
            y_stage = y + h_try * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            rhs(t + h_try, y_stage, k6);
            y_new = y + h_try * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
            rhs(t + h_try, y_new, k7);
        } catch (const NodeProximity& e) {
            // A trial stage strayed onto a node; retry with a smaller step from the same point.
            node = e;
        }
        stats_.evaluations += 6;

        if (!node) {
            err_vec = h_try * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            double sum = 0.0;
            for (int i = 0; i < N; ++i) {
                const double sc = cfg_.abs_tol + cfg_.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
                const double q = err_vec[i] / sc;
                sum += q * q;
            }
            err = std::sqrt(sum / N);
        }

        if (node || !std::isfinite(err)) {
            ++stats_.rejected;
            h = 0.25 * h_try;
            if (h < kMinStep) {
                if (node)
                    throw *node;
                throw StepUnderflow(h, t);
            }
            continue;
        }

        const double fac11 = std::pow(err, kExpo);
        if (err <= 1.0) {
            double fac = fac11 / std::pow(err_old_, kBeta);
            fac = std::clamp(fac / kSafety, 1.0 / kMaxFactor, 1.0 / kMinFactor);
            const double h_next = std::min(h_try / fac, cfg_.max_step);
            err_old_ = std::max(err, 1e-4);
            ++stats_.accepted;
            t = clamped ? t_target : t + h_try;
            y = y_new;
            k1 = k7;
            // A step shortened only to hit t_target must not shrink the next one.
            h = clamped ? std::max(h, h_next) : h_next;
            h = std::min(h, cfg_.max_step);
        } else {
            ++stats_.rejected;
            h = h_try / std::min(1.0 / kMinFactor, fac11 / kSafety);
            if (h < kMinStep)
                throw StepUnderflow(h, t);
        }
    }
    step_ = h;
}

void FlowIntegrator::advance(FlowState& state, double t_target)
{
    if (t_target < state.t)
        throw std::invalid_argument("advance: target time precedes the current state");
    if (t_target == state.t)
        return;

    if (!variational_) {
        Vec3d y = state.r;
        auto rhs = [this](double t, const Vec3d& yy, Vec3d& dy) {
            Vec3 v;
            provider_.evaluate(yy, t, v, nullptr);
            dy = v;
        };
        integrate<3>(y, state.t, t_target, rhs);
        state.r = y;
        return;
    }

    Vec13 y;
    y.head<3>() = state.r;
    y.segment<9>(3) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(state.u.data());
    y[12] = state.log_volume;
    auto rhs = [this](double t, const Vec13& yy, Vec13& dy) {
        Vec3 v;
        Mat3 jac;
        provider_.evaluate(yy.head<3>(), t, v, &jac);
        const Eigen::Map<const Mat3> u(yy.data() + 3);
        dy.head<3>() = v;
        Eigen::Map<Mat3>(dy.data() + 3) = jac * u;
        dy[12] = jac.trace();
    };
    integrate<13>(y, state.t, t_target, rhs);
    state.r = y.head<3>();
    state.u = Eigen::Map<const Mat3>(y.data() + 3);
    state.log_volume = y[12];
}

FlowState advance(const VelocityProvider& provider, FlowState state, double t_target, const IntegratorConfig& cfg)
{
    FlowIntegrator integrator(provider, cfg);
    integrator.advance(state, t_target);
    return state;
}

Vec3 flow_map(const VelocityProvider& provider, const Vec3& r0, double t, const IntegratorConfig& cfg, double t0)
{
    if (t < 0.0)
        throw std::invalid_argument("flow_map: only forward integration is supported");
    FlowIntegrator integrator(provider, cfg, false);
    FlowState state = FlowState::start(r0, t0);
    integrator.advance(state, t0 + t);
    return state.r;
}

std::vector<double> local_rates(const VelocityProvider& provider, const Vec3& r0, double dt, std::size_t k_max,
                                const IntegratorConfig& cfg, const Vec3& xi0)
{
    if (!(dt > 0.0))
        throw std::invalid_argument("local_rates: dt must be positive");
    if (!(xi0.norm() > 0.0))
        throw std::invalid_argument("local_rates: starting vector must be nonzero");

    FlowIntegrator integrator(provider, cfg);
    FlowState state = FlowState::start(r0);
    Vec3 xi = xi0.normalized();
    std::vector<double> rates;
    rates.reserve(k_max);
    for (std::size_t k = 0; k < k_max; ++k) {
        state.u.setIdentity();
        integrator.advance(state, static_cast<double>(k + 1) * dt);
        xi = state.u * xi;
        const double growth = xi.norm();
        rates.push_back(std::log(growth) / dt);
        xi /= growth;
    }
    return rates;
}

std::pair<double, double> liouville_check(const VelocityProvider& provider, const Vec3& r0, double t,
                                          const IntegratorConfig& cfg)
{
    const FlowState end = advance(provider, FlowState::start(r0), t, cfg);
    const double det = end.u.determinant();
    if (!(det > 0.0))
        throw std::runtime_error("liouville_check: flow matrix lost orientation (det U <= 0)");
    return {std::log(det), end.log_volume};
}

}  // namespace qflow
