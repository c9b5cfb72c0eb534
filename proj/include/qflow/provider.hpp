#pragma once

#include "qflow/types.hpp"

namespace qflow {

/// Source of a (possibly time-dependent) velocity field and its spatial Jacobian.
/// Implementations must be safe to share read-only across threads.
class VelocityProvider {
public:
    virtual ~VelocityProvider() = default;

    virtual Vec3 velocity(const Vec3& r, double t) const = 0;
    /// d v_i / d r_j
    virtual Mat3 jacobian(const Vec3& r, double t) const = 0;

    /// Velocity and, when jac is non-null, the Jacobian at the same point.
    virtual void evaluate(const Vec3& r, double t, Vec3& v, Mat3* jac) const
    {
        v = velocity(r, t);
        if (jac)
            *jac = jacobian(r, t);
    }
};

/// v = 0 everywhere.
class ZeroField final : public VelocityProvider {
public:
    Vec3 velocity(const Vec3&, double) const override { return Vec3::Zero(); }
    Mat3 jacobian(const Vec3&, double) const override { return Mat3::Zero(); }
};

/// v = A r with constant A.
class LinearField final : public VelocityProvider {
public:
    explicit LinearField(const Mat3& a) : a_(a) {}

    Vec3 velocity(const Vec3& r, double) const override { return a_ * r; }
    Mat3 jacobian(const Vec3&, double) const override { return a_; }

    const Mat3& matrix() const noexcept { return a_; }

private:
    Mat3 a_;
};

/// Lorenz-63 system, used as a dissipative chaotic benchmark.
class LorenzField final : public VelocityProvider {
public:
    LorenzField(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0)
        : sigma_(sigma), rho_(rho), beta_(beta)
    {
    }

    Vec3 velocity(const Vec3& r, double) const override
    {
        return {sigma_ * (r.y() - r.x()), r.x() * (rho_ - r.z()) - r.y(), r.x() * r.y() - beta_ * r.z()};
    }

    Mat3 jacobian(const Vec3& r, double) const override
    {
        Mat3 j;
        j << -sigma_, sigma_, 0.0,
             rho_ - r.z(), -1.0, -r.x(),
             r.y(), r.x(), -beta_;
        return j;
    }

    double trace() const noexcept { return -(sigma_ + 1.0 + beta_); }

private:
    double sigma_;
    double rho_;
    double beta_;
};

}  // namespace qflow
