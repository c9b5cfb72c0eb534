#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qflow {

using Complex = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CVec3 = Eigen::Vector3cd;
using CMat3 = Eigen::Matrix3cd;

/// Raised when an evaluation point lies on (or numerically next to) a node of psi.
class NodeProximity : public std::runtime_error {
public:
    NodeProximity(double rho, const Vec3& point, double time);

    double rho() const noexcept { return rho_; }
    const Vec3& point() const noexcept { return point_; }
    double time() const noexcept { return time_; }

private:
    double rho_;
    Vec3 point_;
    double time_;
};

/// Raised when adaptive step control asks for a step below the hard floor.
class StepUnderflow : public std::runtime_error {
public:
    StepUnderflow(double step, double time);

    double step() const noexcept { return step_; }
    double time() const noexcept { return time_; }

private:
    double step_;
    double time_;
};

}  // namespace qflow
