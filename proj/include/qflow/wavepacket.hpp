#pragma once

// Superpositions psi(r, t) = sum_k alpha_k phi_k(r) exp(-i E_k t) of hydrogen
// eigenstates and the velocity field they induce,
//
//     v = grad S + (1 / 2 rho) grad rho x s      (hbar = m = 1),
//
// with grad S = Im(grad psi / psi). The second term is present only when a
// spin polarization s is configured.

#include <optional>
#include <vector>

#include "qflow/hydrogen.hpp"
#include "qflow/provider.hpp"

namespace qflow {

/// rho below this value counts as a node of psi.
inline constexpr double kNodeThreshold = 1e-30;
inline constexpr double kDefaultFdStep = 1e-5;

struct Term {
    Complex coefficient;
    hydrogen::QuantumNumbers qn;

    friend bool operator==(const Term&, const Term&) = default;
};

struct SpinConfig {
    Vec3 direction = Vec3::UnitZ();
};

struct WavepacketSpec {
    std::vector<Term> terms;
    std::optional<SpinConfig> spin;

    /// Throws std::invalid_argument on an empty term list, bad quantum numbers or a non-unit spin.
    void validate() const;

    /// ||psi||^2 from the coefficients (eigenstates are orthonormal).
    double norm_squared() const;
};

/// (phi_100 e^{it/2} + phi_200 e^{it/8} + phi_211 e^{it/8}) / sqrt(3)
WavepacketSpec standard_packet();

/// (phi_100 + phi_210 + phi_211) / sqrt(3) with spin along +z.
WavepacketSpec spin_packet();

/// Single stationary eigenstate with unit coefficient.
WavepacketSpec eigenstate_packet(hydrogen::QuantumNumbers qn, std::optional<SpinConfig> spin = std::nullopt);

struct FieldSample {
    Complex psi;
    double rho = 0.0;
    Vec3 grad_rho = Vec3::Zero();
    Vec3 grad_s = Vec3::Zero();
};

enum class JacobianScheme { Analytic, FiniteDifference };

struct JacobianOptions {
    JacobianScheme scheme = JacobianScheme::Analytic;
    double step = kDefaultFdStep;
};

class Wavepacket final : public VelocityProvider {
public:
    explicit Wavepacket(WavepacketSpec spec, JacobianOptions jacobian = {},
                        double node_threshold = kNodeThreshold);

    const WavepacketSpec& spec() const noexcept { return spec_; }
    const JacobianOptions& jacobian_options() const noexcept { return jacobian_; }

    Complex psi(const Vec3& r, double t) const;
    /// |psi|^2; never throws.
    double density(const Vec3& r, double t) const;

    FieldSample sample_field(const Vec3& r, double t) const;

    Vec3 velocity(const Vec3& r, double t) const override;
    Mat3 jacobian(const Vec3& r, double t) const override;
    void evaluate(const Vec3& r, double t, Vec3& v, Mat3* jac) const override;

    Mat3 velocity_jacobian(const Vec3& r, double t, const JacobianOptions& options) const;

    /// div v from the analytic Jacobian.
    double divergence(const Vec3& r, double t) const;

    /// div(grad rho x s) by central differences of the analytic grad rho.
    /// Zero for a spinless packet.
    double divergence_of_spin_term(const Vec3& r, double t, double step = kDefaultFdStep) const;

private:
    struct Jet {
        Complex psi;
        CVec3 grad;
        CMat3 hessian;
    };

    void phases(double t, std::vector<Complex>& out) const;
    Jet jet(const Vec3& r, double t, bool with_hessian) const;
    void check_node(double rho, const Vec3& r, double t) const;
    Mat3 finite_difference_jacobian(const Vec3& r, double t, double step) const;

    WavepacketSpec spec_;
    JacobianOptions jacobian_;
    double node_threshold_;
    std::vector<hydrogen::Eigenstate> states_;
};

}  // namespace qflow
