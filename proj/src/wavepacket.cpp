#include "qflow/wavepacket.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qflow {

void WavepacketSpec::validate() const
{
    if (terms.empty())
        throw std::invalid_argument("wave-packet needs at least one term");
    for (const auto& term : terms)
        hydrogen::validate(term.qn);
    if (spin && std::abs(spin->direction.norm() - 1.0) > 1e-12)
        throw std::invalid_argument("spin direction must be a unit vector");
}

double WavepacketSpec::norm_squared() const
{
    // Eigenstates are orthonormal, so repeated (n, l, m) entries add coherently.
    std::vector<Term> merged;
    for (const auto& term : terms) {
        auto it = std::find_if(merged.begin(), merged.end(), [&](const Term& m) { return m.qn == term.qn; });
        if (it == merged.end())
            merged.push_back(term);
        else
            it->coefficient += term.coefficient;
    }
    double sum = 0.0;
    for (const auto& term : merged)
        sum += std::norm(term.coefficient);
    return sum;
}

WavepacketSpec standard_packet()
{
    const double a = 1.0 / std::sqrt(3.0);
    return {{{a, {1, 0, 0}}, {a, {2, 0, 0}}, {a, {2, 1, 1}}}, std::nullopt};
}

WavepacketSpec spin_packet()
{
    const double a = 1.0 / std::sqrt(3.0);
    return {{{a, {1, 0, 0}}, {a, {2, 1, 0}}, {a, {2, 1, 1}}}, SpinConfig{Vec3::UnitZ()}};
}

WavepacketSpec eigenstate_packet(hydrogen::QuantumNumbers qn, std::optional<SpinConfig> spin)
{
    return {{{Complex(1.0), qn}}, spin};
}

Wavepacket::Wavepacket(WavepacketSpec spec, JacobianOptions jacobian, double node_threshold)
    : spec_(std::move(spec)), jacobian_(jacobian), node_threshold_(node_threshold)
{
    spec_.validate();
    if (jacobian_.step <= 0.0)
        throw std::invalid_argument("finite-difference step must be positive");
    states_.reserve(spec_.terms.size());
    for (const auto& term : spec_.terms)
        states_.emplace_back(term.qn);
}

Wavepacket::Jet Wavepacket::jet(const Vec3& r, double t, bool with_hessian) const
{
    Jet out{Complex(0.0), CVec3::Zero(), CMat3::Zero()};
    Complex value;
    CVec3 grad;
    CMat3 hess;
    for (std::size_t k = 0; k < states_.size(); ++k) {
        // exp(-i E t)
        const Complex c = spec_.terms[k].coefficient * std::polar(1.0, -states_[k].energy() * t);
        states_[k].evaluate(r, value, grad, with_hessian ? &hess : nullptr);
        out.psi += c * value;
        out.grad += c * grad;
        if (with_hessian)
            out.hessian += c * hess;
    }
    return out;
}

void Wavepacket::check_node(double rho, const Vec3& r, double t) const
{
    if (!(rho >= node_threshold_))
        throw NodeProximity(rho, r, t);
}

Complex Wavepacket::psi(const Vec3& r, double t) const
{
    Complex sum = 0.0;
    for (std::size_t k = 0; k < states_.size(); ++k)
        sum += spec_.terms[k].coefficient * std::polar(1.0, -states_[k].energy() * t) * states_[k].value(r);
    return sum;
}

double Wavepacket::density(const Vec3& r, double t) const { return std::norm(psi(r, t)); }

FieldSample Wavepacket::sample_field(const Vec3& r, double t) const
{
    const Jet j = jet(r, t, false);
    FieldSample s;
    s.psi = j.psi;
    s.rho = std::norm(j.psi);
    check_node(s.rho, r, t);
    const CVec3 weighted = std::conj(j.psi) * j.grad;
    s.grad_rho = 2.0 * weighted.real();
    s.grad_s = weighted.imag() / s.rho;
    return s;
}

void Wavepacket::evaluate(const Vec3& r, double t, Vec3& v, Mat3* jac) const
{
    const bool analytic = jac && jacobian_.scheme == JacobianScheme::Analytic;
    const Jet j = jet(r, t, analytic);
    const double rho = std::norm(j.psi);
    check_node(rho, r, t);

    // g = grad psi / psi; v = Im g (+ Re g x s)
    const CVec3 g = j.grad / j.psi;
    v = g.imag();
    if (spec_.spin)
        v += g.real().cross(spec_.spin->direction);

    if (!jac)
        return;
    if (!analytic) {
        *jac = finite_difference_jacobian(r, t, jacobian_.step);
        return;
    }
    const CMat3 big_g = j.hessian / j.psi - g * g.transpose();
    *jac = big_g.imag();
    if (spec_.spin) {
        const Mat3 re = big_g.real();
        for (int col = 0; col < 3; ++col)
            jac->col(col) += Vec3(re.col(col)).cross(spec_.spin->direction);
    }
}

Vec3 Wavepacket::velocity(const Vec3& r, double t) const
{
    Vec3 v;
    evaluate(r, t, v, nullptr);
    return v;
}

Mat3 Wavepacket::jacobian(const Vec3& r, double t) const
{
    return velocity_jacobian(r, t, jacobian_);
}

Mat3 Wavepacket::velocity_jacobian(const Vec3& r, double t, const JacobianOptions& options) const
{
    if (options.scheme == JacobianScheme::FiniteDifference)
        return finite_difference_jacobian(r, t, options.step);
    Wavepacket analytic(spec_, {JacobianScheme::Analytic, options.step}, node_threshold_);
    Vec3 v;
    Mat3 jac;
    analytic.evaluate(r, t, v, &jac);
    return jac;
}

Mat3 Wavepacket::finite_difference_jacobian(const Vec3& r, double t, double step) const
{
    Mat3 jac;
    for (int col = 0; col < 3; ++col) {
        Vec3 plus = r;
        Vec3 minus = r;
        plus[col] += step;
        minus[col] -= step;
        jac.col(col) = (velocity(plus, t) - velocity(minus, t)) / (2.0 * step);
    }
    return jac;
}

double Wavepacket::divergence(const Vec3& r, double t) const
{
    return velocity_jacobian(r, t, {JacobianScheme::Analytic, jacobian_.step}).trace();
}

double Wavepacket::divergence_of_spin_term(const Vec3& r, double t, double step) const
{
    if (!spec_.spin)
        return 0.0;
    const Vec3& s = spec_.spin->direction;
    double div = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
        Vec3 plus = r;
        Vec3 minus = r;
        plus[axis] += step;
        minus[axis] -= step;
        const Vec3 wp = sample_field(plus, t).grad_rho.cross(s);
        const Vec3 wm = sample_field(minus, t).grad_rho.cross(s);
        div += (wp[axis] - wm[axis]) / (2.0 * step);
    }
    return div;
}

}  // namespace qflow
