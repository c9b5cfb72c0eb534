#pragma once

// Bound eigenfunctions of the hydrogen atom in atomic units.
//
// phi_nlm(r) = g_nl(|r|) * S_lm(x, y, z) where S_lm = r^l Y_lm is the complex
// solid harmonic (Condon-Shortley phase) and g_nl = R_nl / r^l is a Laguerre
// polynomial times exp(-r/n). Splitting off the solid harmonic keeps the
// Cartesian gradient and Hessian in closed form.

#include <vector>

#include "qflow/types.hpp"

namespace qflow::hydrogen {

inline constexpr int kMaxPrincipal = 4;

/// Evaluations closer than this to the nucleus are moved out to this radius.
inline constexpr double kOriginGuard = 1e-12;

struct QuantumNumbers {
    int n = 1;
    int l = 0;
    int m = 0;

    friend bool operator==(const QuantumNumbers&, const QuantumNumbers&) = default;
};

/// Throws std::invalid_argument unless 1 <= n <= kMaxPrincipal, 0 <= l < n, |m| <= l.
void validate(const QuantumNumbers& qn);

struct ComplexField3 {
    Complex value;
    CVec3 gradient;
};

struct ComplexJet {
    Complex value;
    CVec3 gradient;
    CMat3 hessian;
};

/// E_n = -1/(2 n^2) Hartree.
double energy(int n);

/// Homogeneous polynomial in (x, y, z) with complex coefficients.
class SolidPolynomial {
public:
    struct Monomial {
        int px = 0;
        int py = 0;
        int pz = 0;
        Complex coefficient;
    };

    SolidPolynomial() = default;
    explicit SolidPolynomial(std::vector<Monomial> terms);

    /// Complex solid harmonic r^l Y_lm.
    static SolidPolynomial solid_harmonic(int l, int m);

    const std::vector<Monomial>& terms() const noexcept { return terms_; }
    int degree() const noexcept { return degree_; }

    Complex value(const Vec3& p) const;
    /// Value, gradient and Hessian in one pass.
    void jet(const Vec3& p, Complex& value, CVec3& gradient, CMat3* hessian) const;

private:
    std::vector<Monomial> terms_;
    int degree_ = 0;
};

class Eigenstate {
public:
    explicit Eigenstate(QuantumNumbers qn);

    const QuantumNumbers& quantum_numbers() const noexcept { return qn_; }
    double energy() const noexcept { return energy_; }

    Complex value(const Vec3& point) const;
    ComplexField3 eval(const Vec3& point) const;
    ComplexJet eval_jet(const Vec3& point) const;

    /// Shared implementation; hessian may be null.
    void evaluate(const Vec3& point, Complex& value, CVec3& gradient, CMat3* hessian) const;

private:
    // g(r), g'(r), g''(r) of the radial factor R_nl / r^l.
    void radial(double r, double& g, double& dg, double& d2g) const;

    QuantumNumbers qn_;
    double energy_;
    double radial_norm_;
    std::vector<double> laguerre_;  // coefficients of L(2r/n) as a polynomial in r
    SolidPolynomial angular_;
};

ComplexField3 eval_eigenstate(const QuantumNumbers& qn, const Vec3& point);

}  // namespace qflow::hydrogen
