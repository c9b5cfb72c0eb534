#include "qflow/hydrogen.hpp"

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace qflow::hydrogen {

namespace {

double factorial(int k)
{
    double f = 1.0;
    for (int i = 2; i <= k; ++i)
        f *= i;
    return f;
}

double binomial(int n, int k)
{
    if (k < 0 || k > n)
        return 0.0;
    return factorial(n) / (factorial(k) * factorial(n - k));
}

// Coefficients (ascending powers of u) of the Legendre polynomial P_l.
std::vector<double> legendre(int l)
{
    std::vector<double> prev{1.0};
    if (l == 0)
        return prev;
    std::vector<double> cur{0.0, 1.0};
    for (int k = 1; k < l; ++k) {
        std::vector<double> next(k + 2, 0.0);
        for (std::size_t i = 0; i < cur.size(); ++i)
            next[i + 1] += (2.0 * k + 1.0) * cur[i] / (k + 1.0);
        for (std::size_t i = 0; i < prev.size(); ++i)
            next[i] -= k * prev[i] / (k + 1.0);
        prev = std::move(cur);
        cur = std::move(next);
    }
    return cur;
}

std::vector<double> differentiate(std::vector<double> c, int times)
{
    for (int t = 0; t < times; ++t) {
        if (c.size() <= 1)
            return {0.0};
        std::vector<double> d(c.size() - 1);
        for (std::size_t i = 1; i < c.size(); ++i)
            d[i - 1] = static_cast<double>(i) * c[i];
        c = std::move(d);
    }
    return c;
}

using Exponents = std::array<int, 3>;
using PolyMap = std::map<Exponents, Complex>;

PolyMap multiply(const PolyMap& a, const PolyMap& b)
{
    PolyMap out;
    for (const auto& [ea, ca] : a)
        for (const auto& [eb, cb] : b)
            out[{ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]}] += ca * cb;
    return out;
}

PolyMap power(const PolyMap& base, int k)
{
    PolyMap out{{{0, 0, 0}, Complex(1.0)}};
    for (int i = 0; i < k; ++i)
        out = multiply(out, base);
    return out;
}

double ipow(double x, int k)
{
    double r = 1.0;
    for (int i = 0; i < k; ++i)
        r *= x;
    return r;
}

}  // namespace

void validate(const QuantumNumbers& qn)
{
    if (qn.n < 1 || qn.n > kMaxPrincipal || qn.l < 0 || qn.l >= qn.n || std::abs(qn.m) > qn.l) {
        std::ostringstream os;
        os << "invalid hydrogen quantum numbers (n=" << qn.n << ", l=" << qn.l << ", m=" << qn.m
           << "); need 1 <= n <= " << kMaxPrincipal << ", 0 <= l < n, |m| <= l";
        throw std::invalid_argument(os.str());
    }
}

double energy(int n)
{
    if (n < 1)
        throw std::invalid_argument("principal quantum number must be >= 1");
    return -0.5 / (static_cast<double>(n) * n);
}

SolidPolynomial::SolidPolynomial(std::vector<Monomial> terms) : terms_(std::move(terms))
{
    for (const auto& t : terms_)
        degree_ = std::max(degree_, t.px + t.py + t.pz);
}

SolidPolynomial SolidPolynomial::solid_harmonic(int l, int m)
{
    const int am = std::abs(m);
    const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * factorial(l - am)
                                  / factorial(l + am));
    const double cs = (am % 2 == 0) ? 1.0 : -1.0;

    // (x + i y)^|m| * sum_j d_j z^j (x^2 + y^2 + z^2)^((l - |m| - j) / 2)
    const PolyMap xy{{{1, 0, 0}, Complex(1.0)}, {{0, 1, 0}, Complex(0.0, 1.0)}};
    const PolyMap r2{{{2, 0, 0}, Complex(1.0)}, {{0, 2, 0}, Complex(1.0)}, {{0, 0, 2}, Complex(1.0)}};
    const auto d = differentiate(legendre(l), am);

    PolyMap axial;
    for (std::size_t j = 0; j < d.size(); ++j) {
        if (d[j] == 0.0)
            continue;
        const int rest = l - am - static_cast<int>(j);
        PolyMap zj{{{0, 0, static_cast<int>(j)}, Complex(d[j])}};
        for (const auto& [e, c] : multiply(zj, power(r2, rest / 2)))
            axial[e] += c;
    }
    PolyMap full = multiply(power(xy, am), axial);

    std::vector<Monomial> terms;
    for (const auto& [e, c] : full) {
        Complex coeff = norm * cs * c;
        if (m < 0)
            coeff = cs * std::conj(coeff);
        if (std::abs(coeff) > 0.0)
            terms.push_back({e[0], e[1], e[2], coeff});
    }
    return SolidPolynomial(std::move(terms));
}

Complex SolidPolynomial::value(const Vec3& p) const
{
    Complex v = 0.0;
    for (const auto& t : terms_)
        v += t.coefficient * (ipow(p.x(), t.px) * ipow(p.y(), t.py) * ipow(p.z(), t.pz));
    return v;
}

void SolidPolynomial::jet(const Vec3& p, Complex& value, CVec3& gradient, CMat3* hessian) const
{
    // powers[axis][k] = p_axis^k, with k up to the degree
    std::array<std::array<double, kMaxPrincipal + 1>, 3> powers{};
    for (int a = 0; a < 3; ++a) {
        powers[a][0] = 1.0;
        for (int k = 1; k <= degree_; ++k)
            powers[a][k] = powers[a][k - 1] * p[a];
    }
    auto pw = [&](int axis, int k) { return k < 0 ? 0.0 : powers[axis][k]; };

    value = 0.0;
    gradient.setZero();
    if (hessian)
        hessian->setZero();

    for (const auto& t : terms_) {
        const std::array<int, 3> e{t.px, t.py, t.pz};
        value += t.coefficient * (pw(0, e[0]) * pw(1, e[1]) * pw(2, e[2]));
        for (int a = 0; a < 3; ++a) {
            if (e[a] == 0)
                continue;
            double g = e[a];
            for (int b = 0; b < 3; ++b)
                g *= pw(b, b == a ? e[b] - 1 : e[b]);
            gradient[a] += t.coefficient * g;
        }
        if (!hessian)
            continue;
        for (int a = 0; a < 3; ++a) {
            for (int b = a; b < 3; ++b) {
                std::array<int, 3> k = e;
                double f = k[a];
                --k[a];
                f *= k[b];
                --k[b];
                if (f == 0.0)
                    continue;
                const Complex h = t.coefficient * (f * pw(0, k[0]) * pw(1, k[1]) * pw(2, k[2]));
                (*hessian)(a, b) += h;
                if (a != b)
                    (*hessian)(b, a) += h;
            }
        }
    }
}

Eigenstate::Eigenstate(QuantumNumbers qn)
    : qn_(qn), energy_(0.0), radial_norm_(0.0), angular_()
{
    validate(qn_);
    energy_ = hydrogen::energy(qn_.n);

    const int n = qn_.n;
    const int l = qn_.l;
    const int k = n - l - 1;
    const int alpha = 2 * l + 1;
    const double scale = 2.0 / n;
    const double n_nl = std::sqrt(ipow(scale, 3) * factorial(k) / (2.0 * n * factorial(n + l)));
    radial_norm_ = n_nl * ipow(scale, l);

    // L^alpha_k(x) = sum_i (-1)^i C(k + alpha, k - i) x^i / i!, with x = 2r/n
    laguerre_.resize(k + 1);
    for (int i = 0; i <= k; ++i) {
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        laguerre_[i] = sign * binomial(k + alpha, k - i) / factorial(i) * ipow(scale, i);
    }
    angular_ = SolidPolynomial::solid_harmonic(l, qn_.m);
}

void Eigenstate::radial(double r, double& g, double& dg, double& d2g) const
{
    double q = 0.0, dq = 0.0, d2q = 0.0;
    for (std::size_t i = laguerre_.size(); i-- > 0;) {
        d2q = d2q * r + 2.0 * dq;
        dq = dq * r + q;
        q = q * r + laguerre_[i];
    }
    const double inv_n = 1.0 / qn_.n;
    const double e = radial_norm_ * std::exp(-r * inv_n);
    g = e * q;
    dg = e * (dq - q * inv_n);
    d2g = e * (d2q - 2.0 * dq * inv_n + q * inv_n * inv_n);
}

void Eigenstate::evaluate(const Vec3& point, Complex& value, CVec3& gradient, CMat3* hessian) const
{
    Vec3 p = point;
    double r = p.norm();
    if (r < kOriginGuard) {
        p = r > 0.0 ? Vec3(p * (kOriginGuard / r)) : Vec3(0.0, 0.0, kOriginGuard);
        r = kOriginGuard;
    }
    double g, dg, d2g;
    radial(r, g, dg, d2g);

    Complex s;
    CVec3 ds;
    angular_.jet(p, s, ds, hessian);

    const Vec3 rhat = p / r;
    const CVec3 rhat_c = rhat.cast<Complex>();
    value = g * s;
    gradient = (dg * s) * rhat_c + g * ds;
    if (hessian) {
        const Mat3 rr = rhat * rhat.transpose();
        const Mat3 radial_part = d2g * rr + (dg / r) * (Mat3::Identity() - rr);
        const CMat3 cross = rhat_c * ds.transpose() + ds * rhat_c.transpose();
        *hessian = s * radial_part.cast<Complex>() + dg * cross + g * (*hessian);
    }
}

Complex Eigenstate::value(const Vec3& point) const
{
    Vec3 p = point;
    double r = p.norm();
    if (r < kOriginGuard) {
        p = r > 0.0 ? Vec3(p * (kOriginGuard / r)) : Vec3(0.0, 0.0, kOriginGuard);
        r = kOriginGuard;
    }
    double q = 0.0;
    for (std::size_t i = laguerre_.size(); i-- > 0;)
        q = q * r + laguerre_[i];
    return radial_norm_ * std::exp(-r / qn_.n) * q * angular_.value(p);
}

ComplexField3 Eigenstate::eval(const Vec3& point) const
{
    ComplexField3 out;
    evaluate(point, out.value, out.gradient, nullptr);
    return out;
}

ComplexJet Eigenstate::eval_jet(const Vec3& point) const
{
    ComplexJet out;
    evaluate(point, out.value, out.gradient, &out.hessian);
    return out;
}

ComplexField3 eval_eigenstate(const QuantumNumbers& qn, const Vec3& point)
{
    return Eigenstate(qn).eval(point);
}

}  // namespace qflow::hydrogen
