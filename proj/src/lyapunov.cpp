#include "qflow/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>

namespace qflow {

Frame canonical_frame() { return {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()}; }

Frame random_frame(std::uint64_t seed)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6c79u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    Mat3 m;
    for (int i = 0; i < 9; ++i)
        m.data()[i] = normal(rng);
    Eigen::HouseholderQR<Mat3> qr(m);
    Mat3 q = qr.householderQ();
    // Fix column signs so the distribution is Haar.
    const Mat3 r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int c = 0; c < 3; ++c)
        if (r(c, c) < 0.0)
            q.col(c) = -q.col(c);
    return {q.col(0), q.col(1), q.col(2)};
}

BggsIntegrator::BggsIntegrator(const VelocityProvider& provider, const Vec3& r0, double renorm_interval,
                               Frame seeds, const IntegratorConfig& cfg, double t0)
    : integrator_(provider, cfg), state_(FlowState::start(r0, t0))
{
    if (!(renorm_interval > 0.0))
        throw std::invalid_argument("renormalization interval must be positive");
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double expected = i == j ? 1.0 : 0.0;
            if (std::abs(seeds[i].dot(seeds[j]) - expected) > 1e-10)
                throw std::invalid_argument("BGGS seed vectors must be orthonormal");
        }
    }
    for (int c = 0; c < 3; ++c)
        frame_.col(c) = seeds[c];
    series_.renorm_interval = renorm_interval;
    series_.start_time = t0;
    series_.seeds = seeds;
}

void BggsIntegrator::extend_to(double elapsed)
{
    const double dt = series_.renorm_interval;
    const double t0 = series_.start_time;
    while (static_cast<double>(intervals_) * dt < elapsed * (1.0 - 1e-12)) {
        state_.u.setIdentity();
        state_.log_volume = 0.0;
        const double t_next = t0 + static_cast<double>(intervals_ + 1) * dt;
        integrator_.advance(state_, t_next);
        divergence_integral_ += state_.log_volume;
        ++intervals_;

        // Modified Gram-Schmidt on the propagated frame.
        Mat3 y = state_.u * frame_;
        Triple growth{};
        for (int c = 0; c < 3; ++c) {
            for (int p = 0; p < c; ++p)
                y.col(c) -= y.col(p).dot(y.col(c)) * y.col(p);
            const double norm = y.col(c).norm();
            if (!(norm > 0.0) || !std::isfinite(norm))
                throw std::runtime_error("BGGS: tangent vectors became degenerate");
            y.col(c) /= norm;
            growth[c] = std::log(norm);
            log_sums_[c] += growth[c];
        }
        frame_ = y;

        const double t = static_cast<double>(intervals_) * dt;
        Triple by_vector{log_sums_[0] / t, log_sums_[1] / t, log_sums_[2] / t};
        Triple sorted = by_vector;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        series_.times.push_back(t);
        series_.lambda_by_vector.push_back(by_vector);
        series_.lambda.push_back(sorted);
        series_.local_rates.push_back(growth[0] / dt);
    }
}

ExponentSeries bggs_spectrum(const VelocityProvider& provider, const Vec3& r0, double t_max, double renorm_interval,
                             const Frame& seeds, const IntegratorConfig& cfg)
{
    BggsIntegrator run(provider, r0, renorm_interval, seeds, cfg);
    run.extend_to(t_max);
    return run.series();
}

Triple spectrum_via_svd(const Mat3& u, double t)
{
    if (!(t > 0.0))
        throw std::invalid_argument("spectrum_via_svd: t must be positive");
    Eigen::JacobiSVD<Mat3> svd(u);
    const Vec3 s = svd.singularValues();
    if (!(s[2] > 0.0))
        throw std::invalid_argument("spectrum_via_svd: flow matrix is singular");
    return {std::log(s[0]) / t, std::log(s[1]) / t, std::log(s[2]) / t};
}

LinearFit llsa(std::span<const double> t, std::span<const double> y)
{
    return llsa(t, y, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
}

LinearFit llsa(std::span<const double> t, std::span<const double> y, double lo, double hi)
{
    if (t.size() != y.size())
        throw std::invalid_argument("llsa: t and y differ in length");
    // Centered sums for numerical stability.
    std::size_t n = 0;
    double mean_t = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < lo || t[i] > hi)
            continue;
        ++n;
        mean_t += (t[i] - mean_t) / static_cast<double>(n);
        mean_y += (y[i] - mean_y) / static_cast<double>(n);
    }
    if (n < 2)
        throw std::invalid_argument("llsa: need at least two points in the window");
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < lo || t[i] > hi)
            continue;
        const double dt = t[i] - mean_t;
        stt += dt * dt;
        sty += dt * (y[i] - mean_y);
    }
    if (!(stt > 0.0))
        throw std::invalid_argument("llsa: abscissae in the window are all equal");
    LinearFit fit;
    fit.points = n;
    fit.slope = sty / stt;
    fit.intercept = mean_y - fit.slope * mean_t;
    double sse = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < lo || t[i] > hi)
            continue;
        const double r = y[i] - (fit.intercept + fit.slope * t[i]);
        sse += r * r;
    }
    fit.rmse = std::sqrt(sse / static_cast<double>(n));
    return fit;
}

std::string to_string(Verdict v)
{
    switch (v) {
    case Verdict::Regular:
        return "regular";
    case Verdict::Chaotic:
        return "chaotic";
    case Verdict::Undecided:
        return "undecided";
    }
    return "undecided";
}

Verdict verdict_from_string(const std::string& s)
{
    if (s == "regular")
        return Verdict::Regular;
    if (s == "chaotic")
        return Verdict::Chaotic;
    if (s == "undecided")
        return Verdict::Undecided;
    throw std::invalid_argument("unknown verdict: " + s);
}

ConvergenceVerdict classify(const ExponentSeries& series, double t1, const CriteriaParams& params)
{
    if (series.times.empty() || series.times.back() < t1 * (1.0 - 1e-12))
        throw std::invalid_argument("classify: series does not extend to t1");
    if (params.sub_intervals < 1)
        throw std::invalid_argument("classify: need at least one sub-interval");

    ConvergenceVerdict out;
    out.t_lo = params.window_start * t1;
    out.t_hi = t1;

    std::vector<double> t, l1, product;
    double min_l1 = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double tk = series.times[k];
        if (tk < out.t_lo || tk > out.t_hi * (1.0 + 1e-12))
            continue;
        t.push_back(tk);
        l1.push_back(series.lambda1(k));
        product.push_back(series.lambda1(k) * tk);
        min_l1 = std::min(min_l1, series.lambda1(k));
    }
    out.lambda1_estimate = l1.empty() ? 0.0 : l1.back();

    // Regular: lambda_1(t) non-increasing on every sub-interval and dipping below the threshold.
    const double width = (out.t_hi - out.t_lo) / params.sub_intervals;
    bool all_decreasing = true;
    for (int s = 0; s < params.sub_intervals; ++s) {
        const double lo = out.t_lo + s * width;
        const double hi = s + 1 == params.sub_intervals ? out.t_hi * (1.0 + 1e-12) : out.t_lo + (s + 1) * width;
        LinearFit fit = llsa(t, l1, lo, hi);
        // Round-off in a vanishing velocity makes lambda_1 wander at the 1e-18 level; treat that as flat.
        all_decreasing = all_decreasing && fit.slope * width <= 1e-12;
        out.sub_fits.push_back(fit);
    }
    out.product_fit = llsa(t, product);
    out.fit_rmse = out.product_fit.rmse;

    if (all_decreasing && min_l1 < params.regular_threshold) {
        out.kind = Verdict::Regular;
        out.lambda1_estimate = 0.0;
        return out;
    }

    // Chaotic: lambda_1(t) t close to a straight line of positive slope.
    const double slope = out.product_fit.slope;
    if (slope > 0.0 && out.product_fit.rmse < params.rmse_fraction * slope * (out.t_hi - out.t_lo)) {
        out.kind = Verdict::Chaotic;
        out.lambda1_estimate = slope;
        return out;
    }
    out.kind = Verdict::Undecided;
    return out;
}

void LyapunovConfig::validate() const
{
    if (!(renorm_interval > 0.0))
        throw std::invalid_argument("renorm_interval must be positive");
    if (!(t_first > 0.0) || !(growth > 1.0))
        throw std::invalid_argument("schedule needs t_first > 0 and growth > 1");
    if (!(criteria.window_start > 0.0 && criteria.window_start < 1.0))
        throw std::invalid_argument("window_start must lie in (0, 1)");
    if (criteria.sub_intervals < 1 || !(criteria.rmse_fraction > 0.0) || !(criteria.regular_threshold > 0.0))
        throw std::invalid_argument("invalid convergence criteria");
    // Each sub-interval needs two samples.
    if (criteria.sub_intervals * 2 * renorm_interval > (1.0 - criteria.window_start) * t_first)
        throw std::invalid_argument("t_first too short for the requested sub-intervals");
}

Lambda1Result estimate_lambda1(const VelocityProvider& provider, const Vec3& r0, const Frame& seeds,
                               const LyapunovConfig& lyap, const IntegratorConfig& cfg, double t0)
{
    lyap.validate();
    BggsIntegrator run(provider, r0, lyap.renorm_interval, seeds, cfg, t0);
    Lambda1Result out;
    double tk = std::min(lyap.t_first, cfg.max_time);
    while (true) {
        run.extend_to(tk);
        out.verdict = classify(run.series(), run.elapsed(), lyap.criteria);
        if (out.verdict.kind != Verdict::Undecided || tk >= cfg.max_time)
            break;
        tk = std::min(tk * lyap.growth, cfg.max_time);
    }
    out.t_end = run.elapsed();
    out.steps = run.stats().accepted;
    out.series = run.series();
    return out;
}

}  // namespace qflow
