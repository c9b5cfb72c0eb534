#include "qflow/validate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace qflow {

namespace {

double population_mean(const std::vector<double>& v)
{
    double sum = 0.0;
    for (double x : v)
        sum += x;
    return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

double population_sigma(const std::vector<double>& v, double mean)
{
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    return v.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(v.size()));
}

void mark_failed(CheckOutcome& out, const std::string& why)
{
    out.failures += 1;
    out.invalid = true;
    out.pass = false;
    out.extra["failed_at"] = out.rows.empty() ? 0.0 : out.rows.back().front();
    out.name += " (" + why + ")";
}

}  // namespace

CheckOutcome density_relation_check(const VelocityProvider& provider, const TimeDensity& density, const Vec3& r0,
                                   double t_max, const IntegratorConfig& cfg, double renorm_interval,
                                   double tolerance)
{
    CheckOutcome out;
    out.name = "density_relation";
    out.tolerance = tolerance;
    out.columns = {"t", "rho_path", "rho_relation", "rel_error"};
    const double rho0 = density(r0, 0.0);
    if (!(rho0 > 0.0))
        throw std::invalid_argument("density_relation_check: rho vanishes at the starting point");

    BggsIntegrator run(provider, r0, renorm_interval, canonical_frame(), cfg);
    try {
        for (std::size_t k = 1; static_cast<double>(k) * renorm_interval <= t_max * (1.0 + 1e-12); ++k) {
            run.extend_to(static_cast<double>(k) * renorm_interval);
            const FlowState& s = run.state();
            const double rho_path = density(s.r, s.t);
            const double rho_relation = rho0 * std::exp(-run.log_volume_growth());
            const double err = std::abs(rho_relation - rho_path) / rho_path;
            out.statistic = std::max(out.statistic, err);
            out.rows.push_back({s.t, rho_path, rho_relation, err});
        }
    } catch (const NodeProximity&) {
        mark_failed(out, "node");
        return out;
    } catch (const StepUnderflow&) {
        mark_failed(out, "underflow");
        return out;
    }
    out.pass = out.statistic < tolerance;
    return out;
}

CheckOutcome density_relation_check(const WavepacketSpec& spec, const Vec3& r0, double t_max,
                                   const IntegratorConfig& cfg, double renorm_interval, double tolerance)
{
    const Wavepacket packet(spec);
    return density_relation_check(
        packet, [&](const Vec3& r, double t) { return packet.density(r, t); }, r0, t_max, cfg, renorm_interval,
        tolerance);
}

CheckOutcome sum_rule_check(const VelocityProvider& provider, const Vec3& r0, double t_max,
                            const IntegratorConfig& cfg, double renorm_interval, double tolerance)
{
    CheckOutcome out;
    out.name = "sum_rule";
    out.tolerance = tolerance;
    out.columns = {"t", "sum", "sum_times_t", "divergence_integral"};
    BggsIntegrator run(provider, r0, renorm_interval, canonical_frame(), cfg);
    double identity_error = 0.0;
    try {
        for (std::size_t k = 1; static_cast<double>(k) * renorm_interval <= t_max * (1.0 + 1e-12); ++k) {
            run.extend_to(static_cast<double>(k) * renorm_interval);
            const auto& series = run.series();
            const double t = series.times.back();
            const double sum = series.sum(series.size() - 1);
            identity_error = std::max(identity_error, std::abs(run.log_volume_growth() - run.divergence_integral()));
            out.rows.push_back({t, sum, run.log_volume_growth(), run.divergence_integral()});
        }
    } catch (const NodeProximity&) {
        mark_failed(out, "node");
        return out;
    } catch (const StepUnderflow&) {
        mark_failed(out, "underflow");
        return out;
    }
    if (out.rows.empty())
        throw std::invalid_argument("sum_rule_check: t_max shorter than one renormalization interval");
    out.statistic = std::abs(out.rows.back()[1]);
    out.extra["identity_error"] = identity_error;
    out.pass = out.statistic < tolerance;
    return out;
}

CheckOutcome measure_invariance_check(const WavepacketSpec& spec, const SamplingRegion& region,
                                      std::size_t n_points, double t, int bins, std::uint64_t seed,
                                      const IntegratorConfig& cfg, double tolerance, const MeasureOptions& options)
{
    region.validate();
    if (bins < 1 || n_points < 1 || !(options.padding >= 0.0))
        throw std::invalid_argument("measure_invariance_check: invalid parameters");
    CheckOutcome out;
    out.name = "measure_invariance";
    out.tolerance = tolerance;
    out.columns = {"bin", "empirical", "reference"};

    const Wavepacket packet(spec);
    SamplingRegion padded{region.lo.array() - options.padding, region.hi.array() + options.padding};
    SamplerOptions sampler{options.sampler_grid, options.sampler_margin, options.sampler_cells};
    const SampleSet samples = sample_initial_conditions(spec, padded, n_points, seed, sampler);
    const double ensemble_mass =
        region_mass([&](const Vec3& p) { return packet.density(p, 0.0); }, padded);

    // Flow every sample to t; failed trajectories are left out of the histogram.
    const std::size_t n_bins = static_cast<std::size_t>(bins) * bins * bins;
    std::vector<long> bin_of(n_points, -2);
    parallel_for(n_points, options.jobs, [&](std::size_t i) {
        try {
            const Vec3 p = flow_map(packet, samples.points[i], t, cfg);
            if (!region.contains(p)) {
                bin_of[i] = -1;
                return;
            }
            std::array<long, 3> idx{};
            for (int a = 0; a < 3; ++a) {
                const double f = (p[a] - region.lo[a]) / (region.hi[a] - region.lo[a]);
                idx[a] = std::clamp(static_cast<long>(f * bins), 0L, static_cast<long>(bins - 1));
            }
            bin_of[i] = (idx[0] * bins + idx[1]) * bins + idx[2];
        } catch (const NodeProximity&) {
        } catch (const StepUnderflow&) {
        }
    });

    std::vector<double> empirical(n_bins + 1, 0.0);
    std::size_t valid = 0;
    for (long b : bin_of) {
        if (b == -2) {
            ++out.failures;
            continue;
        }
        ++valid;
        empirical[b < 0 ? n_bins : static_cast<std::size_t>(b)] += 1.0;
    }
    if (valid == 0)
        throw std::runtime_error("measure_invariance_check: every trajectory failed");
    for (double& e : empirical)
        e /= static_cast<double>(valid);

    // Reference: |psi(., t)|^2 integrated over each bin, relative to the sampled mass.
    std::vector<double> nodes, weights;
    gauss_legendre(options.quadrature_order, nodes, weights);
    const Vec3 h = (region.hi - region.lo) / bins;
    // The s-state cusp at the nucleus needs sub-cells well below a typical bin size.
    std::array<int, 3> sub{};
    for (int a = 0; a < 3; ++a)
        sub[a] = std::max(1, static_cast<int>(std::ceil(h[a] / options.quadrature_cell)));
    const Vec3 g(h[0] / sub[0], h[1] / sub[1], h[2] / sub[2]);
    std::vector<double> reference(n_bins + 1, 0.0);
    double inside = 0.0;
    for (int i = 0; i < bins; ++i) {
        for (int j = 0; j < bins; ++j) {
            for (int k = 0; k < bins; ++k) {
                const Vec3 corner = region.lo + h.cwiseProduct(Vec3(i, j, k));
                double sum = 0.0;
                for (int si = 0; si < sub[0]; ++si)
                    for (int sj = 0; sj < sub[1]; ++sj)
                        for (int sk = 0; sk < sub[2]; ++sk) {
                            const Vec3 c0 = corner + g.cwiseProduct(Vec3(si, sj, sk));
                            for (std::size_t a = 0; a < nodes.size(); ++a)
                                for (std::size_t b = 0; b < nodes.size(); ++b)
                                    for (std::size_t c = 0; c < nodes.size(); ++c) {
                                        const Vec3 p = c0 + 0.5 * g.cwiseProduct(Vec3(
                                                                 nodes[a] + 1.0, nodes[b] + 1.0, nodes[c] + 1.0));
                                        sum += weights[a] * weights[b] * weights[c] * packet.density(p, t);
                                    }
                        }
                const double mass = sum * g.prod() / 8.0 / ensemble_mass;
                reference[(static_cast<std::size_t>(i) * bins + j) * bins + k] = mass;
                inside += mass;
            }
        }
    }
    reference[n_bins] = std::max(0.0, 1.0 - inside);

    double tv = 0.0;
    double floor = 0.0;
    for (std::size_t b = 0; b <= n_bins; ++b) {
        tv += std::abs(empirical[b] - reference[b]);
        const double q = std::clamp(reference[b], 0.0, 1.0);
        floor += std::sqrt(2.0 * q * (1.0 - q) / (M_PI * static_cast<double>(valid)));
        out.rows.push_back({static_cast<double>(b), empirical[b], reference[b]});
    }
    out.statistic = 0.5 * tv;
    out.extra["noise_floor"] = 0.5 * floor;
    out.extra["ensemble_mass"] = ensemble_mass;
    out.extra["outside_reference"] = reference[n_bins];
    out.extra["outside_empirical"] = empirical[n_bins];
    out.invalid = static_cast<double>(out.failures) > options.failure_limit * static_cast<double>(n_points);
    out.pass = !out.invalid && out.statistic < tolerance;
    return out;
}

CheckOutcome exponent_robustness_histogram(const VelocityProvider& provider, const Vec3& r0,
                                           const LyapunovConfig& lyap, const IntegratorConfig& cfg,
                                           const JitterOptions& jitter, double tolerance)
{
    if (jitter.repeats < 1)
        throw std::invalid_argument("exponent_robustness_histogram: need at least one repeat");
    CheckOutcome out;
    out.name = "exponent_robustness";
    out.tolerance = tolerance;
    out.columns = {"rel_tol", "renorm_interval", "lambda1", "verdict"};

    // Draw every setting up front so the result does not depend on the thread count.
    std::seed_seq seq{static_cast<std::uint32_t>(jitter.seed), static_cast<std::uint32_t>(jitter.seed >> 32),
                      0x6a77u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<IntegratorConfig> flows;
    std::vector<LyapunovConfig> lyaps;
    for (std::size_t i = 0; i < jitter.repeats; ++i) {
        flows.push_back(cfg.scaled(std::pow(10.0, jitter.tolerance_decades * unit(rng))));
        LyapunovConfig l = lyap;
        l.renorm_interval = lyap.renorm_interval * (1.0 + jitter.renorm_fraction * unit(rng));
        lyaps.push_back(l);
    }

    std::vector<std::optional<ConvergenceVerdict>> verdicts(jitter.repeats);
    parallel_for(jitter.repeats, jitter.jobs, [&](std::size_t i) {
        try {
            verdicts[i] = estimate_lambda1(provider, r0, canonical_frame(), lyaps[i], flows[i]).verdict;
        } catch (const NodeProximity&) {
        } catch (const StepUnderflow&) {
        }
    });

    // Undecided runs keep their finite-time lambda_1 at the cap; only failed integrations are dropped.
    std::vector<double> values;
    std::size_t undecided = 0;
    for (std::size_t i = 0; i < jitter.repeats; ++i) {
        const auto& v = verdicts[i];
        if (!v)
            ++out.failures;
        else
            values.push_back(v->lambda1_estimate);
        if (v && v->kind == Verdict::Undecided)
            ++undecided;
        const double kind = v ? static_cast<double>(v->kind) : -1.0;
        out.rows.push_back({flows[i].rel_tol, lyaps[i].renorm_interval,
                            v ? v->lambda1_estimate : std::numeric_limits<double>::quiet_NaN(), kind});
    }
    const double mean = population_mean(values);
    const double sigma = population_sigma(values, mean);
    out.extra["mean"] = mean;
    out.extra["sigma"] = sigma;
    out.extra["undecided"] = static_cast<double>(undecided);
    out.statistic = mean > 0.0 ? sigma / mean : sigma;
    out.invalid = values.empty() ||
                  static_cast<double>(out.failures) > jitter.failure_limit * static_cast<double>(jitter.repeats);
    out.pass = !out.invalid && out.statistic <= tolerance;
    return out;
}

WavepacketSpec perturb_coefficient(const WavepacketSpec& spec, std::size_t term, double perturbation)
{
    if (term >= spec.terms.size())
        throw std::invalid_argument("perturb_coefficient: term index out of range");
    // Shifting along the coefficient's own phase changes psi_0 by exactly perturbation * phi_k,
    // provided no other term carries the same quantum numbers.
    WavepacketSpec out = spec;
    Complex& c = out.terms[term].coefficient;
    const Complex dir = std::abs(c) > 0.0 ? c / std::abs(c) : Complex(1.0);
    c += perturbation * dir;
    return out;
}

WavepacketSpec admix_state(const WavepacketSpec& spec, const hydrogen::QuantumNumbers& qn, double perturbation)
{
    for (std::size_t k = 0; k < spec.terms.size(); ++k)
        if (spec.terms[k].qn == qn)
            return perturb_coefficient(spec, k, perturbation);
    WavepacketSpec out = spec;
    out.terms.push_back({Complex(perturbation), qn});
    return out;
}

CheckOutcome wavefunction_sensitivity(const WavepacketSpec& spec, double perturbation, const Vec3& r0,
                                      double t_max, const IntegratorConfig& cfg, const LyapunovConfig& lyap,
                                      const SensitivityOptions& options)
{
    if (!(options.sample_dt > 0.0) || !(t_max >= options.sample_dt) || !(options.saturation > 0.0))
        throw std::invalid_argument("wavefunction_sensitivity: invalid parameters");
    CheckOutcome out;
    out.name = "wavefunction_sensitivity";
    out.tolerance = options.factor;
    out.columns = {"t", "separation"};

    const WavepacketSpec perturbed_spec = options.admix ? admix_state(spec, *options.admix, perturbation)
                                                        : perturb_coefficient(spec, options.term, perturbation);
    const Wavepacket packet(spec);
    const Wavepacket perturbed(perturbed_spec);

    FlowIntegrator a(packet, cfg, false);
    FlowIntegrator b(perturbed, cfg, false);
    FlowState sa = FlowState::start(r0);
    FlowState sb = FlowState::start(r0);
    Lambda1Result reference;
    try {
        for (std::size_t k = 1; static_cast<double>(k) * options.sample_dt <= t_max * (1.0 + 1e-12); ++k) {
            const double t = static_cast<double>(k) * options.sample_dt;
            a.advance(sa, t);
            b.advance(sb, t);
            out.rows.push_back({t, (sa.r - sb.r).norm()});
        }
        reference = estimate_lambda1(packet, r0, canonical_frame(), lyap, cfg);
    } catch (const NodeProximity&) {
        mark_failed(out, "node");
        return out;
    } catch (const StepUnderflow&) {
        mark_failed(out, "underflow");
        return out;
    }

    // Growth window: the last stretch from saturation * 10^-decades up to the first saturation.
    const double d_lo = options.saturation * std::pow(10.0, -options.window_decades);
    std::size_t hi = out.rows.size();
    for (std::size_t i = 0; i < out.rows.size(); ++i)
        if (out.rows[i][1] >= options.saturation) {
            hi = i + 1;
            break;
        }
    std::optional<std::size_t> lo;
    for (std::size_t i = hi; i-- > 0;)
        if (out.rows[i][1] <= d_lo) {
            lo = i;
            break;
        }

    double rate = 0.0;
    bool exponential = false;
    if (lo && out.rows[hi - 1][1] > d_lo) {
        std::vector<double> t, logd;
        for (std::size_t i = *lo; i < hi; ++i)
            if (out.rows[i][1] > 0.0) {
                t.push_back(out.rows[i][0]);
                logd.push_back(std::log(out.rows[i][1]));
            }
        if (t.size() >= 2) {
            const LinearFit fit = llsa(t, logd);
            rate = fit.slope;
            exponential = rate > 0.0;
            out.extra["window_start"] = t.front();
            out.extra["window_end"] = t.back();
        }
    }

    // Log-log slope of the tail as a polynomial-growth indicator.
    double power = 0.0;
    {
        std::vector<double> lt, ld;
        for (const auto& row : out.rows)
            if (row[0] >= t_max / 10.0 && row[1] > 0.0) {
                lt.push_back(std::log(row[0]));
                ld.push_back(std::log(row[1]));
            }
        if (lt.size() >= 2)
            power = llsa(lt, ld).slope;
    }

    const double lambda1 = reference.verdict.lambda1_estimate;
    out.extra["rate"] = rate;
    out.extra["lambda1"] = lambda1;
    out.extra["verdict"] = static_cast<double>(reference.verdict.kind);
    out.extra["exponential"] = exponential ? 1.0 : 0.0;
    out.extra["power"] = power;
    out.extra["final_separation"] = out.rows.back()[1];

    if (reference.verdict.kind == Verdict::Chaotic && lambda1 > 0.0) {
        out.statistic = rate / lambda1;
        out.extra["ratio"] = out.statistic;
        out.pass = exponential && out.statistic >= 1.0 / options.factor && out.statistic <= options.factor;
    } else if (reference.verdict.kind == Verdict::Regular) {
        out.statistic = power;
        out.tolerance = options.max_power;
        out.pass = power <= options.max_power;
    } else {
        out.invalid = true;
        out.pass = false;
    }
    return out;
}

}  // namespace qflow
