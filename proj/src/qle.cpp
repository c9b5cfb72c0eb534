#include "qflow/qle.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace qflow {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint32_t tag)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
    return std::mt19937_64(seq);
}

struct Moments {
    double mean = 0.0;
    double std_error = 0.0;
};

Moments moments(const std::vector<double>& values)
{
    Moments m;
    if (values.empty())
        return m;
    double sum = 0.0;
    for (double v : values)
        sum += v;
    m.mean = sum / static_cast<double>(values.size());
    if (values.size() < 2)
        return m;
    double ss = 0.0;
    for (double v : values)
        ss += (v - m.mean) * (v - m.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    m.std_error = std::sqrt(var / static_cast<double>(values.size()));
    return m;
}

// Fill report statistics from records[0, n).
void summarize(QleReport& report, std::size_t n)
{
    report.n_samples = n;
    report.n_valid = 0;
    report.n_failed = 0;
    report.class_counts = {0, 0, 0};
    std::vector<double> lambdas;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = report.records[i];
        if (!rec.valid()) {
            ++report.n_failed;
            continue;
        }
        ++report.n_valid;
        ++report.class_counts[static_cast<std::size_t>(rec.region)];
        lambdas.push_back(rec.lambda1);
    }
    const Moments m = moments(lambdas);
    report.lambda_conditional = m.mean;
    report.conditional_std_error = m.std_error;
    const double scale = report.region_mass / report.norm;
    report.lambda_big = scale * m.mean;
    report.std_error = scale * m.std_error;
    report.invalid = n == 0 || static_cast<double>(report.n_failed) > report.failure_limit * static_cast<double>(n);
}

}  // namespace

void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights)
{
    nodes.assign(order, 0.0);
    weights.assign(order, 0.0);
    for (int i = 0; i < order; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= order; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = order * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15)
                break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= order; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        const double dp = order * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& body)
{
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < count; k = next++) {
            try {
                body(k);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                next = count;
            }
        }
    };
    const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(jobs, count));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back(worker);
    }
    if (error)
        std::rethrow_exception(error);
}

void SamplingRegion::validate() const
{
    for (int a = 0; a < 3; ++a)
        if (!(lo[a] < hi[a]))
            throw std::invalid_argument("sampling region needs lo < hi on every axis");
}

double SamplingRegion::volume() const { return (hi - lo).prod(); }

bool SamplingRegion::contains(const Vec3& p) const
{
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

SampleSet sample_initial_conditions(const DensityFunction& density, const SamplingRegion& region,
                                    std::size_t count, std::uint64_t rng_seed, const SamplerOptions& options)
{
    region.validate();
    if (count < 1)
        throw std::invalid_argument("sample count must be at least 1");
    if (options.grid < 2 || options.cells < 1 || !(options.margin >= 0.0))
        throw std::invalid_argument("invalid sampler options");

    // Piecewise-constant envelope: (1 + margin) * scanned maximum in each cell.
    const int nc = options.cells;
    const int g = options.grid;
    const Vec3 cell_extent = (region.hi - region.lo) / nc;
    const double cell_volume = cell_extent.prod();
    std::vector<double> env(static_cast<std::size_t>(nc) * nc * nc, 0.0);
    for (int ci = 0; ci < nc; ++ci) {
        for (int cj = 0; cj < nc; ++cj) {
            for (int ck = 0; ck < nc; ++ck) {
                const Vec3 corner = region.lo + cell_extent.cwiseProduct(Vec3(ci, cj, ck));
                double peak = 0.0;
                for (int i = 0; i < g; ++i)
                    for (int j = 0; j < g; ++j)
                        for (int k = 0; k < g; ++k) {
                            const Vec3 f(static_cast<double>(i) / (g - 1), static_cast<double>(j) / (g - 1),
                                         static_cast<double>(k) / (g - 1));
                            peak = std::max(peak, density(corner + cell_extent.cwiseProduct(f)));
                        }
                // Hydrogen densities peak at the nucleus.
                const SamplingRegion cell{corner, corner + cell_extent};
                if (cell.contains(Vec3::Zero()))
                    peak = std::max(peak, density(Vec3::Zero()));
                env[(static_cast<std::size_t>(ci) * nc + cj) * nc + ck] = (1.0 + options.margin) * peak;
            }
        }
    }

    SampleSet out;
    std::vector<double> cumulative(env.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < env.size(); ++c) {
        acc += env[c] * cell_volume;
        cumulative[c] = acc;
        out.envelope = std::max(out.envelope, env[c]);
    }
    out.envelope_mass = acc;
    if (!(acc > 0.0))
        throw std::invalid_argument("density vanishes on the sampling grid");
    out.points.reserve(count);

    auto rng = make_engine(rng_seed, 0x5a4du);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (out.points.size() < count) {
        std::size_t c = 0;
        if (env.size() > 1) {
            const double pick = unit(rng) * acc;
            c = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                         cumulative.begin());
            c = std::min(c, env.size() - 1);
        }
        const int ci = static_cast<int>(c / (static_cast<std::size_t>(nc) * nc));
        const int cj = static_cast<int>((c / nc) % nc);
        const int ck = static_cast<int>(c % nc);
        const Vec3 corner = region.lo + cell_extent.cwiseProduct(Vec3(ci, cj, ck));
        const Vec3 p(corner.x() + cell_extent.x() * unit(rng), corner.y() + cell_extent.y() * unit(rng),
                     corner.z() + cell_extent.z() * unit(rng));
        const double u = unit(rng) * env[c];
        ++out.proposals;
        const double rho = density(p);
        if (rho > env[c]) {
            std::ostringstream os;
            os << "density " << rho << " exceeds the sampling envelope " << env[c] << " at (" << p.x() << ", "
               << p.y() << ", " << p.z() << "); refine the scan grid or raise the margin";
            throw EnvelopeViolation(os.str());
        }
        if (u < rho)
            out.points.push_back(p);
    }
    return out;
}

SampleSet sample_initial_conditions(const WavepacketSpec& spec, const SamplingRegion& region, std::size_t count,
                                    std::uint64_t rng_seed, const SamplerOptions& options, double t)
{
    const Wavepacket packet(spec);
    return sample_initial_conditions([&](const Vec3& p) { return packet.density(p, t); }, region, count, rng_seed,
                                     options);
}

double region_mass(const DensityFunction& density, const SamplingRegion& region, double cell, int order)
{
    region.validate();
    if (!(cell > 0.0) || order < 1)
        throw std::invalid_argument("region_mass: invalid quadrature parameters");
    std::vector<double> nodes, weights;
    gauss_legendre(order, nodes, weights);

    std::array<int, 3> cells{};
    Vec3 h;
    for (int a = 0; a < 3; ++a) {
        const double extent = region.hi[a] - region.lo[a];
        cells[a] = std::max(1, static_cast<int>(std::ceil(extent / cell - 1e-9)));
        h[a] = extent / cells[a];
    }
    // Sum per cell first so the accumulation order is fixed.
    double total = 0.0;
    for (int i = 0; i < cells[0]; ++i) {
        for (int j = 0; j < cells[1]; ++j) {
            for (int k = 0; k < cells[2]; ++k) {
                const Vec3 corner = region.lo + Vec3(i * h.x(), j * h.y(), k * h.z());
                double cell_sum = 0.0;
                for (int a = 0; a < order; ++a) {
                    for (int b = 0; b < order; ++b) {
                        for (int c = 0; c < order; ++c) {
                            const Vec3 p = corner + 0.5 * Vec3(h.x() * (nodes[a] + 1.0), h.y() * (nodes[b] + 1.0),
                                                               h.z() * (nodes[c] + 1.0));
                            cell_sum += weights[a] * weights[b] * weights[c] * density(p);
                        }
                    }
                }
                total += cell_sum;
            }
        }
    }
    return total * h.prod() / 8.0;
}

RegionClass region_class(double lambda1)
{
    if (lambda1 <= 0.0)
        return RegionClass::Regular;
    return lambda1 < kMildChaosLimit ? RegionClass::MildlyChaotic : RegionClass::Chaotic;
}

std::string to_string(RegionClass c)
{
    switch (c) {
    case RegionClass::Regular:
        return "regular";
    case RegionClass::MildlyChaotic:
        return "mild";
    case RegionClass::Chaotic:
        return "chaotic";
    }
    return "regular";
}

RegionClass region_class_from_string(const std::string& s)
{
    if (s == "regular")
        return RegionClass::Regular;
    if (s == "mild")
        return RegionClass::MildlyChaotic;
    if (s == "chaotic")
        return RegionClass::Chaotic;
    throw std::invalid_argument("unknown region class: " + s);
}

std::string to_string(TrajectoryStatus s)
{
    switch (s) {
    case TrajectoryStatus::Ok:
        return "ok";
    case TrajectoryStatus::NodeProximity:
        return "node";
    case TrajectoryStatus::StepUnderflow:
        return "underflow";
    case TrajectoryStatus::Undecided:
        return "undecided";
    case TrajectoryStatus::Failed:
        return "failed";
    }
    return "failed";
}

TrajectoryStatus trajectory_status_from_string(const std::string& s)
{
    for (auto st : {TrajectoryStatus::Ok, TrajectoryStatus::NodeProximity, TrajectoryStatus::StepUnderflow,
                    TrajectoryStatus::Undecided, TrajectoryStatus::Failed})
        if (to_string(st) == s)
            return st;
    throw std::invalid_argument("unknown trajectory status: " + s);
}

void QleConfig::validate() const
{
    region.validate();
    flow.validate();
    lyap.validate();
    if (samples < 1)
        throw std::invalid_argument("need at least one sample");
    if (jobs < 1)
        throw std::invalid_argument("jobs must be at least 1");
    if (!(start_time >= 0.0))
        throw std::invalid_argument("start_time must be non-negative");
}

std::uint64_t stream_seed(std::uint64_t seed, std::size_t index)
{
    const auto idx = static_cast<std::uint64_t>(index);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

TrajectoryRecord evaluate_trajectory(const Wavepacket& packet, const Vec3& r0, std::size_t index,
                                     const QleConfig& cfg)
{
    TrajectoryRecord rec;
    rec.index = index;
    rec.r0 = r0;
    rec.seed = stream_seed(cfg.seed, index);
    const auto start = std::chrono::steady_clock::now();
    try {
        Vec3 origin = r0;
        if (cfg.start_time > 0.0)
            origin = flow_map(packet, r0, cfg.start_time, cfg.flow);
        const Lambda1Result res =
            estimate_lambda1(packet, origin, random_frame(rec.seed), cfg.lyap, cfg.flow, cfg.start_time);
        rec.verdict = res.verdict.kind;
        rec.fit_rmse = res.verdict.fit_rmse;
        rec.t_end = res.t_end;
        rec.steps = res.steps;
        if (res.verdict.kind == Verdict::Undecided) {
            rec.status = TrajectoryStatus::Undecided;
            rec.lambda1 = res.verdict.lambda1_estimate;
            rec.message = "no criterion met before max_time";
        } else {
            rec.lambda1 = res.verdict.lambda1_estimate;
            if (rec.lambda1 < 0.0) {
                // Largest exponents below -1e-3 would contradict the bounded-density sum rule.
                if (rec.lambda1 < -1e-3) {
                    rec.status = TrajectoryStatus::Failed;
                    rec.message = "negative leading exponent";
                }
                rec.lambda1 = std::max(rec.lambda1, 0.0);
            }
        }
    } catch (const NodeProximity& e) {
        rec.status = TrajectoryStatus::NodeProximity;
        rec.t_end = e.time();
        rec.message = e.what();
    } catch (const StepUnderflow& e) {
        rec.status = TrajectoryStatus::StepUnderflow;
        rec.t_end = e.time();
        rec.message = e.what();
    } catch (const std::exception& e) {
        rec.status = TrajectoryStatus::Failed;
        rec.message = e.what();
    }
    rec.region = region_class(rec.valid() ? rec.lambda1 : 0.0);
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

QleReport estimate_qle(const WavepacketSpec& spec, const QleConfig& cfg, const QleHooks& hooks)
{
    cfg.validate();
    const Wavepacket packet(spec);
    const auto rho0 = [&](const Vec3& p) { return packet.density(p, 0.0); };

    const SampleSet samples = sample_initial_conditions(rho0, cfg.region, cfg.samples, cfg.seed, cfg.sampler);

    QleReport report;
    report.config_digest = cfg.digest;
    report.failure_limit = cfg.failure_limit;
    report.norm = spec.norm_squared();
    report.region_mass = region_mass(rho0, cfg.region);
    report.sampler_mass = samples.mass_estimate();
    report.proposals = samples.proposals;

    const std::size_t n = cfg.samples;
    PartialRecords done = hooks.resume;
    done.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        if (done[i] && (done[i]->index != i || done[i]->r0 != samples.points[i]))
            throw std::invalid_argument("resume data does not match this configuration");

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < n; ++i)
        if (!done[i])
            pending.push_back(i);

    std::size_t finished = n - pending.size();
    const std::size_t chunk = hooks.checkpoint_every > 0 ? hooks.checkpoint_every : std::max<std::size_t>(n, 1);
    std::size_t cursor = 0;
    bool stopped = false;
    while (cursor < pending.size()) {
        std::size_t take = std::min(chunk, pending.size() - cursor);
        if (hooks.stop_after) {
            if (finished >= *hooks.stop_after) {
                stopped = true;
                break;
            }
            take = std::min(take, *hooks.stop_after - finished);
        }
        parallel_for(take, cfg.jobs, [&](std::size_t k) {
            const std::size_t idx = pending[cursor + k];
            done[idx] = evaluate_trajectory(packet, samples.points[idx], idx, cfg);
        });
        cursor += take;
        finished += take;
        if (hooks.checkpoint_every > 0 && hooks.on_checkpoint)
            hooks.on_checkpoint(done);
    }

    if (stopped || finished < n) {
        report.complete = false;
        for (auto& r : done)
            if (r)
                report.records.push_back(*r);
        return report;
    }
    report.records.reserve(n);
    for (auto& r : done)
        report.records.push_back(std::move(*r));
    summarize(report, n);
    return report;
}

QleReport aggregate(const QleReport& source, std::size_t n)
{
    if (n > source.records.size())
        throw std::invalid_argument("aggregate: not enough records");
    QleReport out = source;
    out.records.resize(n);
    summarize(out, n);
    return out;
}

std::vector<MapPoint> classification_map(const std::vector<TrajectoryRecord>& records, int axis, double lo,
                                         double hi)
{
    if (axis < 0 || axis > 2)
        throw std::invalid_argument("classification_map: axis must be 0, 1 or 2");
    const int first = axis == 0 ? 1 : 0;
    const int second = axis == 2 ? 1 : 2;
    std::vector<MapPoint> out;
    for (const auto& rec : records) {
        if (!rec.valid())
            continue;
        const double c = rec.r0[axis];
        if (c > lo && c < hi)
            out.push_back({rec.r0[first], rec.r0[second], rec.region});
    }
    return out;
}

double relative_spread(const std::vector<double>& values)
{
    if (values.empty())
        return 0.0;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    double mean = 0.0;
    for (double v : values)
        mean += v;
    mean /= static_cast<double>(values.size());
    if (mean == 0.0)
        return 0.0;
    return (*mx - *mn) / std::abs(mean);
}

RobustnessResult robustness_study(const WavepacketSpec& spec, const QleConfig& base,
                                  const std::vector<AccuracyVariant>& variants)
{
    if (variants.size() < 2)
        throw std::invalid_argument("robustness_study needs at least two variants");
    RobustnessResult out;
    std::vector<double> lambdas;
    for (const auto& v : variants) {
        QleConfig cfg = base;
        cfg.flow = v.flow;
        cfg.lyap = v.lyap;
        out.reports.push_back(estimate_qle(spec, cfg));
        lambdas.push_back(out.reports.back().lambda_big);
    }
    out.spread = relative_spread(lambdas);
    return out;
}

}  // namespace qflow
