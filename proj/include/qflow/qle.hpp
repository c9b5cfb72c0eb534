#pragma once

// Monte Carlo estimate of the quantum Lyapunov exponent
//
//     Lambda_1 = (1/N) * integral over R of lambda_1(r0) rho_0(r0) dr0,
//
// with initial points drawn from rho_0 restricted to the box R by rejection
// sampling. The estimator is (mass of rho_0 in R / N) times the sample mean of
// lambda_1, where regular trajectories contribute zero.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qflow/lyapunov.hpp"
#include "qflow/wavepacket.hpp"

namespace qflow {

struct SamplingRegion {
    Vec3 lo{-9.0, -6.0, -8.0};
    Vec3 hi{9.0, 6.0, 8.0};

    void validate() const;
    double volume() const;
    bool contains(const Vec3& p) const;
};

struct SamplerOptions {
    /// Scan points per axis used to bound the density (per envelope cell when cells > 1).
    int grid = 65;
    /// Envelope = (1 + margin) * max of the scanned density.
    double margin = 0.1;
    /// Envelope cells per axis; 1 gives a single constant envelope over the region.
    int cells = 1;
};

using DensityFunction = std::function<double(const Vec3&)>;

struct SampleSet {
    std::vector<Vec3> points;
    std::size_t proposals = 0;
    /// Largest envelope value and the integral of the envelope over the region.
    double envelope = 0.0;
    double envelope_mass = 0.0;

    double acceptance() const { return proposals ? static_cast<double>(points.size()) / proposals : 0.0; }
    /// Rejection-sampling estimate of the integral of the density over the region.
    double mass_estimate() const { return acceptance() * envelope_mass; }
};

/// Thrown when an accepted proposal has a density above the envelope.
class EnvelopeViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

SampleSet sample_initial_conditions(const DensityFunction& density, const SamplingRegion& region,
                                    std::size_t count, std::uint64_t rng_seed, const SamplerOptions& options = {});

/// Samples |psi(r, t)|^2 restricted to the region.
SampleSet sample_initial_conditions(const WavepacketSpec& spec, const SamplingRegion& region, std::size_t count,
                                    std::uint64_t rng_seed, const SamplerOptions& options = {}, double t = 0.0);

/// Gauss-Legendre nodes and weights of the given order on [-1, 1].
void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights);

/// Runs body(i) for i in [0, count) on up to jobs threads; the first exception is rethrown.
void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& body);

/// Gauss-Legendre quadrature of the density over the region on cells of edge <= cell.
double region_mass(const DensityFunction& density, const SamplingRegion& region, double cell = 1.0,
                   int order = 6);

enum class RegionClass { Regular, MildlyChaotic, Chaotic };

/// Mildly chaotic below 1e-2.
inline constexpr double kMildChaosLimit = 1e-2;

RegionClass region_class(double lambda1);
std::string to_string(RegionClass c);
RegionClass region_class_from_string(const std::string& s);

enum class TrajectoryStatus { Ok, NodeProximity, StepUnderflow, Undecided, Failed };

std::string to_string(TrajectoryStatus s);
TrajectoryStatus trajectory_status_from_string(const std::string& s);

struct TrajectoryRecord {
    std::size_t index = 0;
    Vec3 r0 = Vec3::Zero();
    TrajectoryStatus status = TrajectoryStatus::Ok;
    Verdict verdict = Verdict::Undecided;
    double lambda1 = 0.0;
    double fit_rmse = 0.0;
    double t_end = 0.0;
    std::size_t steps = 0;
    RegionClass region = RegionClass::Regular;
    std::uint64_t seed = 0;
    double wall_time = 0.0;
    std::string message;

    bool valid() const noexcept { return status == TrajectoryStatus::Ok; }
};

struct QleConfig {
    SamplingRegion region;
    std::size_t samples = 300;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    IntegratorConfig flow;
    LyapunovConfig lyap;
    SamplerOptions sampler;
    /// Share of failed trajectories above which a report is flagged invalid.
    double failure_limit = 0.05;
    /// Trajectories start at this time from the rho_0 samples carried along the flow.
    double start_time = 0.0;
    /// Fingerprint of the originating run configuration, copied into the report.
    std::string digest;

    void validate() const;
};

struct QleReport {
    double lambda_big = 0.0;
    double std_error = 0.0;
    /// Sample mean and standard error of lambda_1 over valid trajectories (rho_0 conditioned on R).
    double lambda_conditional = 0.0;
    double conditional_std_error = 0.0;
    /// Integral of rho_0 over R (quadrature) and ||psi||^2.
    double region_mass = 0.0;
    double norm = 1.0;
    double sampler_mass = 0.0;
    std::size_t proposals = 0;
    std::size_t n_samples = 0;
    std::size_t n_valid = 0;
    std::size_t n_failed = 0;
    std::array<std::size_t, 3> class_counts{0, 0, 0};
    double failure_limit = 0.05;
    bool invalid = false;
    bool complete = true;
    std::string config_digest;
    std::vector<TrajectoryRecord> records;
};

using PartialRecords = std::vector<std::optional<TrajectoryRecord>>;

struct QleHooks {
    /// Records carried over from an interrupted run, indexed like the samples.
    PartialRecords resume;
    /// Invoke on_checkpoint after every this many newly finished trajectories (0 disables).
    std::size_t checkpoint_every = 0;
    std::function<void(const PartialRecords&)> on_checkpoint;
    /// Stop (report.complete = false) once this many trajectories are done in total.
    std::optional<std::size_t> stop_after;
};

/// Per-trajectory RNG stream seed derived from (run seed, index).
std::uint64_t stream_seed(std::uint64_t seed, std::size_t index);

/// lambda_1 of one trajectory; failures are captured in the record status.
TrajectoryRecord evaluate_trajectory(const Wavepacket& packet, const Vec3& r0, std::size_t index,
                                     const QleConfig& cfg);

QleReport estimate_qle(const WavepacketSpec& spec, const QleConfig& cfg, const QleHooks& hooks = {});

/// Recompute the aggregate statistics from the first n records of a finished report.
QleReport aggregate(const QleReport& source, std::size_t n);

struct MapPoint {
    double a = 0.0;
    double b = 0.0;
    RegionClass region = RegionClass::Regular;
};

/// Valid records with lo < r0[axis] < hi, projected onto the two remaining axes (in increasing axis order).
std::vector<MapPoint> classification_map(const std::vector<TrajectoryRecord>& records, int axis, double lo,
                                         double hi);

struct AccuracyVariant {
    IntegratorConfig flow;
    LyapunovConfig lyap;
};

struct RobustnessResult {
    std::vector<QleReport> reports;
    /// max |Lambda_i - Lambda_j| / mean Lambda (0 when the mean is 0).
    double spread = 0.0;
};

RobustnessResult robustness_study(const WavepacketSpec& spec, const QleConfig& base,
                                  const std::vector<AccuracyVariant>& variants);

double relative_spread(const std::vector<double>& values);

}  // namespace qflow
