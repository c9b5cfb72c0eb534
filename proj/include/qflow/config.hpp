#pragma once

// Run configuration: one YAML document holding the packet, integration,
// Lyapunov, sampling and validation settings. Serialization is canonical
// (fixed key order, shortest round-trip doubles), so parse(serialize(c))
// serializes to the same bytes.

#include <filesystem>
#include <memory>
#include <string>

#include "qflow/validate.hpp"

namespace qflow {

enum class FieldKind { Wavepacket, Zero, Linear };

/// Velocity field selector; the zero and linear fields serve as analytic test cases.
struct FieldSettings {
    FieldKind kind = FieldKind::Wavepacket;
    /// v = A r for the linear field.
    Mat3 matrix = Mat3::Zero();
};

std::string to_string(FieldKind k);
FieldKind field_kind_from_string(const std::string& s);

struct TraceSettings {
    Vec3 r0{1.0, 0.0, 0.0};
    double t_max = 2000.0;
};

struct ValidateSettings {
    double density_t_max = 500.0;
    double sum_rule_t_max = 10000.0;
    double sensitivity_t_max = 3000.0;
    double perturbation = 1e-4;
    /// Perturb by admixing this eigenstate instead of scaling the first coefficient.
    std::optional<hydrogen::QuantumNumbers> admix;
    std::size_t repeats = 100;
    double tolerance_decades = 0.5;
    double renorm_fraction = 0.2;
    std::size_t measure_points = 100000;
    int measure_bins = 10;
    double measure_time = 10.0;
    double measure_padding = 12.0;
};

struct RunConfig {
    FieldSettings field;
    WavepacketSpec packet = standard_packet();
    JacobianOptions jacobian;
    IntegratorConfig integrator;
    LyapunovConfig lyapunov;
    SamplingRegion region;
    SamplerOptions sampler;
    std::size_t samples = 300;
    std::uint64_t seed = 1;
    double failure_limit = 0.05;
    double start_time = 0.0;
    std::size_t checkpoint_every = 25;
    TraceSettings trace;
    ValidateSettings validation;
    /// Execution settings; not part of the digest.
    unsigned jobs = 1;
    std::string out = "results";

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;

    QleConfig qle_config() const;

    bool is_wavepacket() const noexcept { return field.kind == FieldKind::Wavepacket; }
};

/// Velocity field described by the configuration.
std::unique_ptr<VelocityProvider> make_provider(const RunConfig& cfg);

/// Density transported by that field: |psi|^2 for a packet, a unit initial density otherwise.
TimeDensity make_density(const RunConfig& cfg);

std::string serialize(const RunConfig& cfg);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// SHA-256 (hex) of the canonical serialization without the execution settings.
std::string config_digest(const RunConfig& cfg);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

}  // namespace qflow
