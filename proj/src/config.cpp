#include "qflow/config.hpp"

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qflow {

std::string format_double(double x)
{
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    if (res.ec != std::errc())
        throw std::runtime_error("format_double: conversion failed");
    return std::string(buf.data(), res.ptr);
}

std::string to_string(FieldKind k)
{
    switch (k) {
    case FieldKind::Wavepacket:
        return "wavepacket";
    case FieldKind::Zero:
        return "zero";
    case FieldKind::Linear:
        return "linear";
    }
    return "wavepacket";
}

FieldKind field_kind_from_string(const std::string& s)
{
    if (s == "wavepacket")
        return FieldKind::Wavepacket;
    if (s == "zero")
        return FieldKind::Zero;
    if (s == "linear")
        return FieldKind::Linear;
    throw std::invalid_argument("config: field.kind must be wavepacket, zero or linear");
}

namespace {

// Emits doubles through format_double so the text is locale-free and round-trips exactly.
struct Writer {
    YAML::Emitter out;

    void key(const char* k) { out << YAML::Key << k << YAML::Value; }
    void number(const char* k, double v)
    {
        key(k);
        out << format_double(v);
    }
    template <class T>
    void integer(const char* k, T v)
    {
        key(k);
        out << std::to_string(v);
    }
    void vec(const char* k, const Vec3& v)
    {
        key(k);
        out << YAML::Flow << YAML::BeginSeq << format_double(v.x()) << format_double(v.y()) << format_double(v.z())
            << YAML::EndSeq;
    }
    void begin(const char* k)
    {
        key(k);
        out << YAML::BeginMap;
    }
    void end() { out << YAML::EndMap; }
};

void emit(Writer& w, const RunConfig& c, bool with_execution)
{
    w.out << YAML::BeginMap;

    w.begin("field");
    w.key("kind");
    w.out << to_string(c.field.kind);
    w.key("matrix");
    w.out << YAML::BeginSeq;
    for (int i = 0; i < 3; ++i)
        w.out << YAML::Flow << YAML::BeginSeq << format_double(c.field.matrix(i, 0))
              << format_double(c.field.matrix(i, 1)) << format_double(c.field.matrix(i, 2)) << YAML::EndSeq;
    w.out << YAML::EndSeq;
    w.end();

    w.begin("packet");
    w.key("terms");
    w.out << YAML::BeginSeq;
    for (const auto& term : c.packet.terms)
        w.out << YAML::Flow << YAML::BeginSeq << format_double(term.coefficient.real())
              << format_double(term.coefficient.imag()) << std::to_string(term.qn.n) << std::to_string(term.qn.l)
              << std::to_string(term.qn.m) << YAML::EndSeq;
    w.out << YAML::EndSeq;
    if (c.packet.spin)
        w.vec("spin", c.packet.spin->direction);
    else {
        w.key("spin");
        w.out << YAML::Null;
    }
    w.end();

    w.begin("jacobian");
    w.key("scheme");
    w.out << (c.jacobian.scheme == JacobianScheme::Analytic ? "analytic" : "finite_difference");
    w.number("fd_step", c.jacobian.step);
    w.end();

    w.begin("integrator");
    w.number("rel_tol", c.integrator.rel_tol);
    w.number("abs_tol", c.integrator.abs_tol);
    w.number("initial_step", c.integrator.initial_step);
    w.number("max_step", c.integrator.max_step);
    w.number("max_time", c.integrator.max_time);
    w.end();

    w.begin("lyapunov");
    w.number("renorm_interval", c.lyapunov.renorm_interval);
    w.number("t_first", c.lyapunov.t_first);
    w.number("growth", c.lyapunov.growth);
    w.number("regular_threshold", c.lyapunov.criteria.regular_threshold);
    w.number("rmse_fraction", c.lyapunov.criteria.rmse_fraction);
    w.number("window_start", c.lyapunov.criteria.window_start);
    w.integer("sub_intervals", c.lyapunov.criteria.sub_intervals);
    w.end();

    w.begin("qle");
    w.integer("samples", c.samples);
    w.integer("seed", c.seed);
    w.number("failure_limit", c.failure_limit);
    w.number("start_time", c.start_time);
    w.integer("checkpoint_every", c.checkpoint_every);
    w.begin("region");
    w.vec("lo", c.region.lo);
    w.vec("hi", c.region.hi);
    w.end();
    w.begin("sampler");
    w.integer("grid", c.sampler.grid);
    w.number("margin", c.sampler.margin);
    w.integer("cells", c.sampler.cells);
    w.end();
    w.end();

    w.begin("trace");
    w.vec("r0", c.trace.r0);
    w.number("t_max", c.trace.t_max);
    w.end();

    w.begin("validate");
    w.number("density_t_max", c.validation.density_t_max);
    w.number("sum_rule_t_max", c.validation.sum_rule_t_max);
    w.number("sensitivity_t_max", c.validation.sensitivity_t_max);
    w.number("perturbation", c.validation.perturbation);
    w.key("admix");
    if (c.validation.admix)
        w.out << YAML::Flow << YAML::BeginSeq << std::to_string(c.validation.admix->n)
              << std::to_string(c.validation.admix->l) << std::to_string(c.validation.admix->m) << YAML::EndSeq;
    else
        w.out << YAML::Null;
    w.integer("repeats", c.validation.repeats);
    w.number("tolerance_decades", c.validation.tolerance_decades);
    w.number("renorm_fraction", c.validation.renorm_fraction);
    w.integer("measure_points", c.validation.measure_points);
    w.integer("measure_bins", c.validation.measure_bins);
    w.number("measure_time", c.validation.measure_time);
    w.number("measure_padding", c.validation.measure_padding);
    w.end();

    if (with_execution) {
        w.begin("run");
        w.integer("jobs", c.jobs);
        w.key("out");
        w.out << YAML::DoubleQuoted << c.out;
        w.end();
    }
    w.out << YAML::EndMap;
    if (!w.out.good())
        throw std::runtime_error("config serialization failed: " + w.out.GetLastError());
}

// Reads optional keys and rejects unknown ones so typos do not pass silently.
class Reader {
public:
    Reader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path))
    {
        if (node_ && !node_.IsNull() && !node_.IsMap())
            throw std::invalid_argument("config: '" + path_ + "' must be a mapping");
    }
    ~Reader() noexcept(false)
    {
        if (std::uncaught_exceptions() > 0 || !node_ || !node_.IsMap())
            return;
        for (const auto& kv : node_) {
            const auto k = kv.first.as<std::string>();
            if (!seen_.count(k))
                throw std::invalid_argument("config: unknown key '" + qualified(k) + "'");
        }
    }

    YAML::Node child(const char* k)
    {
        seen_.insert(k);
        return node_ && node_.IsMap() ? node_[k] : YAML::Node();
    }
    std::string qualified(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    template <class T>
    void get(const char* k, T& value)
    {
        const YAML::Node n = child(k);
        if (!n || n.IsNull())
            return;
        try {
            value = n.as<T>();
        } catch (const YAML::Exception&) {
            throw std::invalid_argument("config: bad value for '" + qualified(k) + "'");
        }
    }
    void get_vec(const char* k, Vec3& v)
    {
        const YAML::Node n = child(k);
        if (!n || n.IsNull())
            return;
        if (!n.IsSequence() || n.size() != 3)
            throw std::invalid_argument("config: '" + qualified(k) + "' must be a list of three numbers");
        for (std::size_t i = 0; i < 3; ++i)
            v[static_cast<int>(i)] = n[i].as<double>();
    }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> seen_;
};

void read(const YAML::Node& root, RunConfig& c)
{
    Reader top(root, "");
    {
        Reader r(top.child("field"), "field");
        std::string kind = to_string(c.field.kind);
        r.get("kind", kind);
        c.field.kind = field_kind_from_string(kind);
        const YAML::Node m = r.child("matrix");
        if (m && !m.IsNull()) {
            if (!m.IsSequence() || m.size() != 3)
                throw std::invalid_argument("config: field.matrix must be three rows of three numbers");
            for (std::size_t i = 0; i < 3; ++i) {
                if (!m[i].IsSequence() || m[i].size() != 3)
                    throw std::invalid_argument("config: field.matrix must be three rows of three numbers");
                for (std::size_t j = 0; j < 3; ++j)
                    c.field.matrix(static_cast<int>(i), static_cast<int>(j)) = m[i][j].as<double>();
            }
        }
    }
    {
        Reader r(top.child("packet"), "packet");
        const YAML::Node terms = r.child("terms");
        if (terms && !terms.IsNull()) {
            if (!terms.IsSequence())
                throw std::invalid_argument("config: packet.terms must be a list of [re, im, n, l, m]");
            c.packet.terms.clear();
            for (const auto& t : terms) {
                if (!t.IsSequence() || t.size() != 5)
                    throw std::invalid_argument("config: each packet term is [re, im, n, l, m]");
                c.packet.terms.push_back({Complex(t[0].as<double>(), t[1].as<double>()),
                                          {t[2].as<int>(), t[3].as<int>(), t[4].as<int>()}});
            }
        }
        const YAML::Node spin = r.child("spin");
        if (spin && !spin.IsNull()) {
            Vec3 s;
            if (!spin.IsSequence() || spin.size() != 3)
                throw std::invalid_argument("config: packet.spin must be null or [sx, sy, sz]");
            for (std::size_t i = 0; i < 3; ++i)
                s[static_cast<int>(i)] = spin[i].as<double>();
            c.packet.spin = SpinConfig{s};
        } else if (spin) {
            c.packet.spin.reset();
        }
    }
    {
        Reader r(top.child("jacobian"), "jacobian");
        std::string scheme = c.jacobian.scheme == JacobianScheme::Analytic ? "analytic" : "finite_difference";
        r.get("scheme", scheme);
        if (scheme == "analytic")
            c.jacobian.scheme = JacobianScheme::Analytic;
        else if (scheme == "finite_difference")
            c.jacobian.scheme = JacobianScheme::FiniteDifference;
        else
            throw std::invalid_argument("config: jacobian.scheme must be analytic or finite_difference");
        r.get("fd_step", c.jacobian.step);
    }
    {
        Reader r(top.child("integrator"), "integrator");
        r.get("rel_tol", c.integrator.rel_tol);
        r.get("abs_tol", c.integrator.abs_tol);
        r.get("initial_step", c.integrator.initial_step);
        r.get("max_step", c.integrator.max_step);
        r.get("max_time", c.integrator.max_time);
    }
    {
        Reader r(top.child("lyapunov"), "lyapunov");
        r.get("renorm_interval", c.lyapunov.renorm_interval);
        r.get("t_first", c.lyapunov.t_first);
        r.get("growth", c.lyapunov.growth);
        r.get("regular_threshold", c.lyapunov.criteria.regular_threshold);
        r.get("rmse_fraction", c.lyapunov.criteria.rmse_fraction);
        r.get("window_start", c.lyapunov.criteria.window_start);
        r.get("sub_intervals", c.lyapunov.criteria.sub_intervals);
    }
    {
        Reader r(top.child("qle"), "qle");
        r.get("samples", c.samples);
        r.get("seed", c.seed);
        r.get("failure_limit", c.failure_limit);
        r.get("start_time", c.start_time);
        r.get("checkpoint_every", c.checkpoint_every);
        {
            Reader g(r.child("region"), "qle.region");
            g.get_vec("lo", c.region.lo);
            g.get_vec("hi", c.region.hi);
        }
        {
            Reader s(r.child("sampler"), "qle.sampler");
            s.get("grid", c.sampler.grid);
            s.get("margin", c.sampler.margin);
            s.get("cells", c.sampler.cells);
        }
    }
    {
        Reader r(top.child("trace"), "trace");
        r.get_vec("r0", c.trace.r0);
        r.get("t_max", c.trace.t_max);
    }
    {
        Reader r(top.child("validate"), "validate");
        r.get("density_t_max", c.validation.density_t_max);
        r.get("sum_rule_t_max", c.validation.sum_rule_t_max);
        r.get("sensitivity_t_max", c.validation.sensitivity_t_max);
        r.get("perturbation", c.validation.perturbation);
        const YAML::Node admix = r.child("admix");
        if (admix && !admix.IsNull()) {
            if (!admix.IsSequence() || admix.size() != 3)
                throw std::invalid_argument("config: validate.admix must be null or [n, l, m]");
            c.validation.admix = hydrogen::QuantumNumbers{admix[0].as<int>(), admix[1].as<int>(), admix[2].as<int>()};
        } else if (admix) {
            c.validation.admix.reset();
        }
        r.get("repeats", c.validation.repeats);
        r.get("tolerance_decades", c.validation.tolerance_decades);
        r.get("renorm_fraction", c.validation.renorm_fraction);
        r.get("measure_points", c.validation.measure_points);
        r.get("measure_bins", c.validation.measure_bins);
        r.get("measure_time", c.validation.measure_time);
        r.get("measure_padding", c.validation.measure_padding);
    }
    {
        Reader r(top.child("run"), "run");
        r.get("jobs", c.jobs);
        r.get("out", c.out);
    }
}

}  // namespace

void RunConfig::validate() const
{
    packet.validate();
    if (!(jacobian.step > 0.0))
        throw std::invalid_argument("jacobian.fd_step must be positive");
    integrator.validate();
    lyapunov.validate();
    qle_config().validate();
    if (!(trace.t_max > 0.0))
        throw std::invalid_argument("trace.t_max must be positive");
    const auto& v = validation;
    if (v.admix)
        hydrogen::validate(*v.admix);
    if (!(v.density_t_max > 0.0) || !(v.sum_rule_t_max > 0.0) || !(v.sensitivity_t_max > 0.0) ||
        !(v.perturbation >= 0.0) || v.repeats < 1 || v.measure_points < 1 ||
        v.measure_bins < 1 || !(v.measure_time >= 0.0) || !(v.measure_padding >= 0.0) ||
        !(v.tolerance_decades >= 0.0) || !(v.renorm_fraction >= 0.0 && v.renorm_fraction < 1.0))
        throw std::invalid_argument("invalid validate settings");
    if (jobs < 1)
        throw std::invalid_argument("run.jobs must be at least 1");
}

QleConfig RunConfig::qle_config() const
{
    QleConfig q;
    q.region = region;
    q.samples = samples;
    q.seed = seed;
    q.jobs = jobs;
    q.flow = integrator;
    q.lyap = lyapunov;
    q.sampler = sampler;
    q.failure_limit = failure_limit;
    q.start_time = start_time;
    q.digest = config_digest(*this);
    return q;
}

std::unique_ptr<VelocityProvider> make_provider(const RunConfig& cfg)
{
    switch (cfg.field.kind) {
    case FieldKind::Zero:
        return std::make_unique<ZeroField>();
    case FieldKind::Linear:
        return std::make_unique<LinearField>(cfg.field.matrix);
    case FieldKind::Wavepacket:
        break;
    }
    return std::make_unique<Wavepacket>(cfg.packet, cfg.jacobian);
}

TimeDensity make_density(const RunConfig& cfg)
{
    if (cfg.is_wavepacket()) {
        auto packet = std::make_shared<Wavepacket>(cfg.packet, cfg.jacobian);
        return [packet](const Vec3& r, double t) { return packet->density(r, t); };
    }
    // A uniform initial density is compressed at the constant rate div v = tr A.
    const double trace = cfg.field.kind == FieldKind::Linear ? cfg.field.matrix.trace() : 0.0;
    return [trace](const Vec3&, double t) { return std::exp(-trace * t); };
}

std::string serialize(const RunConfig& cfg)
{
    Writer w;
    emit(w, cfg, true);
    return std::string(w.out.c_str()) + "\n";
}

RunConfig parse_config(const std::string& text)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw std::invalid_argument(std::string("config: YAML syntax error: ") + e.what());
    }
    RunConfig cfg;
    read(root, cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_digest(const RunConfig& cfg)
{
    Writer w;
    emit(w, cfg, false);
    const std::string text = w.out.c_str();
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("config_digest: SHA-256 failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i)
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

}  // namespace qflow
