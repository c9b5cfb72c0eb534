#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/stl.h>
#include <pybind11/pybind11.h>

#include "qflow/config.hpp"
#include "qflow/validate.hpp"

namespace py = pybind11;
using namespace qflow;

namespace {

py::dict series_dict(const ExponentSeries& s)
{
    const auto n = static_cast<Eigen::Index>(s.size());
    Eigen::VectorXd t(n);
    Eigen::MatrixXd lambda(n, 3);
    for (Eigen::Index k = 0; k < n; ++k) {
        t[k] = s.times[static_cast<std::size_t>(k)];
        for (int i = 0; i < 3; ++i)
            lambda(k, i) = s.lambda[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
    }
    py::dict d;
    d["t"] = t;
    d["lambda"] = lambda;
    d["renorm_interval"] = s.renorm_interval;
    return d;
}

py::dict report_dict(const QleReport& r)
{
    py::dict d;
    d["lambda_big"] = r.lambda_big;
    d["std_error"] = r.std_error;
    d["lambda_conditional"] = r.lambda_conditional;
    d["region_mass"] = r.region_mass;
    d["n_samples"] = r.n_samples;
    d["n_valid"] = r.n_valid;
    d["n_failed"] = r.n_failed;
    d["class_counts"] = r.class_counts;
    d["invalid"] = r.invalid;
    py::list records;
    for (const auto& rec : r.records) {
        py::dict x;
        x["index"] = rec.index;
        x["r0"] = rec.r0;
        x["status"] = to_string(rec.status);
        x["verdict"] = to_string(rec.verdict);
        x["lambda1"] = rec.lambda1;
        x["t_end"] = rec.t_end;
        x["region"] = to_string(rec.region);
        records.append(x);
    }
    d["records"] = records;
    return d;
}

py::dict check_dict(const CheckOutcome& c)
{
    py::dict d;
    d["name"] = c.name;
    d["statistic"] = c.statistic;
    d["tolerance"] = c.tolerance;
    d["pass"] = c.pass;
    d["invalid"] = c.invalid;
    d["extra"] = c.extra;
    d["columns"] = c.columns;
    d["rows"] = c.rows;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Bohmian trajectories and Lyapunov exponents for hydrogen wave-packets";

    py::register_exception<NodeProximity>(m, "NodeProximity", PyExc_RuntimeError);
    py::register_exception<StepUnderflow>(m, "StepUnderflow", PyExc_RuntimeError);

    py::class_<hydrogen::QuantumNumbers>(m, "QuantumNumbers")
        .def(py::init([](int n, int l, int mm) { return hydrogen::QuantumNumbers{n, l, mm}; }), py::arg("n"),
             py::arg("l"), py::arg("m"))
        .def_readwrite("n", &hydrogen::QuantumNumbers::n)
        .def_readwrite("l", &hydrogen::QuantumNumbers::l)
        .def_readwrite("m", &hydrogen::QuantumNumbers::m)
        .def("__repr__", [](const hydrogen::QuantumNumbers& q) {
            return "QuantumNumbers(" + std::to_string(q.n) + ", " + std::to_string(q.l) + ", " +
                   std::to_string(q.m) + ")";
        });

    py::class_<WavepacketSpec>(m, "WavepacketSpec")
        .def(py::init([](const std::vector<std::pair<Complex, hydrogen::QuantumNumbers>>& terms,
                         std::optional<Vec3> spin) {
                 WavepacketSpec s;
                 for (const auto& [c, qn] : terms)
                     s.terms.push_back({c, qn});
                 if (spin)
                     s.spin = SpinConfig{*spin};
                 s.validate();
                 return s;
             }),
             py::arg("terms"), py::arg("spin") = py::none())
        .def_property_readonly("terms",
                               [](const WavepacketSpec& s) {
                                   std::vector<std::pair<Complex, hydrogen::QuantumNumbers>> out;
                                   for (const auto& t : s.terms)
                                       out.emplace_back(t.coefficient, t.qn);
                                   return out;
                               })
        .def_property_readonly("spin",
                               [](const WavepacketSpec& s) -> std::optional<Vec3> {
                                   if (s.spin)
                                       return s.spin->direction;
                                   return std::nullopt;
                               })
        .def("norm_squared", &WavepacketSpec::norm_squared);

    m.def("standard_packet", &standard_packet);
    m.def("spin_packet", &spin_packet);
    m.def("eigenstate_packet", [](const hydrogen::QuantumNumbers& qn) { return eigenstate_packet(qn); });

    py::class_<Wavepacket>(m, "Wavepacket")
        .def(py::init([](const WavepacketSpec& s) { return Wavepacket(s); }))
        .def("psi", &Wavepacket::psi, py::arg("r"), py::arg("t"))
        .def("density", &Wavepacket::density, py::arg("r"), py::arg("t"))
        .def("velocity", &Wavepacket::velocity, py::arg("r"), py::arg("t"))
        .def("jacobian", &Wavepacket::jacobian, py::arg("r"), py::arg("t"))
        .def("divergence", &Wavepacket::divergence, py::arg("r"), py::arg("t"));

    py::class_<IntegratorConfig>(m, "IntegratorConfig")
        .def(py::init<>())
        .def_readwrite("rel_tol", &IntegratorConfig::rel_tol)
        .def_readwrite("abs_tol", &IntegratorConfig::abs_tol)
        .def_readwrite("initial_step", &IntegratorConfig::initial_step)
        .def_readwrite("max_step", &IntegratorConfig::max_step)
        .def_readwrite("max_time", &IntegratorConfig::max_time);

    py::class_<LyapunovConfig>(m, "LyapunovConfig")
        .def(py::init<>())
        .def_readwrite("renorm_interval", &LyapunovConfig::renorm_interval)
        .def_readwrite("t_first", &LyapunovConfig::t_first)
        .def_readwrite("growth", &LyapunovConfig::growth)
        .def_property(
            "regular_threshold", [](const LyapunovConfig& c) { return c.criteria.regular_threshold; },
            [](LyapunovConfig& c, double v) { c.criteria.regular_threshold = v; })
        .def_property(
            "rmse_fraction", [](const LyapunovConfig& c) { return c.criteria.rmse_fraction; },
            [](LyapunovConfig& c, double v) { c.criteria.rmse_fraction = v; });

    m.def(
        "flow_map",
        [](const WavepacketSpec& s, const Vec3& r0, double t, const IntegratorConfig& cfg, double t0) {
            return flow_map(Wavepacket(s), r0, t, cfg, t0);
        },
        py::arg("spec"), py::arg("r0"), py::arg("t"), py::arg("cfg") = IntegratorConfig{}, py::arg("t0") = 0.0,
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "bggs_spectrum",
        [](const WavepacketSpec& s, const Vec3& r0, double t_max, double renorm, std::uint64_t frame_seed,
           const IntegratorConfig& cfg) {
            ExponentSeries series;
            {
                py::gil_scoped_release release;
                series = bggs_spectrum(Wavepacket(s), r0, t_max, renorm, random_frame(frame_seed), cfg);
            }
            return series_dict(series);
        },
        py::arg("spec"), py::arg("r0"), py::arg("t_max"), py::arg("renorm_interval") = 1.0,
        py::arg("frame_seed") = 1, py::arg("cfg") = IntegratorConfig{});

    m.def(
        "estimate_lambda1",
        [](const WavepacketSpec& s, const Vec3& r0, const LyapunovConfig& lyap, const IntegratorConfig& cfg,
           std::uint64_t frame_seed) {
            Lambda1Result r;
            {
                py::gil_scoped_release release;
                r = estimate_lambda1(Wavepacket(s), r0, random_frame(frame_seed), lyap, cfg);
            }
            py::dict d;
            d["verdict"] = to_string(r.verdict.kind);
            d["lambda1"] = r.verdict.lambda1_estimate;
            d["fit_rmse"] = r.verdict.fit_rmse;
            d["t_end"] = r.t_end;
            d["series"] = series_dict(r.series);
            return d;
        },
        py::arg("spec"), py::arg("r0"), py::arg("lyap") = LyapunovConfig{}, py::arg("cfg") = IntegratorConfig{},
        py::arg("frame_seed") = 1);

    m.def(
        "estimate_qle",
        [](const WavepacketSpec& s, std::size_t samples, std::uint64_t seed, unsigned jobs,
           const LyapunovConfig& lyap, const IntegratorConfig& cfg) {
            QleConfig q;
            q.samples = samples;
            q.seed = seed;
            q.jobs = jobs;
            q.lyap = lyap;
            q.flow = cfg;
            QleReport r;
            {
                py::gil_scoped_release release;
                r = estimate_qle(s, q);
            }
            return report_dict(r);
        },
        py::arg("spec"), py::arg("samples"), py::arg("seed") = 1, py::arg("jobs") = 1,
        py::arg("lyap") = LyapunovConfig{}, py::arg("cfg") = IntegratorConfig{});

    m.def(
        "sample_initial_conditions",
        [](const WavepacketSpec& s, std::size_t count, std::uint64_t seed) {
            const auto set = sample_initial_conditions(s, SamplingRegion{}, count, seed);
            Eigen::MatrixXd pts(static_cast<Eigen::Index>(set.points.size()), 3);
            for (std::size_t i = 0; i < set.points.size(); ++i)
                pts.row(static_cast<Eigen::Index>(i)) = set.points[i].transpose();
            return pts;
        },
        py::arg("spec"), py::arg("count"), py::arg("seed") = 1);

    m.def(
        "density_relation_check",
        [](const WavepacketSpec& s, const Vec3& r0, double t_max, const IntegratorConfig& cfg) {
            return check_dict(density_relation_check(s, r0, t_max, cfg));
        },
        py::arg("spec"), py::arg("r0"), py::arg("t_max"), py::arg("cfg") = IntegratorConfig{});

    m.def(
        "sum_rule_check",
        [](const WavepacketSpec& s, const Vec3& r0, double t_max, const IntegratorConfig& cfg) {
            return check_dict(sum_rule_check(Wavepacket(s), r0, t_max, cfg));
        },
        py::arg("spec"), py::arg("r0"), py::arg("t_max"), py::arg("cfg") = IntegratorConfig{});

    m.def(
        "config_digest", [](const std::string& text) { return config_digest(parse_config(text)); },
        py::arg("yaml_text"));
    m.def(
        "canonical_config", [](const std::string& text) { return serialize(parse_config(text)); },
        py::arg("yaml_text") = "");
}
