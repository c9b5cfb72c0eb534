// qflow command-line front end.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 trajectory failure,
// 3 undecided at the time cap, 4 invalid report, 5 validation check failed.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "qflow/config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace qflow;

namespace {

enum Exit { kOk = 0, kUsage = 1, kTrajectory = 2, kUndecided = 3, kInvalid = 4, kCheckFailed = 5 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::optional<std::string> out;
    std::optional<double> t_max;
    std::optional<std::string> r0;
};

Vec3 parse_point(const std::string& text)
{
    std::stringstream ss(text);
    Vec3 p;
    char sep = 0;
    if (!(ss >> p.x() >> sep) || sep != ',' || !(ss >> p.y() >> sep) || sep != ',' || !(ss >> p.z()))
        throw UsageError("--r0 expects \"x,y,z\", got \"" + text + "\"");
    ss >> std::ws;
    if (!ss.eof())
        throw UsageError("--r0 expects \"x,y,z\", got \"" + text + "\"");
    return p;
}

RunConfig resolve(const CommonOptions& o)
{
    RunConfig cfg;
    try {
        if (!o.config.empty())
            cfg = load_config(o.config);
        if (o.seed)
            cfg.seed = *o.seed;
        if (o.jobs)
            cfg.jobs = *o.jobs;
        if (o.out)
            cfg.out = *o.out;
        if (o.r0)
            cfg.trace.r0 = parse_point(*o.r0);
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

void require_wavepacket(const RunConfig& cfg, const std::string& what)
{
    if (!cfg.is_wavepacket())
        throw UsageError(what + " needs field.kind = wavepacket");
}

fs::path output_dir(const RunConfig& cfg)
{
    fs::path dir(cfg.out);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + path.string());
        out << text;
    }
    fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& doc) { write_file(path, doc.dump(2) + "\n"); }

std::string num(double x) { return format_double(x); }

std::string quote(const std::string& s)
{
    std::string q = "\"";
    for (char c : s) {
        if (c == '"')
            q += '"';
        q += c == '\n' ? ' ' : c;
    }
    return q + "\"";
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json fit_json(const LinearFit& f)
{
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"rmse", f.rmse}, {"points", f.points}};
}

std::string series_csv(const ExponentSeries& s)
{
    std::ostringstream csv;
    csv << "t,lambda1,lambda2,lambda3,lambda_sum,local_rate\n";
    for (std::size_t k = 0; k < s.size(); ++k)
        csv << num(s.times[k]) << ',' << num(s.lambda[k][0]) << ',' << num(s.lambda[k][1]) << ','
            << num(s.lambda[k][2]) << ',' << num(s.sum(k)) << ',' << num(s.local_rates[k]) << '\n';
    return csv.str();
}

int report_trajectory_failure(const std::exception& e)
{
    std::cerr << "trajectory failure: " << e.what() << '\n';
    return kTrajectory;
}

// trace: position, density and exponents at every renormalization time.
int cmd_trace(const CommonOptions& o)
{
    RunConfig cfg = resolve(o);
    const double t_max = o.t_max.value_or(cfg.trace.t_max);
    if (!(t_max > 0.0))
        throw UsageError("--t-max must be positive");
    const auto provider = make_provider(cfg);
    const auto density = make_density(cfg);
    const fs::path dir = output_dir(cfg);

    BggsIntegrator run(*provider, cfg.trace.r0, cfg.lyapunov.renorm_interval, canonical_frame(), cfg.integrator);
    std::ostringstream csv;
    csv << "t,x,y,z,rho,lambda1,lambda2,lambda3,lambda_sum,local_rate\n";
    int code = kOk;
    std::string failure;
    try {
        const double dt = cfg.lyapunov.renorm_interval;
        for (std::size_t k = 1; static_cast<double>(k) * dt <= t_max * (1.0 + 1e-12); ++k) {
            run.extend_to(static_cast<double>(k) * dt);
            const auto& s = run.series();
            const std::size_t i = s.size() - 1;
            const FlowState& st = run.state();
            csv << num(s.times[i]) << ',' << num(st.r.x()) << ',' << num(st.r.y()) << ',' << num(st.r.z()) << ','
                << num(density(st.r, st.t)) << ',' << num(s.lambda[i][0]) << ',' << num(s.lambda[i][1]) << ','
                << num(s.lambda[i][2]) << ',' << num(s.sum(i)) << ',' << num(s.local_rates[i]) << '\n';
        }
    } catch (const NodeProximity& e) {
        failure = e.what();
        code = report_trajectory_failure(e);
    } catch (const StepUnderflow& e) {
        failure = e.what();
        code = report_trajectory_failure(e);
    }
    write_file(dir / "trace.csv", csv.str());
    json summary = {{"command", "trace"},
                    {"config_digest", config_digest(cfg)},
                    {"r0", vec_json(cfg.trace.r0)},
                    {"t_max", t_max},
                    {"t_reached", run.elapsed()},
                    {"steps", run.stats().accepted},
                    {"status", code == kOk ? "ok" : "failed"},
                    {"message", failure}};
    write_json(dir / "trace.json", summary);
    return code;
}

// lyapunov: classification loop over the t_k schedule.
int cmd_lyapunov(const CommonOptions& o)
{
    RunConfig cfg = resolve(o);
    if (o.t_max)
        cfg.integrator.max_time = *o.t_max;
    try {
        cfg.integrator.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto provider = make_provider(cfg);
    const fs::path dir = output_dir(cfg);

    Lambda1Result res;
    try {
        res = estimate_lambda1(*provider, cfg.trace.r0, canonical_frame(), cfg.lyapunov, cfg.integrator);
    } catch (const NodeProximity& e) {
        return report_trajectory_failure(e);
    } catch (const StepUnderflow& e) {
        return report_trajectory_failure(e);
    }
    write_file(dir / "series.csv", series_csv(res.series));
    json subs = json::array();
    for (const auto& f : res.verdict.sub_fits)
        subs.push_back(fit_json(f));
    json doc = {{"command", "lyapunov"},
                {"config_digest", config_digest(cfg)},
                {"r0", vec_json(cfg.trace.r0)},
                {"verdict", to_string(res.verdict.kind)},
                {"lambda1", res.verdict.lambda1_estimate},
                {"fit_rmse", res.verdict.fit_rmse},
                {"window", json::array({res.verdict.t_lo, res.verdict.t_hi})},
                {"product_fit", fit_json(res.verdict.product_fit)},
                {"sub_fits", subs},
                {"t_end", res.t_end},
                {"steps", res.steps}};
    write_json(dir / "verdict.json", doc);
    std::cout << to_string(res.verdict.kind) << " lambda1=" << num(res.verdict.lambda1_estimate)
              << " t_end=" << num(res.t_end) << '\n';
    return res.verdict.kind == Verdict::Undecided ? kUndecided : kOk;
}

json record_json(const TrajectoryRecord& r)
{
    return {{"index", r.index},   {"r0", vec_json(r.r0)},       {"status", to_string(r.status)},
            {"verdict", to_string(r.verdict)}, {"lambda1", r.lambda1}, {"fit_rmse", r.fit_rmse},
            {"t_end", r.t_end},   {"steps", r.steps},           {"region", to_string(r.region)},
            {"seed", r.seed},     {"wall_time", r.wall_time},   {"message", r.message}};
}

TrajectoryRecord record_from_json(const json& j)
{
    TrajectoryRecord r;
    r.index = j.at("index").get<std::size_t>();
    const auto& p = j.at("r0");
    r.r0 = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    r.status = trajectory_status_from_string(j.at("status").get<std::string>());
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    r.lambda1 = j.at("lambda1").get<double>();
    r.fit_rmse = j.at("fit_rmse").get<double>();
    r.t_end = j.at("t_end").get<double>();
    r.steps = j.at("steps").get<std::size_t>();
    r.region = region_class_from_string(j.at("region").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_time = j.at("wall_time").get<double>();
    r.message = j.at("message").get<std::string>();
    return r;
}

const char* kTrajectoryHeader = "index,x0,y0,z0,status,verdict,lambda1,fit_rmse,t_end,steps,region,seed,message\n";

std::string trajectories_csv(const std::vector<TrajectoryRecord>& records)
{
    std::ostringstream csv;
    csv << kTrajectoryHeader;
    for (const auto& r : records)
        csv << r.index << ',' << num(r.r0.x()) << ',' << num(r.r0.y()) << ',' << num(r.r0.z()) << ','
            << to_string(r.status) << ',' << to_string(r.verdict) << ',' << num(r.lambda1) << ','
            << num(r.fit_rmse) << ',' << num(r.t_end) << ',' << r.steps << ',' << to_string(r.region) << ','
            << r.seed << ',' << quote(r.message) << '\n';
    return csv.str();
}

json report_json(const QleReport& r)
{
    return {{"lambda_big", r.lambda_big},
            {"std_error", r.std_error},
            {"lambda_conditional", r.lambda_conditional},
            {"conditional_std_error", r.conditional_std_error},
            {"region_mass", r.region_mass},
            {"norm", r.norm},
            {"sampler_mass", r.sampler_mass},
            {"proposals", r.proposals},
            {"n_samples", r.n_samples},
            {"n_valid", r.n_valid},
            {"n_failed", r.n_failed},
            {"class_counts",
             {{"regular", r.class_counts[0]}, {"mildly_chaotic", r.class_counts[1]}, {"chaotic", r.class_counts[2]}}},
            {"failure_limit", r.failure_limit},
            {"invalid", r.invalid},
            {"config_digest", r.config_digest}};
}

struct QleRunOptions {
    bool resume = false;
    std::optional<std::size_t> stop_after;
};

// Runs (or resumes) the Monte Carlo estimate and writes report.json, trajectories.csv and timings.csv.
std::optional<QleReport> run_qle(const RunConfig& cfg, const QleRunOptions& opts)
{
    require_wavepacket(cfg, "qle");
    const fs::path dir = output_dir(cfg);
    const fs::path checkpoint = dir / "checkpoint.json";
    const QleConfig qcfg = cfg.qle_config();

    QleHooks hooks;
    if (opts.resume && fs::exists(checkpoint)) {
        std::ifstream in(checkpoint);
        const json doc = json::parse(in);
        if (doc.at("config_digest").get<std::string>() != qcfg.digest)
            throw UsageError("checkpoint in " + dir.string() + " belongs to a different configuration");
        hooks.resume.resize(cfg.samples);
        for (const auto& j : doc.at("records")) {
            TrajectoryRecord r = record_from_json(j);
            if (r.index >= cfg.samples)
                throw UsageError("checkpoint record index out of range");
            hooks.resume[r.index] = r;
        }
    }
    hooks.checkpoint_every = cfg.checkpoint_every;
    hooks.stop_after = opts.stop_after;
    hooks.on_checkpoint = [&](const PartialRecords& done) {
        json recs = json::array();
        for (const auto& r : done)
            if (r)
                recs.push_back(record_json(*r));
        write_json(checkpoint, {{"config_digest", qcfg.digest}, {"records", recs}});
    };

    const QleReport report = estimate_qle(cfg.packet, qcfg, hooks);
    if (!report.complete) {
        std::cout << "stopped after " << report.records.size() << " of " << cfg.samples
                  << " trajectories; rerun with --resume to continue\n";
        return std::nullopt;
    }
    write_json(dir / "report.json", report_json(report));
    write_file(dir / "trajectories.csv", trajectories_csv(report.records));
    std::ostringstream timings;
    timings << "index,wall_time\n";
    for (const auto& r : report.records)
        timings << r.index << ',' << num(r.wall_time) << '\n';
    write_file(dir / "timings.csv", timings.str());
    fs::remove(checkpoint);
    return report;
}

int cmd_qle(const CommonOptions& o, const QleRunOptions& opts)
{
    const RunConfig cfg = resolve(o);
    const auto report = run_qle(cfg, opts);
    if (!report)
        return kOk;
    std::cout << "Lambda1=" << num(report->lambda_big) << " +- " << num(report->std_error) << " (valid "
              << report->n_valid << "/" << report->n_samples << ")\n";
    return report->invalid ? kInvalid : kOk;
}

std::string outcome_csv(const CheckOutcome& c)
{
    std::ostringstream csv;
    for (std::size_t i = 0; i < c.columns.size(); ++i)
        csv << (i ? "," : "") << c.columns[i];
    csv << '\n';
    for (const auto& row : c.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            csv << (i ? "," : "") << num(row[i]);
        csv << '\n';
    }
    return csv.str();
}

const std::vector<std::string> kChecks = {"density_relation", "sum_rule", "measure_invariance", "robustness",
                                          "sensitivity"};

int cmd_validate(const CommonOptions& o, const std::string& check)
{
    RunConfig cfg = resolve(o);
    const auto& v = cfg.validation;
    const auto provider = make_provider(cfg);
    const Vec3 r0 = cfg.trace.r0;
    CheckOutcome out;
    if (check == "density_relation") {
        out = density_relation_check(*provider, make_density(cfg), r0, o.t_max.value_or(v.density_t_max),
                                     cfg.integrator, cfg.lyapunov.renorm_interval);
    } else if (check == "sum_rule") {
        out = sum_rule_check(*provider, r0, o.t_max.value_or(v.sum_rule_t_max), cfg.integrator,
                             cfg.lyapunov.renorm_interval);
    } else if (check == "measure_invariance") {
        require_wavepacket(cfg, "measure_invariance");
        MeasureOptions mo;
        mo.padding = v.measure_padding;
        mo.jobs = cfg.jobs;
        mo.failure_limit = cfg.failure_limit;
        out = measure_invariance_check(cfg.packet, cfg.region, v.measure_points, o.t_max.value_or(v.measure_time),
                                       v.measure_bins, cfg.seed, cfg.integrator, 0.05, mo);
    } else if (check == "robustness") {
        JitterOptions jo;
        jo.repeats = v.repeats;
        jo.tolerance_decades = v.tolerance_decades;
        jo.renorm_fraction = v.renorm_fraction;
        jo.seed = cfg.seed;
        jo.jobs = cfg.jobs;
        jo.failure_limit = cfg.failure_limit;
        LyapunovConfig lyap = cfg.lyapunov;
        IntegratorConfig flow = cfg.integrator;
        if (o.t_max)
            flow.max_time = *o.t_max;
        out = exponent_robustness_histogram(*provider, r0, lyap, flow, jo);
    } else if (check == "sensitivity") {
        require_wavepacket(cfg, "sensitivity");
        SensitivityOptions so;
        so.admix = v.admix;
        out = wavefunction_sensitivity(cfg.packet, v.perturbation, r0, o.t_max.value_or(v.sensitivity_t_max),
                                       cfg.integrator, cfg.lyapunov, so);
    } else {
        throw UsageError("unknown check '" + check + "'");
    }

    const fs::path dir = output_dir(cfg);
    write_file(dir / (check + ".csv"), outcome_csv(out));
    json doc = {{"check", check},
                {"name", out.name},
                {"statistic", out.statistic},
                {"tolerance", out.tolerance},
                {"pass", out.pass},
                {"failures", out.failures},
                {"invalid", out.invalid},
                {"extra", out.extra},
                {"r0", vec_json(r0)},
                {"config_digest", config_digest(cfg)}};
    write_json(dir / (check + ".json"), doc);
    std::cout << check << ": statistic=" << num(out.statistic) << " tolerance=" << num(out.tolerance) << ' '
              << (out.invalid ? "INVALID" : out.pass ? "PASS" : "FAIL") << '\n';
    if (out.invalid)
        return kInvalid;
    return out.pass ? kOk : kCheckFailed;
}

std::vector<TrajectoryRecord> read_trajectories(const fs::path& path)
{
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    if (line + "\n" != kTrajectoryHeader)
        throw UsageError(path.string() + " is not a trajectories file");
    std::vector<TrajectoryRecord> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        for (int i = 0; i < 12 && std::getline(ss, cell, ','); ++i)
            f.push_back(cell);
        if (f.size() < 12)
            throw UsageError("malformed row in " + path.string());
        TrajectoryRecord r;
        r.index = std::stoul(f[0]);
        r.r0 = Vec3(std::stod(f[1]), std::stod(f[2]), std::stod(f[3]));
        r.status = trajectory_status_from_string(f[4]);
        r.verdict = verdict_from_string(f[5]);
        r.lambda1 = std::stod(f[6]);
        r.region = region_class_from_string(f[10]);
        out.push_back(r);
    }
    return out;
}

// sensitivity-map: classes of initial conditions in a slab, projected on the other two axes.
int cmd_sensitivity_map(const CommonOptions& o, const std::string& axis_name, double lo, double hi)
{
    const RunConfig cfg = resolve(o);
    const std::string axes = "xyz";
    const auto axis = axes.find(axis_name);
    if (axis_name.size() != 1 || axis == std::string::npos)
        throw UsageError("--axis must be x, y or z");
    if (!(lo < hi))
        throw UsageError("--lo must be below --hi");

    const fs::path dir = output_dir(cfg);
    std::vector<TrajectoryRecord> records;
    int code = kOk;
    if (fs::exists(dir / "trajectories.csv")) {
        records = read_trajectories(dir / "trajectories.csv");
    } else {
        const auto report = run_qle(cfg, {});
        if (!report)
            return kOk;
        records = report->records;
        code = report->invalid ? kInvalid : kOk;
    }
    const auto points = classification_map(records, static_cast<int>(axis), lo, hi);
    std::string a, b;
    for (char c : axes)
        if (c != axis_name[0])
            (a.empty() ? a : b) = std::string(1, c);
    std::ostringstream csv;
    csv << a << ',' << b << ",class\n";
    std::array<std::size_t, 3> counts{0, 0, 0};
    for (const auto& p : points) {
        csv << num(p.a) << ',' << num(p.b) << ',' << to_string(p.region) << '\n';
        ++counts[static_cast<std::size_t>(p.region)];
    }
    write_file(dir / "map.csv", csv.str());
    std::cout << points.size() << " points in slab: regular " << counts[0] << ", mildly chaotic " << counts[1]
              << ", chaotic " << counts[2] << '\n';
    return code;
}

void add_common(CLI::App& app, CommonOptions& o)
{
    app.add_option("--config", o.config, "YAML run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Random seed (overrides qle.seed)");
    app.add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--t-max", o.t_max, "Integration horizon for the command");
    app.add_option("--r0", o.r0, "Initial point \"x,y,z\"");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Lyapunov exponents of de Broglie-Bohm trajectories in hydrogen wave-packets"};
    app.require_subcommand(1);
    CommonOptions common;

    auto* trace = app.add_subcommand("trace", "Dump one trajectory with its finite-time exponents");
    auto* lyap = app.add_subcommand("lyapunov", "Classify one trajectory and estimate lambda_1");
    auto* qle = app.add_subcommand("qle", "Monte Carlo estimate of the quantum Lyapunov exponent");
    auto* validate = app.add_subcommand("validate", "Run one consistency check");
    auto* map = app.add_subcommand("sensitivity-map", "Classification map of initial conditions in a slab");
    auto* show = app.add_subcommand("show-config", "Print the resolved configuration and its digest");
    for (auto* sub : {trace, lyap, qle, validate, map, show})
        add_common(*sub, common);

    QleRunOptions qle_opts;
    qle->add_flag("--resume", qle_opts.resume, "Continue from checkpoint.json in the output directory");
    qle->add_option("--stop-after", qle_opts.stop_after, "Stop once this many trajectories are done");

    std::string check;
    validate->add_option("check", check, "Check name")->required()->check(CLI::IsMember(kChecks));

    std::string axis = "x";
    double lo = -0.5, hi = 0.5;
    map->add_option("--axis", axis, "Slab normal (x, y or z)");
    map->add_option("--lo", lo, "Slab lower bound");
    map->add_option("--hi", hi, "Slab upper bound");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*trace)
            return cmd_trace(common);
        if (*lyap)
            return cmd_lyapunov(common);
        if (*qle)
            return cmd_qle(common, qle_opts);
        if (*validate)
            return cmd_validate(common, check);
        if (*map)
            return cmd_sensitivity_map(common, axis, lo, hi);
        if (*show) {
            const RunConfig cfg = resolve(common);
            std::cout << serialize(cfg) << "# digest: " << config_digest(cfg) << '\n';
            return kOk;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
