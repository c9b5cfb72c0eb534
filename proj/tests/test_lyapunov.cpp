#include <doctest.h>

#include <cmath>
#include <vector>

#include "qflow/lyapunov.hpp"
#include "qflow/wavepacket.hpp"

using namespace qflow;

namespace {

const Vec3 kChaoticSeed(-0.59, -2.69, 0.80);

ExponentSeries synthetic(double t_max, double (*f)(double))
{
    ExponentSeries s;
    for (double t = 1.0; t <= t_max; t += 1.0) {
        s.times.push_back(t);
        s.lambda.push_back({f(t), 0.0, -f(t)});
        s.lambda_by_vector.push_back(s.lambda.back());
    }
    return s;
}

bool orthonormal(const Frame& f)
{
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (std::abs(f[i].dot(f[j]) - (i == j ? 1.0 : 0.0)) > 1e-12)
                return false;
    return true;
}

Mat3 diag(double a, double b, double c) { return Vec3(a, b, c).asDiagonal(); }

}  // namespace

TEST_SUITE("lyapunov")
{
    TEST_CASE("llsa")
    {
        const std::vector<double> t = {0, 1, 2, 3, 4};
        const std::vector<double> line = {1, 4, 7, 10, 13};
        LinearFit f = llsa(t, line);
        CHECK(f.slope == doctest::Approx(3.0));
        CHECK(f.intercept == doctest::Approx(1.0));
        CHECK(f.rmse < 1e-12);

        const std::vector<double> flat(5, 2.5);
        f = llsa(t, flat);
        CHECK(f.slope == doctest::Approx(0.0));
        CHECK(f.intercept == doctest::Approx(2.5));

        // Normal equations: slope 0.5, intercept 0.2, residuals (-0.2, 0.3, -0.2, 0.3, -0.2).
        const std::vector<double> y = {0, 1, 1, 2, 2};
        f = llsa(t, y);
        CHECK(f.slope == doctest::Approx(0.5));
        CHECK(f.intercept == doctest::Approx(0.2));
        CHECK(f.rmse == doctest::Approx(std::sqrt(0.06)));

        f = llsa(t, y, 1.0, 3.0);
        CHECK(f.points == 3);
        CHECK(f.slope == doctest::Approx(0.5));
        CHECK_THROWS_AS(llsa(t, y, 3.5, 10.0), std::invalid_argument);
    }

    TEST_CASE("spectrum via singular values")
    {
        Triple l = spectrum_via_svd(Mat3::Identity(), 1.0);
        CHECK(l[0] == 0.0);
        CHECK(l[2] == 0.0);
        l = spectrum_via_svd(diag(std::exp(-1.0), std::exp(1.0), 1.0), 1.0);
        CHECK(l[0] == doctest::Approx(1.0));
        CHECK(l[1] == doctest::Approx(0.0));
        CHECK(l[2] == doctest::Approx(-1.0));
        CHECK_THROWS_AS(spectrum_via_svd(diag(1, 1, 0), 1.0), std::invalid_argument);
        CHECK_THROWS_AS(spectrum_via_svd(Mat3::Identity(), 0.0), std::invalid_argument);
    }

    TEST_CASE("random frames are orthonormal and deterministic")
    {
        CHECK(orthonormal(random_frame(7)));
        CHECK(orthonormal(canonical_frame()));
        const Frame a = random_frame(42), b = random_frame(42), c = random_frame(43);
        CHECK(a[0] == b[0]);
        CHECK((a[0] - c[0]).norm() > 1e-3);
    }

    TEST_CASE("zero field has a vanishing spectrum")
    {
        const ExponentSeries s = bggs_spectrum(ZeroField{}, Vec3(1, 2, 3), 100.0, 1.0, canonical_frame(), {});
        REQUIRE(s.size() == 100);
        for (const auto& l : s.lambda)
            CHECK((std::abs(l[0]) + std::abs(l[1]) + std::abs(l[2])) == 0.0);
    }

    TEST_CASE("linear field converges to the real parts of its eigenvalues")
    {
        const LinearField field(diag(0.1, 0.0, -0.1));
        const ExponentSeries s = bggs_spectrum(field, Vec3(1, 1, 1), 1000.0, 1.0, canonical_frame(), {});
        const Triple& l = s.lambda.back();
        CHECK(std::abs(l[0] - 0.1) < 1e-4);
        CHECK(std::abs(l[1]) < 1e-4);
        CHECK(std::abs(l[2] + 0.1) < 1e-4);

        // A generic frame carries an O(ln(projection) / t) transient.
        const ExponentSeries r = bggs_spectrum(field, Vec3(1, 1, 1), 1000.0, 1.0, random_frame(3), {});
        CHECK(std::abs(r.lambda.back()[0] - 0.1) < 1e-2);
        CHECK(std::abs(r.lambda.back()[2] + 0.1) < 1e-2);
        for (const auto& v : r.lambda) {
            CHECK(v[0] >= v[1]);
            CHECK(v[1] >= v[2]);
        }
    }

    TEST_CASE("halving the renormalization interval on a linear field")
    {
        const LinearField field(diag(0.1, 0.0, -0.1));
        const double a = bggs_spectrum(field, Vec3(1, 1, 1), 500.0, 1.0, random_frame(5), {}).lambda.back()[0];
        const double b = bggs_spectrum(field, Vec3(1, 1, 1), 500.0, 0.5, random_frame(5), {}).lambda.back()[0];
        CHECK(std::abs(a - b) < 0.01 * a);
    }

    TEST_CASE("sum of exponents times t equals ln det U")
    {
        const Wavepacket wp(standard_packet());
        BggsIntegrator run(wp, kChaoticSeed, 1.0, random_frame(11), {});
        FlowIntegrator direct(wp, {});
        FlowState state = FlowState::start(kChaoticSeed);
        double worst = 0.0;
        for (double t = 20.0; t <= 200.0; t += 20.0) {
            run.extend_to(t);
            direct.advance(state, t);
            const double logdet = std::log(std::abs(state.u.determinant()));
            worst = std::max(worst, std::abs(run.series().sum(run.series().size() - 1) * t - logdet));
            CHECK(std::abs(run.log_volume_growth() - run.divergence_integral()) < 1e-6);
        }
        CHECK(worst < 1e-6);
    }

    TEST_CASE("BGGS against singular values at short times")
    {
        const Wavepacket wp(standard_packet());
        BggsIntegrator run(wp, kChaoticSeed, 1.0, canonical_frame(), {});
        FlowIntegrator direct(wp, {});
        FlowState state = FlowState::start(kChaoticSeed);
        for (double t = 10.0; t <= 50.0; t += 10.0) {
            run.extend_to(t);
            direct.advance(state, t);
            const Triple svd = spectrum_via_svd(state.u, t);
            const ExponentSeries& s = run.series();
            const std::size_t k = s.size() - 1;
            CHECK(std::abs(s.sum(k) - (svd[0] + svd[1] + svd[2])) < 1e-8);
            // The leading vector aligns with the top singular direction up to an O(1) angle factor.
            CHECK(s.lambda1(k) <= svd[0] + 1e-9);
            CHECK(svd[0] - s.lambda1(k) < 3.0 / t);
        }
    }

    TEST_CASE("classify synthetic series")
    {
        auto decay = [](double t) { return 1.0 / t; };
        ConvergenceVerdict v = classify(synthetic(1000, decay), 1000.0);
        CHECK(v.kind == Verdict::Regular);
        CHECK(v.lambda1_estimate == 0.0);
        CHECK(v.t_lo == doctest::Approx(400.0));
        CHECK(v.sub_fits.size() == 5);

        auto constant = [](double) { return 0.04; };
        v = classify(synthetic(1000, constant), 1000.0);
        CHECK(v.kind == Verdict::Chaotic);
        CHECK(v.lambda1_estimate == doctest::Approx(0.04));
        CHECK(v.fit_rmse < 1e-12);

        auto relaxing = [](double t) { return 0.01 + 0.5 / t; };
        v = classify(synthetic(1000, relaxing), 1000.0);
        CHECK(v.kind == Verdict::Chaotic);
        CHECK(v.lambda1_estimate >= 0.010);
        CHECK(v.lambda1_estimate <= 0.012);

        auto zero = [](double) { return 0.0; };
        CHECK(classify(synthetic(1000, zero), 1000.0).kind == Verdict::Regular);

        // Slowly oscillating lambda_1 t: neither criterion fires.
        auto wobble = [](double t) { return 0.01 * (1.0 + 0.8 * std::sin(t / 40.0)); };
        CHECK(classify(synthetic(1000, wobble), 1000.0).kind == Verdict::Undecided);

        CHECK_THROWS_AS(classify(synthetic(500, constant), 1000.0), std::invalid_argument);
    }

    TEST_CASE("logarithmic growth is not mistaken for chaos")
    {
        // lambda_1 t = ln(c t) gives rmse / (slope * window) of about 0.034 at every scale.
        auto shear = [](double t) { return std::log(3.0 * t) / t; };
        for (double t1 : {2000.0, 8000.0}) {
            const ConvergenceVerdict v = classify(synthetic(t1, shear), t1);
            CHECK(v.kind != Verdict::Chaotic);
            CHECK(v.fit_rmse / (v.product_fit.slope * (v.t_hi - v.t_lo)) > CriteriaParams{}.rmse_fraction);
        }
    }

    TEST_CASE("lyapunov config validation")
    {
        LyapunovConfig c;
        CHECK_NOTHROW(c.validate());
        c.growth = 1.0;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        c = LyapunovConfig{};
        c.t_first = 5.0;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        CHECK(verdict_from_string(to_string(Verdict::Chaotic)) == Verdict::Chaotic);
    }

    TEST_CASE("estimate_lambda1 on simple fields")
    {
        IntegratorConfig cfg;
        Lambda1Result r = estimate_lambda1(ZeroField{}, Vec3(1, 0, 0), canonical_frame(), {}, cfg);
        CHECK(r.verdict.kind == Verdict::Regular);
        CHECK(r.t_end == doctest::Approx(2000.0));

        r = estimate_lambda1(LinearField(diag(0.1, 0.0, -0.1)), Vec3(1, 1, 1), random_frame(2), {}, cfg);
        CHECK(r.verdict.kind == Verdict::Chaotic);
        CHECK(r.verdict.lambda1_estimate == doctest::Approx(0.1).epsilon(1e-4));
    }

    TEST_CASE("phi_211 orbits are regular")
    {
        const Wavepacket wp(eigenstate_packet({2, 1, 1}));
        const ExponentSeries s = bggs_spectrum(wp, Vec3(3.0, 1.0, 0.5), 1e4, 1.0, random_frame(9), {});
        CHECK(s.lambda.back()[0] < 2e-3);
        const Lambda1Result r = estimate_lambda1(wp, Vec3(3.0, 1.0, 0.5), random_frame(9), {}, {});
        CHECK(r.verdict.kind == Verdict::Regular);
    }

    TEST_CASE("chaotic estimate does not depend on the seed frame")
    {
        const Wavepacket wp(standard_packet());
        const Lambda1Result a = estimate_lambda1(wp, kChaoticSeed, random_frame(1), {}, {});
        const Lambda1Result b = estimate_lambda1(wp, kChaoticSeed, random_frame(2), {}, {});
        REQUIRE(a.verdict.kind == Verdict::Chaotic);
        REQUIRE(b.verdict.kind == Verdict::Chaotic);
        CHECK(a.verdict.lambda1_estimate >= 1e-2);
        CHECK(a.verdict.lambda1_estimate <= 0.05);
        const double mean = 0.5 * (a.verdict.lambda1_estimate + b.verdict.lambda1_estimate);
        CHECK(std::abs(a.verdict.lambda1_estimate - b.verdict.lambda1_estimate) < 0.1 * mean);
    }
}
