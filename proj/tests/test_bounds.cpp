#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include <liouville_flow/bounds.hpp>
#include <liouville_flow/density_erm.hpp>

using namespace liouville_flow;

namespace
{
constexpr double ninf = -std::numeric_limits<double>::infinity();
}

TEST(Radius, ClosedFormMatchesRecursion)
{
    for (int W : {1, 2, 7, 64}) {
        const auto r = log_radius_recursive(64, W);
        for (int l = 0; l < 64; ++l) {
            const double closed = log_radius(l, W);
            EXPECT_LE(std::abs(r[static_cast<std::size_t>(l)] - closed), 1e-12 * std::max(1.0, std::abs(closed)))
                << "W=" << W << " l=" << l;
        }
    }
}

TEST(Ledger, LambdaExample)
{
    const auto b = capacity_ledger(1, 1, 2, 0.02);
    EXPECT_NEAR(b.log_lambda, std::log(8.0 * std::sqrt(5.0)), 1e-12);
    EXPECT_TRUE(guard_step_size_log(0.02, b.log_lambda));
}

TEST(Ledger, RemarkInequalitiesOnSweep)
{
    for (int L = 1; L <= 4; ++L) {
        for (int W = 1; W <= 8; ++W) {
            for (double h : {0.001, 0.01, 0.1, 0.5}) {
                const auto b = capacity_ledger(2, L, W, h);
                EXPECT_TRUE(b.eta_theta_dominated()) << L << "," << W;
                EXPECT_TRUE(b.deta_theta_dominated()) << L << "," << W;
                EXPECT_TRUE(b.psi_omega_dominated()) << L << "," << W << "," << h;
            }
        }
    }
}

TEST(Ledger, LambdaMonotone)
{
    for (int L = 1; L <= 6; ++L) {
        for (int W = 1; W <= 10; ++W) {
            const double here = capacity_ledger(1, L, W, 0.1).log_lambda;
            EXPECT_LE(here, capacity_ledger(1, L, W + 1, 0.1).log_lambda);
            EXPECT_LE(here, capacity_ledger(1, L + 1, W, 0.1).log_lambda);
        }
    }
}

TEST(Ledger, FiniteUpToSixtyFour)
{
    for (int L : {1, 8, 32, 64}) {
        for (int W : {1, 16, 64}) {
            for (int d : {1, 2}) {
                const auto b = capacity_ledger(d, L, W, 0.01);
                for (const double v : {b.log_lambda, b.log_eta_theta, b.log_eta_omega, b.log_deta_theta,
                                       b.log_deta_omega, b.log_psi_omega, b.log_psi_theta, b.log_d}) {
                    EXPECT_TRUE(std::isfinite(v)) << L << "," << W;
                }
                EXPECT_TRUE(b.rk_theta.finite());
                EXPECT_TRUE(b.lambda_z.finite());
                const auto j = ledger_to_json(b);
                EXPECT_EQ(j["Lambda_Z"]["decimal"].get<std::string>().rfind("exp(", 0), 0u);
                const double tail = mcdiarmid_tail(0.1, 1e6, d, b.log_lambda);
                EXPECT_TRUE(std::isfinite(tail));
                EXPECT_TRUE(expected_gen_bound(L, W, b.lambda_z, 1e6).finite());
            }
        }
    }
}

TEST(LogMagnitude, ProductAcrossOverflow)
{
    const auto big = log_magnitude::from_loglog(800.0);
    EXPECT_TRUE(big.overflowed());
    const auto p = big * log_magnitude::from_log(3.0);
    EXPECT_NEAR(p.loglog(), 800.0, 1e-12);
    const auto q = log_magnitude::from_loglog(2.0) * log_magnitude::from_log(1.0);
    EXPECT_NEAR(q.log(), std::exp(2.0) + 1.0, 1e-12);
    EXPECT_TRUE(log_magnitude::from_log(5.0) <= big);
    EXPECT_FALSE(big <= log_magnitude::from_log(5.0));
    EXPECT_EQ(log_magnitude::from_log(2.5).decimal(), "exp(2.500000)");
}

TEST(KofW, Examples)
{
    EXPECT_EQ(K_of_W(96, 1), 0);
    EXPECT_EQ(K_of_W(69984, 1), 9);
    EXPECT_EQ(K_of_W(69983, 1), 8);
    int prev = 0;
    for (long long W = 1; W < 200000; W += 997) {
        const int K = K_of_W(W, 2);
        EXPECT_GE(K, prev);
        prev = K;
    }
}

TEST(LogdetDiscretization, Limits)
{
    EXPECT_EQ(logdet_discretization_bound(ninf, 0.1, 2), ninf);
    const double h = 0.01;
    const double c = 3.7;
    EXPECT_NEAR(logdet_discretization_bound(std::log(c), h, 1), std::log(2 * h * h * c), 1e-12);
    const double ratio =
        std::exp(logdet_discretization_bound(std::log(c), 1e-4, 3) - logdet_discretization_bound(std::log(c), 5e-5, 3));
    EXPECT_NEAR(ratio, 4.0, 1e-6);
}

TEST(Subgaussian, Examples)
{
    EXPECT_NEAR(subgaussian_constant(1, 0.0).log(), std::log(8.0) + 1.0, 1e-14);
    EXPECT_NEAR(subgaussian_constant(1, 0.0).log(), 3.0794, 1e-4);
    EXPECT_LT(subgaussian_constant(1, 0.5).log(), subgaussian_constant(1, 0.6).log());
    // Linear in d apart from the log(8d) term.
    for (double ll : {-1.0, 0.0, 2.0}) {
        EXPECT_NEAR(subgaussian_constant(2, ll).log() - 2 * subgaussian_constant(1, ll).log(), 2 * std::log(2.0), 1e-12);
    }
    EXPECT_NEAR(subgaussian_constant(1, 0.0, subgaussian_exponent::learnability_proof).log(), std::log(8.0) + 1.0,
                1e-14);
    EXPECT_NEAR(subgaussian_constant(1, 1.0, subgaussian_exponent::learnability_proof).log() -
                    subgaussian_constant(1, 1.0).log(),
                1.0, 1e-12);
}

TEST(GeneralizationBound, Examples)
{
    const auto one = log_magnitude::from_log(0.0);
    EXPECT_NEAR(expected_gen_bound(1, 1, one, 1).log(), std::log(48.0), 1e-14);
    EXPECT_NEAR(expected_gen_bound(2, 3, one, 100).log() - expected_gen_bound(2, 3, one, 400).log(), std::log(2.0),
                1e-13);
    EXPECT_LT(expected_gen_bound(1, 2, one, 10).log(), expected_gen_bound(2, 2, one, 10).log());
    EXPECT_LT(expected_gen_bound(1, 2, one, 10).log(), expected_gen_bound(1, 3, one, 10).log());
}

TEST(McDiarmid, Examples)
{
    EXPECT_NEAR(mcdiarmid_tail(1.0, 16, 1, 0.0), -0.25, 1e-15);
    EXPECT_NEAR(mcdiarmid_tail(0.3, 200, 2, 0.4), 2 * mcdiarmid_tail(0.3, 100, 2, 0.4), 1e-15);
    EXPECT_GT(mcdiarmid_tail(1e-9, 16, 1, 0.0), -1e-15);
    EXPECT_THROW(mcdiarmid_tail(0.0, 16, 1, 0.0), invalid_argument);
}

TEST(PacSchedule, SpecExample)
{
    const auto s = pac_schedule(1e6, 0.5, 2);
    EXPECT_EQ(s.h, 1.0);
    EXPECT_EQ(s.W, 1);
    EXPECT_FALSE(s.feasible);
    EXPECT_FALSE(s.warning.empty());
}

// Frozen from tests/oracles/pac_oracle.py (mpmath, 60 digits).
TEST(PacSchedule, MatchesOracle)
{
    struct row {
        double ln_n, p;
        int d;
        long long steps, W;
        int K, L;
        bool feasible;
    };
    const row rows[] = {{std::log(1e300), 0.5, 1, 87, 82, 0, 0, false},
                        {400, 0.01, 1, 99, 1, 0, 1, true},
                        {300, 0.005, 1, 75, 1, 0, 1, true},
                        {1000, 0.004, 2, 125, 1, 0, 1, true}};
    for (const auto &r : rows) {
        const auto s = pac_schedule_log(r.ln_n, r.p, r.d);
        EXPECT_EQ(s.steps, r.steps);
        EXPECT_EQ(s.W, r.W);
        EXPECT_EQ(s.K, r.K);
        EXPECT_EQ(s.L, r.L);
        EXPECT_EQ(s.feasible, r.feasible);
        if (r.feasible) {
            EXPECT_NEAR(s.log_lambda, 1.4978661367769955, 1e-13);
            EXPECT_TRUE(s.guard_feasible);
        }
    }
}

TEST(PacSchedule, MonotoneInN)
{
    long long prev_w = 0;
    double prev_h = 2.0;
    for (double ln_n = 2.0; ln_n < 3000; ln_n *= 1.3) {
        const auto s = pac_schedule_log(ln_n, 0.3, 2);
        EXPECT_GE(s.W, prev_w);
        EXPECT_LE(s.h, prev_h);
        prev_w = s.W;
        prev_h = s.h;
    }
}

// Frozen from tests/oracles/pac_oracle.py.
TEST(PacSampleSize, MatchesOracle)
{
    struct row {
        double eps, delta, p;
        int d, k;
        double c_h, c_h_hat, n_tilde, log_c, log_n;
    };
    const row rows[] = {
        {0.5, 0.1, 0.5, 2, 4, 1, 1, 0, 11.097909162418436, 264131.80622444245},
        {0.1, 0.05, 0.5, 1, 4, 1, 1, 0, 13.345302723626782, 53853.535307655779},
        {0.9, 0.5, 0.25, 1, 6, 2, 3, 10, 24.668015629392636, 338832.66902506811},
        {0.3, 0.01, 0.75, 2, 8, 0.5, 0.1, 1000, 24.246825380054765, 475428.92828653215},
        {0.05, 0.2, 0.1, 3, 5, 1, 1, 0, 14.495312244474556, 78939452.978443838},
    };
    for (const auto &r : rows) {
        const auto s = pac_sample_size(r.eps, r.delta, r.p, r.d, r.k, std::log(r.c_h), std::log(r.c_h_hat), r.n_tilde);
        EXPECT_NEAR(s.log_c, r.log_c, 1e-13 * r.log_c);
        EXPECT_NEAR(s.log_n, r.log_n, 1e-12 * r.log_n);
        EXPECT_FALSE(s.n.has_value());
    }
}

TEST(PacSampleSize, Monotone)
{
    double prev = 1e300;
    for (double eps = 0.05; eps < 1.0; eps += 0.1) {
        const double v = pac_sample_size(eps, 0.1, 0.5, 2, 4, 0.0, 0.0, 0).log_n;
        EXPECT_LE(v, prev);
        prev = v;
    }
    prev = 1e300;
    for (double delta = 0.01; delta < 1.0; delta += 0.1) {
        const double v = pac_sample_size(0.5, delta, 0.5, 2, 4, 0.0, 0.0, 0).log_terms[2];
        EXPECT_LE(v, prev);
        prev = v;
    }
    EXPECT_LT(pac_sample_size(0.5, 1.0 - 1e-15, 0.5, 2, 4, 0.0, 0.0, 0).log_terms[2], -60.0);
}

TEST(PacSampleSize, ExactIntegerWhenSmall)
{
    // N~ dominates when the other terms are tiny.
    const auto s = pac_sample_size(0.99, 0.9, 0.9, 1, 2, -200.0, -200.0, 12345.0);
    ASSERT_TRUE(s.n.has_value());
    EXPECT_EQ(*s.n, 12345u);
}

TEST(ModelError, Examples)
{
    EXPECT_NEAR(model_error_bound(0.0, ninf, 2, 0.1, 5), std::log(1.0 / 16), 1e-15);
    EXPECT_NEAR(model_error_bound(ninf, 0.0, 2, 0.1, 5) - model_error_bound(ninf, 0.0, 2, 0.05, 5), std::log(4.0), 1e-14);
    EXPECT_LT(model_error_bound(0.0, 0.0, 1000, 1e-4, 5), -18.0);
}

TEST(Helpers, SplineApproximationConstant)
{
    const int d = 1, k = 4;
    const double norm = 2.5;
    const double direct = (1 + std::pow(9.0, (d + 1) * (k - 2)) * std::pow(2 * k - 1, 2 * d + 5)) *
                          std::pow(std::sqrt(2.0) * std::numbers::e * (d + 1), k) * 2 * norm;
    EXPECT_NEAR(spline_approximation_constant(d, k, norm), std::log(direct), 1e-12);
}

TEST(Helpers, DiscretizationConstant)
{
    const double d = 2, h = 0.1, g1 = 0.3, g2 = 0.7, c1 = 1.2, c2 = 0.8;
    const double ct = 2 * c2;
    const double q = h / 2 * d * c1;
    const double direct = g2 / 24 + d / 8 * g1 * c1 + c2 * (d * ct / 4) * (1 + h * d / 2 * c1) +
                          ((1 + q) * (1 + q) + q) * ct * (std::exp(c2) - 1);
    EXPECT_NEAR(discretization_constant(2, h, g1, g2, c1, c2), std::log(direct), 1e-13);
}

TEST(Helpers, RkErrorLimit)
{
    EXPECT_NEAR(rk_global_error_bound(0.1, 1.0, 1e-12), 0.02, 1e-12);
    EXPECT_NEAR(rk_global_error_bound(0.1, 1.0, 0.0), 0.02, 1e-15);
    EXPECT_NEAR(rk_global_error_bound(0.1, 1.0, 1.0), 0.02 * (std::exp(1.0) - 1), 1e-15);
}

TEST(Gamma, ZeroAndLinearFields)
{
    const auto z = empirical_gamma(linear_field::zero(2), 5, 1);
    EXPECT_EQ(z.gamma1, 0.0);
    EXPECT_EQ(z.gamma2, 0.0);
    Matrix A(2, 2);
    A << 0.4, -0.3, 0.5, 0.1;
    const double norm = spectral_norm(A);
    const auto g = empirical_gamma(linear_field(A), 5, 1);
    EXPECT_GT(g.gamma1, 0.0);
    EXPECT_LE(g.gamma1, norm * norm * std::exp(norm));
    const auto more = empirical_gamma(linear_field(A), 10, 1);
    EXPECT_GE(more.gamma1, g.gamma1);
    EXPECT_GE(more.gamma2, g.gamma2);
}

TEST(Domination, EmpiricalLipschitzBelowLambda)
{
    counter_rng rng(1, "domination");
    for (int i = 0; i < 30; ++i) {
        const int L = 1 + i % 3;
        const int W = 2 + 2 * (i % 2);
        auto net = requ_network::uniform(2, L, W);
        sample_parameter_box(net, rng);
        const auto b = capacity_ledger(2, L, W, 0.1);
        EXPECT_LE(std::log(empirical_lipschitz(net, 200, static_cast<std::uint64_t>(i))), b.log_lambda);
        // Step map Lipschitz <= Lambda_Psi^Omega(h).
        double step = 0.0;
        for (int s = 0; s < 50; ++s) {
            step = std::max(step, spectral_norm(step_jacobian(net, rng.uniform(), 0.1, sample_ball(rng, 2))));
        }
        EXPECT_LE(std::log(step), b.log_psi_omega);
    }
}

TEST(Domination, LogLikelihoodDifferenceQuotientBelowLambdaZ)
{
    counter_rng rng(2, "quotient");
    for (int i = 0; i < 10; ++i) {
        auto a = requ_network::uniform(2, 2, 3);
        sample_parameter_box(a, rng);
        auto b = a;
        for (Eigen::Index j = 0; j < b.parameter_count(); ++j) {
            b.parameters()(j) = std::clamp(b.parameters()(j) + rng.uniform(-0.05, 0.05), -1.0, 1.0);
        }
        const auto ledger = capacity_ledger(2, 2, 3, 1.0 / 64);
        const cutoff_field fa(a, 12, 4), fb(b, 12, 4);
        const double lip = std::max(empirical_lipschitz(fa, 200, 1), empirical_lipschitz(fb, 200, 1));
        int m = 16;
        while (!guard_step_size(1.0 / m, 2 * lip)) {
            m *= 2;
        }
        const flow_density_model<cutoff_field> ma{fa, {m, 2 * lip}};
        const flow_density_model<cutoff_field> mb{fb, {m, 2 * lip}};
        const Vector x = sample_ball(rng, 2);
        const double q = std::abs(model_logdensity(ma, x) - model_logdensity(mb, x)) /
                         (a.parameters() - b.parameters()).norm();
        EXPECT_TRUE(log_magnitude::from_log(std::log(q)) <= ledger.lambda_z)
            << "q=" << q << " log Lambda_Z=" << ledger.lambda_z.log() << " m=" << m;
    }
}
