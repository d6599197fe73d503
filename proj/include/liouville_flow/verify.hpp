#ifndef LIOUVILLE_FLOW_VERIFY_HPP
#define LIOUVILLE_FLOW_VERIFY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beckmann.hpp"
#include "bounds.hpp"
#include "density_erm.hpp"
#include "flow.hpp"
#include "requ_net.hpp"

namespace liouville_flow
{

inline constexpr int verify_report_schema_version = 1;

struct check_result {
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    bool passed = false;
    nlohmann::json details = nlohmann::json::object();
};

inline check_result make_check(std::string name, double measured, double threshold, bool passed)
{
    return {std::move(name), measured, threshold, passed};
}

// Least-squares slope of log y against log x.
inline double log_log_slope(const std::vector<double> &x, const std::vector<double> &y)
{
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Seeded cutoff ReQU field with the readout rescaled so that its sampled
// Lipschitz constant equals `lipschitz`. The field is linear in the readout.
inline cutoff_field scaled_test_field(int d, int L, int W, std::uint64_t seed, double lipschitz, int K = 12,
                                      int k = 4)
{
    counter_rng rng(seed, "verify.test_field");
    auto net = requ_network::uniform(d, L, W);
    sample_parameter_box(net, rng);
    cutoff_field field(std::move(net), K, k);
    const double lip = empirical_lipschitz(field, 400, seed);
    if (lip > 0.0) {
        field.network().weight(L - 1) *= lipschitz / lip;
    }
    return field;
}

// Endpoint error of RK2 on xi = sin(t) y (d = 1) against y0 exp(1 - cos t).
inline check_result check_rk2_order()
{
    const function_field f(
        1, [](const Vector &y, double t) -> Vector { return std::sin(t) * y; },
        [](const Vector &, double t) -> Matrix { return Matrix::Constant(1, 1, std::sin(t)); });
    const double exact = std::exp(1.0 - std::cos(1.0));
    std::vector<double> errors;
    for (int m : {8, 16, 32, 64}) {
        const Vector y = flow_endpoint(f, {m, 1.0}, Vector::Ones(1));
        errors.push_back(std::abs(y(0) - exact));
    }
    auto c = make_check("rk2_order", 0.0, 0.5, true);
    nlohmann::json ratios = nlohmann::json::array();
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
        const double r = errors[i] / errors[i + 1];
        ratios.push_back(r);
        worst = std::max(worst, std::abs(r - 4.0));
    }
    c.measured = worst;
    c.passed = worst <= 0.5;
    c.details = {{"ratios", ratios}, {"errors", errors}};
    return c;
}

// Sum of step log-determinants against log|det| of the central-difference
// Jacobian of the endpoint map.
template <vector_field F>
check_result check_logdet_fd(const F &field, const flow_schedule &schedule, int points, std::uint64_t seed,
                             double fd_step = 1e-6)
{
    counter_rng rng(seed, "verify.logdet_points");
    const int d = field.dim();
    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
        const Vector y = 0.9 * sample_ball(rng, d);
        const double logdet = integrate(field, schedule, y).logdet;
        Matrix J(d, d);
        for (int j = 0; j < d; ++j) {
            Vector up = y, dn = y;
            up(j) += fd_step;
            dn(j) -= fd_step;
            J.col(j) = (flow_endpoint(field, schedule, up) - flow_endpoint(field, schedule, dn)) / (2 * fd_step);
        }
        worst = std::max(worst, std::abs(logdet - log_abs_det(J)));
    }
    return make_check("logdet_fd", worst, 1e-5, worst < 1e-5);
}

// Max |inverse(forward(x)) - x| over seeded points in the ball.
template <vector_field F>
check_result check_round_trip(const F &field, const flow_schedule &schedule, int points, std::uint64_t seed)
{
    counter_rng rng(seed, "verify.round_trip");
    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
        const Vector x = sample_ball(rng, field.dim());
        const Vector z = flow_endpoint(field, schedule, x);
        worst = std::max(worst, (invert_flow(field, schedule, z) - x).norm());
    }
    return make_check("round_trip", worst, 1e-8, worst < 1e-8);
}

// Mean |discrete logdet - Liouville integral| for each step count.
template <vector_field F>
std::vector<double> liouville_gaps(const F &field, double lipschitz, const std::vector<int> &steps, int points,
                                   std::uint64_t seed, int fine_steps = 8192)
{
    counter_rng rng(seed, "verify.liouville_points");
    std::vector<Vector> ys;
    std::vector<double> reference;
    for (int i = 0; i < points; ++i) {
        ys.push_back(sample_ball(rng, field.dim()));
        reference.push_back(liouville_logdet_reference(field, ys.back(), fine_steps));
    }
    std::vector<double> gaps;
    for (const int m : steps) {
        double sum = 0.0;
        for (int i = 0; i < points; ++i) {
            sum += std::abs(integrate(field, {m, lipschitz}, ys[static_cast<std::size_t>(i)]).logdet -
                            reference[static_cast<std::size_t>(i)]);
        }
        gaps.push_back(sum / points);
    }
    return gaps;
}

template <vector_field F>
check_result check_liouville_order(const F &field, double lipschitz, int points, std::uint64_t seed)
{
    const std::vector<int> steps{8, 16, 32, 64, 128};
    const auto gaps = liouville_gaps(field, lipschitz, steps, points, seed);
    std::vector<double> hs;
    for (const int m : steps) {
        hs.push_back(1.0 / m);
    }
    const double slope = log_log_slope(hs, gaps);
    auto c = make_check("liouville_gap_order", std::abs(slope - 2.0), 0.3, std::abs(slope - 2.0) <= 0.3);
    c.details = {{"slope", slope}, {"gaps", gaps}};
    return c;
}

inline check_result check_beckmann_continuity(const radial_beckmann_problem &p)
{
    double worst = 0.0;
    for (int i = 1; i <= 100; ++i) {
        worst = std::max(worst, continuity_residual(p, 0.49 * i / 100.0, 0.5));
    }
    return make_check("beckmann_continuity", worst, 1e-6, worst < 1e-6);
}

inline check_result check_beckmann_boundary(const radial_beckmann_problem &p)
{
    const double w = std::abs(radial_flux(p, 0.5));
    return make_check("beckmann_boundary_flux", w, 1e-10, w <= 1e-10);
}

inline check_result check_beckmann_transport(const radial_beckmann_problem &p, int steps = 64, int grid = 256)
{
    const double kl = verify_transport(p, beckmann_schedule(p, steps), grid);
    return make_check("beckmann_transport_kl", kl, 1e-4, kl < 1e-4);
}

template <vector_field F>
check_result check_normalization(const flow_density_model<F> &model, int grid = 256)
{
    const double mass = model_mass(model, grid);
    auto c = make_check("normalization", std::abs(mass - 1.0), 2e-3, std::abs(mass - 1.0) <= 2e-3);
    c.details = {{"mass", mass}};
    return c;
}

// Max over parameters of |g - g_fd| / max(|g_fd|, scale) with scale = 1e-3 max |g_fd|.
template <differentiable_field F>
double gradient_relative_error(const flow_density_model<F> &model, const std::vector<Vector> &samples)
{
    const Vector g = nll_gradient(model, samples);
    const Vector fd = nll_gradient_fd(model, samples);
    const double floor = std::max(1e-3 * fd.cwiseAbs().maxCoeff(), 1e-12);
    return ((g - fd).array().abs() / fd.array().abs().max(floor)).maxCoeff();
}

inline check_result check_gradient(int configs, std::uint64_t seed)
{
    double worst = 0.0;
    for (int c = 0; c < configs; ++c) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(c);
        const int d = 1 + c % 2;
        const int L = 1 + c % 3;
        const int W = 2 + c % 3;
        const auto field = scaled_test_field(d, L, W, s, 1.0);
        const flow_density_model<cutoff_field> model{field, {4, 1.0}};
        counter_rng rng(s, "verify.gradient_samples");
        std::vector<Vector> xs;
        for (int i = 0; i < 8; ++i) {
            xs.push_back(sample_ball(rng, d));
        }
        worst = std::max(worst, gradient_relative_error(model, xs));
    }
    return make_check("gradient_fd", worst, 1e-4, worst < 1e-4);
}

inline check_result check_radius_recursion()
{
    double worst = 0.0;
    for (int W : {1, 2, 16, 64}) {
        const auto r = log_radius_recursive(64, W);
        for (int l = 0; l < 64; ++l) {
            const double closed = log_radius(l, W);
            worst = std::max(worst, std::abs(r[static_cast<std::size_t>(l)] - closed) / std::max(1.0, std::abs(closed)));
        }
    }
    return make_check("radius_closed_form", worst, 1e-12, worst <= 1e-12);
}

// Sampled network Lipschitz constants against the capacity bound Lambda.
inline check_result check_lipschitz_domination(int networks, std::uint64_t seed)
{
    counter_rng rng(seed, "verify.domination");
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < networks; ++i) {
        const int L = 1 + i % 3;
        const int W = 2 + 2 * (i % 2);
        auto net = requ_network::uniform(2, L, W);
        sample_parameter_box(net, rng);
        const double lip = empirical_lipschitz(net, 100, seed + static_cast<std::uint64_t>(i));
        worst = std::max(worst, std::log(lip) - capacity_ledger(2, L, W, 0.1).log_lambda);
    }
    return make_check("lipschitz_domination", worst, 0.0, worst <= 0.0);
}

inline check_result check_network_jacobian(std::uint64_t seed)
{
    counter_rng rng(seed, "verify.jacobian");
    auto net = requ_network::uniform(2, 3, 6);
    sample_parameter_box(net, rng);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const Vector y = sample_ball(rng, 2);
        const double t = rng.uniform();
        Matrix F(2, 2);
        for (int j = 0; j < 2; ++j) {
            Vector up = y, dn = y;
            up(j) += 1e-6;
            dn(j) -= 1e-6;
            F.col(j) = (net.value(up, t) - net.value(dn, t)) / 2e-6;
        }
        const Matrix J = net.jacobian(y, t);
        worst = std::max(worst, (J - F).cwiseAbs().maxCoeff() / std::max(1.0, J.cwiseAbs().maxCoeff()));
    }
    return make_check("network_jacobian_fd", worst, 1e-5, worst < 1e-5);
}

struct verify_config {
    std::uint64_t seed = 0;
    double flux_defect = 0.0;  // nonzero injects a defect into the Beckmann flux
    double beta = 0.5;
};

inline nlohmann::json verify_report(const std::vector<check_result> &checks, std::uint64_t seed)
{
    nlohmann::json list = nlohmann::json::array();
    bool all = true;
    for (const auto &c : checks) {
        all = all && c.passed;
        nlohmann::json j{{"name", c.name},
                         {"status", c.passed ? "pass" : "fail"},
                         {"measured", std::isfinite(c.measured) ? nlohmann::json(c.measured) : nlohmann::json(nullptr)},
                         {"threshold", c.threshold}};
        if (!c.details.empty()) {
            j["details"] = c.details;
        }
        list.push_back(std::move(j));
    }
    return {{"schema_version", verify_report_schema_version},
            {"seed", seed},
            {"status", all ? "pass" : "fail"},
            {"checks", std::move(list)}};
}

inline std::vector<check_result> run_invariant_suite(const verify_config &config)
{
    std::vector<check_result> out;
    out.push_back(check_rk2_order());
    out.push_back(check_network_jacobian(config.seed));

    const auto field = scaled_test_field(2, 2, 4, config.seed, 2.0);
    const flow_schedule schedule{32, 2.0};
    out.push_back(check_logdet_fd(field, schedule, 20, config.seed));
    out.push_back(check_round_trip(field, schedule, 200, config.seed));
    out.push_back(check_liouville_order(field, 2.0, 10, config.seed));
    out.push_back(check_normalization(flow_density_model<cutoff_field>{field, schedule}));
    out.push_back(check_gradient(4, config.seed));

    auto p = bump_problem(2, config.beta);
    p.flux_defect = config.flux_defect;
    out.push_back(check_beckmann_continuity(p));
    out.push_back(check_beckmann_boundary(p));
    out.push_back(check_beckmann_transport(bump_problem(2, config.beta), 64, 128));

    out.push_back(check_radius_recursion());
    out.push_back(check_lipschitz_domination(20, config.seed));
    return out;
}

} // namespace liouville_flow

#endif
