#ifndef LIOUVILLE_FLOW_BECKMANN_HPP
#define LIOUVILLE_FLOW_BECKMANN_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <liouville_flow/core.hpp>
#include <liouville_flow/flow.hpp>
#include <liouville_flow/quadrature.hpp>
#include <liouville_flow/random.hpp>

namespace liouville_flow
{

// A radial density on the ball of radius 1/2, as a function of r = |x|.
struct radial_density {
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    double infimum = 0.0;
    double supremum = 0.0;

    double operator()(double r) const
    {
        return value(r);
    }
};

inline radial_density uniform_density(int d)
{
    const double c = 1.0 / ball_volume(d);
    return {[c](double) { return c; }, [](double) { return 0.0; }, c, c};
}

// f(r) = f_unif (1 + beta (1 - c_d r^2)) with c_d = 4(d+2)/d, which integrates
// to one for every beta (c_2 = 8). Positive iff -1 < beta < d/2.
inline radial_density bump_density(int d, double beta)
{
    const double base = 1.0 / ball_volume(d);
    const double c = 4.0 * (d + 2) / d;
    if (!(beta > -1.0 && beta < 0.5 * d)) {
        throw invalid_argument("bump density needs -1 < beta < d/2 for positivity, got beta=" + std::to_string(beta));
    }
    const double lo = std::min({1.0 + beta, 1.0 - 2.0 * beta / d});
    const double hi = std::max({1.0 + beta, 1.0 - 2.0 * beta / d});
    return {[=](double r) { return base * (1.0 + beta * (1.0 - c * r * r)); },
            [=](double r) { return -2.0 * base * beta * c * r; }, base * lo, base * hi};
}

struct radial_beckmann_problem {
    int dim = 2;
    radial_density source;
    radial_density target;
    int quadrature_n = 256;
    double beta = 0.0;         // bump parameter, informational
    double flux_defect = 0.0;  // adds flux_defect * r to the flux; nonzero only in defect fixtures

    double kappa() const
    {
        return std::min(source.infimum, target.infimum);
    }
};

inline radial_beckmann_problem bump_problem(int d, double beta, int quadrature_n = 256)
{
    radial_beckmann_problem p;
    p.dim = d;
    p.source = uniform_density(d);
    p.target = bump_density(d, beta);
    p.quadrature_n = quadrature_n;
    p.beta = beta;
    return p;
}

// {d, family: "bump", beta, quadrature_n, flux_defect?}
inline radial_beckmann_problem problem_from_json(const nlohmann::json &j)
{
    for (const auto &[key, _] : j.items()) {
        if (key != "d" && key != "family" && key != "beta" && key != "quadrature_n" && key != "flux_defect") {
            throw invalid_argument("unknown key in Beckmann problem: " + key);
        }
    }
    const std::string family = j.value("family", std::string("bump"));
    if (family != "bump") {
        throw invalid_argument("unknown density family: " + family);
    }
    auto p = bump_problem(j.value("d", 2), j.value("beta", 0.5), j.value("quadrature_n", 256));
    p.flux_defect = j.value("flux_defect", 0.0);
    return p;
}

inline nlohmann::json problem_to_json(const radial_beckmann_problem &p)
{
    nlohmann::json j{{"d", p.dim}, {"family", "bump"}, {"beta", p.beta}, {"quadrature_n", p.quadrature_n}};
    if (p.flux_defect != 0.0) {
        j["flux_defect"] = p.flux_defect;
    }
    return j;
}

inline double source_minus_target(const radial_beckmann_problem &p, double r)
{
    return p.source(r) - p.target(r);
}

// w(r) = r^{1-d} int_0^r s^{d-1} (f_nu - f_mu)(s) ds, the radial component of
// the minimal-norm flux with div w = f_nu - f_mu and zero normal flux.
inline double radial_flux(const radial_beckmann_problem &p, double r)
{
    if (r <= 0.0) {
        return 0.0;
    }
    const int d = p.dim;
    const double integral = adaptive_simpson(
        [&](double s) { return std::pow(s, d - 1) * source_minus_target(p, s); }, 0.0, r, 1e-12);
    return integral / std::pow(r, d - 1) + p.flux_defect * r;
}

// dw/dr from the divergence identity w' + (d-1) w / r = f_nu - f_mu.
inline double radial_flux_derivative(const radial_beckmann_problem &p, double r, double w)
{
    if (r <= 0.0) {
        return source_minus_target(p, 0.0) / p.dim + p.flux_defect;
    }
    return source_minus_target(p, r) - (p.dim - 1) * (w - p.flux_defect * r) / r + p.flux_defect;
}

inline double interpolated_density(const radial_beckmann_problem &p, double r, double t)
{
    return (1.0 - t) * p.source(r) + t * p.target(r);
}

inline double interpolated_density_derivative(const radial_beckmann_problem &p, double r, double t)
{
    return (1.0 - t) * p.source.derivative(r) + t * p.target.derivative(r);
}

// xi(y, t) = w(|y|) / f_t(|y|) * y / |y|, extended by zero outside the ball.
class beckmann_vector_field
{
public:
    explicit beckmann_vector_field(radial_beckmann_problem problem) : m_problem(std::move(problem)) {}

    int dim() const
    {
        return m_problem.dim;
    }
    const radial_beckmann_problem &problem() const
    {
        return m_problem;
    }

    Vector value(const Vector &y, double t) const
    {
        check(y);
        const double r = y.norm();
        if (r <= 1e-300 || r >= 0.5) {
            return Vector::Zero(dim());
        }
        return (radial_flux(m_problem, r) / interpolated_density(m_problem, r, t) / r) * y;
    }

    field_jet jet(const Vector &y, double t) const
    {
        check(y);
        const int d = dim();
        const double r = y.norm();
        field_jet out{Vector::Zero(d), Matrix::Zero(d, d)};
        if (r >= 0.5) {
            return out;
        }
        if (r < 1e-8) {
            // xi ~ c0 y near the origin.
            const double c0 = radial_flux_derivative(m_problem, 0.0, 0.0) / interpolated_density(m_problem, 0.0, t);
            out.value = c0 * y;
            out.jacobian = c0 * Matrix::Identity(d, d);
            return out;
        }
        const double w = radial_flux(m_problem, r);
        const double dw = radial_flux_derivative(m_problem, r, w);
        const double f = interpolated_density(m_problem, r, t);
        const double df = interpolated_density_derivative(m_problem, r, t);
        const double phi = w / f;
        const double dphi = (dw * f - w * df) / (f * f);
        const Vector unit = y / r;
        out.value = phi * unit;
        out.jacobian = (phi / r) * Matrix::Identity(d, d) + (dphi - phi / r) * unit * unit.transpose();
        return out;
    }

    Matrix jacobian(const Vector &y, double t) const
    {
        return jet(y, t).jacobian;
    }

private:
    void check(const Vector &y) const
    {
        if (y.size() != dim()) {
            throw dimension_mismatch("Beckmann field expects y of size " + std::to_string(dim()));
        }
    }

    radial_beckmann_problem m_problem;
};

inline Vector beckmann_field(const radial_beckmann_problem &p, const Vector &y, double t)
{
    return beckmann_vector_field(p).value(y, t);
}

// |(f_mu - f_nu)(r) + div w(r)| with div w = w' + (d-1) w / r and w' from a
// central difference of the quadrature flux.
inline double continuity_residual(const radial_beckmann_problem &p, double r, double /*t*/, double fd_step = 1e-5)
{
    const double dw = (radial_flux(p, r + fd_step) - radial_flux(p, r - fd_step)) / (2.0 * fd_step);
    const double div = dw + (p.dim - 1) * radial_flux(p, r) / r;
    return std::abs(-source_minus_target(p, r) + div);
}

// Normalization of both densities by radial quadrature.
inline std::pair<double, double> density_masses(const radial_beckmann_problem &p)
{
    return {radial_integral(p.source.value, p.dim), radial_integral(p.target.value, p.dim)};
}

// Schedule whose guard uses the sampled Lipschitz constant of the field.
inline flow_schedule beckmann_schedule(const radial_beckmann_problem &p, int steps, int lipschitz_samples = 2000,
                                       std::uint64_t seed = 0)
{
    return {steps, empirical_lipschitz(beckmann_vector_field(p), lipschitz_samples, seed), guard_mode::empirical};
}

// KL(Psi_* nu || mu) for the discrete Beckmann flow Psi on the ball grid. With
// rho = f_mu(Psi(y)) |det D Psi(y)| / f_nu(y) the identity int f_nu rho = 1
// (exact change of variables of the discrete map) gives
// KL = int f_nu (rho - 1 - log rho), whose integrand is pointwise >= 0.
inline double verify_transport(const radial_beckmann_problem &p, const flow_schedule &schedule, int grid_resolution)
{
    schedule.require_guard();
    const beckmann_vector_field field(p);
    double kl = 0.0;
    for (const auto &node : ball_grid(p.dim, grid_resolution)) {
        const auto tape = integrate(field, schedule, node.point);
        const double r_end = std::min(tape.endpoint().norm(), 0.5);
        const double log_rho = std::log(p.target(r_end)) + tape.logdet - std::log(p.source(node.point.norm()));
        const double rho = std::exp(log_rho);
        kl += node.weight * p.source(node.point.norm()) * (rho - 1.0 - log_rho);
    }
    return std::max(kl, 0.0);
}

// Draws from the target by rejection against the uniform density on the ball.
inline std::vector<Vector> sample_target(const radial_beckmann_problem &p, std::size_t n, std::uint64_t seed)
{
    counter_rng rng(seed, "beckmann.sample_target");
    std::vector<Vector> out;
    out.reserve(n);
    while (out.size() < n) {
        Vector y = sample_ball(rng, p.dim);
        const double accept = p.target(y.norm()) / p.target.supremum;
        if (rng.uniform() < accept) {
            out.push_back(std::move(y));
        }
    }
    return out;
}

// int f_mu log f_mu by radial quadrature (the negative differential entropy).
inline double target_neg_entropy(const radial_beckmann_problem &p)
{
    return radial_integral([&](double r) { return p.target(r) * std::log(p.target(r)); }, p.dim);
}

// Samples xi on a Cartesian grid restricted to the ball, columns x_1..x_d, t, xi_1..xi_d.
inline void write_field_grid_csv(std::ostream &os, const radial_beckmann_problem &p, int per_axis,
                                 const std::vector<double> &times)
{
    const beckmann_vector_field field(p);
    const int d = p.dim;
    for (int i = 0; i < d; ++i) {
        os << "x_" << (i + 1) << ',';
    }
    os << 't';
    for (int i = 0; i < d; ++i) {
        os << ",xi_" << (i + 1);
    }
    os << '\n';
    os.precision(17);
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    const auto coord = [per_axis](int i) { return -0.5 + (i + 0.5) / per_axis; };
    for (const double t : times) {
        std::fill(idx.begin(), idx.end(), 0);
        for (;;) {
            Vector x(d);
            for (int i = 0; i < d; ++i) {
                x(i) = coord(idx[static_cast<std::size_t>(i)]);
            }
            if (x.norm() < 0.5) {
                const Vector xi = field.value(x, t);
                for (int i = 0; i < d; ++i) {
                    os << x(i) << ',';
                }
                os << t;
                for (int i = 0; i < d; ++i) {
                    os << ',' << xi(i);
                }
                os << '\n';
            }
            int k = 0;
            while (k < d && ++idx[static_cast<std::size_t>(k)] == per_axis) {
                idx[static_cast<std::size_t>(k)] = 0;
                ++k;
            }
            if (k == d) {
                break;
            }
        }
    }
}

} // namespace liouville_flow

#endif
