#ifndef LIOUVILLE_FLOW_QUADRATURE_HPP
#define LIOUVILLE_FLOW_QUADRATURE_HPP

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <liouville_flow/core.hpp>

namespace liouville_flow
{

namespace detail
{
template <typename Fn>
double simpson_refine(const Fn &f, double a, double fa, double m, double fm, double b, double fb, double whole,
                      double tol, int depth)
{
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol) {
        return left + right + diff / 15.0;
    }
    return simpson_refine(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1) +
           simpson_refine(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
}
} // namespace detail

// Adaptive Simpson with absolute tolerance and Richardson correction.
template <typename Fn>
double adaptive_simpson(const Fn &f, double a, double b, double tol = 1e-12, int max_depth = 48)
{
    if (a == b) {
        return 0.0;
    }
    const double fa = f(a);
    const double fb = f(b);
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_refine(f, a, fa, m, fm, b, fb, whole, tol, max_depth);
}

// Surface area of the unit sphere S^{d-1}.
inline double unit_sphere_area(int d)
{
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

// Integral of a radial function over the ball of radius 1/2 in R^d.
template <typename Fn>
double radial_integral(const Fn &f, int d, double tol = 1e-12)
{
    return unit_sphere_area(d) * adaptive_simpson([&](double r) { return f(r) * std::pow(r, d - 1); }, 0.0, 0.5, tol);
}

struct quadrature_node {
    Vector point;
    double weight;
};

// Midpoint tensor grid on the ball of radius 1/2: for d = 2, resolution points
// per polar axis (radius x angle); for d = 1, resolution cells on (-1/2, 1/2).
inline std::vector<quadrature_node> ball_grid(int d, int resolution)
{
    if (resolution < 1) {
        throw invalid_argument("grid resolution must be positive");
    }
    std::vector<quadrature_node> nodes;
    if (d == 1) {
        const double dx = 1.0 / resolution;
        for (int i = 0; i < resolution; ++i) {
            Vector x(1);
            x(0) = -0.5 + (i + 0.5) * dx;
            nodes.push_back({std::move(x), dx});
        }
        return nodes;
    }
    if (d == 2) {
        const double dr = 0.5 / resolution;
        const double dtheta = 2.0 * std::numbers::pi / resolution;
        nodes.reserve(static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution));
        for (int i = 0; i < resolution; ++i) {
            const double r = (i + 0.5) * dr;
            for (int j = 0; j < resolution; ++j) {
                const double theta = (j + 0.5) * dtheta;
                Vector x(2);
                x << r * std::cos(theta), r * std::sin(theta);
                nodes.push_back({std::move(x), r * dr * dtheta});
            }
        }
        return nodes;
    }
    throw invalid_argument("grid quadrature supports d = 1 or d = 2, got d=" + std::to_string(d));
}

} // namespace liouville_flow

#endif
