#ifndef LIOUVILLE_FLOW_BSPLINE_HPP
#define LIOUVILLE_FLOW_BSPLINE_HPP

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include <liouville_flow/core.hpp>

namespace liouville_flow
{

// B-spline basis of order k (degree k-1) on the clamped uniform knot vector
//   [0 x k, 1/K, 2/K, ..., (K-1)/K, 1 x k]
// which carries K + k - 1 basis functions.
class clamped_uniform_basis
{
public:
    clamped_uniform_basis(int intervals, int order) : m_intervals(intervals), m_order(order)
    {
        if (intervals < 1 || order < 1) {
            throw invalid_argument("B-spline basis needs K >= 1 and k >= 1");
        }
        m_knots.assign(static_cast<std::size_t>(order), 0.0);
        for (int i = 1; i < intervals; ++i) {
            m_knots.push_back(static_cast<double>(i) / intervals);
        }
        m_knots.insert(m_knots.end(), static_cast<std::size_t>(order), 1.0);
    }

    int order() const
    {
        return m_order;
    }
    int intervals() const
    {
        return m_intervals;
    }
    int size() const
    {
        return m_intervals + m_order - 1;
    }
    const std::vector<double> &knots() const
    {
        return m_knots;
    }

    // Knot span index i with knots[i] <= s < knots[i+1]; s is clamped to [0, 1].
    int span(double s) const
    {
        const int degree = m_order - 1;
        const int last = size() - 1;
        if (s >= m_knots[static_cast<std::size_t>(last + 1)]) {
            return last;
        }
        if (s <= m_knots[static_cast<std::size_t>(degree)]) {
            return degree;
        }
        const auto it = std::upper_bound(m_knots.begin() + degree, m_knots.begin() + last + 1, s);
        return static_cast<int>(it - m_knots.begin()) - 1;
    }

    // Nonzero basis functions at s and their first n_derivs derivatives
    // (de Boor's triangular scheme with derivative recursion). Row r holds the
    // r-th derivative of basis functions span-degree .. span.
    Matrix derivatives(int span_index, double s, int n_derivs) const
    {
        const int p = m_order - 1;
        const auto &u = m_knots;
        const auto at = [&u](int i) { return u[static_cast<std::size_t>(i)]; };

        Matrix ndu(p + 1, p + 1);
        std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
        ndu(0, 0) = 1.0;
        for (int j = 1; j <= p; ++j) {
            left[static_cast<std::size_t>(j)] = s - at(span_index + 1 - j);
            right[static_cast<std::size_t>(j)] = at(span_index + j) - s;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                ndu(j, r) = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
                const double temp = ndu(r, j - 1) / ndu(j, r);
                ndu(r, j) = saved + right[static_cast<std::size_t>(r + 1)] * temp;
                saved = left[static_cast<std::size_t>(j - r)] * temp;
            }
            ndu(j, j) = saved;
        }

        Matrix ders = Matrix::Zero(n_derivs + 1, p + 1);
        for (int j = 0; j <= p; ++j) {
            ders(0, j) = ndu(j, p);
        }
        Matrix a(2, p + 1);
        for (int r = 0; r <= p; ++r) {
            int s1 = 0;
            int s2 = 1;
            a.setZero();
            a(0, 0) = 1.0;
            for (int k = 1; k <= std::min(n_derivs, p); ++k) {
                double d = 0.0;
                const int rk = r - k;
                const int pk = p - k;
                if (r >= k) {
                    a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
                    d = a(s2, 0) * ndu(rk, pk);
                }
                const int j1 = rk >= -1 ? 1 : -rk;
                const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
                for (int j = j1; j <= j2; ++j) {
                    a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
                    d += a(s2, j) * ndu(rk + j, pk);
                }
                if (r <= pk) {
                    a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
                    d += a(s2, k) * ndu(r, pk);
                }
                ders(k, r) = d;
                std::swap(s1, s2);
            }
        }
        double factor = p;
        for (int k = 1; k <= std::min(n_derivs, p); ++k) {
            ders.row(k) *= factor;
            factor *= (p - k);
        }
        return ders;
    }

private:
    int m_intervals;
    int m_order;
    std::vector<double> m_knots;
};

struct spline_jet {
    double value = 0.0;
    double first = 0.0;
    double second = 0.0;
};

// Radial cutoff: S(s) is the sum of the K order-k basis functions supported
// inside [0, 1]; chi(y) = S(4 |y|^2). S == 1 on [0, (K-k+1)/K], S == 0 on
// [1, inf), and S is nonincreasing in between.
class cutoff_spline
{
public:
    cutoff_spline(int intervals, int order) : m_basis(intervals, order)
    {
        if (intervals <= 2 * (order + 1)) {
            throw invalid_argument("cutoff spline needs K > 2(k+1), got K=" + std::to_string(intervals) +
                                   ", k=" + std::to_string(order));
        }
    }

    int intervals() const
    {
        return m_basis.intervals();
    }
    int order() const
    {
        return m_basis.order();
    }

    spline_jet jet(double s) const
    {
        spline_jet out;
        if (s >= 1.0) {
            return out;
        }
        if (s <= static_cast<double>(intervals() - order()) / intervals()) {
            out.value = 1.0;
            return out;
        }
        const int kept = m_basis.intervals();
        const int p = m_basis.order() - 1;
        const int span = m_basis.span(std::max(s, 0.0));
        const Matrix ders = m_basis.derivatives(span, std::max(s, 0.0), 2);
        for (int j = 0; j <= p; ++j) {
            if (span - p + j < kept) {
                out.value += ders(0, j);
                out.first += ders(1, j);
                out.second += ders(2, j);
            }
        }
        return out;
    }

    double value(double s) const
    {
        return jet(s).value;
    }

private:
    clamped_uniform_basis m_basis;
};

inline double cutoff_value(int intervals, int order, const Vector &y)
{
    return cutoff_spline(intervals, order).value(4.0 * y.squaredNorm());
}

} // namespace liouville_flow

#endif
