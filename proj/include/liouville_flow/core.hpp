#ifndef LIOUVILLE_FLOW_CORE_HPP
#define LIOUVILLE_FLOW_CORE_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/LU>

namespace liouville_flow
{

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Every failure carries a short machine-readable kind, reused verbatim by the
// CLI error documents.
class error : public std::runtime_error
{
public:
    error(std::string kind, const std::string &what) : std::runtime_error(what), m_kind(std::move(kind)) {}

    const std::string &kind() const noexcept
    {
        return m_kind;
    }

private:
    std::string m_kind;
};

struct dimension_mismatch : error {
    explicit dimension_mismatch(const std::string &what) : error("dimension_mismatch", what) {}
};

struct invalid_argument : error {
    explicit invalid_argument(const std::string &what) : error("invalid_argument", what) {}
};

// Step size too large for the Lipschitz estimate in force: h * Lambda >= 1/2.
struct guard_violation : error {
    explicit guard_violation(const std::string &what) : error("guard_violation", what) {}
};

struct inversion_failure : error {
    explicit inversion_failure(const std::string &what) : error("inversion_failure", what) {}
};

struct non_finite_state : error {
    explicit non_finite_state(const std::string &what) : error("non_finite_state", what) {}
};

struct domain_error : error {
    explicit domain_error(const std::string &what) : error("domain_error", what) {}
};

// Volume of the open ball of radius 1/2 in R^d.
inline double ball_volume(int d)
{
    return std::pow(std::numbers::pi, 0.5 * d) * std::pow(0.5, d) / std::tgamma(0.5 * d + 1.0);
}

inline double log_ball_volume(int d)
{
    return 0.5 * d * std::log(std::numbers::pi) - d * std::numbers::ln2 - std::lgamma(0.5 * d + 1.0);
}

// log|det m| by LU with partial pivoting. Returns -inf for a singular matrix.
inline double log_abs_det(const Matrix &m)
{
    const Eigen::PartialPivLU<Matrix> lu(m);
    const auto &packed = lu.matrixLU();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < packed.rows(); ++i) {
        acc += std::log(std::abs(packed(i, i)));
    }
    return acc;
}

inline void require_finite(const Vector &v, const char *where)
{
    if (!v.allFinite()) {
        throw non_finite_state(std::string("non-finite state in ") + where);
    }
}

} // namespace liouville_flow

#endif
