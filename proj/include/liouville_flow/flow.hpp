#ifndef LIOUVILLE_FLOW_FLOW_HPP
#define LIOUVILLE_FLOW_FLOW_HPP

#include <concepts>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include <liouville_flow/core.hpp>
#include <liouville_flow/random.hpp>
#include <liouville_flow/requ_net.hpp>

namespace liouville_flow
{

// A time-dependent vector field on R^d with an exact spatial Jacobian.
template <typename F>
concept vector_field = requires(const F &f, const Vector &y, double t) {
    { f.dim() } -> std::convertible_to<int>;
    { f.value(y, t) } -> std::convertible_to<Vector>;
    { f.jacobian(y, t) } -> std::convertible_to<Matrix>;
};

template <vector_field F>
field_jet evaluate_jet(const F &f, const Vector &y, double t)
{
    if constexpr (requires { { f.jet(y, t) } -> std::convertible_to<field_jet>; }) {
        return f.jet(y, t);
    } else {
        return {f.value(y, t), f.jacobian(y, t)};
    }
}

// xi(y, t) = A y + c, autonomous.
class linear_field
{
public:
    explicit linear_field(Matrix a) : m_a(std::move(a)), m_c(Vector::Zero(m_a.rows())) {}
    linear_field(Matrix a, Vector c) : m_a(std::move(a)), m_c(std::move(c)) {}

    static linear_field constant(Vector c)
    {
        const auto d = c.size();
        return {Matrix::Zero(d, d), std::move(c)};
    }
    static linear_field zero(int d)
    {
        return linear_field(Matrix::Zero(d, d));
    }

    int dim() const
    {
        return static_cast<int>(m_a.rows());
    }
    Vector value(const Vector &y, double) const
    {
        return m_a * y + m_c;
    }
    Matrix jacobian(const Vector &, double) const
    {
        return m_a;
    }

private:
    Matrix m_a;
    Vector m_c;
};

// Field given by a pair of callables.
class function_field
{
public:
    using value_fn = std::function<Vector(const Vector &, double)>;
    using jacobian_fn = std::function<Matrix(const Vector &, double)>;

    function_field(int dim, value_fn value, jacobian_fn jacobian)
        : m_dim(dim), m_value(std::move(value)), m_jacobian(std::move(jacobian))
    {
    }

    int dim() const
    {
        return m_dim;
    }
    Vector value(const Vector &y, double t) const
    {
        return m_value(y, t);
    }
    Matrix jacobian(const Vector &y, double t) const
    {
        return m_jacobian(y, t);
    }

private:
    int m_dim;
    value_fn m_value;
    jacobian_fn m_jacobian;
};

// True iff h * lipschitz < 1/2, the step-size condition under which every RK2
// step is a contraction-perturbed identity.
inline bool guard_step_size(double h, double lipschitz)
{
    return h * lipschitz < 0.5;
}

// Same test with the Lipschitz constant given as its natural log.
inline bool guard_step_size_log(double h, double log_lipschitz)
{
    return std::log(h) + log_lipschitz < -std::numbers::ln2;
}

enum class guard_mode { formula, empirical };

inline std::string to_string(guard_mode mode)
{
    return mode == guard_mode::formula ? "formula" : "empirical";
}

struct flow_schedule {
    int steps = 1;
    double guard_lipschitz = 0.0;
    guard_mode mode = guard_mode::empirical;

    double step() const
    {
        return 1.0 / steps;
    }
    bool guard_holds() const
    {
        return guard_step_size(step(), guard_lipschitz);
    }
    void require_guard() const
    {
        if (steps < 1) {
            throw invalid_argument("flow schedule needs at least one step");
        }
        if (!guard_holds()) {
            throw guard_violation("step-size guard violated: h=" + std::to_string(step()) +
                                  ", Lambda=" + std::to_string(guard_lipschitz) + " (" + to_string(mode) +
                                  "), h*Lambda must be < 1/2");
        }
    }
};

template <vector_field F>
Vector rk2_step(const F &field, double t, double h, const Vector &y)
{
    const Vector mid = y + 0.5 * h * field.value(y, t);
    return y + h * field.value(mid, t + 0.5 * h);
}

struct step_jet {
    Vector next;
    Matrix jacobian;
};

// One RK2 step and its exact derivative I + h A2 (I + h/2 A1).
template <vector_field F>
step_jet rk2_step_jet(const F &field, double t, double h, const Vector &y)
{
    const auto first = evaluate_jet(field, y, t);
    const Vector mid = y + 0.5 * h * first.value;
    const auto second = evaluate_jet(field, mid, t + 0.5 * h);
    const auto d = y.size();
    Matrix inner = Matrix::Identity(d, d) + 0.5 * h * first.jacobian;
    return {y + h * second.value, Matrix::Identity(d, d) + h * second.jacobian * inner};
}

template <vector_field F>
Matrix step_jacobian(const F &field, double t, double h, const Vector &y)
{
    return rk2_step_jet(field, t, h, y).jacobian;
}

struct trajectory_tape {
    double step = 1.0;
    std::vector<Vector> states;      // y_0 .. y_m
    std::vector<double> increments;  // log|det| of each step Jacobian
    std::vector<Matrix> jacobians;   // filled only on request
    double logdet = 0.0;

    const Vector &endpoint() const
    {
        return states.back();
    }
};

template <vector_field F>
trajectory_tape integrate(const F &field, const flow_schedule &schedule, const Vector &y0, bool keep_jacobians = false)
{
    schedule.require_guard();
    const double h = schedule.step();
    trajectory_tape tape;
    tape.step = h;
    tape.states.reserve(static_cast<std::size_t>(schedule.steps) + 1);
    tape.states.push_back(y0);
    for (int k = 0; k < schedule.steps; ++k) {
        auto s = rk2_step_jet(field, k * h, h, tape.states.back());
        require_finite(s.next, "integrate");
        const double inc = log_abs_det(s.jacobian);
        if (!std::isfinite(inc)) {
            throw non_finite_state("singular step Jacobian at step " + std::to_string(k));
        }
        tape.increments.push_back(inc);
        tape.logdet += inc;
        if (keep_jacobians) {
            tape.jacobians.push_back(std::move(s.jacobian));
        }
        tape.states.push_back(std::move(s.next));
    }
    return tape;
}

template <vector_field F>
Vector flow_endpoint(const F &field, const flow_schedule &schedule, Vector y)
{
    const double h = schedule.step();
    for (int k = 0; k < schedule.steps; ++k) {
        y = rk2_step(field, k * h, h, y);
    }
    return y;
}

struct inversion_options {
    double tolerance = 1e-12;
    int max_iterations = 200;
};

// Solves x + psi(x) = y_next with psi(x) = h xi(x + h/2 xi(x, t), t + h/2) by
// the fixed-point map x <- y_next - psi(x).
template <vector_field F>
Vector invert_step(const F &field, double t, double h, const Vector &y_next, inversion_options opts = {})
{
    Vector x = y_next;
    for (int it = 0; it < opts.max_iterations; ++it) {
        Vector x_new = y_next - (rk2_step(field, t, h, x) - x);
        if (!x_new.allFinite()) {
            throw inversion_failure("fixed-point iteration diverged at t=" + std::to_string(t));
        }
        const double delta = (x_new - x).norm();
        x = std::move(x_new);
        if (delta < opts.tolerance) {
            return x;
        }
    }
    throw inversion_failure("fixed-point iteration did not converge in " + std::to_string(opts.max_iterations) +
                            " iterations at t=" + std::to_string(t));
}

template <vector_field F>
Vector invert_flow(const F &field, const flow_schedule &schedule, const Vector &z, inversion_options opts = {})
{
    schedule.require_guard();
    const double h = schedule.step();
    Vector x = z;
    for (int k = schedule.steps - 1; k >= 0; --k) {
        x = invert_step(field, k * h, h, x, opts);
    }
    return x;
}

// RK2 on the augmented system (y, l)' = (xi(y, t), div xi(y, t)); l(1)
// approximates the Liouville integral of the divergence along the trajectory.
template <vector_field F>
double liouville_logdet_reference(const F &field, const Vector &y0, int fine_steps)
{
    if (fine_steps < 1) {
        throw invalid_argument("liouville reference needs fine_steps >= 1");
    }
    const double h = 1.0 / fine_steps;
    Vector y = y0;
    double ell = 0.0;
    for (int k = 0; k < fine_steps; ++k) {
        const double t = k * h;
        const Vector mid = y + 0.5 * h * field.value(y, t);
        const auto second = evaluate_jet(field, mid, t + 0.5 * h);
        ell += h * second.jacobian.trace();
        y += h * second.value;
    }
    return ell;
}

inline double spectral_norm(const Matrix &m)
{
    if (m.size() == 0) {
        return 0.0;
    }
    return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

// Sampled spatial Lipschitz estimate: max over (y, t) in ball x [0, 1] of
// ||D_y xi||_2. A lower bound on the true constant.
template <vector_field F>
double empirical_lipschitz(const F &field, int samples, std::uint64_t seed)
{
    counter_rng rng(seed, "flow.empirical_lipschitz");
    double best = 0.0;
    const int d = field.dim();
    for (int i = 0; i < samples; ++i) {
        const Vector y = sample_ball(rng, d);
        const double t = rng.uniform();
        best = std::max(best, spectral_norm(field.jacobian(y, t)));
    }
    return best;
}

// Columns: step, t, y_1..y_d, logdet_increment, logdet_cum.
inline void write_trajectory_csv(std::ostream &os, const trajectory_tape &tape)
{
    const auto d = tape.states.front().size();
    os << "step,t";
    for (Eigen::Index i = 0; i < d; ++i) {
        os << ",y_" << (i + 1);
    }
    os << ",logdet_increment,logdet_cum\n";
    os.precision(17);
    double cum = 0.0;
    for (std::size_t k = 0; k < tape.states.size(); ++k) {
        const double inc = k == 0 ? 0.0 : tape.increments[k - 1];
        cum += inc;
        os << k << ',' << static_cast<double>(k) * tape.step;
        for (Eigen::Index i = 0; i < d; ++i) {
            os << ',' << tape.states[k](i);
        }
        os << ',' << inc << ',' << cum << '\n';
    }
}

} // namespace liouville_flow

#endif
