#ifndef LIOUVILLE_FLOW_DENSITY_ERM_HPP
#define LIOUVILLE_FLOW_DENSITY_ERM_HPP

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include <liouville_flow/bounds.hpp>
#include <liouville_flow/core.hpp>
#include <liouville_flow/flow.hpp>
#include <liouville_flow/parallel.hpp>
#include <liouville_flow/quadrature.hpp>
#include <liouville_flow/random.hpp>
#include <liouville_flow/requ_net.hpp>

namespace liouville_flow
{

// A field that can record a forward pass and pull adjoints of (value, Jacobian)
// back to its input and parameters.
template <typename F>
concept differentiable_field = vector_field<F> && requires(const F &f, F &mf, const Vector &y, const Matrix &g,
                                                            Vector &grad, double t) {
    { f.record(y, t).out } -> std::convertible_to<field_jet>;
    { mf.parameters() } -> std::same_as<Vector &>;
    { f.pullback(f.record(y, t), y, g, grad) } -> std::convertible_to<Vector>;
};

// Density (Psi^h)^{-1}_* nu_0 where Psi^h maps data to the uniform base on the ball.
template <vector_field F>
struct flow_density_model {
    F field;
    flow_schedule schedule;
};

inline void require_in_domain(const Vector &x)
{
    if (!(x.squaredNorm() < 0.25)) {
        throw domain_error("sample outside the open ball of radius 1/2: |x|=" + std::to_string(x.norm()));
    }
}

// log f(x) = log f_0(Psi^h(x)) + sum of step log-determinants. The base is
// constant on the ball, so the endpoint only matters through the domain; a
// drifted endpoint is treated as radially clamped to (1 - 1e-12)/2.
template <vector_field F>
double model_logdensity(const flow_density_model<F> &model, const Vector &x)
{
    require_in_domain(x);
    const auto tape = integrate(model.field, model.schedule, x);
    return -log_ball_volume(model.field.dim()) + tape.logdet;
}

namespace detail
{
constexpr std::size_t sample_block = 32;

template <typename Fn>
double block_sum(std::size_t n, Fn &&term)
{
    const std::size_t blocks = (n + sample_block - 1) / sample_block;
    std::vector<double> partial(blocks, 0.0);
    parallel_blocks(blocks, [&](std::size_t b) {
        const std::size_t end = std::min(n, (b + 1) * sample_block);
        for (std::size_t i = b * sample_block; i < end; ++i) {
            partial[b] += term(i);
        }
    });
    double total = 0.0;
    for (const double v : partial) {
        total += v;
    }
    return total;
}
} // namespace detail

template <vector_field F>
double nll(const flow_density_model<F> &model, const std::vector<Vector> &samples)
{
    if (samples.empty()) {
        throw invalid_argument("nll needs at least one sample");
    }
    model.schedule.require_guard();
    const double total = detail::block_sum(samples.size(), [&](std::size_t i) { return model_logdensity(model, samples[i]); });
    return -total / static_cast<double>(samples.size());
}

// Adds d log f(x) / d theta to grad and returns log f(x). Reverse pass through
// every RK2 step: with M = I + h A2 B, B = I + (h/2) A1, the adjoints of
// log|det M| are h (B M^{-1})^T on A2 and (h^2/2)(M^{-1} A2)^T on A1.
template <differentiable_field F>
double logdensity_gradient(const F &field, const flow_schedule &schedule, const Vector &x, Eigen::Ref<Vector> grad)
{
    require_in_domain(x);
    schedule.require_guard();
    using tape_t = decltype(field.record(x, 0.0));
    struct step_record {
        tape_t first;
        tape_t second;
        Matrix b;
        Matrix m_inv;
    };
    const int d = field.dim();
    const double h = schedule.step();
    const Matrix eye = Matrix::Identity(d, d);
    std::vector<step_record> steps;
    steps.reserve(static_cast<std::size_t>(schedule.steps));
    Vector y = x;
    double logdet = 0.0;
    for (int k = 0; k < schedule.steps; ++k) {
        const double t = k * h;
        step_record s{field.record(y, t), {}, {}, {}};
        const Vector u = y + 0.5 * h * s.first.out.value;
        s.second = field.record(u, t + 0.5 * h);
        s.b = eye + 0.5 * h * s.first.out.jacobian;
        const Matrix m = eye + h * s.second.out.jacobian * s.b;
        const Eigen::PartialPivLU<Matrix> lu(m);
        const double inc = log_abs_det(m);
        if (!std::isfinite(inc)) {
            throw non_finite_state("singular step Jacobian at step " + std::to_string(k));
        }
        logdet += inc;
        s.m_inv = lu.inverse();
        y += h * s.second.out.value;
        require_finite(y, "logdensity_gradient");
        steps.push_back(std::move(s));
    }
    Vector y_bar = Vector::Zero(d);  // uniform base: no dependence on the endpoint
    for (int k = schedule.steps - 1; k >= 0; --k) {
        const auto &s = steps[static_cast<std::size_t>(k)];
        const Matrix g2_jac = h * (s.b * s.m_inv).transpose();
        const Matrix g1_jac = (0.5 * h * h) * (s.m_inv * s.second.out.jacobian).transpose();
        const Vector u_bar = field.pullback(s.second, h * y_bar, g2_jac, grad);
        const Vector y1_bar = field.pullback(s.first, 0.5 * h * u_bar, g1_jac, grad);
        y_bar += u_bar + y1_bar;
    }
    return -log_ball_volume(d) + logdet;
}

struct nll_with_gradient {
    double value = 0.0;
    Vector gradient;
};

template <differentiable_field F>
nll_with_gradient nll_and_gradient(const flow_density_model<F> &model, const std::vector<Vector> &samples)
{
    if (samples.empty()) {
        throw invalid_argument("nll needs at least one sample");
    }
    model.schedule.require_guard();
    const auto q = model.field.parameters().size();
    const std::size_t n = samples.size();
    const std::size_t blocks = (n + detail::sample_block - 1) / detail::sample_block;
    std::vector<Vector> grads(blocks, Vector::Zero(q));
    std::vector<double> values(blocks, 0.0);
    parallel_blocks(blocks, [&](std::size_t b) {
        const std::size_t end = std::min(n, (b + 1) * detail::sample_block);
        for (std::size_t i = b * detail::sample_block; i < end; ++i) {
            values[b] += logdensity_gradient(model.field, model.schedule, samples[i], grads[b]);
        }
    });
    nll_with_gradient out{0.0, Vector::Zero(q)};
    for (std::size_t b = 0; b < blocks; ++b) {
        out.value += values[b];
        out.gradient += grads[b];
    }
    const double scale = -1.0 / static_cast<double>(n);
    out.value *= scale;
    out.gradient *= scale;
    return out;
}

template <differentiable_field F>
Vector nll_gradient(const flow_density_model<F> &model, const std::vector<Vector> &samples)
{
    return nll_and_gradient(model, samples).gradient;
}

// Central differences of nll in every parameter.
template <differentiable_field F>
Vector nll_gradient_fd(flow_density_model<F> model, const std::vector<Vector> &samples, double step = 1e-5)
{
    auto &theta = model.field.parameters();
    Vector grad(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double keep = theta(i);
        theta(i) = keep + step;
        const double up = nll(model, samples);
        theta(i) = keep - step;
        const double down = nll(model, samples);
        theta(i) = keep;
        grad(i) = (up - down) / (2.0 * step);
    }
    return grad;
}

struct train_config {
    double learning_rate = 0.05;
    int iterations = 100;
    int batch_size = 0;  // 0: full batch
    std::uint64_t seed = 0;
    guard_mode guard = guard_mode::empirical;
    bool finite_difference_fallback = false;
    int lipschitz_samples = 256;
    int max_steps = 4096;

    void validate() const
    {
        if (!(learning_rate > 0.0)) {
            throw invalid_argument("learning rate must be positive");
        }
        if (iterations < 0) {
            throw invalid_argument("iterations must be nonnegative");
        }
        if (batch_size < 0) {
            throw invalid_argument("batch size must be nonnegative");
        }
    }
};

struct train_record {
    int iteration = 0;
    double nll = 0.0;
    double guard_lipschitz = 0.0;
    double h = 0.0;
};

template <vector_field F>
struct train_result {
    flow_density_model<F> model;
    std::vector<train_record> trace;
};

// Lipschitz constant used by the guard: sampled, or the capacity formula Lambda.
template <vector_field F>
double guard_lipschitz(const F &field, guard_mode mode, int samples, std::uint64_t seed)
{
    if (mode == guard_mode::formula) {
        if constexpr (requires { field.network(); }) {
            const auto &net = field.network();
            return std::exp(capacity_ledger(field.dim(), net.depth(), net.max_width(), 0.0).log_lambda);
        } else {
            throw invalid_argument("formula guard needs a ReQU network field");
        }
    }
    return empirical_lipschitz(field, samples, seed);
}

// Recomputes the guard constant and doubles m until h * Lambda < 1/2.
template <vector_field F>
void refresh_guard(flow_density_model<F> &model, guard_mode mode, int samples, std::uint64_t seed, int max_steps)
{
    model.schedule.guard_lipschitz = guard_lipschitz(model.field, mode, samples, seed);
    model.schedule.mode = mode;
    while (!model.schedule.guard_holds()) {
        if (model.schedule.steps * 2 > max_steps) {
            throw guard_violation("guard unrecoverable: Lambda=" + std::to_string(model.schedule.guard_lipschitz) +
                                  " needs more than " + std::to_string(max_steps) + " steps");
        }
        model.schedule.steps *= 2;
    }
}

// Projected gradient descent on the empirical NLL. The trace holds the NLL of
// every iterate, including the returned one.
template <differentiable_field F>
train_result<F> train_erm(flow_density_model<F> model, const std::vector<Vector> &samples, const train_config &config)
{
    config.validate();
    for (const auto &x : samples) {
        require_in_domain(x);
    }
    const std::uint64_t lip_seed = config.seed ^ stream_id("density_erm.guard");
    model.schedule.guard_lipschitz = guard_lipschitz(model.field, config.guard, config.lipschitz_samples, lip_seed);
    model.schedule.mode = config.guard;
    model.schedule.require_guard();

    const std::size_t n = samples.size();
    const bool full = config.batch_size == 0 || static_cast<std::size_t>(config.batch_size) >= n;
    std::vector<Vector> batch;
    train_result<F> result{model, {}};
    auto &current = result.model;
    for (int it = 0; it <= config.iterations; ++it) {
        const std::vector<Vector> *data = &samples;
        if (!full && it < config.iterations) {
            counter_rng rng(config.seed, stream_id("density_erm.batch") + static_cast<std::uint64_t>(it));
            batch.clear();
            for (int i = 0; i < config.batch_size; ++i) {
                batch.push_back(samples[static_cast<std::size_t>(rng() % n)]);
            }
            data = &batch;
        }
        if (it == config.iterations) {
            result.trace.push_back({it, nll(current, samples), current.schedule.guard_lipschitz, current.schedule.step()});
            break;
        }
        Vector grad;
        double value = 0.0;
        if (config.finite_difference_fallback) {
            value = nll(current, *data);
            grad = nll_gradient_fd(current, *data);
        } else {
            auto g = nll_and_gradient(current, *data);
            value = g.value;
            grad = std::move(g.gradient);
        }
        result.trace.push_back({it, value, current.schedule.guard_lipschitz, current.schedule.step()});
        current.field.parameters() -= config.learning_rate * grad;
        project_params(current.field.parameters());
        refresh_guard(current, config.guard, config.lipschitz_samples, lip_seed, config.max_steps);
    }
    return result;
}

inline void write_training_log_csv(std::ostream &os, const std::vector<train_record> &trace, std::uint64_t seed)
{
    os << "# schema=training_log/1 seed=" << seed << '\n';
    os << "iter,nll,guard_lipschitz,h\n";
    os.precision(17);
    for (const auto &r : trace) {
        os << r.iteration << ',' << r.nll << ',' << r.guard_lipschitz << ',' << r.h << '\n';
    }
}

// z uniform on the ball, then the fixed-point inverse of the flow.
template <vector_field F>
std::vector<Vector> sample(const flow_density_model<F> &model, std::size_t n, std::uint64_t seed)
{
    model.schedule.require_guard();
    counter_rng rng(seed, "density_erm.sample");
    std::vector<Vector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(sample_ball(rng, model.field.dim()));
    }
    parallel_for(n, [&](std::size_t i) { out[i] = invert_flow(model.field, model.schedule, out[i]); });
    return out;
}

struct kl_result {
    double raw = 0.0;
    double clipped = 0.0;
};

// Grid quadrature of f_mu (log f_mu - log f_model) over the ball.
template <vector_field F>
kl_result kl_estimate(const flow_density_model<F> &model, const std::function<double(const Vector &)> &target_logdensity,
                      int grid_resolution)
{
    const auto grid = ball_grid(model.field.dim(), grid_resolution);
    const double raw = detail::block_sum(grid.size(), [&](std::size_t i) {
        const auto &node = grid[i];
        const double lt = target_logdensity(node.point);
        return node.weight * std::exp(lt) * (lt - model_logdensity(model, node.point));
    });
    return {raw, std::max(raw, 0.0)};
}

// Grid quadrature of the model density; 1 up to quadrature error for any guarded model.
template <vector_field F>
double model_mass(const flow_density_model<F> &model, int grid_resolution)
{
    const auto grid = ball_grid(model.field.dim(), grid_resolution);
    return detail::block_sum(grid.size(), [&](std::size_t i) {
        return grid[i].weight * std::exp(model_logdensity(model, grid[i].point));
    });
}

inline constexpr int checkpoint_schema_version = 1;

inline nlohmann::json model_to_json(const flow_density_model<cutoff_field> &model)
{
    auto j = network_to_json(model.field);
    j["m"] = model.schedule.steps;
    j["direction"] = "data_to_base";
    j["guard_lipschitz"] = model.schedule.guard_lipschitz;
    j["guard_mode"] = to_string(model.schedule.mode);
    j["schema_version"] = checkpoint_schema_version;
    return j;
}

inline flow_density_model<cutoff_field> model_from_json(const nlohmann::json &j)
{
    if (j.value("schema_version", checkpoint_schema_version) != checkpoint_schema_version) {
        throw invalid_argument("unsupported checkpoint schema_version");
    }
    if (j.value("direction", std::string("data_to_base")) != "data_to_base") {
        throw invalid_argument("checkpoint direction must be data_to_base");
    }
    flow_schedule s;
    s.steps = j.at("m").get<int>();
    s.guard_lipschitz = j.value("guard_lipschitz", 0.0);
    s.mode = j.value("guard_mode", std::string("empirical")) == "formula" ? guard_mode::formula : guard_mode::empirical;
    return {cutoff_field_from_json(j), s};
}

} // namespace liouville_flow

#endif
