#ifndef LIOUVILLE_FLOW_BOUNDS_HPP
#define LIOUVILLE_FLOW_BOUNDS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <liouville_flow/core.hpp>
#include <liouville_flow/flow.hpp>

namespace liouville_flow
{

inline constexpr double default_r0 = 1.1180339887498949; // sqrt(5)/2, sup of |(y, t)| on ball x [0, 1]

inline double log_sum_exp(double a, double b)
{
    if (a == -std::numeric_limits<double>::infinity()) {
        return b;
    }
    if (b == -std::numeric_limits<double>::infinity()) {
        return a;
    }
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

// log(1 + e^x)
inline double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(e^y - 1) for y > 0
inline double log_expm1(double y)
{
    return y > 50.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

// A positive constant c stored as log c, and additionally as log log c when
// log c itself overflows (terms like e^Lambda with Lambda beyond ~700).
class log_magnitude
{
public:
    log_magnitude() = default;

    static log_magnitude from_log(double log_value)
    {
        log_magnitude m;
        m.m_log = log_value;
        m.m_loglog = log_value > 0.0 ? std::log(log_value) : std::numeric_limits<double>::quiet_NaN();
        return m;
    }

    // The constant e^{e^y}, i.e. exp of a positive quantity given by its log.
    static log_magnitude from_loglog(double loglog_value)
    {
        log_magnitude m;
        m.m_loglog = loglog_value;
        m.m_log = std::exp(loglog_value);
        return m;
    }

    double log() const
    {
        return m_log;
    }
    double loglog() const
    {
        return m_loglog;
    }
    bool overflowed() const
    {
        return m_log == std::numeric_limits<double>::infinity();
    }
    // Zero (log = -inf) counts as finite.
    bool finite() const
    {
        return !overflowed() || std::isfinite(m_loglog);
    }

    friend log_magnitude operator*(const log_magnitude &a, const log_magnitude &b)
    {
        if (!a.overflowed() && !b.overflowed()) {
            return from_log(a.m_log + b.m_log);
        }
        if (a.overflowed() && b.overflowed()) {
            return from_loglog(log_sum_exp(a.m_loglog, b.m_loglog));
        }
        const auto &big = a.overflowed() ? a : b;
        const auto &small = a.overflowed() ? b : a;
        // log(X + v) = log X + log1p(v / X) with X = e^{loglog}.
        log_magnitude m;
        m.m_log = std::numeric_limits<double>::infinity();
        m.m_loglog = big.m_loglog + std::log1p(small.m_log * std::exp(-big.m_loglog));
        return m;
    }

    log_magnitude pow(double e) const
    {
        if (overflowed()) {
            log_magnitude m;
            m.m_log = std::numeric_limits<double>::infinity();
            m.m_loglog = m_loglog + std::log(e);
            return m;
        }
        return from_log(e * m_log);
    }

    // a <= b, compared on the log scale, or on the log-log scale once either overflows.
    friend bool operator<=(const log_magnitude &a, const log_magnitude &b)
    {
        if (!a.overflowed() && !b.overflowed()) {
            return a.m_log <= b.m_log;
        }
        if (!a.overflowed()) {
            return true;
        }
        if (!b.overflowed()) {
            return false;
        }
        return a.m_loglog <= b.m_loglog;
    }

    // "exp(123.456)" or "exp(exp(45.6))"
    std::string decimal() const
    {
        char buf[64];
        if (!overflowed()) {
            std::snprintf(buf, sizeof buf, "exp(%.6f)", m_log);
        } else {
            std::snprintf(buf, sizeof buf, "exp(exp(%.6f))", m_loglog);
        }
        return buf;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["log"] = overflowed() ? nlohmann::json(nullptr) : nlohmann::json(m_log);
        j["loglog"] = std::isfinite(m_loglog) ? nlohmann::json(m_loglog) : nlohmann::json(nullptr);
        j["decimal"] = decimal();
        return j;
    }

private:
    double m_log = 0.0;
    double m_loglog = -std::numeric_limits<double>::infinity();
};

// log R_l by the recursion R_l = (2W)^2 R_{l-1}^2.
inline std::vector<double> log_radius_recursive(int L, int W, double r0 = default_r0)
{
    std::vector<double> r{std::log(r0)};
    const double two_w = std::log(2.0 * W);
    for (int l = 1; l < std::max(L, 1); ++l) {
        r.push_back(2.0 * two_w + 2.0 * r.back());
    }
    return r;
}

// Closed form (2^{l+1} - 2) log 2W + 2^l log R_0.
inline double log_radius(int l, int W, double r0 = default_r0)
{
    const double p = std::ldexp(1.0, l);
    return (2.0 * p - 2.0) * std::log(2.0 * W) + p * std::log(r0);
}

enum class subgaussian_exponent { theorem = 5, learnability_proof = 6 };

// log Lambda_Z = d (log 8d + e log Lambda + Lambda), e = 5 or 6.
inline log_magnitude subgaussian_constant(int d, double log_lambda,
                                          subgaussian_exponent e = subgaussian_exponent::theorem)
{
    const double poly = d * (std::log(8.0 * d) + static_cast<int>(e) * log_lambda);
    return log_magnitude::from_log(poly) * log_magnitude::from_loglog(std::log(static_cast<double>(d)) + log_lambda);
}

struct bound_ledger {
    int d = 1;
    int L = 1;
    int W = 1;
    double h = 0.0;
    double r0 = default_r0;
    std::vector<double> log_r;  // R_0 .. R_{L-1}
    double log_lambda = 0.0;
    double log_eta_theta = 0.0;   // parameter Lipschitz constant of eta
    double log_eta_omega = 0.0;   // input Lipschitz constant of eta
    double log_deta_theta = 0.0;  // parameter Lipschitz constant of D eta
    double log_deta_omega = 0.0;  // input Lipschitz constant of D eta
    double log_psi_omega = 0.0;   // RK2 step increment, input
    double log_psi_theta = 0.0;   // RK2 step increment, parameters
    log_magnitude rk_theta;       // composed discrete flow, parameters
    log_magnitude lambda_z;
    double log_d = 0.0;           // D = (4 d Lambda^2)^d
    subgaussian_exponent exponent = subgaussian_exponent::theorem;

    // Optional user-supplied or separately estimated constants.
    std::optional<double> log_c_theta;
    std::optional<double> log_c_xi;
    std::optional<double> log_c_xi_hat;
    std::optional<double> gamma1;
    std::optional<double> gamma2;

    bool eta_theta_dominated() const
    {
        return log_eta_theta <= 2.0 * log_lambda;
    }
    bool deta_theta_dominated() const
    {
        return log_deta_theta <= 4.0 * log_lambda;
    }
    // Lambda_Psi^Omega(h) <= e^{h Lambda}
    bool psi_omega_dominated() const
    {
        return log_psi_omega <= h * std::exp(log_lambda);
    }
};

inline bound_ledger capacity_ledger(int d, int L, int W, double h, double r0 = default_r0,
                                    subgaussian_exponent exponent = subgaussian_exponent::theorem)
{
    if (d < 1 || L < 1 || W < 1) {
        throw invalid_argument("capacity ledger needs d, L, W >= 1");
    }
    if (!(r0 >= 1.0)) {
        throw invalid_argument("capacity ledger needs R0 >= 1");
    }
    bound_ledger b;
    b.d = d;
    b.L = L;
    b.W = W;
    b.h = h;
    b.r0 = r0;
    b.exponent = exponent;
    b.log_r = log_radius_recursive(L, W, r0);
    const double two_w = std::log(2.0 * W);
    const double r_top = b.log_r.back();
    const double layer = 2.0 * two_w + r_top;  // log((2W)^2 R_{L-1})

    b.log_lambda = L * layer;
    b.log_eta_theta = std::log(4.0 * L) + (2.0 * L - 1.0) * two_w + (L + 1.0) * r_top;
    b.log_eta_omega = 2.0 * L * two_w;
    for (int l = 0; l < L; ++l) {
        b.log_eta_omega += b.log_r[static_cast<std::size_t>(l)];
    }
    const double log_w = std::log(static_cast<double>(W));
    double inner = log_sum_exp(std::log(8.0) + 2.0 * log_w + r_top, std::log(2.0) + 2.0 * log_w + b.log_eta_theta);
    inner = log_sum_exp(inner, two_w + softplus(r_top));
    b.log_deta_theta = std::log(static_cast<double>(L)) + (L - 1.0) * layer + inner;
    b.log_deta_omega = std::log(static_cast<double>(L)) + (L - 1.0) * layer + 2.0 * log_w + b.log_lambda;

    if (h > 0.0) {
        const double lh = std::log(h);
        b.log_psi_omega = log_sum_exp(log_sum_exp(0.0, lh + b.log_eta_omega),
                                      std::log(0.5) + 2.0 * lh + 2.0 * b.log_eta_omega);
        b.log_psi_theta = b.log_eta_theta + softplus(std::log(0.5 * h) + b.log_eta_omega);
    } else {
        b.log_psi_omega = 0.0;
        b.log_psi_theta = b.log_eta_theta;
    }
    b.rk_theta = log_magnitude::from_log(b.log_psi_theta) * log_magnitude::from_loglog(b.log_eta_omega);
    b.lambda_z = subgaussian_constant(d, b.log_lambda, exponent);
    b.log_d = d * (std::log(4.0 * d) + 2.0 * b.log_lambda);
    return b;
}

// Largest K with 48 (d+1) (3K)^{d+1} <= W, i.e. the floor of (1/3)(W / (48(d+1)))^{1/(d+1)}.
inline int K_of_W(long long W, int d)
{
    if (W < 1 || d < 1) {
        throw invalid_argument("K_of_W needs W >= 1 and d >= 1");
    }
    const auto fits = [&](long long K) {
        long double v = 48.0L * (d + 1);
        for (int i = 0; i <= d; ++i) {
            v *= 3.0L * static_cast<long double>(K);
        }
        return v <= static_cast<long double>(W);
    };
    long long K = 0;
    while (fits(K + 1)) {
        ++K;
    }
    return static_cast<int>(K);
}

// log of (1/h)((2 h^3 C + 1)^d - 1) given log C.
inline double logdet_discretization_bound(double log_c, double h, int d)
{
    if (!(h > 0.0 && h < 1.0)) {
        throw invalid_argument("logdet discretization bound needs h in (0, 1)");
    }
    const double x = std::exp(std::log(2.0) + 3.0 * std::log(h) + log_c);
    if (x == 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    return log_expm1(d * std::log1p(x)) - std::log(h);
}

// log of 48 L W^2 Lambda_Z / sqrt(n).
inline log_magnitude expected_gen_bound(int L, int W, const log_magnitude &lambda_z, double n)
{
    if (!(n >= 1.0)) {
        throw invalid_argument("expected generalization bound needs n >= 1");
    }
    return log_magnitude::from_log(std::log(48.0 * L * W * static_cast<double>(W)) - 0.5 * std::log(n)) * lambda_z;
}

// log of exp(-(1/4) eps^2 n / D^2), D = (4 d Lambda^2)^d.
inline double mcdiarmid_tail(double eps, double n, int d, double log_lambda)
{
    if (!(eps > 0.0)) {
        throw invalid_argument("McDiarmid tail needs eps > 0");
    }
    const double log_d = d * (std::log(4.0 * d) + 2.0 * log_lambda);
    return -0.25 * eps * eps * n * std::exp(-2.0 * log_d);
}

struct pac_schedule_result {
    double h = 0.0;
    long long steps = 0;  // 1 / h
    long long W = 0;
    int K = 0;
    int L = 0;
    bool feasible = false;          // L >= 1
    double log_lambda = 0.0;        // log of omega^{L 2^L}
    bool guard_feasible = false;    // Lambda_n < 1 / (2 h_n)
    std::string warning;
};

// Takes ln n, since feasible schedules (L_n >= 1) need n far beyond double range.
inline pac_schedule_result pac_schedule_log(double ln_n, double p, int d, double r0 = default_r0)
{
    if (!(p > 0.0 && p < 1.0) || !(ln_n >= std::log(3.0)) || d < 1) {
        throw invalid_argument("PAC schedule needs p in (0, 1), n >= 3, d >= 1");
    }
    pac_schedule_result s;
    const double x = (1.0 - p) / (8.0 * d) * ln_n;  // ln n^{(1-p)/8d}
    s.steps = static_cast<long long>(std::ceil(2.0 * x));
    s.h = 1.0 / static_cast<double>(s.steps);
    s.W = static_cast<long long>(std::ceil(p / (2.0 * d) * ln_n / (2.0 * std::sqrt(r0))));
    s.K = K_of_W(std::max<long long>(s.W, 1), d);
    const double omega = 2.0 * std::sqrt(r0) * static_cast<double>(s.W);
    const double ratio = std::log(x) / std::log(omega);
    const double l_real = std::log(ratio) / std::log(4.0);
    if (std::isfinite(l_real) && l_real >= 1.0) {
        s.L = static_cast<int>(std::floor(l_real));
        s.feasible = true;
        s.log_lambda = s.L * std::ldexp(1.0, s.L) * std::log(omega);
        s.guard_feasible = s.log_lambda < -std::log(2.0 * s.h);
    } else {
        s.L = 0;
        s.feasible = false;
        s.guard_feasible = false;
        s.warning = "schedule infeasible: L_n < 1 at this n";
    }
    if (s.feasible && !s.guard_feasible) {
        s.warning = "step-size guard fails for the schedule: Lambda_n >= 1/(2 h_n)";
    } else if (s.feasible && s.K <= 10) {
        s.warning = "K_n <= 2(k+1) for every spline order k >= 4; no admissible cutoff at this n";
    }
    return s;
}

inline pac_schedule_result pac_schedule(double n, double p, int d, double r0 = default_r0)
{
    return pac_schedule_log(std::log(n), p, d, r0);
}

struct pac_sample_size_result {
    double log_c = 0.0;       // log c(p)
    double log_terms[3] = {}; // logs of the three arguments of the max
    double log_n = 0.0;
    std::optional<std::uint64_t> n;  // exact when representable
};

// n(eps, delta) = ceil(max{N~, exp((2c/eps)^{1/min(2, (k-1)/(d+1))}),
//                          (ln(1/delta) / (eps^2/(16 (4d)^{2d}) + 2^{2d}))^{1/p}})
inline pac_sample_size_result pac_sample_size(double eps, double delta, double p, int d, int k, double log_c_h,
                                              double log_c_h_hat, double n_tilde, double r0 = default_r0)
{
    if (!(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) || !(p > 0.0 && p < 1.0)) {
        throw invalid_argument("PAC sample size needs eps, delta, p in (0, 1)");
    }
    pac_sample_size_result r;
    const double a = (k - 1.0) / (d + 1.0);
    const double first = (k - 1.0) * std::log(3.0) + a * std::log(192.0 * d * (d + 1.0) * std::sqrt(r0) / p) + log_c_h;
    const double second = std::log(0.25) + 2.0 * std::log(8.0 * d / (1.0 - p)) + log_c_h_hat;
    r.log_c = log_sum_exp(first, second);
    r.log_terms[0] = n_tilde > 0.0 ? std::log(n_tilde) : -std::numeric_limits<double>::infinity();
    r.log_terms[1] = std::exp((std::log(2.0) + r.log_c - std::log(eps)) / std::min(2.0, a));
    const double denom = eps * eps / (16.0 * std::pow(4.0 * d, 2.0 * d)) + std::pow(2.0, 2.0 * d);
    r.log_terms[2] = (std::log(std::log(1.0 / delta)) - std::log(denom)) / p;
    r.log_n = std::max({r.log_terms[0], r.log_terms[1], r.log_terms[2]});
    if (r.log_n < 62.0 * std::numbers::ln2) {
        // Avoid exp(log(N~)) rounding past an integer N~.
        const double v = r.log_n == r.log_terms[0] ? n_tilde : std::exp(r.log_n);
        r.n = static_cast<std::uint64_t>(std::ceil(v));
    }
    return r;
}

// log(C_xi / K^{k-1} + C^_xi h^2)
inline double model_error_bound(double log_c_xi, double log_c_xi_hat, int K, double h, int k)
{
    if (K < 1 || !(h > 0.0 && h < 1.0)) {
        throw invalid_argument("model error bound needs K >= 1 and h in (0, 1)");
    }
    return log_sum_exp(log_c_xi - (k - 1.0) * std::log(static_cast<double>(K)), log_c_xi_hat + 2.0 * std::log(h));
}

// log c(d, k, xi) = log[(1 + 9^{(d+1)(k-2)} (2k-1)^{2d+5}) (sqrt2 e (d+1))^k 2 ||xi||_{C^k}]
inline double spline_approximation_constant(int d, int k, double xi_ck_norm)
{
    const double big = (d + 1.0) * (k - 2.0) * std::log(9.0) + (2.0 * d + 5.0) * std::log(2.0 * k - 1.0);
    return softplus(big) + k * std::log(std::numbers::sqrt2 * std::numbers::e * (d + 1.0)) +
           std::log(2.0 * xi_ck_norm);
}

// log C(theta, d) from the Gamma constants and the C^1, C^2 norms of eta.
inline double discretization_constant(int d, double h, double gamma1, double gamma2, double eta_c1, double eta_c2)
{
    const double c_theta = 2.0 * eta_c2;
    const double q = 0.5 * h * d * eta_c1;
    const double value = gamma2 / 24.0 + d / 8.0 * gamma1 * eta_c1 + eta_c2 * (d * c_theta / 4.0) * (1.0 + q) +
                         ((1.0 + q) * (1.0 + q) + q) * c_theta * std::expm1(eta_c2);
    return std::log(value);
}

// Global RK2 error h^2 C (e^{Lip} - 1) / Lip with C = 2 ||xi||_{C^2}; limit h^2 C at Lip -> 0.
inline double rk_global_error_bound(double h, double xi_c2_norm, double lipschitz, int order = 2)
{
    const double c = 2.0 * xi_c2_norm;
    const double growth = lipschitz > 0.0 ? std::expm1(lipschitz) / lipschitz : 1.0;
    return std::pow(h, order) * c * growth;
}

struct gamma_estimate {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
};

// Sampled lower bound on the Gamma constants: sup over sampled starts and
// times of the entries of the first and second time derivatives of
// D xi(Phi_tau(y), tau) D Phi_tau(y), by finite differences on a fine RK2 trajectory.
template <vector_field F>
gamma_estimate empirical_gamma(const F &field, int samples, std::uint64_t seed, int fine_steps = 256)
{
    counter_rng rng(seed, "bounds.empirical_gamma");
    gamma_estimate g;
    const int d = field.dim();
    const double dt = 1.0 / fine_steps;
    for (int s = 0; s < samples; ++s) {
        Vector y = sample_ball(rng, d);
        Matrix phi = Matrix::Identity(d, d);
        std::vector<Matrix> m;
        m.reserve(static_cast<std::size_t>(fine_steps) + 1);
        for (int j = 0; j <= fine_steps; ++j) {
            const double t = j * dt;
            m.push_back(field.jacobian(y, t) * phi);
            if (j < fine_steps) {
                auto step = rk2_step_jet(field, t, dt, y);
                phi = step.jacobian * phi;
                y = std::move(step.next);
            }
        }
        for (int j = 1; j < fine_steps; ++j) {
            const auto &a = m[static_cast<std::size_t>(j - 1)];
            const auto &b = m[static_cast<std::size_t>(j)];
            const auto &c = m[static_cast<std::size_t>(j + 1)];
            g.gamma1 = std::max(g.gamma1, ((c - a) / (2.0 * dt)).cwiseAbs().maxCoeff());
            g.gamma2 = std::max(g.gamma2, ((c - 2.0 * b + a) / (dt * dt)).cwiseAbs().maxCoeff());
        }
    }
    return g;
}

inline nlohmann::json ledger_to_json(const bound_ledger &b)
{
    const auto entry = [](double log_value) { return log_magnitude::from_log(log_value).to_json(); };
    nlohmann::json j;
    j["d"] = b.d;
    j["L"] = b.L;
    j["W"] = b.W;
    j["h"] = b.h;
    j["R0"] = b.r0;
    nlohmann::json r = nlohmann::json::array();
    for (const double v : b.log_r) {
        r.push_back(entry(v));
    }
    j["R"] = std::move(r);
    j["Lambda"] = entry(b.log_lambda);
    j["Lambda_eta_theta"] = entry(b.log_eta_theta);
    j["Lambda_eta_omega"] = entry(b.log_eta_omega);
    j["Lambda_Deta_theta"] = entry(b.log_deta_theta);
    j["Lambda_Deta_omega"] = entry(b.log_deta_omega);
    j["Lambda_Psi_omega"] = entry(b.log_psi_omega);
    j["Lambda_Psi_theta"] = entry(b.log_psi_theta);
    j["Lambda_RK_theta"] = b.rk_theta.to_json();
    j["Lambda_Z"] = b.lambda_z.to_json();
    j["Lambda_Z_exponent"] = static_cast<int>(b.exponent);
    j["D"] = entry(b.log_d);
    const auto optional_entry = [&](const char *name, const std::optional<double> &v) {
        if (v) {
            j[name] = entry(*v);
        }
    };
    optional_entry("C_theta", b.log_c_theta);
    optional_entry("C_xi", b.log_c_xi);
    optional_entry("C_xi_hat", b.log_c_xi_hat);
    if (b.gamma1) {
        j["Gamma_1"] = {{"value", *b.gamma1}, {"estimate", "sampled lower bound"}};
    }
    if (b.gamma2) {
        j["Gamma_2"] = {{"value", *b.gamma2}, {"estimate", "sampled lower bound"}};
    }
    j["checks"] = {{"Lambda_eta_theta_le_Lambda_sq", b.eta_theta_dominated()},
                   {"Lambda_Deta_theta_le_Lambda_4", b.deta_theta_dominated()},
                   {"Lambda_Psi_omega_le_exp_hLambda", b.psi_omega_dominated()}};
    return j;
}

inline nlohmann::json pac_schedule_to_json(const pac_schedule_result &s)
{
    nlohmann::json j{{"h", s.h}, {"steps", s.steps}, {"W", s.W}, {"K", s.K}, {"L", s.L}, {"feasible", s.feasible},
                     {"guard_feasible", s.guard_feasible}};
    if (s.feasible) {
        j["Lambda"] = log_magnitude::from_log(s.log_lambda).to_json();
    }
    if (!s.warning.empty()) {
        j["warning"] = s.warning;
    }
    return j;
}

inline nlohmann::json pac_sample_size_to_json(const pac_sample_size_result &r)
{
    nlohmann::json j{{"log_c", r.log_c},
                     {"log_terms", {r.log_terms[0], r.log_terms[1], r.log_terms[2]}},
                     {"log_n", r.log_n},
                     {"n", log_magnitude::from_log(r.log_n).to_json()}};
    if (r.n) {
        j["n_exact"] = *r.n;
    }
    return j;
}

} // namespace liouville_flow

#endif
