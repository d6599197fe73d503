#ifndef LIOUVILLE_FLOW_REQU_NET_HPP
#define LIOUVILLE_FLOW_REQU_NET_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <liouville_flow/bspline.hpp>
#include <liouville_flow/core.hpp>
#include <liouville_flow/random.hpp>

namespace liouville_flow
{

inline double requ(double x)
{
    const double r = std::max(0.0, x);
    return r * r;
}

inline double requ_derivative(double x)
{
    return 2.0 * std::max(0.0, x);
}

// Value of a field together with its spatial Jacobian.
struct field_jet {
    Vector value;
    Matrix jacobian;
};

using row_major_matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fully connected ReQU network eta(y, t): R^d x [0,1] -> R^d. The input is
// (y, t), every hidden layer is requ(W a + b), the last layer is linear with no
// bias. Parameters live in one flat vector in the order w_1, b_1, ..., w_{L-1},
// b_{L-1}, w_L, each weight matrix row-major.
class requ_network
{
public:
    struct tape {
        std::vector<Vector> activations;   // a_0 = (y, t), a_1, ..., a_{L-1}
        std::vector<Matrix> tangents;      // d a_i / d y
        std::vector<Vector> pre;           // z_i of hidden layers
        std::vector<Matrix> pre_tangents;  // d z_i / d y
        field_jet out;
    };

    requ_network() = default;

    requ_network(int dim, std::vector<int> widths) : m_dim(dim), m_widths(std::move(widths))
    {
        if (dim < 1) {
            throw invalid_argument("network dimension must be positive");
        }
        if (m_widths.empty()) {
            throw invalid_argument("network needs at least one layer");
        }
        if (m_widths.back() != dim) {
            throw invalid_argument("output width must equal the dimension d=" + std::to_string(dim));
        }
        std::size_t offset = 0;
        int in = dim + 1;
        for (std::size_t i = 0; i < m_widths.size(); ++i) {
            const int out = m_widths[i];
            if (out < 1) {
                throw invalid_argument("layer widths must be positive");
            }
            m_weight_offset.push_back(offset);
            offset += static_cast<std::size_t>(out) * static_cast<std::size_t>(in);
            m_bias_offset.push_back(offset);
            if (i + 1 < m_widths.size()) {
                offset += static_cast<std::size_t>(out);
            }
            in = out;
        }
        m_params = Vector::Zero(static_cast<Eigen::Index>(offset));
    }

    // Hidden widths given once plus depth: L-1 hidden layers of width w, output d.
    static requ_network uniform(int dim, int depth, int hidden_width)
    {
        std::vector<int> widths(static_cast<std::size_t>(std::max(depth - 1, 0)), hidden_width);
        widths.push_back(dim);
        return requ_network(dim, std::move(widths));
    }

    int dim() const
    {
        return m_dim;
    }
    int depth() const
    {
        return static_cast<int>(m_widths.size());
    }
    const std::vector<int> &widths() const
    {
        return m_widths;
    }
    int max_width() const
    {
        return *std::max_element(m_widths.begin(), m_widths.end());
    }
    int input_width(int layer) const
    {
        return layer == 0 ? m_dim + 1 : m_widths[static_cast<std::size_t>(layer - 1)];
    }
    Eigen::Index parameter_count() const
    {
        return m_params.size();
    }

    Vector &parameters()
    {
        return m_params;
    }
    const Vector &parameters() const
    {
        return m_params;
    }

    Eigen::Map<row_major_matrix> weight(int layer)
    {
        return {m_params.data() + m_weight_offset[static_cast<std::size_t>(layer)], m_widths[static_cast<std::size_t>(layer)],
                input_width(layer)};
    }
    Eigen::Map<const row_major_matrix> weight(int layer) const
    {
        return {m_params.data() + m_weight_offset[static_cast<std::size_t>(layer)], m_widths[static_cast<std::size_t>(layer)],
                input_width(layer)};
    }
    // Hidden layers only; the output layer has no bias.
    Eigen::Map<Vector> bias(int layer)
    {
        return {m_params.data() + m_bias_offset[static_cast<std::size_t>(layer)], m_widths[static_cast<std::size_t>(layer)]};
    }
    Eigen::Map<const Vector> bias(int layer) const
    {
        return {m_params.data() + m_bias_offset[static_cast<std::size_t>(layer)], m_widths[static_cast<std::size_t>(layer)]};
    }

    Vector value(const Vector &y, double t) const
    {
        Vector a = input(y, t);
        for (int i = 0; i + 1 < depth(); ++i) {
            a = (weight(i) * a + bias(i)).unaryExpr(&requ);
        }
        return weight(depth() - 1) * a;
    }

    field_jet jet(const Vector &y, double t) const
    {
        return record(y, t).out;
    }

    Matrix jacobian(const Vector &y, double t) const
    {
        return record(y, t).out.jacobian;
    }

    tape record(const Vector &y, double t) const
    {
        tape tp;
        const auto L = static_cast<std::size_t>(depth());
        tp.activations.reserve(L);
        tp.tangents.reserve(L);
        tp.activations.push_back(input(y, t));
        Matrix tangent = Matrix::Zero(m_dim + 1, m_dim);
        tangent.topRows(m_dim).setIdentity();
        tp.tangents.push_back(std::move(tangent));
        for (int i = 0; i + 1 < depth(); ++i) {
            Vector z = weight(i) * tp.activations.back() + bias(i);
            Matrix dz = weight(i) * tp.tangents.back();
            Vector slope = z.unaryExpr(&requ_derivative);
            tp.activations.push_back(z.unaryExpr(&requ));
            tp.tangents.push_back(slope.asDiagonal() * dz);
            tp.pre.push_back(std::move(z));
            tp.pre_tangents.push_back(std::move(dz));
        }
        const auto last = weight(depth() - 1);
        tp.out.value = last * tp.activations.back();
        tp.out.jacobian = last * tp.tangents.back();
        return tp;
    }

    // Reverse pass through (value, jacobian). Given the adjoints g of the value
    // and G of the spatial Jacobian, adds d<g,eta> + d<G,D_y eta> w.r.t. the
    // parameters into grad and returns the derivative w.r.t. y.
    Vector pullback(const tape &tp, const Vector &g, const Matrix &G, Eigen::Ref<Vector> grad) const
    {
        const int last = depth() - 1;
        auto grad_weight = [&](int layer) {
            return Eigen::Map<row_major_matrix>(grad.data() + m_weight_offset[static_cast<std::size_t>(layer)],
                                                m_widths[static_cast<std::size_t>(layer)], input_width(layer));
        };
        const auto top = static_cast<std::size_t>(last);
        grad_weight(last).noalias() += g * tp.activations[top].transpose();
        grad_weight(last).noalias() += G * tp.tangents[top].transpose();
        Vector a_bar = weight(last).transpose() * g;
        Matrix t_bar = weight(last).transpose() * G;

        for (int i = last - 1; i >= 0; --i) {
            const auto k = static_cast<std::size_t>(i);
            const Vector &z = tp.pre[k];
            const Vector slope = z.unaryExpr(&requ_derivative);
            const Vector curvature = z.unaryExpr([](double v) { return v > 0.0 ? 2.0 : 0.0; });
            const Vector z_bar = a_bar.cwiseProduct(slope) +
                                 curvature.cwiseProduct(t_bar.cwiseProduct(tp.pre_tangents[k]).rowwise().sum());
            const Matrix dz_bar = slope.asDiagonal() * t_bar;
            grad_weight(i).noalias() += z_bar * tp.activations[k].transpose();
            grad_weight(i).noalias() += dz_bar * tp.tangents[k].transpose();
            grad.segment(static_cast<Eigen::Index>(m_bias_offset[k]), z.size()) += z_bar;
            a_bar = weight(i).transpose() * z_bar;
            t_bar = weight(i).transpose() * dz_bar;
        }
        return a_bar.head(m_dim);
    }

private:
    Vector input(const Vector &y, double t) const
    {
        if (y.size() != m_dim) {
            throw dimension_mismatch("network expects y of size " + std::to_string(m_dim) + ", got " +
                                     std::to_string(y.size()));
        }
        Vector a(m_dim + 1);
        a.head(m_dim) = y;
        a(m_dim) = t;
        return a;
    }

    int m_dim = 0;
    std::vector<int> m_widths;
    std::vector<std::size_t> m_weight_offset;
    std::vector<std::size_t> m_bias_offset;
    Vector m_params;
};

// chi_K(y) * eta(y, t) with chi_K the radial spline cutoff; vanishes for |y| >= 1/2.
class cutoff_field
{
public:
    struct tape {
        Vector y;
        spline_jet chi;
        std::optional<requ_network::tape> inner;
        field_jet out;
    };

    cutoff_field(requ_network net, int intervals, int order) : m_net(std::move(net)), m_spline(intervals, order)
    {
        if (order < 4) {
            throw invalid_argument("cutoff spline order must be >= 4");
        }
    }

    int dim() const
    {
        return m_net.dim();
    }
    const requ_network &network() const
    {
        return m_net;
    }
    requ_network &network()
    {
        return m_net;
    }
    const cutoff_spline &spline() const
    {
        return m_spline;
    }
    Vector &parameters()
    {
        return m_net.parameters();
    }
    const Vector &parameters() const
    {
        return m_net.parameters();
    }

    Vector value(const Vector &y, double t) const
    {
        const double s = 4.0 * y.squaredNorm();
        if (y.size() != dim()) {
            throw dimension_mismatch("cutoff field expects y of size " + std::to_string(dim()));
        }
        if (s >= 1.0) {
            return Vector::Zero(dim());
        }
        return m_spline.value(s) * m_net.value(y, t);
    }

    field_jet jet(const Vector &y, double t) const
    {
        return record(y, t).out;
    }

    Matrix jacobian(const Vector &y, double t) const
    {
        return record(y, t).out.jacobian;
    }

    tape record(const Vector &y, double t) const
    {
        if (y.size() != dim()) {
            throw dimension_mismatch("cutoff field expects y of size " + std::to_string(dim()));
        }
        tape tp;
        tp.y = y;
        const double s = 4.0 * y.squaredNorm();
        if (s >= 1.0) {
            tp.out = {Vector::Zero(dim()), Matrix::Zero(dim(), dim())};
            return tp;
        }
        tp.chi = m_spline.jet(s);
        tp.inner = m_net.record(y, t);
        const Vector grad_chi = 8.0 * tp.chi.first * y;
        tp.out.value = tp.chi.value * tp.inner->out.value;
        tp.out.jacobian = tp.inner->out.value * grad_chi.transpose() + tp.chi.value * tp.inner->out.jacobian;
        return tp;
    }

    Vector pullback(const tape &tp, const Vector &g, const Matrix &G, Eigen::Ref<Vector> grad) const
    {
        if (!tp.inner) {
            return Vector::Zero(dim());
        }
        const auto &inner = tp.inner->out;
        const Vector grad_chi = 8.0 * tp.chi.first * tp.y;
        const Vector g_inner = tp.chi.value * g + G * grad_chi;
        const Matrix G_inner = tp.chi.value * G;
        Vector y_bar = m_net.pullback(*tp.inner, g_inner, G_inner, grad);
        // chi and grad chi also depend on y; Hess chi = 8 S' I + 64 S'' y y^T.
        y_bar += (g.dot(inner.value) + (G.array() * inner.jacobian.array()).sum()) * grad_chi;
        const Vector w = G.transpose() * inner.value;
        y_bar += 8.0 * tp.chi.first * w + 64.0 * tp.chi.second * tp.y.dot(w) * tp.y;
        return y_bar;
    }

private:
    requ_network m_net;
    cutoff_spline m_spline;
};

template <typename Field>
Vector forward(const Field &field, const Vector &y, double t)
{
    return field.value(y, t);
}

template <typename Field>
Matrix spatial_jacobian(const Field &field, const Vector &y, double t)
{
    return field.jacobian(y, t);
}

template <typename Field>
double divergence(const Field &field, const Vector &y, double t)
{
    return spatial_jacobian(field, y, t).trace();
}

inline void project_params(Vector &params)
{
    params = params.cwiseMax(-1.0).cwiseMin(1.0);
}

inline requ_network project_params(requ_network net)
{
    project_params(net.parameters());
    return net;
}

inline cutoff_field project_params(cutoff_field field)
{
    project_params(field.parameters());
    return field;
}

// Uniform on [-0.5/W, 0.5/W] with W the maximal width.
inline void initialize_uniform(requ_network &net, std::uint64_t seed)
{
    counter_rng rng(seed, "requ_net.init");
    const double scale = 0.5 / net.max_width();
    for (Eigen::Index i = 0; i < net.parameter_count(); ++i) {
        net.parameters()(i) = rng.uniform(-scale, scale);
    }
}

// Hidden layers uniform on [-scale, scale], readout zero: the field starts at
// exactly zero while the hidden features are not vanishingly small.
inline void initialize_zero_readout(requ_network &net, std::uint64_t seed, double scale = 1.0)
{
    counter_rng rng(seed, "requ_net.init_zero_readout");
    for (Eigen::Index i = 0; i < net.parameter_count(); ++i) {
        net.parameters()(i) = rng.uniform(-scale, scale);
    }
    net.weight(net.depth() - 1).setZero();
}

// Uniform on the full parameter box [-1, 1]^q.
inline void sample_parameter_box(requ_network &net, counter_rng &rng)
{
    for (Eigen::Index i = 0; i < net.parameter_count(); ++i) {
        net.parameters()(i) = rng.uniform(-1.0, 1.0);
    }
}

// JSON: {d, L, widths, weights: [row-major per layer], biases: [per hidden layer], cutoff: {K, k} | null}
inline nlohmann::json network_to_json(const requ_network &net, std::optional<std::pair<int, int>> cutoff = std::nullopt)
{
    nlohmann::json j;
    j["d"] = net.dim();
    j["L"] = net.depth();
    j["widths"] = net.widths();
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (int i = 0; i < net.depth(); ++i) {
        const auto w = net.weight(i);
        weights.push_back(std::vector<double>(w.data(), w.data() + w.size()));
        if (i + 1 < net.depth()) {
            const auto b = net.bias(i);
            biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
        }
    }
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);
    if (cutoff) {
        j["cutoff"] = {{"K", cutoff->first}, {"k", cutoff->second}};
    } else {
        j["cutoff"] = nullptr;
    }
    return j;
}

inline nlohmann::json network_to_json(const cutoff_field &field)
{
    return network_to_json(field.network(), std::make_pair(field.spline().intervals(), field.spline().order()));
}

inline requ_network network_from_json(const nlohmann::json &j)
{
    const int d = j.at("d").get<int>();
    const auto widths = j.at("widths").get<std::vector<int>>();
    if (j.contains("L") && j.at("L").get<int>() != static_cast<int>(widths.size())) {
        throw invalid_argument("network JSON: L does not match widths");
    }
    requ_network net(d, widths);
    const auto &weights = j.at("weights");
    const auto &biases = j.at("biases");
    if (weights.size() != widths.size() || biases.size() + 1 != widths.size()) {
        throw invalid_argument("network JSON: layer count mismatch");
    }
    for (int i = 0; i < net.depth(); ++i) {
        const auto w = weights.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
        auto dst = net.weight(i);
        if (static_cast<Eigen::Index>(w.size()) != dst.size()) {
            throw invalid_argument("network JSON: weight size mismatch in layer " + std::to_string(i));
        }
        std::copy(w.begin(), w.end(), dst.data());
        if (i + 1 < net.depth()) {
            const auto b = biases.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
            auto bdst = net.bias(i);
            if (static_cast<Eigen::Index>(b.size()) != bdst.size()) {
                throw invalid_argument("network JSON: bias size mismatch in layer " + std::to_string(i));
            }
            std::copy(b.begin(), b.end(), bdst.data());
        }
    }
    return net;
}

inline cutoff_field cutoff_field_from_json(const nlohmann::json &j)
{
    const auto &c = j.at("cutoff");
    if (c.is_null()) {
        throw invalid_argument("network JSON has no cutoff section");
    }
    return cutoff_field(network_from_json(j), c.at("K").get<int>(), c.at("k").get<int>());
}

} // namespace liouville_flow

#endif
