#pragma once

// Dense networks over a flat parameter vector. The flat layout is, per
// layer, W row-major (out x in) followed by b.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neurodiff/dual.hpp"
#include "neurodiff/ode.hpp"

namespace neurodiff {

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Activation { Identity, Tanh, Relu };
enum class PreTransform { None, Cube };

std::string_view to_string(Activation a);

struct LayerShape {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::Identity;
};

struct DenseLayer {
    std::vector<double> W;  // row-major, out x in
    std::vector<double> b;
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::Identity;
};

struct ParamBlock {
    std::size_t layer = 0;
    bool is_weight = true;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

struct ParamLayout {
    std::vector<ParamBlock> blocks;
    std::size_t size = 0;

    std::string to_json() const;
};

struct ParamVector {
    std::vector<double> values;
    ParamLayout layout;
};

/// Writes `index,value`.
void write_csv(std::ostream& os, const ParamVector& p);

template <class T>
T activate(Activation a, const T& x) {
    using std::tanh;
    switch (a) {
        case Activation::Tanh: return tanh(x);
        case Activation::Relu: return relu(x);
        case Activation::Identity: break;
    }
    return x;
}

class MlpChain {
public:
    MlpChain(std::vector<LayerShape> layers, PreTransform pre = PreTransform::None);

    const std::vector<LayerShape>& layers() const { return layers_; }
    PreTransform pre_transform() const { return pre_; }
    std::size_t input_dim() const { return layers_.front().in; }
    std::size_t output_dim() const { return layers_.back().out; }
    std::size_t num_params() const { return layout_.size; }
    const ParamLayout& layout() const { return layout_; }

    ParamVector flatten(const std::vector<DenseLayer>& layers) const;
    std::vector<DenseLayer> unflatten(std::span<const double> p) const;

    template <class T>
    std::vector<T> forward(std::span<const T> p, std::span<const T> x) const;

    /// Reverse sweep: given the cotangent `bar_y` of the output at (p, x),
    /// writes bar_y^T dy/dx into `bar_x` and adds bar_y^T dy/dp into `bar_p`.
    void pullback(std::span<const double> p, std::span<const double> x, std::span<const double> bar_y,
                  std::span<double> bar_x, std::span<double> bar_p) const;

private:
    std::vector<LayerShape> layers_;
    PreTransform pre_;
    ParamLayout layout_;
};

template <class T>
std::vector<T> MlpChain::forward(std::span<const T> p, std::span<const T> x) const {
    if (x.size() != input_dim())
        throw DimensionMismatch("network input has size " + std::to_string(x.size()) + ", expected " +
                                std::to_string(input_dim()));
    if (p.size() != num_params())
        throw DimensionMismatch("parameter vector has size " + std::to_string(p.size()) + ", expected " +
                                std::to_string(num_params()));
    std::vector<T> h(x.begin(), x.end());
    if (pre_ == PreTransform::Cube)
        for (auto& v : h) v = v * v * v;
    std::size_t off = 0;
    for (const auto& L : layers_) {
        const std::size_t b_off = off + L.out * L.in;
        std::vector<T> y(L.out);
        for (std::size_t o = 0; o < L.out; ++o) {
            T acc = p[b_off + o];
            const std::size_t row = off + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) acc += p[row + i] * h[i];
            y[o] = activate(L.activation, acc);
        }
        h = std::move(y);
        off = b_off + L.out;
    }
    return h;
}

template <class T>
std::vector<T> mlp_forward(const MlpChain& chain, std::span<const T> p, std::span<const T> x) {
    return chain.forward(p, x);
}

/// Glorot-uniform weights in [-sqrt(6/(in+out)), sqrt(6/(in+out))], zero
/// biases, deterministic in `seed`.
ParamVector init_params(const MlpChain& chain, std::uint64_t seed);

/// A network used as a time-invariant ODE right-hand side, u' = net(u).
struct NeuralRhs {
    MlpChain chain;

    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P> p, double) const {
        const auto y = chain.forward(p, u);
        std::copy(y.begin(), y.end(), du.begin());
    }

    /// lambda^T df/du and lambda^T df/dp, via the network's reverse sweep.
    void vjp(std::span<const double> u, std::span<const double> p, double, std::span<const double> lambda,
             std::span<double> out_u, std::span<double> out_p) const {
        std::fill(out_p.begin(), out_p.end(), 0.0);
        chain.pullback(p, u, lambda, out_u, out_p);
    }
};

/// Checks that the chain maps the state space to itself.
NeuralRhs neural_rhs(const MlpChain& chain);

inline OdeProblem<NeuralRhs> neural_ode(const MlpChain& chain, std::vector<double> params, std::vector<double> u0,
                                        std::pair<double, double> tspan) {
    if (params.size() != chain.num_params()) throw DimensionMismatch("neural_ode: parameter count mismatch");
    if (u0.size() != chain.input_dim()) throw DimensionMismatch("neural_ode: state dimension mismatch");
    return make_ode(neural_rhs(chain), std::move(u0), tspan, std::move(params));
}

}  // namespace neurodiff
