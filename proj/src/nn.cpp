#include "neurodiff/nn.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

namespace neurodiff {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "unknown";
}

MlpChain::MlpChain(std::vector<LayerShape> layers, PreTransform pre) : layers_(std::move(layers)), pre_(pre) {
    if (layers_.empty()) throw DimensionMismatch("MlpChain needs at least one layer");
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& L = layers_[l];
        if (L.in == 0 || L.out == 0) throw DimensionMismatch("layer " + std::to_string(l) + " has a zero dimension");
        if (l > 0 && layers_[l - 1].out != L.in)
            throw DimensionMismatch("layer " + std::to_string(l) + " expects " + std::to_string(L.in) +
                                    " inputs but the previous layer yields " + std::to_string(layers_[l - 1].out));
        layout_.blocks.push_back({l, true, off, L.out, L.in});
        off += L.out * L.in;
        layout_.blocks.push_back({l, false, off, L.out, 1});
        off += L.out;
    }
    layout_.size = off;
}

ParamVector MlpChain::flatten(const std::vector<DenseLayer>& layers) const {
    if (layers.size() != layers_.size()) throw DimensionMismatch("flatten: layer count mismatch");
    ParamVector pv{std::vector<double>(), layout_};
    pv.values.reserve(layout_.size);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (L.in != layers_[l].in || L.out != layers_[l].out || L.W.size() != L.in * L.out || L.b.size() != L.out)
            throw DimensionMismatch("flatten: layer " + std::to_string(l) + " has inconsistent shape");
        pv.values.insert(pv.values.end(), L.W.begin(), L.W.end());
        pv.values.insert(pv.values.end(), L.b.begin(), L.b.end());
    }
    return pv;
}

std::vector<DenseLayer> MlpChain::unflatten(std::span<const double> p) const {
    if (p.size() != layout_.size) throw DimensionMismatch("unflatten: parameter count mismatch");
    std::vector<DenseLayer> out;
    std::size_t off = 0;
    for (const auto& S : layers_) {
        DenseLayer L;
        L.in = S.in;
        L.out = S.out;
        L.activation = S.activation;
        L.W.assign(p.begin() + off, p.begin() + off + S.in * S.out);
        off += S.in * S.out;
        L.b.assign(p.begin() + off, p.begin() + off + S.out);
        off += S.out;
        out.push_back(std::move(L));
    }
    return out;
}

void MlpChain::pullback(std::span<const double> p, std::span<const double> x, std::span<const double> bar_y,
                        std::span<double> bar_x, std::span<double> bar_p) const {
    if (x.size() != input_dim() || bar_x.size() != input_dim() || bar_y.size() != output_dim() ||
        p.size() != num_params() || bar_p.size() != num_params())
        throw DimensionMismatch("pullback: argument sizes do not match the chain");

    // forward sweep keeping every layer input and post-activation output
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> outputs;
    std::vector<double> h(x.begin(), x.end());
    if (pre_ == PreTransform::Cube)
        for (auto& v : h) v = v * v * v;
    std::size_t off = 0;
    std::vector<std::size_t> offsets;
    for (const auto& L : layers_) {
        offsets.push_back(off);
        const std::size_t b_off = off + L.out * L.in;
        std::vector<double> y(L.out);
        for (std::size_t o = 0; o < L.out; ++o) {
            double acc = p[b_off + o];
            const std::size_t row = off + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) acc += p[row + i] * h[i];
            y[o] = activate(L.activation, acc);
        }
        inputs.push_back(h);
        outputs.push_back(y);
        h = std::move(y);
        off = b_off + L.out;
    }

    std::vector<double> g(bar_y.begin(), bar_y.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& L = layers_[l];
        const auto& a = inputs[l];
        const auto& y = outputs[l];
        for (std::size_t o = 0; o < L.out; ++o) {
            switch (L.activation) {
                case Activation::Tanh: g[o] *= 1.0 - y[o] * y[o]; break;
                case Activation::Relu: g[o] = y[o] > 0.0 ? g[o] : 0.0; break;
                case Activation::Identity: break;
            }
        }
        const std::size_t w_off = offsets[l];
        const std::size_t b_off = w_off + L.out * L.in;
        std::vector<double> g_in(L.in, 0.0);
        for (std::size_t o = 0; o < L.out; ++o) {
            bar_p[b_off + o] += g[o];
            const std::size_t row = w_off + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) {
                bar_p[row + i] += g[o] * a[i];
                g_in[i] += p[row + i] * g[o];
            }
        }
        g = std::move(g_in);
    }
    for (std::size_t i = 0; i < g.size(); ++i)
        bar_x[i] = pre_ == PreTransform::Cube ? g[i] * 3.0 * x[i] * x[i] : g[i];
}

ParamVector init_params(const MlpChain& chain, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    // 53-bit uniform in [0, 1), independent of the standard library's distribution implementation
    auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    ParamVector pv{std::vector<double>(chain.num_params(), 0.0), chain.layout()};
    for (const auto& B : chain.layout().blocks) {
        if (!B.is_weight) continue;
        const auto& L = chain.layers()[B.layer];
        const double bound = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
        for (std::size_t k = 0; k < B.rows * B.cols; ++k) pv.values[B.offset + k] = (2.0 * unit() - 1.0) * bound;
    }
    return pv;
}

std::string ParamLayout::to_json() const {
    nlohmann::json j;
    j["size"] = size;
    j["blocks"] = nlohmann::json::array();
    for (const auto& B : blocks)
        j["blocks"].push_back({{"layer", B.layer},
                               {"kind", B.is_weight ? "W" : "b"},
                               {"offset", B.offset},
                               {"rows", B.rows},
                               {"cols", B.cols}});
    return j.dump(2);
}

void write_csv(std::ostream& os, const ParamVector& p) {
    const auto old = os.precision(17);
    os << "index,value\n";
    for (std::size_t i = 0; i < p.values.size(); ++i) os << i << "," << p.values[i] << "\n";
    os.precision(old);
}

NeuralRhs neural_rhs(const MlpChain& chain) {
    if (chain.input_dim() != chain.output_dim())
        throw DimensionMismatch("network used as an ODE rhs must map R^n to R^n, got " +
                                std::to_string(chain.input_dim()) + " -> " + std::to_string(chain.output_dim()));
    return NeuralRhs{chain};
}

}  // namespace neurodiff
