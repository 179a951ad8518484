#include "gorila/nn.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "gorila/bytes.hpp"
#include "gorila/errors.hpp"

namespace gorila {

std::size_t validate_layout(const ParamLayout& layout) {
    std::size_t expected = 0;
    for (const auto& e : layout) {
        if (e.offset != expected) {
            throw LayoutError("layout entry '" + e.name + "' is not contiguous");
        }
        if (e.length != static_cast<std::size_t>(e.rows) * e.cols) {
            throw LayoutError("layout entry '" + e.name + "' length does not match its shape");
        }
        expected += e.length;
    }
    return expected;
}

void ParamVector::validate() const {
    if (validate_layout(layout) != values.size()) {
        throw LayoutError("layout does not cover the parameter vector exactly");
    }
}

ParamVector ParamVector::zeros_like(const ParamVector& other) {
    return ParamVector{std::vector<double>(other.values.size(), 0.0), other.layout};
}

std::vector<LayerSpec> mlp_layers(std::size_t input_dim, std::span<const std::size_t> hidden,
                                  std::size_t action_count) {
    std::vector<LayerSpec> layers;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        layers.push_back({in, h, Activation::rectifier});
        in = h;
    }
    layers.push_back({in, action_count, Activation::identity});
    return layers;
}

QNetwork::QNetwork(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.input_dim == 0 || l.output_dim == 0) throw ShapeError("zero-sized layer");
        if (i > 0 && layers_[i - 1].output_dim != l.input_dim) {
            throw ShapeError("layer " + std::to_string(i) + " input does not chain");
        }
        const bool last = i + 1 == layers_.size();
        if (last && l.activation != Activation::identity) {
            throw ShapeError("output layer must use identity activation");
        }
        if (!last && l.activation != Activation::rectifier) {
            throw ShapeError("hidden layers must use rectifier activation");
        }
    }

    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const auto rows = static_cast<std::uint32_t>(l.output_dim);
        const auto cols = static_cast<std::uint32_t>(l.input_dim);
        LayerView view{offset, 0};
        params_.layout.push_back({"W" + std::to_string(i), rows, cols, offset, l.output_dim * l.input_dim});
        offset += l.output_dim * l.input_dim;
        view.bias_offset = offset;
        params_.layout.push_back({"b" + std::to_string(i), rows, 1, offset, l.output_dim});
        offset += l.output_dim;
        views_.push_back(view);
    }
    params_.values.assign(offset, 0.0);
}

QNetwork QNetwork::mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                       std::size_t action_count) {
    return QNetwork(mlp_layers(input_dim, hidden, action_count));
}

void QNetwork::init_uniform(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layers_[i].input_dim));
        std::uniform_real_distribution<double> dist(-bound, bound);
        const std::size_t begin = views_[i].weight_offset;
        const std::size_t end = views_[i].bias_offset + layers_[i].output_dim;
        for (std::size_t k = begin; k < end; ++k) params_.values[k] = dist(rng);
    }
}

void QNetwork::check_state(std::span<const double> state) const {
    if (state.size() != input_dim()) {
        throw ShapeError("state has " + std::to_string(state.size()) + " elements, network expects " +
                         std::to_string(input_dim()));
    }
}

std::vector<double> QNetwork::forward(std::span<const double> state) const {
    check_state(state);
    const auto& w = params_.values;
    std::vector<double> in(state.begin(), state.end());
    std::vector<double> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        out.assign(l.output_dim, 0.0);
        for (std::size_t r = 0; r < l.output_dim; ++r) {
            const double* row = w.data() + views_[i].weight_offset + r * l.input_dim;
            double acc = w[views_[i].bias_offset + r];
            for (std::size_t c = 0; c < l.input_dim; ++c) acc += row[c] * in[c];
            if (l.activation == Activation::rectifier && acc < 0.0) acc = 0.0;
            out[r] = acc;
        }
        in.swap(out);
    }
    return in;
}

ParamVector QNetwork::backward(std::span<const double> state, std::size_t action,
                               double upstream) const {
    ParamVector grad = ParamVector::zeros_like(params_);
    backward_into(state, action, upstream, grad.values);
    return grad;
}

void QNetwork::backward_into(std::span<const double> state, std::size_t action, double upstream,
                             std::span<double> grad) const {
    check_state(state);
    if (action >= action_count()) {
        throw RangeError("action " + std::to_string(action) + " out of range for " +
                         std::to_string(action_count()) + " actions");
    }
    if (grad.size() != params_.values.size()) {
        throw ShapeError("gradient buffer does not match parameter count");
    }
    const auto& w = params_.values;
    const std::size_t n_layers = layers_.size();

    // activations[0] is the input; activations[i + 1] is the output of layer i.
    std::vector<std::vector<double>> activations(n_layers + 1);
    activations[0].assign(state.begin(), state.end());
    for (std::size_t i = 0; i < n_layers; ++i) {
        const auto& l = layers_[i];
        const auto& in = activations[i];
        auto& out = activations[i + 1];
        out.assign(l.output_dim, 0.0);
        for (std::size_t r = 0; r < l.output_dim; ++r) {
            const double* row = w.data() + views_[i].weight_offset + r * l.input_dim;
            double acc = w[views_[i].bias_offset + r];
            for (std::size_t c = 0; c < l.input_dim; ++c) acc += row[c] * in[c];
            if (l.activation == Activation::rectifier && acc < 0.0) acc = 0.0;
            out[r] = acc;
        }
    }

    // delta holds d(upstream · Q_a)/d(preactivation) for the current layer.
    std::vector<double> delta(layers_.back().output_dim, 0.0);
    delta[action] = upstream;
    std::vector<double> prev_delta;
    for (std::size_t i = n_layers; i-- > 0;) {
        const auto& l = layers_[i];
        const auto& in = activations[i];
        for (std::size_t r = 0; r < l.output_dim; ++r) {
            const double d = delta[r];
            if (d == 0.0) continue;
            double* grow = grad.data() + views_[i].weight_offset + r * l.input_dim;
            for (std::size_t c = 0; c < l.input_dim; ++c) grow[c] += d * in[c];
            grad[views_[i].bias_offset + r] += d;
        }
        if (i == 0) break;
        // Rectifier subgradient at exactly zero is zero; the stored output is
        // zero whenever the preactivation was not positive.
        prev_delta.assign(l.input_dim, 0.0);
        for (std::size_t r = 0; r < l.output_dim; ++r) {
            const double d = delta[r];
            if (d == 0.0) continue;
            const double* row = w.data() + views_[i].weight_offset + r * l.input_dim;
            for (std::size_t c = 0; c < l.input_dim; ++c) prev_delta[c] += row[c] * d;
        }
        for (std::size_t c = 0; c < l.input_dim; ++c) {
            if (in[c] <= 0.0) prev_delta[c] = 0.0;
        }
        delta.swap(prev_delta);
    }
}

void QNetwork::sync_from(const ParamVector& src) {
    if (src.layout != params_.layout) {
        throw LayoutError("source layout differs from network layout");
    }
    if (src.values.size() != params_.values.size()) {
        throw LayoutError("source value count differs from network parameter count");
    }
    params_.values = src.values;
}

void QNetwork::sync_from(std::span<const double> values) {
    if (values.size() != params_.values.size()) {
        throw LayoutError("source value count differs from network parameter count");
    }
    std::copy(values.begin(), values.end(), params_.values.begin());
}

AdaGradState AdaGradState::fresh(std::size_t n, double rate, double epsilon) {
    return AdaGradState{std::vector<double>(n, 0.0), rate, epsilon};
}

void adagrad_apply(std::span<double> params, std::span<const double> grad, AdaGradState& state) {
    if (params.size() != grad.size() || state.accumulators.size() != params.size()) {
        throw ShapeError("adagrad slices differ in length");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        state.accumulators[i] += g * g;
        params[i] -= state.rate * g / (std::sqrt(state.accumulators[i]) + state.epsilon);
    }
}

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'R', 'L', 'A'};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ParamVector& params) {
    params.validate();
    ByteWriter w;
    for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.layout.size()));
    for (const auto& e : params.layout) {
        w.str(e.name);
        w.u32(e.rows);
        w.u32(e.cols);
        w.u64(e.offset);
        w.u64(e.length);
    }
    w.u64(params.values.size());
    w.f64s(params.values);
    return w.take();
}

ParamVector deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    try {
        ByteReader r(bytes);
        for (char c : kCheckpointMagic) {
            if (r.u8() != static_cast<std::uint8_t>(c)) throw LayoutError("not a checkpoint file");
        }
        const std::uint32_t version = r.u32();
        if (version != kCheckpointVersion) {
            throw LayoutError("unsupported checkpoint version " + std::to_string(version));
        }
        ParamVector pv;
        const std::uint32_t n_entries = r.u32();
        for (std::uint32_t i = 0; i < n_entries; ++i) {
            LayoutEntry e;
            e.name = r.str();
            e.rows = r.u32();
            e.cols = r.u32();
            e.offset = r.u64();
            e.length = r.u64();
            pv.layout.push_back(std::move(e));
        }
        pv.values = r.f64s(r.u64());
        if (!r.done()) throw LayoutError("trailing bytes after checkpoint values");
        pv.validate();
        return pv;
    } catch (const ProtocolError& e) {
        throw LayoutError(std::string("corrupt checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const ParamVector& params) {
    const auto bytes = serialize_checkpoint(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint: " + path);
}

ParamVector load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace gorila
