#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gorila {

/// One named tensor inside a flat parameter vector. Weights are stored
/// row-major as (rows = output dim, cols = input dim); biases have cols = 1.
struct LayoutEntry {
    std::string name;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const LayoutEntry&) const = default;
};

using ParamLayout = std::vector<LayoutEntry>;

/// Throws LayoutError unless entries are contiguous from offset 0 and each
/// length equals rows * cols. Returns the total length.
std::size_t validate_layout(const ParamLayout& layout);

/// Flat parameter vector with its tensor layout. Used for θ, θ⁻, θ⁺ and for
/// gradients, which share the layout of the parameters they belong to.
struct ParamVector {
    std::vector<double> values;
    ParamLayout layout;

    std::size_t size() const noexcept { return values.size(); }
    void validate() const;

    static ParamVector zeros_like(const ParamVector& other);

    bool operator==(const ParamVector&) const = default;
};

enum class Activation : std::uint8_t { rectifier, identity };

struct LayerSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    Activation activation = Activation::rectifier;

    bool operator==(const LayerSpec&) const = default;
};

/// Layers for an MLP: rectifier hidden layers, identity output of size
/// action_count.
std::vector<LayerSpec> mlp_layers(std::size_t input_dim, std::span<const std::size_t> hidden,
                                  std::size_t action_count);

/// Feedforward Q-network Q(s, ·; θ) over a flat ParamVector.
class QNetwork {
public:
    explicit QNetwork(std::vector<LayerSpec> layers);

    static QNetwork mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                        std::size_t action_count);

    /// Uniform(±1/sqrt(fan_in)) for weights and biases.
    void init_uniform(std::uint64_t seed);

    std::vector<double> forward(std::span<const double> state) const;

    /// Returns upstream · ∇θ Q(state, action; θ).
    ParamVector backward(std::span<const double> state, std::size_t action,
                         double upstream) const;

    /// Adds upstream · ∇θ Q(state, action; θ) into grad (which must have
    /// params().size() elements). backward() is this applied to zeros.
    void backward_into(std::span<const double> state, std::size_t action, double upstream,
                       std::span<double> grad) const;

    /// Copies src into this network's parameters. Layouts must match exactly.
    void sync_from(const ParamVector& src);
    void sync_from(std::span<const double> values);

    ParamVector flatten() const { return params_; }

    const ParamVector& params() const noexcept { return params_; }
    std::span<double> mutable_values() noexcept { return params_.values; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }

    std::size_t input_dim() const noexcept { return layers_.front().input_dim; }
    std::size_t action_count() const noexcept { return layers_.back().output_dim; }

private:
    struct LayerView {
        std::size_t weight_offset;
        std::size_t bias_offset;
    };

    void check_state(std::span<const double> state) const;

    std::vector<LayerSpec> layers_;
    std::vector<LayerView> views_;
    ParamVector params_;
};

/// AdaGrad accumulator state for one parameter slice.
struct AdaGradState {
    std::vector<double> accumulators;
    double rate = 0.05;
    double epsilon = 1e-8;

    static AdaGradState fresh(std::size_t n, double rate, double epsilon);
};

/// accumulator[i] += g[i]²; param[i] -= rate · g[i] / (sqrt(accumulator[i]) + ε).
/// Entries with g[i] == 0 are left bitwise untouched.
void adagrad_apply(std::span<double> params, std::span<const double> grad, AdaGradState& state);

/// Checkpoint file: "GRLA", u32 format version, layer table, then the
/// values as little-endian binary64 in layout order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamVector& params);
ParamVector load_checkpoint(const std::string& path);

std::vector<std::uint8_t> serialize_checkpoint(const ParamVector& params);
ParamVector deserialize_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace gorila
