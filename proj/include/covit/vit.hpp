#pragma once

// Vision transformer classifier: patch embedding, class token, learned
// positional embeddings, pre-LN encoder blocks and a linear head on the
// class token. The 2D variant reads a replicated 3-channel image, the 3D
// variant a 32-slice volume.

#include "covit/autodiff.hpp"
#include "covit/imaging.hpp"

#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace covit {

enum class Variant { vit2d, vit3d };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

// Class index of COVID in the logits / probabilities.
inline constexpr std::size_t kCovidClass = 1;

struct ModelConfig {
    Variant variant = Variant::vit2d;
    std::size_t image_size = 224;   // input side after any resampling
    std::size_t volume_depth = 32;  // 3D only
    std::size_t channels = 3;       // 2D only
    std::size_t patch_size = 7;
    std::size_t embed_dim = 128;
    std::size_t depth = 6;
    std::size_t num_heads = 8;
    std::size_t mlp_dim = 256;
    std::size_t num_classes = 2;
    double dropout = 0.1;

    static ModelConfig defaults(Variant variant);

    // Throws ConfigError on an inconsistent configuration.
    void validate() const;

    std::size_t num_patches() const;
    std::size_t patch_dim() const;
    std::size_t head_dim() const { return embed_dim / num_heads; }

    std::vector<std::pair<std::string, std::string>> to_pairs() const;
    static ModelConfig from_pairs(const std::map<std::string, std::string>& kv);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Number of scalar parameters implied by a configuration.
std::size_t parameter_count(const ModelConfig& config);

// Named parameter tensors in a fixed order.
class ModelParams {
public:
    ModelParams() = default;

    // Glorot-uniform projections, truncated-normal(0.02) position embedding
    // and head, zero biases and class token, unit LN gains.
    static ModelParams initialize(const ModelConfig& config, std::mt19937_64& rng);
    static ModelParams zeros(const ModelConfig& config);

    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<std::pair<std::string, Tensor>>& entries() noexcept { return entries_; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
    std::vector<Tensor*> tensors();
    std::size_t scalar_count() const;

    void add(std::string name, Tensor value);

    friend bool operator==(const ModelParams& a, const ModelParams& b) { return a.entries_ == b.entries_; }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

// image: [C x H x W] -> [(H/p)(W/p) x C*p*p], raster patch order, channel-first within a patch.
Tensor patchify2d(const Tensor& image, std::size_t patch);
Tensor unpatchify2d(const Tensor& tokens, std::size_t channels, std::size_t height, std::size_t width, std::size_t patch);
// volume: [D x H x W] -> [(D/p)(H/p)(W/p) x p^3], z-major patch order.
Tensor patchify3d(const Tensor& volume, std::size_t patch);
Tensor unpatchify3d(const Tensor& tokens, std::size_t depth, std::size_t height, std::size_t width, std::size_t patch);

// Grayscale model-stage image -> tokens: resampled to config.image_size if
// needed and replicated to config.channels.
Tensor input_tokens_2d(const FloatImage& image, const ModelConfig& config);
// Slice-major volume -> tokens, each slice resampled to config.image_size.
Tensor input_tokens_3d(std::span<const double> voxels, std::size_t depth, std::size_t height, std::size_t width,
                       const ModelConfig& config);

struct ForwardOptions {
    bool training = false;               // enables dropout
    std::mt19937_64* rng = nullptr;      // required when training with dropout > 0
    bool track_grad = true;              // bind params for backward
    std::vector<Tensor>* attention = nullptr;  // receives one [T x T] map per block and head
};

// Logits [1 x num_classes] from pre-computed patch tokens.
Var forward_tokens(Graph& graph, ModelParams& params, const ModelConfig& config, const Tensor& tokens,
                   const ForwardOptions& options = {});

// Inference-only logits; never touches parameter gradients.
Tensor infer_logits(const ModelParams& params, const ModelConfig& config, const Tensor& tokens,
                    std::vector<Tensor>* attention = nullptr);

// Probability of the COVID class for one sample.
double predict_tokens(const ModelParams& params, const ModelConfig& config, const Tensor& tokens);
double predict_slice(const ModelParams& params, const ModelConfig& config, const FloatImage& slice);

}  // namespace covit
