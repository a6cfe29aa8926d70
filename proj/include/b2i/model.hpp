#pragma once

// Two-stream fusion classifier. The byte branch is one dense layer + ReLU on
// the normalized sector bytes. The image branch embeds every n-gram row with
// K wide kernels (one GEMM over [B·H, W·C]), treats the result as a 1×H×K
// map, runs a small conv3×3 stack and global-average-pools it. A dense head
// on the concatenated features gives the logits.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "b2i/byte2image.hpp"
#include "b2i/error.hpp"
#include "b2i/nn.hpp"
#include "b2i/optim.hpp"
#include "b2i/rng.hpp"
#include "b2i/tensor.hpp"

namespace b2i {

enum class Branches { fusion, byte_only, image_only };

inline const char* to_string(Branches b) noexcept {
  switch (b) {
    case Branches::fusion: return "fusion";
    case Branches::byte_only: return "byte-only";
    case Branches::image_only: return "image-only";
  }
  return "?";
}

inline Branches parse_branches(const std::string& s) {
  if (s == "fusion") return Branches::fusion;
  if (s == "byte-only") return Branches::byte_only;
  if (s == "image-only") return Branches::image_only;
  throw ConfigError("unknown branch mode '" + s +
                    "' (expected fusion, byte-only or image-only)");
}

struct ModelConfig {
  std::size_t sector_len = kSmallSector;
  std::size_t ngram = kDefaultNgram;
  std::size_t embed_count = 96;
  std::size_t byte_dim = 256;
  std::vector<std::size_t> channels{32, 64, 128};
  std::size_t num_classes = 2;
  Branches branches = Branches::fusion;

  bool uses_bytes() const noexcept { return branches != Branches::image_only; }
  bool uses_image() const noexcept { return branches != Branches::byte_only; }

  /// 4096-byte sectors are split into eight 512-byte channels.
  std::size_t input_channels() const noexcept {
    return sector_len == kLargeSector ? kLargeSectorParts : 1;
  }
  std::size_t part_len() const noexcept {
    return sector_len == kLargeSector ? kSmallSector : sector_len;
  }
  std::size_t image_height() const noexcept { return part_len() - ngram + 1; }
  std::size_t image_width() const noexcept { return kWindowsPerByte * ngram; }
  std::size_t feature_dim() const noexcept {
    return (uses_bytes() ? byte_dim : 0) + (uses_image() ? channels.back() : 0);
  }

  void validate() const {
    if (sector_len == 0) throw ConfigError("sector_len must be positive");
    if (ngram < 1 || ngram > part_len()) {
      throw ConfigError("ngram " + std::to_string(ngram) + " outside [1, " +
                        std::to_string(part_len()) + "]");
    }
    if (embed_count < 1) throw ConfigError("embed_count must be >= 1");
    if (byte_dim < 1) throw ConfigError("byte_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (channels.empty()) throw ConfigError("backbone needs at least one block");
    for (std::size_t c : channels)
      if (c < 1) throw ConfigError("backbone block channels must be >= 1");
    if (uses_image()) {
      const std::size_t need = std::size_t{1} << (channels.size() - 1);
      const std::size_t have = std::min(image_height(), embed_count);
      if (have < need) {
        throw ConfigError("embedding map " + std::to_string(image_height()) +
                          "x" + std::to_string(embed_count) + " too small for " +
                          std::to_string(channels.size()) +
                          " backbone blocks (needs min side >= " +
                          std::to_string(need) + ")");
      }
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// A batch in model units: bytes/255 as [B, N_s], and image rows/255 as
/// [B·H, W·C] (each row channel-interleaved, index col·C + c). `rows` is empty
/// when the image branch is off.
template <typename T>
struct ModelInput {
  std::size_t batch = 0;
  Tensor<T> bytes;
  Tensor<T> rows;
};

template <typename T>
ModelInput<T> pack_inputs(const ModelConfig& cfg,
                          std::span<const std::span<const std::uint8_t>> bytes,
                          std::span<const NGramImage> images) {
  const std::size_t batch = bytes.size();
  if (batch == 0) throw ShapeError("empty batch");
  ModelInput<T> in;
  in.batch = batch;
  constexpr T scale = T{1} / T{255};
  if (cfg.uses_bytes()) {
    in.bytes = Tensor<T>({batch, cfg.sector_len});
    for (std::size_t b = 0; b < batch; ++b) {
      if (bytes[b].size() != cfg.sector_len) {
        throw ShapeError("sample " + std::to_string(b) + " has " +
                         std::to_string(bytes[b].size()) +
                         " bytes, model expects " +
                         std::to_string(cfg.sector_len));
      }
      for (std::size_t i = 0; i < cfg.sector_len; ++i)
        in.bytes[b * cfg.sector_len + i] = static_cast<T>(bytes[b][i]) * scale;
    }
  }
  if (cfg.uses_image()) {
    if (images.size() != batch) {
      throw ShapeError("got " + std::to_string(images.size()) +
                       " images for " + std::to_string(batch) + " samples");
    }
    const std::size_t h = cfg.image_height();
    const std::size_t wc = cfg.image_width() * cfg.input_channels();
    in.rows = Tensor<T>({batch * h, wc});
    for (std::size_t b = 0; b < batch; ++b) {
      const NGramImage& im = images[b];
      if (im.height() != h || im.width() * im.channels() != wc) {
        throw ShapeError("image " + std::to_string(b) + " is " +
                         std::to_string(im.height()) + "x" +
                         std::to_string(im.width()) + "x" +
                         std::to_string(im.channels()) +
                         ", model expects " + std::to_string(h) + "x" +
                         std::to_string(cfg.image_width()) + "x" +
                         std::to_string(cfg.input_channels()));
      }
      const auto px = im.pixels();
      T* dst = in.rows.ptr() + b * h * wc;
      for (std::size_t i = 0; i < px.size(); ++i)
        dst[i] = static_cast<T>(px[i]) * scale;
    }
  }
  return in;
}

/// Converts raw sectors and packs them; no augmentation.
template <typename T>
ModelInput<T> make_input(const ModelConfig& cfg,
                         std::span<const std::span<const std::uint8_t>> bytes) {
  std::vector<NGramImage> images;
  if (cfg.uses_image()) {
    images.reserve(bytes.size());
    for (const auto& s : bytes) {
      if (s.size() != cfg.sector_len) {
        throw ShapeError("sector of " + std::to_string(s.size()) +
                         " bytes, model expects " +
                         std::to_string(cfg.sector_len));
      }
      images.push_back(convert(s, cfg.ngram));
    }
  }
  return pack_inputs<T>(cfg, bytes, images);
}

/// Argmax per row; ties go to the lowest index.
template <typename T>
std::vector<std::uint32_t> argmax_rows(const Tensor<T>& m) {
  if (m.rank() != 2) throw ShapeError("argmax_rows: expected a matrix");
  std::vector<std::uint32_t> out(m.dim(0));
  const std::size_t k = m.dim(1);
  for (std::size_t r = 0; r < m.dim(0); ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (m[r * k + j] > m[r * k + best]) best = j;
    out[r] = static_cast<std::uint32_t>(best);
  }
  return out;
}

template <typename T>
class FusionModel {
 public:
  FusionModel() = default;

  explicit FusionModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_->validate();
    const ModelConfig& c = *cfg_;
    if (c.uses_bytes()) byte_fc_ = nn::Dense<T>(c.sector_len, c.byte_dim);
    if (c.uses_image()) {
      embed_ = nn::Dense<T>(c.image_width() * c.input_channels(),
                            c.embed_count);
      std::size_t in = 1;
      for (std::size_t i = 0; i < c.channels.size(); ++i) {
        convs_.emplace_back(in, c.channels[i], 3,
                            nn::ConvGeometry{i == 0 ? 1u : 2u, 1});
        relus_.emplace_back();
        in = c.channels[i];
      }
    }
    head_ = nn::Dense<T>(c.feature_dim(), c.num_classes);
  }

  bool configured() const noexcept { return cfg_.has_value(); }

  const ModelConfig& config() const {
    require_configured();
    return *cfg_;
  }

  void init(std::uint64_t seed) {
    require_configured();
    Rng rng(seed);
    if (cfg_->uses_bytes()) byte_fc_.init(rng);
    if (cfg_->uses_image()) {
      embed_.init(rng);
      for (auto& conv : convs_) conv.init(rng);
    }
    head_.init(rng);
  }

  /// Trainable tensors in a fixed order; names are stable across runs and
  /// double as checkpoint directory keys.
  std::vector<nn::NamedParam<T>> parameters() {
    require_configured();
    std::vector<nn::NamedParam<T>> out;
    if (cfg_->uses_bytes()) {
      out.push_back({"byte.weight", &byte_fc_.weight});
      out.push_back({"byte.bias", &byte_fc_.bias});
    }
    if (cfg_->uses_image()) {
      out.push_back({"embed.weight", &embed_.weight});
      out.push_back({"embed.bias", &embed_.bias});
      for (std::size_t i = 0; i < convs_.size(); ++i) {
        const std::string p = "conv" + std::to_string(i);
        out.push_back({p + ".weight", &convs_[i].weight});
        out.push_back({p + ".bias", &convs_[i].bias});
      }
    }
    out.push_back({"head.weight", &head_.weight});
    out.push_back({"head.bias", &head_.bias});
    return out;
  }

  std::vector<Tensor<T>*> parameter_tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& p : parameters()) out.push_back(p.tensor);
    return out;
  }

  /// ReLU(x W^T + b) on [B, N_s] normalized bytes.
  Tensor<T> byte_branch(const Tensor<T>& x) {
    require_branch(cfg_->uses_bytes(), "byte branch");
    if (x.rank() != 2 || x.dim(1) != cfg_->sector_len) {
      throw ShapeError("byte branch: expected [B, " +
                       std::to_string(cfg_->sector_len) + "], got " +
                       shape_string(x.shape()));
    }
    return byte_relu_.forward(byte_fc_.forward(x));
  }

  /// [B·H, W·C] image rows → [B, 1, H, K].
  Tensor<T> wide_conv_embed(const Tensor<T>& rows, std::size_t batch) {
    require_branch(cfg_->uses_image(), "image branch");
    const std::size_t h = cfg_->image_height();
    const std::size_t wc = cfg_->image_width() * cfg_->input_channels();
    if (rows.rank() != 2 || rows.dim(0) != batch * h || rows.dim(1) != wc) {
      throw ShapeError("wide conv: expected [" + std::to_string(batch * h) +
                       "x" + std::to_string(wc) + "], got " +
                       shape_string(rows.shape()));
    }
    Tensor<T> e = embed_.forward(rows);
    e.reshape({batch, 1, h, cfg_->embed_count});
    return e;
  }

  /// [B, 1, H, K] → [B, channels.back()].
  Tensor<T> backbone_forward(const Tensor<T>& x_emb) {
    require_branch(cfg_->uses_image(), "image branch");
    if (x_emb.rank() != 4 || x_emb.dim(1) != 1 ||
        x_emb.dim(2) != cfg_->image_height() ||
        x_emb.dim(3) != cfg_->embed_count) {
      throw ShapeError("backbone: unexpected input " +
                       shape_string(x_emb.shape()));
    }
    Tensor<T> x = x_emb;
    for (std::size_t i = 0; i < convs_.size(); ++i)
      x = relus_[i].forward(convs_[i].forward(x));
    return gap_.forward(x);
  }

  /// Dense layer on the concatenated features; returns logits [B, classes].
  /// Pass an empty tensor for a disabled branch.
  Tensor<T> fusion_logits(const Tensor<T>& x_byte, const Tensor<T>& x_cnn) {
    require_configured();
    const std::size_t bd = cfg_->uses_bytes() ? cfg_->byte_dim : 0;
    const std::size_t cd = cfg_->uses_image() ? cfg_->channels.back() : 0;
    const std::size_t batch = bd ? x_byte.dim(0) : x_cnn.dim(0);
    if ((bd && (x_byte.rank() != 2 || x_byte.shape() != Shape{batch, bd})) ||
        (cd && (x_cnn.rank() != 2 || x_cnn.shape() != Shape{batch, cd}))) {
      throw ShapeError("fusion head: feature shapes " +
                       shape_string(x_byte.shape()) + " and " +
                       shape_string(x_cnn.shape()) + " do not match config");
    }
    Tensor<T> cat({batch, bd + cd});
    for (std::size_t b = 0; b < batch; ++b) {
      T* dst = cat.ptr() + b * (bd + cd);
      if (bd) std::copy_n(x_byte.ptr() + b * bd, bd, dst);
      if (cd) std::copy_n(x_cnn.ptr() + b * cd, cd, dst + bd);
    }
    return head_.forward(cat);
  }

  /// Class probabilities from branch features.
  Tensor<T> fusion_head(const Tensor<T>& x_byte, const Tensor<T>& x_cnn) {
    return nn::softmax(fusion_logits(x_byte, x_cnn));
  }

  Tensor<T> forward(const ModelInput<T>& in) {
    require_configured();
    Tensor<T> xb, xc;
    if (cfg_->uses_bytes()) xb = byte_branch(in.bytes);
    if (cfg_->uses_image())
      xc = backbone_forward(wide_conv_embed(in.rows, in.batch));
    batch_ = in.batch;
    return fusion_logits(xb, xc);
  }

  Tensor<T> probabilities(const ModelInput<T>& in) {
    return nn::softmax(forward(in));
  }

  std::vector<std::uint32_t> predict(const ModelInput<T>& in) {
    return argmax_rows(forward(in));
  }

  /// Gradients of the loss for every parameter, in parameters() order, given
  /// dL/dlogits for the most recent forward pass.
  std::vector<Tensor<T>> backward(const Tensor<T>& dlogits) {
    require_configured();
    if (!batch_) throw StateError("model backward called before forward");
    nn::LayerGrads<T> head = head_.backward(dlogits);
    const std::size_t batch = *batch_;
    const std::size_t bd = cfg_->uses_bytes() ? cfg_->byte_dim : 0;
    const std::size_t cd = cfg_->uses_image() ? cfg_->channels.back() : 0;
    const Tensor<T>& dcat = head.input;

    std::vector<Tensor<T>> grads;
    if (bd) {
      Tensor<T> dxb({batch, bd});
      for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(dcat.ptr() + b * (bd + cd), bd, dxb.ptr() + b * bd);
      auto g = byte_fc_.backward(byte_relu_.backward(dxb));
      grads.push_back(std::move(g.params[0]));
      grads.push_back(std::move(g.params[1]));
    }
    if (cd) {
      Tensor<T> dxc({batch, cd});
      for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(dcat.ptr() + b * (bd + cd) + bd, cd, dxc.ptr() + b * cd);
      Tensor<T> dx = gap_.backward(dxc);
      std::vector<Tensor<T>> conv_grads(2 * convs_.size());
      for (std::size_t i = convs_.size(); i-- > 0;) {
        auto g = convs_[i].backward(relus_[i].backward(dx));
        conv_grads[2 * i] = std::move(g.params[0]);
        conv_grads[2 * i + 1] = std::move(g.params[1]);
        dx = std::move(g.input);
      }
      dx.reshape({batch * cfg_->image_height(), cfg_->embed_count});
      auto ge = embed_.backward(dx);
      grads.push_back(std::move(ge.params[0]));
      grads.push_back(std::move(ge.params[1]));
      for (auto& g : conv_grads) grads.push_back(std::move(g));
    }
    grads.push_back(std::move(head.params[0]));
    grads.push_back(std::move(head.params[1]));
    return grads;
  }

  /// Mean cross-entropy over the batch; fills `grads` in parameters() order.
  T loss_and_grads(const ModelInput<T>& in,
                   std::span<const std::uint32_t> labels,
                   std::vector<Tensor<T>>& grads) {
    const Tensor<T> logits = forward(in);
    const T loss = nn::cross_entropy(logits, labels);
    if (!std::isfinite(loss)) throw NumericError("loss is not finite");
    grads = backward(nn::cross_entropy_backward(logits, labels));
    return loss;
  }

  T train_step(const ModelInput<T>& in, std::span<const std::uint32_t> labels,
               AdamW<T>& opt, double lr) {
    std::vector<Tensor<T>> grads;
    const T loss = loss_and_grads(in, labels, grads);
    const auto params = parameter_tensors();
    opt.step(params, grads, lr);
    return loss;
  }

 private:
  void require_configured() const {
    if (!cfg_) throw StateError("model is not configured");
  }
  void require_branch(bool on, const char* what) const {
    require_configured();
    if (!on) {
      throw StateError(std::string(what) + " is disabled in " +
                       to_string(cfg_->branches) + " mode");
    }
  }

  std::optional<ModelConfig> cfg_;
  nn::Dense<T> byte_fc_;
  nn::Relu<T> byte_relu_;
  nn::Dense<T> embed_;
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::Relu<T>> relus_;
  nn::GlobalAvgPool<T> gap_;
  nn::Dense<T> head_;
  std::optional<std::size_t> batch_;
};

}  // namespace b2i
