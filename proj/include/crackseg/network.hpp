#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crackseg/blocks/boundary_awareness.hpp"
#include "crackseg/blocks/conv_bn_relu.hpp"
#include "crackseg/blocks/dense_upsampling.hpp"
#include "crackseg/blocks/dilated_residual.hpp"
#include "crackseg/blocks/mobilevit.hpp"
#include "crackseg/nn/resample.hpp"

namespace crackseg {

// Everything that determines the architecture (and hence the parameter
// count). The defaults are the full model; widths and the transformer width
// ratio were calibrated against the published parameter counts.
struct ModelConfig {
  std::array<int, 4> stage_channels{32, 64, 128, 256};
  int bottleneck_channels = 512;
  std::array<int, 3> mvb_depths{2, 4, 3};
  // Which encoder stages carry a MobileViT block; exactly three are set and
  // take mvb_depths in stage order.
  std::array<bool, 4> mvb_stages{true, true, true, false};
  int mvb_patch = 4;
  double mvb_dim_ratio = 2.875;
  int mvb_heads = 4;
  double mvb_mlp_ratio = 2.0;
  std::array<int, 3> dilation_rates{1, 2, 5};
  int se_reduction = 16;
  bool use_drb = true;
  bool use_mvb = true;
  bool use_bam = true;
  int in_channels = 3;
  int out_channels = 1;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  void validate() const {
    for (int i = 0; i < 4; ++i) {
      if (stage_channels[i] < 1) throw ConfigError("stage_channels must be positive");
      if (i > 0 && stage_channels[i] <= stage_channels[i - 1])
        throw ConfigError("stage_channels must be strictly increasing");
    }
    if (bottleneck_channels <= stage_channels[3]) throw ConfigError("bottleneck must be wider than E4");
    if (use_bam && stage_channels[0] != blocks::BoundaryAwareness<float>::kChannels)
      throw ConfigError("BAM requires stage_channels[0] == 32");
    if (in_channels < 1 || out_channels < 1) throw ConfigError("in/out channels must be positive");
    if (mvb_patch < 1) throw ConfigError("mvb_patch must be positive");
    if (use_mvb) {
      int flagged = 0;
      for (bool b : mvb_stages) flagged += b ? 1 : 0;
      if (flagged != 3) throw ConfigError("exactly three encoder stages must carry a MobileViT block");
      for (int d : mvb_depths)
        if (d < 1) throw ConfigError("mvb_depths must be positive");
      if (mvb_heads < 1 || mvb_dim_ratio <= 0 || mvb_mlp_ratio <= 0) throw ConfigError("invalid MVB dims");
    }
    for (int r : dilation_rates)
      if (r < 1) throw ConfigError("dilation rates must be >= 1");
  }

  // Input H and W must be multiples of this: four 2x poolings, and every
  // MVB stage must tile into whole patches.
  int required_divisor() const {
    int d = 16;
    if (use_mvb)
      for (int i = 0; i < 4; ++i)
        if (mvb_stages[i]) d = std::lcm(d, (1 << i) * mvb_patch);
    return d;
  }

  void check_input_size(int h, int w) const {
    const int d = required_divisor();
    if (h % d != 0 || w % d != 0) {
      const int ph = (h + d - 1) / d * d;
      const int pw = (w + d - 1) / d * d;
      throw ShapeError("input " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by " +
                       std::to_string(d) + "; pad it to " + std::to_string(ph) + "x" + std::to_string(pw));
    }
  }
};

template <typename T>
struct ModelOutput {
  Tensor<T> seg_logits;
  std::optional<Tensor<T>> boundary_map;
};

// Encoder-decoder crack segmentation network. Encoders E1..E4 (DRB or
// double conv, optionally followed by an MVB) are joined by 2x max pooling;
// a bottleneck block follows E4's pooling. Decoders D1..D4 each upsample
// with DUC, concatenate the matching encoder skip, and apply a DRB (or
// double conv). The E1 skip passes through BAM before reaching D4.
template <typename T>
class CrackSegNet : public nn::Module<T> {
 public:
  explicit CrackSegNet(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    int in = cfg.in_channels;
    int mvb_index = 0;
    for (int i = 0; i < 4; ++i) {
      const int c = cfg.stage_channels[i];
      encoders_[i] = make_block(in, c, rng);
      this->register_module("encoder" + std::to_string(i + 1), *encoders_[i]);
      if (cfg.use_mvb && cfg.mvb_stages[i]) {
        blocks::MvbConfig m;
        m.channels = c;
        m.transformer_depth = cfg.mvb_depths[mvb_index++];
        m.patch_size = cfg.mvb_patch;
        m.heads = cfg.mvb_heads;
        m.mlp_ratio = cfg.mvb_mlp_ratio;
        m.transformer_dim = blocks::mvb_transformer_dim(c, cfg.mvb_dim_ratio, cfg.mvb_heads);
        mvbs_[i] = std::make_unique<blocks::MobileViTBlock<T>>(m, rng);
        this->register_module("mvb" + std::to_string(i + 1), *mvbs_[i]);
      }
      this->register_module("pool" + std::to_string(i + 1), pools_[i]);
      in = c;
    }
    bottleneck_ = make_block(cfg.stage_channels[3], cfg.bottleneck_channels, rng);
    this->register_module("bottleneck", *bottleneck_);
    in = cfg.bottleneck_channels;
    for (int k = 0; k < 4; ++k) {
      const int c = cfg.stage_channels[3 - k];
      ups_[k] = std::make_unique<blocks::DenseUpsampling<T>>(in, c, rng);
      decoders_[k] = make_block(2 * c, c, rng);
      const std::string name = "decoder" + std::to_string(k + 1);
      this->register_module(name + ".up", *ups_[k]);
      this->register_module(name + ".block", *decoders_[k]);
      in = c;
    }
    if (cfg.use_bam) {
      bam_ = std::make_unique<blocks::BoundaryAwareness<T>>(rng, cfg.stage_channels[0]);
      this->register_module("bam", *bam_);
    }
    head_ = std::make_unique<nn::Conv2d<T>>(cfg.stage_channels[0], cfg.out_channels, 1, 1, true, rng);
    this->register_module("head", *head_);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  blocks::BoundaryAwareness<T>* bam() noexcept { return bam_.get(); }

  ModelOutput<T> forward(const Tensor<T>& images) {
    if (images.c() != cfg_.in_channels)
      throw ConfigError("model expects " + std::to_string(cfg_.in_channels) + " input channels");
    cfg_.check_input_size(images.h(), images.w());
    std::array<Tensor<T>, 4> skips;
    Tensor<T> h = images;
    for (int i = 0; i < 4; ++i) {
      h = encoders_[i]->forward(h);
      if (mvbs_[i]) h = mvbs_[i]->forward(h);
      skips[i] = h;
      h = pools_[i].forward(h);
    }
    h = bottleneck_->forward(h);
    ModelOutput<T> out;
    if (bam_) {
      auto b = bam_->forward(skips[0]);
      skips[0] = std::move(b.features);
      out.boundary_map = std::move(b.boundary);
    }
    for (int k = 0; k < 4; ++k) {
      Tensor<T> up = ups_[k]->forward(h);
      h = decoders_[k]->forward(concat_channels(skips[3 - k], up));
    }
    out.seg_logits = head_->forward(h);
    return out;
  }

  // d_boundary may be empty (no boundary supervision). Returns d images.
  Tensor<T> backward(const Tensor<T>& d_logits, const Tensor<T>& d_boundary = {}) {
    std::array<Tensor<T>, 4> dskips;
    Tensor<T> g = head_->backward(d_logits);
    for (int k = 3; k >= 0; --k) {
      const int c = cfg_.stage_channels[3 - k];
      auto [dskip, dup] = split_channels(decoders_[k]->backward(g), c);
      dskips[3 - k] = std::move(dskip);
      g = ups_[k]->backward(dup);
    }
    if (bam_) dskips[0] = bam_->backward(dskips[0], d_boundary);
    g = bottleneck_->backward(g);
    for (int i = 3; i >= 0; --i) {
      g = pools_[i].backward(g);
      g += dskips[i];
      if (mvbs_[i]) g = mvbs_[i]->backward(g);
      g = encoders_[i]->backward(g);
    }
    return g;
  }

 private:
  std::unique_ptr<nn::Layer<T>> make_block(int in, int out, Rng& rng) const {
    if (cfg_.use_drb) {
      blocks::DrbConfig d;
      d.in_channels = in;
      d.out_channels = out;
      d.dilation_rates = cfg_.dilation_rates;
      d.se_reduction = cfg_.se_reduction;
      return std::make_unique<blocks::DilatedResidualBlock<T>>(d, rng);
    }
    return std::make_unique<blocks::DoubleConv<T>>(in, out, rng);
  }

  ModelConfig cfg_;
  std::array<std::unique_ptr<nn::Layer<T>>, 4> encoders_;
  std::array<std::unique_ptr<blocks::MobileViTBlock<T>>, 4> mvbs_;
  std::array<nn::MaxPool2d<T>, 4> pools_;
  std::unique_ptr<nn::Layer<T>> bottleneck_;
  std::array<std::unique_ptr<blocks::DenseUpsampling<T>>, 4> ups_;
  std::array<std::unique_ptr<nn::Layer<T>>, 4> decoders_;
  std::unique_ptr<blocks::BoundaryAwareness<T>> bam_;
  std::unique_ptr<nn::Conv2d<T>> head_;
};

template <typename T>
std::size_t count_parameters(CrackSegNet<T>& model) {
  return model.parameter_count();
}

// Parameter totals grouped by top-level module (encoderN, mvbN, bottleneck,
// decoderN, bam, head). Groups partition the parameters.
template <typename T>
std::vector<std::pair<std::string, std::size_t>> parameter_audit(CrackSegNet<T>& model) {
  std::vector<std::pair<std::string, std::size_t>> groups;
  for (const auto& p : model.named_parameters()) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    if (groups.empty() || groups.back().first != group) groups.emplace_back(group, 0);
    groups.back().second += p.param->value.size();
  }
  return groups;
}

// Cumulative ablation rows: baseline U-Net, +DRB, +MVB, +BAM.
inline std::vector<std::pair<std::string, ModelConfig>> build_ablation_ladder(ModelConfig base) {
  std::vector<std::pair<std::string, ModelConfig>> ladder;
  base.use_drb = base.use_mvb = base.use_bam = false;
  ladder.emplace_back("Baseline(B)", base);
  base.use_drb = true;
  ladder.emplace_back("B+DRB(v1)", base);
  base.use_mvb = true;
  ladder.emplace_back("v1+MVB(v2)", base);
  base.use_bam = true;
  ladder.emplace_back("v2+BAM(v3)", base);
  return ladder;
}

}  // namespace crackseg
