#pragma once

#include <array>
#include <string>
#include <vector>

#include "osdn/nonlocal.hpp"
#include "osdn/ops.hpp"
#include "osdn/rng.hpp"

namespace osdn {

/// Architecture of the four network components at a configurable scale.
/// The encoder always has four residual stages; a denoising layer can be
/// placed after each stage. Inputs of 64px and above get a stride-2 stem,
/// which is what makes the decoder need four upsampling layers instead of
/// three.
struct ArchConfig {
  int in_channels = 1;
  int in_h = 16;
  int in_w = 16;
  std::array<int, 4> channels{8, 16, 32, 64};
  std::array<bool, 4> denoise_after_block{true, true, true, true};
  int blocks_per_stage = 1;
  bool use_norm = false;
  bool denoise_residual = true;
  int num_known = 6;
  double pixel_lo = 0.0;
  double pixel_hi = 1.0;

  int stem_stride() const { return in_h >= 64 ? 2 : 1; }
  int final_spatial_h() const { return in_h / stem_stride() / 8; }
  int final_spatial_w() const { return in_w / stem_stride() / 8; }
  int latent_dim() const { return channels[3]; }
  int decoder_upsamples() const { return stem_stride() == 2 ? 4 : 3; }
  void validate() const;
};

/// Named parameter tensors in a stable order (also the checkpoint order).
struct ParamSet {
  struct Entry {
    std::string name;
    Tensor value;
  };
  std::vector<Entry> entries;

  int add(std::string name, Tensor value);
  int find(const std::string& name) const;
  int size() const { return static_cast<int>(entries.size()); }
  Tensor& operator[](int i) { return entries[static_cast<size_t>(i)].value; }
  const Tensor& operator[](int i) const { return entries[static_cast<size_t>(i)].value; }
};

/// Tape-bound view of a ParamSet for one forward pass.
struct Binding {
  Tape* tape = nullptr;
  std::vector<Var> vars;
  Var operator[](int i) const { return vars[static_cast<size_t>(i)]; }
};

enum class Mode { Train, Eval };

namespace layers {

struct Conv {
  int w = -1, b = -1;
  int stride = 1, pad = 1;
};
struct TConv {
  int w = -1, b = -1;
  int stride = 2, pad = 1;
};
struct Dense {
  int w = -1, b = -1;
};
struct Norm {
  bool enabled = false;
  int gamma = -1, beta = -1;
  int stat = -1;  // running-stats slot
};
struct NonLocalLayer {
  bool enabled = false;
  int wa = -1, wb = -1;
};
struct Block {
  Conv c1, c2;
  Norm n1, n2;
  bool has_projection = false;
  Conv proj;
  Norm proj_norm;
};
struct Stage {
  std::vector<Block> blocks;
  NonLocalLayer denoise;
};

}  // namespace layers

/// The OSDN model: denoising encoder F, decoder G, open-set classifier H and
/// rotation classifier T, sharing one parameter set.
class OsdnModel {
 public:
  OsdnModel() = default;
  static OsdnModel init(const ArchConfig& arch, Rng& rng);

  const ArchConfig& arch() const { return arch_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  int param_count() const;

  /// Register every parameter on the tape. All network methods must be
  /// called with a binding from the same tape.
  Binding bind(Tape& tape, bool requires_grad) const;

  /// Latent feature v(x): global average pool of the final stage output
  /// (after its denoising layer). Train mode uses batch statistics in the
  /// normalization layers and updates the running averages; Eval freezes
  /// them. update_stats can suppress the running-average update while still
  /// normalizing with batch statistics.
  Var encode(Binding& b, Var x, Mode mode);
  Var encode(Binding& b, Var x, Mode mode, bool update_stats);
  Var encode(Binding& b, Var x) const;  // Eval, no stat updates

  Var decode(Binding& b, Var latent) const;
  Var classify_known(Binding& b, Var latent) const;
  Var classify_rotation(Binding& b, Var latent) const;

  // Inference helpers on plain tensors (Eval mode, no gradients).
  Tensor known_logits(const Tensor& x) const;
  Tensor latents(const Tensor& x) const;
  void latents_and_logits(const Tensor& x, Tensor* latents, Tensor* logits) const;
  Tensor reconstruct(const Tensor& x) const;

  std::vector<int> predict_known(const Tensor& x) const;  // argmax of raw logits

  void save(const std::string& path) const;
  static OsdnModel load(const std::string& path);

  double norm_momentum = 0.1;

 private:
  Var apply_norm(Binding& b, Var x, const layers::Norm& n, Mode mode, bool update_stats);
  Var apply_block(Binding& b, Var x, const layers::Block& blk, Mode mode, bool update_stats);
  Var encode_impl(Binding& b, Var x, Mode mode, bool update_stats);

  ArchConfig arch_;
  ParamSet params_;
  std::vector<Tensor> run_mean_, run_var_;

  layers::Conv stem_;
  layers::Norm stem_norm_;
  std::array<layers::Stage, 4> stages_;
  layers::Dense dec_fc_;
  std::vector<layers::TConv> dec_tconvs_;
  std::vector<layers::Norm> dec_norms_;
  layers::Dense head_known_;
  layers::Dense head_rot_;

  friend struct ModelIo;
};

}  // namespace osdn
