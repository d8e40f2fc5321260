#include "osdn/networks.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace osdn {

void ArchConfig::validate() const {
  for (int c : channels) require(c >= 1, "ArchConfig: channels must be positive");
  require(in_channels >= 1, "ArchConfig: in_channels must be positive");
  require(blocks_per_stage >= 1, "ArchConfig: blocks_per_stage must be positive");
  require(num_known >= 2, "ArchConfig: need at least 2 known classes");
  require(pixel_lo < pixel_hi, "ArchConfig: pixel range lo must be < hi");
  const int div = 8 * stem_stride();
  require(in_h % div == 0 && in_w % div == 0 && in_h >= div && in_w >= div,
          "ArchConfig: input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
              " must be a multiple of " + std::to_string(div));
}

int ParamSet::add(std::string name, Tensor value) {
  require(find(name) < 0, "ParamSet: duplicate parameter '" + name + "'");
  entries.push_back({std::move(name), std::move(value)});
  return static_cast<int>(entries.size()) - 1;
}

int ParamSet::find(const std::string& name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

namespace {

layers::Conv make_conv(ParamSet& p, Rng& rng, const std::string& name, int cin, int cout, int k,
                       int stride, int pad) {
  layers::Conv c;
  c.stride = stride;
  c.pad = pad;
  const double std = std::sqrt(2.0 / (cin * k * k));
  c.w = p.add(name + ".w", rng.normal_tensor({cout, cin, k, k}, 0.0, std));
  c.b = p.add(name + ".b", Tensor({cout}));
  return c;
}

layers::TConv make_tconv(ParamSet& p, Rng& rng, const std::string& name, int cin, int cout,
                         int k, int stride, int pad) {
  layers::TConv c;
  c.stride = stride;
  c.pad = pad;
  const double std = std::sqrt(2.0 / (cin * k * k));
  c.w = p.add(name + ".w", rng.normal_tensor({cin, cout, k, k}, 0.0, std));
  c.b = p.add(name + ".b", Tensor({cout}));
  return c;
}

layers::Dense make_dense(ParamSet& p, Rng& rng, const std::string& name, int in, int out) {
  layers::Dense d;
  const double std = std::sqrt(2.0 / in);
  d.w = p.add(name + ".w", rng.normal_tensor({in, out}, 0.0, std));
  d.b = p.add(name + ".b", Tensor({out}));
  return d;
}

}  // namespace

OsdnModel OsdnModel::init(const ArchConfig& arch, Rng& rng) {
  arch.validate();
  OsdnModel m;
  m.arch_ = arch;
  ParamSet& p = m.params_;

  auto make_norm = [&](const std::string& name, int ch) {
    layers::Norm n;
    if (!arch.use_norm) return n;
    n.enabled = true;
    n.gamma = p.add(name + ".gamma", Tensor({ch}, 1.0));
    n.beta = p.add(name + ".beta", Tensor({ch}));
    n.stat = static_cast<int>(m.run_mean_.size());
    m.run_mean_.push_back(Tensor({ch}));
    m.run_var_.push_back(Tensor({ch}, 1.0));
    return n;
  };

  m.stem_ = make_conv(p, rng, "enc.stem", arch.in_channels, arch.channels[0], 3,
                      arch.stem_stride(), 1);
  m.stem_norm_ = make_norm("enc.stem.norm", arch.channels[0]);

  int cin = arch.channels[0];
  for (int s = 0; s < 4; ++s) {
    const int cout = arch.channels[static_cast<size_t>(s)];
    layers::Stage& stage = m.stages_[static_cast<size_t>(s)];
    for (int bi = 0; bi < arch.blocks_per_stage; ++bi) {
      const int stride = (s > 0 && bi == 0) ? 2 : 1;
      const std::string base = "enc.s" + std::to_string(s) + ".b" + std::to_string(bi);
      layers::Block blk;
      blk.c1 = make_conv(p, rng, base + ".c1", cin, cout, 3, stride, 1);
      blk.n1 = make_norm(base + ".n1", cout);
      blk.c2 = make_conv(p, rng, base + ".c2", cout, cout, 3, 1, 1);
      blk.n2 = make_norm(base + ".n2", cout);
      if (stride != 1 || cin != cout) {
        blk.has_projection = true;
        blk.proj = make_conv(p, rng, base + ".proj", cin, cout, 1, stride, 0);
        blk.proj_norm = make_norm(base + ".proj.norm", cout);
      }
      stage.blocks.push_back(blk);
      cin = cout;
    }
    if (arch.denoise_after_block[static_cast<size_t>(s)]) {
      stage.denoise.enabled = true;
      const std::string base = "enc.s" + std::to_string(s) + ".nl";
      stage.denoise.wa = p.add(base + ".wa", rng.normal_tensor({cout, cout}, 0.0, 0.01));
      stage.denoise.wb = p.add(base + ".wb", rng.normal_tensor({cout, cout}, 0.0, 0.01));
    }
  }

  const int latent = arch.latent_dim();
  const int h4 = arch.final_spatial_h(), w4 = arch.final_spatial_w();
  m.dec_fc_ = make_dense(p, rng, "dec.fc", latent, latent * h4 * w4);
  const int n_up = arch.decoder_upsamples();
  for (int i = 0; i < n_up; ++i) {
    const int tin = arch.channels[static_cast<size_t>(3 - i)];
    const int tout = (i + 1 < n_up) ? arch.channels[static_cast<size_t>(3 - i - 1)]
                                    : arch.in_channels;
    m.dec_tconvs_.push_back(make_tconv(p, rng, "dec.t" + std::to_string(i), tin, tout, 4, 2, 1));
    if (i + 1 < n_up)
      m.dec_norms_.push_back(make_norm("dec.t" + std::to_string(i) + ".norm", tout));
    else
      m.dec_norms_.push_back(layers::Norm{});
  }

  m.head_known_ = make_dense(p, rng, "head.cls", latent, arch.num_known);
  m.head_rot_ = make_dense(p, rng, "head.rot", latent, 4);
  return m;
}

int OsdnModel::param_count() const {
  int n = 0;
  for (const auto& e : params_.entries) n += e.value.numel();
  return n;
}

Binding OsdnModel::bind(Tape& tape, bool requires_grad) const {
  Binding b;
  b.tape = &tape;
  b.vars.reserve(params_.entries.size());
  for (const auto& e : params_.entries) b.vars.push_back(tape.input(e.value, requires_grad));
  return b;
}

Var OsdnModel::apply_norm(Binding& b, Var x, const layers::Norm& n, Mode mode,
                          bool update_stats) {
  if (!n.enabled) return x;
  const bool batch_mode = (mode == Mode::Train);
  Tensor batch_mean, batch_var;
  Var y = normalize_stats(x, b[n.gamma], b[n.beta], batch_mode,
                          &run_mean_[static_cast<size_t>(n.stat)],
                          &run_var_[static_cast<size_t>(n.stat)],
                          batch_mode ? &batch_mean : nullptr,
                          batch_mode ? &batch_var : nullptr);
  if (batch_mode && update_stats) {
    Tensor& rm = run_mean_[static_cast<size_t>(n.stat)];
    Tensor& rv = run_var_[static_cast<size_t>(n.stat)];
    for (int i = 0; i < rm.numel(); ++i) {
      rm[i] = (1.0 - norm_momentum) * rm[i] + norm_momentum * batch_mean[i];
      rv[i] = (1.0 - norm_momentum) * rv[i] + norm_momentum * batch_var[i];
    }
  }
  return y;
}

Var OsdnModel::apply_block(Binding& b, Var x, const layers::Block& blk, Mode mode,
                           bool update_stats) {
  Var h = conv2d(x, b[blk.c1.w], b[blk.c1.b], blk.c1.stride, blk.c1.pad);
  h = apply_norm(b, h, blk.n1, mode, update_stats);
  h = relu(h);
  h = conv2d(h, b[blk.c2.w], b[blk.c2.b], blk.c2.stride, blk.c2.pad);
  h = apply_norm(b, h, blk.n2, mode, update_stats);
  Var shortcut = x;
  if (blk.has_projection) {
    shortcut = conv2d(x, b[blk.proj.w], b[blk.proj.b], blk.proj.stride, blk.proj.pad);
    shortcut = apply_norm(b, shortcut, blk.proj_norm, mode, update_stats);
  }
  return relu(add(h, shortcut));
}

Var OsdnModel::encode_impl(Binding& b, Var x, Mode mode, bool update_stats) {
  const Tensor& xv = x.val();
  require(xv.ndim() == 4 && xv.dim(1) == arch_.in_channels && xv.dim(2) == arch_.in_h &&
              xv.dim(3) == arch_.in_w,
          "encode: input " + shape_str(xv.shape) + " does not match configured size [N," +
              std::to_string(arch_.in_channels) + "," + std::to_string(arch_.in_h) + "," +
              std::to_string(arch_.in_w) + "]");
  Var h = conv2d(x, b[stem_.w], b[stem_.b], stem_.stride, stem_.pad);
  h = apply_norm(b, h, stem_norm_, mode, update_stats);
  h = relu(h);
  for (const layers::Stage& stage : stages_) {
    for (const layers::Block& blk : stage.blocks) h = apply_block(b, h, blk, mode, update_stats);
    if (stage.denoise.enabled)
      h = denoise_block(h, b[stage.denoise.wa], b[stage.denoise.wb], arch_.denoise_residual);
  }
  return global_avg_pool(h);
}

Var OsdnModel::encode(Binding& b, Var x, Mode mode) {
  return encode_impl(b, x, mode, mode == Mode::Train);
}

Var OsdnModel::encode(Binding& b, Var x, Mode mode, bool update_stats) {
  return encode_impl(b, x, mode, update_stats);
}

Var OsdnModel::encode(Binding& b, Var x) const {
  return const_cast<OsdnModel*>(this)->encode_impl(b, x, Mode::Eval, false);
}

Var OsdnModel::decode(Binding& b, Var latent) const {
  const Tensor& lv = latent.val();
  require(lv.ndim() == 2 && lv.dim(1) == arch_.latent_dim(),
          "decode: latent " + shape_str(lv.shape) + " does not match latent dim " +
              std::to_string(arch_.latent_dim()));
  const int n = lv.dim(0);
  Var h = dense(latent, b[dec_fc_.w], b[dec_fc_.b]);
  h = relu(h);
  h = reshape(h, {n, arch_.latent_dim(), arch_.final_spatial_h(), arch_.final_spatial_w()});
  for (size_t i = 0; i < dec_tconvs_.size(); ++i) {
    const layers::TConv& tc = dec_tconvs_[i];
    h = transpose_conv2d(h, b[tc.w], b[tc.b], tc.stride, tc.pad, 0);
    if (i + 1 < dec_tconvs_.size()) {
      h = const_cast<OsdnModel*>(this)->apply_norm(b, h, dec_norms_[i], Mode::Eval, false);
      h = relu(h);
    }
  }
  return sigmoid_range(h, arch_.pixel_lo, arch_.pixel_hi);
}

Var OsdnModel::classify_known(Binding& b, Var latent) const {
  return dense(latent, b[head_known_.w], b[head_known_.b]);
}

Var OsdnModel::classify_rotation(Binding& b, Var latent) const {
  return dense(latent, b[head_rot_.w], b[head_rot_.b]);
}

Tensor OsdnModel::known_logits(const Tensor& x) const {
  Tensor logits;
  latents_and_logits(x, nullptr, &logits);
  return logits;
}

Tensor OsdnModel::latents(const Tensor& x) const {
  Tensor lat;
  latents_and_logits(x, &lat, nullptr);
  return lat;
}

void OsdnModel::latents_and_logits(const Tensor& x, Tensor* latents, Tensor* logits) const {
  require(x.ndim() == 4 && x.dim(0) >= 1, "latents_and_logits: empty batch");
  const int n = x.dim(0);
  const int per = x.numel() / n;
  if (latents) *latents = Tensor({n, arch_.latent_dim()});
  if (logits) *logits = Tensor({n, arch_.num_known});
  // Chunked to bound the attention buffers of the denoising layers.
  const int chunk = 32;
  for (int start = 0; start < n; start += chunk) {
    const int len = std::min(chunk, n - start);
    Shape s = x.shape;
    s[0] = len;
    Tensor xs(s, std::vector<double>(x.data() + start * per, x.data() + (start + len) * per));
    Tape tape;
    Binding b = bind(tape, false);
    Var xv = tape.input(std::move(xs), false);
    Var v = encode(b, xv);
    if (latents)
      std::copy_n(v.val().data(), len * arch_.latent_dim(),
                  latents->data() + start * arch_.latent_dim());
    if (logits) {
      const Tensor& lv = classify_known(b, v).val();
      std::copy_n(lv.data(), len * arch_.num_known, logits->data() + start * arch_.num_known);
    }
  }
}

Tensor OsdnModel::reconstruct(const Tensor& x) const {
  require(x.ndim() == 4 && x.dim(0) >= 1, "reconstruct: empty batch");
  const int n = x.dim(0);
  const int per = x.numel() / n;
  Tensor out(x.shape);
  const int chunk = 32;
  for (int start = 0; start < n; start += chunk) {
    const int len = std::min(chunk, n - start);
    Shape s = x.shape;
    s[0] = len;
    Tensor xs(s, std::vector<double>(x.data() + start * per, x.data() + (start + len) * per));
    Tape tape;
    Binding b = bind(tape, false);
    Var xv = tape.input(std::move(xs), false);
    const Tensor& rec = decode(b, encode(b, xv)).val();
    std::copy_n(rec.data(), len * per, out.data() + start * per);
  }
  return out;
}

std::vector<int> OsdnModel::predict_known(const Tensor& x) const {
  const Tensor logits = known_logits(x);
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

// --- checkpoint io ------------------------------------------------------

namespace {

void write_tensor_line(std::ostream& os, const Tensor& t) {
  os << std::hexfloat;
  for (int i = 0; i < t.numel(); ++i) {
    if (i) os << ' ';
    os << t[i];
  }
  os << '\n';
  os << std::defaultfloat;
}

Tensor read_tensor_line(std::istream& is, Shape shape) {
  Tensor t(std::move(shape));
  std::string tok;
  for (int i = 0; i < t.numel(); ++i) {
    require(static_cast<bool>(is >> tok), "checkpoint: truncated tensor data");
    t[i] = std::strtod(tok.c_str(), nullptr);
  }
  return t;
}

}  // namespace

void OsdnModel::save(const std::string& path) const {
  std::ofstream os(path);
  require(os.good(), "checkpoint: cannot write " + path);
  os << "osdn-model v1\n";
  const ArchConfig& a = arch_;
  os << "arch " << a.in_channels << ' ' << a.in_h << ' ' << a.in_w;
  for (int c : a.channels) os << ' ' << c;
  for (bool d : a.denoise_after_block) os << ' ' << (d ? 1 : 0);
  os << ' ' << a.blocks_per_stage << ' ' << (a.use_norm ? 1 : 0) << ' '
     << (a.denoise_residual ? 1 : 0) << ' ' << a.num_known << ' ' << std::hexfloat << a.pixel_lo
     << ' ' << a.pixel_hi << std::defaultfloat << '\n';
  os << "params " << params_.entries.size() << '\n';
  for (const auto& e : params_.entries) {
    os << e.name << ' ' << e.value.ndim();
    for (int d : e.value.shape) os << ' ' << d;
    os << '\n';
    write_tensor_line(os, e.value);
  }
  os << "buffers " << run_mean_.size() << '\n';
  for (size_t i = 0; i < run_mean_.size(); ++i) {
    os << "stat" << i << ' ' << run_mean_[i].numel() << '\n';
    write_tensor_line(os, run_mean_[i]);
    write_tensor_line(os, run_var_[i]);
  }
  os << "end\n";
  require(os.good(), "checkpoint: write failed for " + path);
}

OsdnModel OsdnModel::load(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "checkpoint: cannot read " + path);
  std::string magic, version;
  is >> magic >> version;
  require(magic == "osdn-model" && version == "v1",
          "checkpoint: bad header in " + path);

  std::string tok;
  is >> tok;
  require(tok == "arch", "checkpoint: missing arch record");
  ArchConfig a;
  is >> a.in_channels >> a.in_h >> a.in_w;
  for (int& c : a.channels) is >> c;
  for (size_t i = 0; i < 4; ++i) {
    int d = 0;
    is >> d;
    a.denoise_after_block[i] = d != 0;
  }
  int use_norm = 0, residual = 0;
  is >> a.blocks_per_stage >> use_norm >> residual >> a.num_known;
  a.use_norm = use_norm != 0;
  a.denoise_residual = residual != 0;
  is >> tok;
  a.pixel_lo = std::strtod(tok.c_str(), nullptr);
  is >> tok;
  a.pixel_hi = std::strtod(tok.c_str(), nullptr);

  Rng scratch(0);
  OsdnModel m = OsdnModel::init(a, scratch);

  size_t n_params = 0;
  is >> tok >> n_params;
  require(tok == "params" && n_params == m.params_.entries.size(),
          "checkpoint: parameter count mismatch in " + path);
  for (auto& e : m.params_.entries) {
    std::string name;
    int ndim = 0;
    is >> name >> ndim;
    require(name == e.name, "checkpoint: expected parameter '" + e.name + "', found '" + name +
                                "'");
    Shape shape(static_cast<size_t>(ndim));
    for (int& d : shape) is >> d;
    require(shape == e.value.shape, "checkpoint: shape mismatch for '" + name + "'");
    e.value = read_tensor_line(is, shape);
  }
  size_t n_buffers = 0;
  is >> tok >> n_buffers;
  require(tok == "buffers" && n_buffers == m.run_mean_.size(),
          "checkpoint: buffer count mismatch in " + path);
  for (size_t i = 0; i < n_buffers; ++i) {
    std::string name;
    int count = 0;
    is >> name >> count;
    require(count == m.run_mean_[i].numel(), "checkpoint: buffer size mismatch");
    m.run_mean_[i] = read_tensor_line(is, {count});
    m.run_var_[i] = read_tensor_line(is, {count});
  }
  is >> tok;
  require(tok == "end", "checkpoint: missing end marker in " + path);
  return m;
}

}  // namespace osdn
