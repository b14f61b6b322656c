#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "esc/dsp.hpp"
#include "esc/errors.hpp"
#include "esc/ops.hpp"
#include "esc/rng.hpp"
#include "esc/tensor.hpp"

namespace esc::model {

// Attention placement. The conv sites apply a 2d attention mask to the relu
// output of that layer, before its pool; l10 applies temporal attention to
// the output of the final recurrent layer.
enum class AttentionSite { none, l2, l4, l6, l8, l10 };

enum class CnnAttentionScaling { softmax, sigmoid };

inline const char* attention_site_name(AttentionSite s) {
  switch (s) {
    case AttentionSite::none: return "none";
    case AttentionSite::l2: return "l2";
    case AttentionSite::l4: return "l4";
    case AttentionSite::l6: return "l6";
    case AttentionSite::l8: return "l8";
    case AttentionSite::l10: return "l10";
  }
  return "none";
}

inline AttentionSite parse_attention_site(const std::string& s) {
  if (s == "none") return AttentionSite::none;
  if (s == "l2") return AttentionSite::l2;
  if (s == "l4") return AttentionSite::l4;
  if (s == "l6") return AttentionSite::l6;
  if (s == "l8") return AttentionSite::l8;
  if (s == "l10") return AttentionSite::l10;
  throw ArgumentError("unknown attention site '" + s + "'");
}

inline const char* cnn_attention_scaling_name(CnnAttentionScaling s) {
  return s == CnnAttentionScaling::softmax ? "softmax" : "sigmoid";
}

inline CnnAttentionScaling parse_cnn_attention_scaling(const std::string& s) {
  if (s == "softmax") return CnnAttentionScaling::softmax;
  if (s == "sigmoid") return CnnAttentionScaling::sigmoid;
  throw ArgumentError("unknown attention scaling '" + s + "'");
}

// Per-step weights A [B, T] from a 3x3 score conv over m [B, F, T, C] and a
// mean over frequency, scaled to (0, 1) by softmax over time or a sigmoid.
template <typename T>
ad::Tensor<T> cnn_attention_weights(ad::Tape<T>& tape, ad::Tensor<T> m,
                                    ad::Tensor<T> w, ad::Tensor<T> b,
                                    CnnAttentionScaling scaling) {
  auto e = ad::conv2d(tape, m, w, b, 1, 1);
  auto s = ad::avgpool_freq(tape, e);
  return scaling == CnnAttentionScaling::softmax
             ? ad::softmax_lastdim(tape, s)
             : ad::sigmoid(tape, s);
}

// beta [B, T] over h [B, T, D]: scores w.(tanh(U h_t + b)), or the same
// without the tanh when mlp is false, normalized by softmax over time.
template <typename T>
ad::Tensor<T> rnn_attention_weights(ad::Tape<T>& tape, ad::Tensor<T> h,
                                    ad::Tensor<T> u, ad::Tensor<T> ub,
                                    ad::Tensor<T> w, bool mlp) {
  const std::size_t B = h.dim(0), Tn = h.dim(1), D = h.dim(2);
  auto flat = ad::reshape(tape, h, {B * Tn, D});
  auto proj = ad::add_rowwise(tape, ad::matmul(tape, flat, u), ub);
  if (mlp) proj = ad::tanh_(tape, proj);
  auto scores = ad::reshape(tape, ad::matmul(tape, proj, w), {B, Tn});
  return ad::softmax_lastdim(tape, scores);
}

struct AcrnnConfig {
  std::size_t num_classes = 50;
  AttentionSite attention_site = AttentionSite::l10;
  CnnAttentionScaling cnn_attention_scaling = CnnAttentionScaling::softmax;
  bool rnn_attention_mlp = true;  // tanh scoring layer; false scores linearly
  double dropout_p = 0.5;
  std::size_t gru_hidden = 256;
  std::size_t attn_hidden = 128;
  double width_mult = 1.0;  // scales conv channels and recurrent widths
  std::uint64_t seed = 1;   // weight init stream
};

// Eight conv layers in four pooled pairs, two bidirectional GRU layers, and
// a dense head. Activations are NHWC with frequency as the image height, so
// a feature segment (time-major) is transposed on entry.
template <typename T>
class Acrnn {
 public:
  struct Forward {
    ad::Tensor<T> logits;
    // row-major [batch, steps] attention weights when attention is active
    std::vector<T> attention;
    std::size_t attention_steps = 0;
    std::vector<std::pair<std::string, std::vector<std::size_t>>> trace;
  };

  struct Complexity {
    std::size_t params = 0;
    std::size_t flops = 0;           // whole model, batch of one
    std::size_t attention_flops = 0;  // attention stages only
  };

  explicit Acrnn(const AcrnnConfig& cfg) : cfg_(cfg) {
    if (cfg.num_classes < 2) {
      throw ArgumentError("Acrnn: need at least two classes");
    }
    if (cfg.width_mult <= 0.0) {
      throw ArgumentError("Acrnn: width_mult must be positive");
    }

    const std::size_t widths[8] = {ch(0), ch(1), ch(2), ch(3),
                                   ch(4), ch(5), ch(6), ch(7)};
    std::size_t cin = 2;
    for (std::size_t i = 0; i < 8; ++i) {
      ConvBlock blk;
      const auto [kh, kw] = kernel(i);
      blk.w = ad::Tensor<T>({kh, kw, cin, widths[i]});
      blk.b = ad::Tensor<T>({widths[i]});
      blk.gamma = ad::Tensor<T>({widths[i]}, T(1));
      blk.beta = ad::Tensor<T>({widths[i]});
      blk.bn = ad::BnState<T>(widths[i]);
      const std::string p = "l" + std::to_string(i + 1);
      push(blk.w, p + ".w", true);
      push(blk.b, p + ".b", false);
      push(blk.gamma, p + ".bn.gamma", false);
      push(blk.beta, p + ".bn.beta", false);
      conv_.push_back(std::move(blk));
      cin = widths[i];
    }

    const std::size_t H = scaled(cfg_.gru_hidden);
    const std::size_t d9 = freq_dims()[4] * widths[7];
    make_gru(gru9_fwd_, d9, H, "l9.fwd");
    make_gru(gru9_bwd_, d9, H, "l9.bwd");
    make_gru(gru10_fwd_, 2 * H, H, "l10.fwd");
    make_gru(gru10_bwd_, 2 * H, H, "l10.bwd");

    if (is_conv_site(cfg_.attention_site)) {
      const std::size_t c = widths[site_layer_index(cfg_.attention_site)];
      attn_w_ = ad::Tensor<T>({3, 3, c, 1});
      attn_b_ = ad::Tensor<T>({1});
      push(attn_w_, "attn.conv.w", true);
      push(attn_b_, "attn.conv.b", false);
    } else if (cfg_.attention_site == AttentionSite::l10) {
      const std::size_t ha = attn_hidden();
      attn_u_ = ad::Tensor<T>({2 * H, ha});
      attn_ub_ = ad::Tensor<T>({ha});
      attn_w_ = ad::Tensor<T>({ha, 1});
      push(attn_u_, "attn.u", true);
      push(attn_ub_, "attn.u_b", false);
      push(attn_w_, "attn.w", true);
    }

    head_w_ = ad::Tensor<T>({2 * H, cfg_.num_classes});
    head_b_ = ad::Tensor<T>({cfg_.num_classes});
    push(head_w_, "head.w", true);
    push(head_b_, "head.b", false);
  }

  const AcrnnConfig& config() const { return cfg_; }
  std::vector<ad::Param<T>>& params() { return params_; }
  const std::vector<ad::Param<T>>& params() const { return params_; }

  // Batch-norm running statistics; saved alongside the params.
  std::vector<std::pair<std::string, std::vector<T>*>> state_buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      const std::string p = "l" + std::to_string(i + 1);
      out.emplace_back(p + ".bn.running_mean", &conv_[i].bn.running_mean);
      out.emplace_back(p + ".bn.running_var", &conv_[i].bn.running_var);
    }
    return out;
  }

  // Weights N(0, std^2); biases and bn shifts zero; bn scales one. Running
  // stats are reset. Everything is drawn from the given stream in param
  // order, so a seed pins the full initialization.
  void init_weights(Rng& rng, T std = T(0.05)) {
    if (!(std > T(0))) {
      throw ArgumentError("init_weights: std must be positive");
    }
    for (auto& p : params_) {
      const bool is_gamma =
          p.name.size() >= 6 &&
          p.name.compare(p.name.size() - 6, 6, ".gamma") == 0;
      T* v = p.t.data();
      if (p.decay) {
        for (std::size_t i = 0; i < p.t.size(); ++i) {
          v[i] = T(rng.normal()) * std;
        }
      } else {
        const T fill = is_gamma ? T(1) : T(0);
        for (std::size_t i = 0; i < p.t.size(); ++i) v[i] = fill;
      }
    }
    for (auto& blk : conv_) {
      blk.bn.running_mean.assign(blk.bn.running_mean.size(), T(0));
      blk.bn.running_var.assign(blk.bn.running_var.size(), T(1));
    }
  }

  // x is [B, bands, frames, 2]. rng feeds dropout and is only touched when
  // train is true and dropout_p > 0.
  Forward forward(ad::Tape<T>& tape, ad::Tensor<T> x, bool train, Rng& rng,
                  bool want_trace = false) {
    if (x.rank() != 4 || x.dim(3) != 2) {
      throw ShapeError("Acrnn::forward: input must be [B, bands, frames, 2]");
    }
    Forward out;
    auto rec = [&](const std::string& name, const ad::Tensor<T>& t) {
      if (want_trace) out.trace.emplace_back(name, t.shape());
    };
    rec("input", x);

    ad::Tensor<T> h = x;
    for (std::size_t i = 0; i < 8; ++i) {
      ConvBlock& blk = conv_[i];
      h = ad::conv2d(tape, h, blk.w, blk.b, 1, 1);
      h = ad::batchnorm(tape, h, blk.gamma, blk.beta, blk.bn, train);
      h = ad::relu(tape, h);
      if (is_conv_site(cfg_.attention_site) &&
          site_layer_index(cfg_.attention_site) == i) {
        h = apply_cnn_attention(tape, h, out);
      }
      if (const auto [pf, pt] = pool(i); pf != 0) {
        h = ad::maxpool2d(tape, h, pf, pt, pf, pt);
      }
      rec("l" + std::to_string(i + 1), h);
    }

    ad::Tensor<T> seq = ad::cnn_to_seq(tape, h);
    rec("seq", seq);

    ad::Tensor<T> r9 = ad::bidirectional(tape, seq, gru9_fwd_, gru9_bwd_);
    r9 = ad::dropout(tape, r9, cfg_.dropout_p, train, rng);
    rec("l9", r9);
    ad::Tensor<T> r10 = ad::bidirectional(tape, r9, gru10_fwd_, gru10_bwd_);
    r10 = ad::dropout(tape, r10, cfg_.dropout_p, train, rng);
    rec("l10", r10);

    ad::Tensor<T> feature;
    if (cfg_.attention_site == AttentionSite::l10) {
      feature = apply_rnn_attention(tape, r10, out);
    } else {
      feature = head_without_attention(tape, r10);
    }
    rec("feature", feature);

    out.logits =
        ad::add_rowwise(tape, ad::matmul(tape, feature, head_w_), head_b_);
    rec("logits", out.logits);
    return out;
  }

  // Forward-direction state at the last step next to the backward-direction
  // state at the first step.
  ad::Tensor<T> head_without_attention(ad::Tape<T>& tape, ad::Tensor<T> h) {
    const std::size_t Tn = h.dim(1), H = hidden();
    auto last = ad::slice_time(tape, h, Tn - 1);
    auto first = ad::slice_time(tape, h, 0);
    return ad::concat_cols(tape, ad::slice_cols(tape, last, 0, H),
                           ad::slice_cols(tape, first, H, H));
  }

  // Parameter count from per-layer closed forms.
  std::size_t count_params() const {
    std::size_t total = 0;
    std::size_t cin = 2;
    for (std::size_t i = 0; i < 8; ++i) {
      const auto [kh, kw] = kernel(i);
      total += kh * kw * cin * ch(i) + ch(i) + 2 * ch(i);
      cin = ch(i);
    }
    const std::size_t H = hidden();
    const std::size_t d9 = freq_dims()[4] * ch(7);
    total += 2 * 3 * ((d9 + H) * H + H);       // l9, both directions
    total += 2 * 3 * ((2 * H + H) * H + H);    // l10
    if (is_conv_site(cfg_.attention_site)) {
      total += 3 * 3 * ch(site_layer_index(cfg_.attention_site)) + 1;
    } else if (cfg_.attention_site == AttentionSite::l10) {
      total += 2 * H * attn_hidden() + attn_hidden() + attn_hidden();
    }
    total += 2 * H * cfg_.num_classes + cfg_.num_classes;
    return total;
  }

  std::size_t count_params_enumerated() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.t.size();
    return total;
  }

  // Inference cost for a batch of one 128-frame segment, from per-layer
  // closed forms. Conventions: one MAC is 2 flops, a dense D->C layer costs
  // 2*D*C + C, batchnorm folds to 2 per element, relu / sigmoid / tanh are 1
  // per element, a softmax row of n costs 3n, a max pool costs window-1 per
  // output, a mean over n costs n.
  Complexity count_flops() const {
    Complexity cx;
    cx.params = count_params();
    const auto fd = freq_dims();
    const auto td = time_dims();
    std::size_t cin = 2;
    std::size_t F = fd[0], Tm = td[0];
    for (std::size_t i = 0; i < 8; ++i) {
      const auto [kh, kw] = kernel(i);
      const std::size_t cout = ch(i);
      cx.flops += 2 * kh * kw * cin * F * Tm * cout + F * Tm * cout;  // conv+b
      cx.flops += 2 * F * Tm * cout;                                  // bn
      cx.flops += F * Tm * cout;                                      // relu
      if (is_conv_site(cfg_.attention_site) &&
          site_layer_index(cfg_.attention_site) == i) {
        std::size_t a = 2 * 3 * 3 * cout * F * Tm + F * Tm;  // score conv
        a += F * Tm;                                         // freq mean
        a += cfg_.cnn_attention_scaling == CnnAttentionScaling::softmax
                 ? 3 * Tm
                 : Tm;
        a += F * Tm * cout;  // rescale
        cx.flops += a;
        cx.attention_flops += a;
      }
      if (const auto [pf, pt] = pool(i); pf != 0) {
        const std::size_t Fo = (F - pf) / pf + 1, To = (Tm - pt) / pt + 1;
        cx.flops += (pf * pt - 1) * Fo * To * cout;
        F = Fo;
        Tm = To;
      }
      cin = cout;
    }
    const std::size_t H = hidden();
    const std::size_t d9 = F * ch(7);
    cx.flops += 2 * Tm * gru_step_flops(d9, H);      // l9
    cx.flops += 2 * Tm * gru_step_flops(2 * H, H);   // l10
    if (cfg_.attention_site == AttentionSite::l10) {
      const std::size_t ha = attn_hidden();
      std::size_t a = Tm * (2 * 2 * H * ha + ha);     // projection
      if (cfg_.rnn_attention_mlp) a += Tm * ha;       // tanh
      a += Tm * (2 * ha + 1);                         // score
      a += 3 * Tm;                                    // softmax
      a += 2 * Tm * 2 * H;                            // weighted sum
      cx.flops += a;
      cx.attention_flops += a;
    }
    cx.flops += 2 * 2 * H * cfg_.num_classes + cfg_.num_classes;  // head
    return cx;
  }

  // Same totals derived by walking the stage shapes the forward pass
  // produces, with per-op cost rules applied to the observed shapes.
  Complexity count_flops_enumerated() const {
    Complexity cx;
    cx.params = count_params_enumerated();
    std::size_t F = 128, Tm = 128, C = 2;
    for (std::size_t i = 0; i < 8; ++i) {
      const auto [kh, kw] = kernel(i);
      const std::size_t cout = conv_[i].w.dim(3);
      cx.flops += cost_conv(F, Tm, kh, kw, C, cout);
      cx.flops += cost_bn(F * Tm * cout) + cost_act(F * Tm * cout);
      if (is_conv_site(cfg_.attention_site) &&
          site_layer_index(cfg_.attention_site) == i) {
        std::size_t a = cost_conv(F, Tm, 3, 3, cout, 1);
        a += cost_mean_rows(F, Tm);
        a += cfg_.cnn_attention_scaling == CnnAttentionScaling::softmax
                 ? cost_softmax(Tm)
                 : cost_act(Tm);
        a += F * Tm * cout;
        cx.flops += a;
        cx.attention_flops += a;
      }
      if (const auto [pf, pt] = pool(i); pf != 0) {
        const std::size_t Fo = (F - pf) / pf + 1, To = (Tm - pt) / pt + 1;
        cx.flops += cost_pool(Fo, To, cout, pf * pt);
        F = Fo;
        Tm = To;
      }
      C = cout;
    }
    std::size_t D = F * C;
    const std::size_t H = gru9_fwd_.bz.size();
    for (int layer = 0; layer < 2; ++layer) {
      cx.flops += 2 * Tm * gru_step_flops(D, H);
      D = 2 * H;
    }
    if (cfg_.attention_site == AttentionSite::l10) {
      const std::size_t ha = attn_w_.dim(0);
      std::size_t a = Tm * cost_dense(2 * H, ha);
      if (cfg_.rnn_attention_mlp) a += Tm * cost_act(ha);
      a += Tm * cost_dense(ha, 1);
      a += cost_softmax(Tm);
      a += 2 * Tm * D;
      cx.flops += a;
      cx.attention_flops += a;
    }
    cx.flops += cost_dense(D, cfg_.num_classes);
    return cx;
  }

  struct LayerCost {
    std::string name;
    std::size_t params = 0;
    std::size_t flops = 0;
  };

  // Per-layer breakdown of count_params / count_flops; rows sum exactly to
  // the totals. Attention appears as its own row after its host layer.
  std::vector<LayerCost> complexity_rows() const {
    std::vector<LayerCost> rows;
    const auto fd = freq_dims();
    const auto td = time_dims();
    std::size_t cin = 2;
    std::size_t F = fd[0], Tm = td[0];
    for (std::size_t i = 0; i < 8; ++i) {
      const auto [kh, kw] = kernel(i);
      const std::size_t cout = ch(i);
      LayerCost row;
      row.name = "l" + std::to_string(i + 1);
      row.params = kh * kw * cin * cout + cout + 2 * cout;
      row.flops = cost_conv(F, Tm, kh, kw, cin, cout) +
                  cost_bn(F * Tm * cout) + cost_act(F * Tm * cout);
      LayerCost attn;
      if (is_conv_site(cfg_.attention_site) &&
          site_layer_index(cfg_.attention_site) == i) {
        attn.name = std::string("attn@") + attention_site_name(cfg_.attention_site);
        attn.params = 3 * 3 * cout + 1;
        attn.flops = cost_conv(F, Tm, 3, 3, cout, 1) + cost_mean_rows(F, Tm);
        attn.flops += cfg_.cnn_attention_scaling == CnnAttentionScaling::softmax
                          ? cost_softmax(Tm)
                          : cost_act(Tm);
        attn.flops += F * Tm * cout;
      }
      if (const auto [pf, pt] = pool(i); pf != 0) {
        const std::size_t Fo = (F - pf) / pf + 1, To = (Tm - pt) / pt + 1;
        row.flops += cost_pool(Fo, To, cout, pf * pt);
        F = Fo;
        Tm = To;
      }
      rows.push_back(std::move(row));
      if (!attn.name.empty()) rows.push_back(std::move(attn));
      cin = cout;
    }
    const std::size_t H = hidden();
    const std::size_t d9 = F * ch(7);
    rows.push_back({"l9", 2 * 3 * ((d9 + H) * H + H),
                    2 * Tm * gru_step_flops(d9, H)});
    rows.push_back({"l10", 2 * 3 * ((2 * H + H) * H + H),
                    2 * Tm * gru_step_flops(2 * H, H)});
    if (cfg_.attention_site == AttentionSite::l10) {
      const std::size_t ha = attn_hidden();
      LayerCost attn;
      attn.name = "attn@l10";
      attn.params = 2 * H * ha + ha + ha;
      attn.flops = Tm * cost_dense(2 * H, ha);
      if (cfg_.rnn_attention_mlp) attn.flops += Tm * cost_act(ha);
      attn.flops += Tm * cost_dense(ha, 1) + cost_softmax(Tm) + 2 * Tm * 2 * H;
      rows.push_back(std::move(attn));
    }
    rows.push_back({"head", 2 * H * cfg_.num_classes + cfg_.num_classes,
                    cost_dense(2 * H, cfg_.num_classes)});
    return rows;
  }

  // Standard dimension ladder for 128x128 input: frequency after each pool
  // stage, index 4 = final.
  static std::array<std::size_t, 5> freq_dims() {
    return {128, 32, 8, 8, 4};
  }
  static std::array<std::size_t, 5> time_dims() {
    return {128, 42, 42, 14, 7};
  }

  std::size_t hidden() const { return gru9_fwd_.bz.size(); }

 private:
  struct ConvBlock {
    ad::Tensor<T> w, b, gamma, beta;
    ad::BnState<T> bn;
  };

  static bool is_conv_site(AttentionSite s) {
    return s == AttentionSite::l2 || s == AttentionSite::l4 ||
           s == AttentionSite::l6 || s == AttentionSite::l8;
  }

  static std::size_t site_layer_index(AttentionSite s) {
    switch (s) {
      case AttentionSite::l2: return 1;
      case AttentionSite::l4: return 3;
      case AttentionSite::l6: return 5;
      case AttentionSite::l8: return 7;
      default: return std::size_t(-1);
    }
  }

  static std::pair<std::size_t, std::size_t> kernel(std::size_t i) {
    if (i < 2) return {3, 5};
    if (i < 4) return {3, 1};
    if (i < 6) return {1, 5};
    return {3, 3};
  }

  // pool size after layer i, {0,0} when the layer has none
  static std::pair<std::size_t, std::size_t> pool(std::size_t i) {
    switch (i) {
      case 1: return {4, 3};
      case 3: return {4, 1};
      case 5: return {1, 3};
      case 7: return {2, 2};
      default: return {0, 0};
    }
  }

  std::size_t scaled(std::size_t base) const {
    const double w = double(base) * cfg_.width_mult;
    const auto r = std::size_t(std::lround(w));
    return r == 0 ? 1 : r;
  }

  std::size_t ch(std::size_t i) const {
    static constexpr std::size_t base[8] = {32, 32, 64, 64, 128, 128, 256, 256};
    return scaled(base[i]);
  }

  std::size_t attn_hidden() const { return scaled(cfg_.attn_hidden); }

  static std::size_t cost_dense(std::size_t d, std::size_t c) {
    return 2 * d * c + c;
  }
  static std::size_t cost_conv(std::size_t F, std::size_t Tm, std::size_t kh,
                               std::size_t kw, std::size_t cin,
                               std::size_t cout) {
    return 2 * kh * kw * cin * F * Tm * cout + F * Tm * cout;
  }
  static std::size_t cost_bn(std::size_t n) { return 2 * n; }
  static std::size_t cost_act(std::size_t n) { return n; }
  static std::size_t cost_softmax(std::size_t n) { return 3 * n; }
  static std::size_t cost_pool(std::size_t F, std::size_t Tm, std::size_t c,
                               std::size_t window) {
    return (window - 1) * F * Tm * c;
  }
  static std::size_t cost_mean_rows(std::size_t F, std::size_t Tm) {
    return F * Tm;
  }
  static std::size_t gru_step_flops(std::size_t d, std::size_t h) {
    return 3 * cost_dense(d + h, h) + 7 * h;
  }

  void push(const ad::Tensor<T>& t, std::string name, bool decay) {
    ad::Param<T> p;
    p.t = t;
    p.name = std::move(name);
    p.decay = decay;
    p.t.set_requires_grad(true);
    params_.push_back(std::move(p));
  }

  void make_gru(ad::GruParams<T>& g, std::size_t d, std::size_t h,
                const std::string& prefix) {
    g.wz = ad::Tensor<T>({d + h, h});
    g.wr = ad::Tensor<T>({d + h, h});
    g.wh = ad::Tensor<T>({d + h, h});
    g.bz = ad::Tensor<T>({h});
    g.br = ad::Tensor<T>({h});
    g.bh = ad::Tensor<T>({h});
    push(g.wz, prefix + ".wz", true);
    push(g.wr, prefix + ".wr", true);
    push(g.wh, prefix + ".wh", true);
    push(g.bz, prefix + ".bz", false);
    push(g.br, prefix + ".br", false);
    push(g.bh, prefix + ".bh", false);
  }

  ad::Tensor<T> apply_cnn_attention(ad::Tape<T>& tape, ad::Tensor<T> m,
                                    Forward& out) {
    auto a = cnn_attention_weights(tape, m, attn_w_, attn_b_,
                                   cfg_.cnn_attention_scaling);
    out.attention = a.values();
    out.attention_steps = a.dim(1);
    return ad::scale_time(tape, m, a);
  }

  ad::Tensor<T> apply_rnn_attention(ad::Tape<T>& tape, ad::Tensor<T> h,
                                    Forward& out) {
    auto beta = rnn_attention_weights(tape, h, attn_u_, attn_ub_, attn_w_,
                                      cfg_.rnn_attention_mlp);
    out.attention = beta.values();
    out.attention_steps = h.dim(1);
    return ad::weighted_sum_time(tape, h, beta);
  }

  AcrnnConfig cfg_;
  std::vector<ad::Param<T>> params_;
  std::vector<ConvBlock> conv_;
  ad::GruParams<T> gru9_fwd_, gru9_bwd_, gru10_fwd_, gru10_bwd_;
  ad::Tensor<T> attn_w_, attn_b_, attn_u_, attn_ub_;
  ad::Tensor<T> head_w_, head_b_;
};

// Normalized [B, bands, frames, 2] batch from time-major feature segments.
template <typename T>
ad::Tensor<T> batch_from_segments(
    const std::vector<const dsp::LogGtSegment*>& segs,
    const dsp::NormStats& stats) {
  if (segs.empty()) throw EmptyInputError("batch_from_segments: no segments");
  const int frames = segs[0]->frames, bands = segs[0]->bands;
  ad::Tensor<T> x({segs.size(), std::size_t(bands), std::size_t(frames), 2});
  T* xv = x.data();
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto& seg = *segs[s];
    if (seg.frames != frames || seg.bands != bands) {
      throw ShapeError("batch_from_segments: mixed segment shapes");
    }
    for (int t = 0; t < frames; ++t) {
      for (int b = 0; b < bands; ++b) {
        for (int c = 0; c < 2; ++c) {
          const double v = (double(seg.at(t, b, c)) - stats.mean[c]) /
                           stats.std[c];
          xv[((s * bands + std::size_t(b)) * std::size_t(frames) +
              std::size_t(t)) *
                 2 +
             std::size_t(c)] = T(v);
        }
      }
    }
  }
  return x;
}

}  // namespace esc::model
