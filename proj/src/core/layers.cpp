#include "riskcast/core/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "riskcast/core/error.hpp"
#include "riskcast/core/functional.hpp"

namespace riskcast {

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, std::size_t in, std::size_t out)
    : weight({in, out}), bias({out}), name_(std::move(name)) {}

void Linear::init(Rng& rng) {
  glorot_uniform(weight.value, in_dim(), out_dim(), rng);
  bias.value.fill(0.0);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != in_dim()) {
    throw DimensionError("layer '" + name_ + "' expects input width " + std::to_string(in_dim()) +
                         ", got " + x.shape_string());
  }
  Tensor y = matmul(x, weight.value);
  const std::size_t n = out_dim();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double* row = &y(r, 0);
    for (std::size_t j = 0; j < n; ++j) row[j] += bias.value[j];
  }
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& grad_out) {
  if (grad_out.rank() != 2 || grad_out.cols() != out_dim() || grad_out.rows() != x.rows()) {
    throw DimensionError("layer '" + name_ + "' got output gradient " + grad_out.shape_string());
  }
  add_matmul_tn(weight.grad, x, grad_out);
  for (std::size_t r = 0; r < grad_out.rows(); ++r)
    for (std::size_t j = 0; j < out_dim(); ++j) bias.grad[j] += grad_out(r, j);
  return matmul_nt(grad_out, weight.value);
}

void Linear::collect(ParamList& out, const std::string& prefix) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

// ---------------------------------------------------------------- Mlp

Mlp::Mlp(std::string name, const std::vector<std::size_t>& widths) : name_(std::move(name)) {
  if (widths.size() < 2) throw DimensionError("mlp '" + name_ + "' needs at least two widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers_.emplace_back(name_ + "[" + std::to_string(l) + "]", widths[l], widths[l + 1]);
  }
}

void Mlp::init(Rng& rng) {
  for (auto& layer : layers_) layer.init(rng);
}

Tensor Mlp::forward(const Tensor& x, MlpCache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (cache) cache->inputs.push_back(h);
    Tensor z = layers_[l].forward(h);
    if (l + 1 < layers_.size()) {
      h = relu(z);
      if (cache) cache->pre.push_back(std::move(z));
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Tensor Mlp::backward(const MlpCache& cache, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    g = layers_[l].backward(cache.inputs[l], g);
    if (l > 0) g = relu_backward(cache.pre[l - 1], g);
  }
  return g;
}

void Mlp::collect(ParamList& out, const std::string& prefix) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].collect(out, prefix + "." + std::to_string(l));
  }
}

// ---------------------------------------------------------------- Lstm

Lstm::Lstm(std::string name, std::size_t in, std::size_t hidden)
    : weight({in + hidden, 4 * hidden}),
      bias({4 * hidden}),
      name_(std::move(name)),
      in_(in),
      hidden_(hidden) {}

void Lstm::init(Rng& rng) {
  glorot_uniform(weight.value, in_ + hidden_, 4 * hidden_, rng);
  bias.value.fill(0.0);
  // Forget-gate bias starts at 1 so early training keeps memory.
  for (std::size_t j = hidden_; j < 2 * hidden_; ++j) bias.value[j] = 1.0;
}

LstmState Lstm::step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                     LstmStepCache* cache) const {
  if (x.rank() != 2 || x.cols() != in_) {
    throw DimensionError("lstm '" + name_ + "' expects input width " + std::to_string(in_) +
                         ", got " + x.shape_string());
  }
  const std::size_t b = x.rows();
  if (h_prev.rank() != 2 || h_prev.rows() != b || h_prev.cols() != hidden_ ||
      !c_prev.same_shape(h_prev)) {
    throw DimensionError("lstm '" + name_ + "' state shape mismatch: h " + h_prev.shape_string() +
                         ", c " + c_prev.shape_string());
  }
  Tensor xh = concat_cols(x, h_prev);
  Tensor z = matmul(xh, weight.value);
  const std::size_t hd = hidden_;
  Tensor i = Tensor::matrix(b, hd), f = Tensor::matrix(b, hd), g = Tensor::matrix(b, hd),
         o = Tensor::matrix(b, hd);
  LstmState out{Tensor::matrix(b, hd), Tensor::matrix(b, hd)};
  Tensor tanh_c = Tensor::matrix(b, hd);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < hd; ++j) {
      i(r, j) = sigmoid(z(r, j) + bias.value[j]);
      f(r, j) = sigmoid(z(r, hd + j) + bias.value[hd + j]);
      g(r, j) = std::tanh(z(r, 2 * hd + j) + bias.value[2 * hd + j]);
      o(r, j) = sigmoid(z(r, 3 * hd + j) + bias.value[3 * hd + j]);
      out.c(r, j) = f(r, j) * c_prev(r, j) + i(r, j) * g(r, j);
      tanh_c(r, j) = std::tanh(out.c(r, j));
      out.h(r, j) = o(r, j) * tanh_c(r, j);
    }
  }
  if (cache) {
    cache->xh = std::move(xh);
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->c_prev = c_prev;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

LstmStepGrads Lstm::step_backward(const LstmStepCache& cache, const Tensor& grad_h,
                                  const Tensor& grad_c) {
  const std::size_t b = cache.i.rows();
  const std::size_t hd = hidden_;
  Tensor dz = Tensor::matrix(b, 4 * hd);
  LstmStepGrads out;
  out.dc_prev = Tensor::matrix(b, hd);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < hd; ++j) {
      const double i = cache.i(r, j), f = cache.f(r, j), g = cache.g(r, j), o = cache.o(r, j);
      const double tc = cache.tanh_c(r, j);
      const double dh = grad_h(r, j);
      const double dc = grad_c(r, j) + dh * o * (1.0 - tc * tc);
      dz(r, j) = dc * g * i * (1.0 - i);
      dz(r, hd + j) = dc * cache.c_prev(r, j) * f * (1.0 - f);
      dz(r, 2 * hd + j) = dc * i * (1.0 - g * g);
      dz(r, 3 * hd + j) = dh * tc * o * (1.0 - o);
      out.dc_prev(r, j) = dc * f;
    }
  }
  add_matmul_tn(weight.grad, cache.xh, dz);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < 4 * hd; ++j) bias.grad[j] += dz(r, j);
  Tensor dxh = matmul_nt(dz, weight.value);
  out.dx = slice_cols(dxh, 0, in_);
  out.dh_prev = slice_cols(dxh, in_, hd);
  return out;
}

Tensor Lstm::encode(const std::vector<Tensor>& seq, LstmSequenceCache* cache) const {
  if (seq.empty()) throw DimensionError("lstm '" + name_ + "' got an empty sequence");
  const std::size_t b = seq.front().rows();
  LstmState state{Tensor::matrix(b, hidden_), Tensor::matrix(b, hidden_)};
  if (cache) cache->steps.assign(seq.size(), {});
  for (std::size_t t = 0; t < seq.size(); ++t) {
    state = step(seq[t], state.h, state.c, cache ? &cache->steps[t] : nullptr);
  }
  return state.h;
}

std::vector<Tensor> Lstm::encode_backward(const LstmSequenceCache& cache,
                                          const Tensor& grad_h_final) {
  std::vector<Tensor> dx(cache.steps.size());
  Tensor dh = grad_h_final;
  Tensor dc = Tensor::matrix(dh.rows(), hidden_);
  for (std::size_t t = cache.steps.size(); t-- > 0;) {
    LstmStepGrads g = step_backward(cache.steps[t], dh, dc);
    dx[t] = std::move(g.dx);
    dh = std::move(g.dh_prev);
    dc = std::move(g.dc_prev);
  }
  return dx;
}

void Lstm::collect(ParamList& out, const std::string& prefix) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::string name, std::size_t dim)
    : gamma({dim}), beta({dim}), name_(std::move(name)) {
  gamma.value.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x, LayerNormCache* cache) const {
  const std::size_t d = gamma.value.size();
  if (x.rank() != 2 || x.cols() != d) {
    throw DimensionError("layernorm '" + name_ + "' expects width " + std::to_string(d) +
                         ", got " + x.shape_string());
  }
  Tensor xhat = x;
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(r, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x(r, j) - mean) * (x(r, j) - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + kEps);
    for (std::size_t j = 0; j < d; ++j) xhat(r, j) = (x(r, j) - mean) * inv_std[r];
  }
  Tensor y = xhat;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) y(r, j) = xhat(r, j) * gamma.value[j] + beta.value[j];
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor LayerNorm::backward(const LayerNormCache& cache, const Tensor& grad_out) {
  const std::size_t d = gamma.value.size();
  const Tensor& xhat = cache.xhat;
  Tensor dx = grad_out;
  for (std::size_t r = 0; r < grad_out.rows(); ++r) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double gy = grad_out(r, j);
      gamma.grad[j] += gy * xhat(r, j);
      beta.grad[j] += gy;
      const double gx = gy * gamma.value[j];
      sum_g += gx;
      sum_gx += gx * xhat(r, j);
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double gx = grad_out(r, j) * gamma.value[j];
      dx(r, j) = cache.inv_std[r] * (gx - inv_d * sum_g - xhat(r, j) * inv_d * sum_gx);
    }
  }
  return dx;
}

void LayerNorm::collect(ParamList& out, const std::string& prefix) {
  out.emplace_back(prefix + ".gamma", &gamma);
  out.emplace_back(prefix + ".beta", &beta);
}

// ---------------------------------------------------------------- Attention

AttentionMask AttentionMask::all(std::size_t queries, std::size_t keys) {
  return {queries, keys, std::vector<std::uint8_t>(queries * keys, 1)};
}

AttentionMask AttentionMask::from_keys(std::size_t queries, const std::vector<bool>& key_mask) {
  AttentionMask m{queries, key_mask.size(), std::vector<std::uint8_t>(queries * key_mask.size())};
  for (std::size_t q = 0; q < queries; ++q)
    for (std::size_t k = 0; k < key_mask.size(); ++k) m.allowed[q * m.keys + k] = key_mask[k];
  return m;
}

MultiHeadAttention::MultiHeadAttention(std::string name, std::size_t dim, std::size_t heads)
    : wq(name + ".q", dim, dim),
      wk(name + ".k", dim, dim),
      wv(name + ".v", dim, dim),
      wo(name + ".o", dim, dim),
      name_(std::move(name)),
      dim_(dim),
      heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw DimensionError("attention '" + name_ + "': head count " + std::to_string(heads) +
                         " does not divide dim " + std::to_string(dim));
  }
}

void MultiHeadAttention::init(Rng& rng) {
  wq.init(rng);
  wk.init(rng);
  wv.init(rng);
  wo.init(rng);
}

Tensor MultiHeadAttention::forward(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                                   const AttentionMask& mask, AttentionCache* cache) const {
  const std::size_t nq = q_in.rows(), nk = k_in.rows();
  if (v_in.rows() != nk) {
    throw DimensionError("attention '" + name_ + "': key/value count mismatch");
  }
  if (mask.queries != nq || mask.keys != nk) {
    throw DimensionError("attention '" + name_ + "': mask is " + std::to_string(mask.queries) +
                         "x" + std::to_string(mask.keys) + ", expected " + std::to_string(nq) +
                         "x" + std::to_string(nk));
  }
  for (std::size_t qi = 0; qi < nq; ++qi) {
    bool any = false;
    for (std::size_t ki = 0; ki < nk && !any; ++ki) any = mask(qi, ki);
    if (!any) throw Error("empty attention context");
  }
  Tensor q = wq.forward(q_in);
  Tensor k = wk.forward(k_in);
  Tensor v = wv.forward(v_in);
  const std::size_t dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor context = Tensor::matrix(nq, dim_);
  std::vector<Tensor> weights;
  weights.reserve(heads_);
  std::vector<double> scores;
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t off = h * dh;
    Tensor w = Tensor::matrix(nq, nk);
    for (std::size_t qi = 0; qi < nq; ++qi) {
      scores.clear();
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t ki = 0; ki < nk; ++ki) {
        if (!mask(qi, ki)) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q(qi, off + c) * k(ki, off + c);
        s *= scale;
        scores.push_back(s);
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        sum += s;
      }
      std::size_t idx = 0;
      for (std::size_t ki = 0; ki < nk; ++ki) {
        if (!mask(qi, ki)) continue;
        const double a = scores[idx++] / sum;
        w(qi, ki) = a;
        for (std::size_t c = 0; c < dh; ++c) context(qi, off + c) += a * v(ki, off + c);
      }
    }
    weights.push_back(std::move(w));
  }
  Tensor out = wo.forward(context);
  if (cache) {
    cache->q_in = q_in;
    cache->k_in = k_in;
    cache->v_in = v_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(weights);
    cache->context = std::move(context);
    cache->mask = mask;
  }
  return out;
}

AttentionGrads MultiHeadAttention::backward(const AttentionCache& cache, const Tensor& grad_out) {
  const std::size_t nq = cache.q.rows(), nk = cache.k.rows();
  const std::size_t dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor dcontext = wo.backward(cache.context, grad_out);
  Tensor dq = Tensor::matrix(nq, dim_);
  Tensor dk = Tensor::matrix(nk, dim_);
  Tensor dv = Tensor::matrix(nk, dim_);
  std::vector<double> dw(nk);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t off = h * dh;
    const Tensor& w = cache.weights[h];
    for (std::size_t qi = 0; qi < nq; ++qi) {
      double dot = 0.0;
      for (std::size_t ki = 0; ki < nk; ++ki) {
        dw[ki] = 0.0;
        if (!cache.mask(qi, ki)) continue;
        const double a = w(qi, ki);
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          const double g = dcontext(qi, off + c);
          s += g * cache.v(ki, off + c);
          dv(ki, off + c) += a * g;
        }
        dw[ki] = s;
        dot += a * s;
      }
      for (std::size_t ki = 0; ki < nk; ++ki) {
        if (!cache.mask(qi, ki)) continue;
        const double ds = w(qi, ki) * (dw[ki] - dot) * scale;
        if (ds == 0.0) continue;
        for (std::size_t c = 0; c < dh; ++c) {
          dq(qi, off + c) += ds * cache.k(ki, off + c);
          dk(ki, off + c) += ds * cache.q(qi, off + c);
        }
      }
    }
  }
  AttentionGrads out;
  out.dq = wq.backward(cache.q_in, dq);
  out.dk = wk.backward(cache.k_in, dk);
  out.dv = wv.backward(cache.v_in, dv);
  return out;
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix) {
  wq.collect(out, prefix + ".q");
  wk.collect(out, prefix + ".k");
  wv.collect(out, prefix + ".v");
  wo.collect(out, prefix + ".o");
}

// ---------------------------------------------------------------- AttentionBlock

AttentionBlock::AttentionBlock(std::string name, std::size_t dim, std::size_t heads)
    : ln1(name + ".ln1", dim),
      ln2(name + ".ln2", dim),
      attn(name + ".attn", dim, heads),
      ff1(name + ".ff1", dim, 2 * dim),
      ff2(name + ".ff2", 2 * dim, dim) {}

void AttentionBlock::init(Rng& rng) {
  attn.init(rng);
  ff1.init(rng);
  ff2.init(rng);
}

Tensor AttentionBlock::forward(const Tensor& x, const Tensor* context, const AttentionMask& mask,
                               BlockCache* cache) const {
  LayerNormCache ln1c, ln2c;
  Tensor n1 = ln1.forward(x, &ln1c);
  const Tensor& kv = context ? *context : n1;
  AttentionCache ac;
  Tensor a = attn.forward(n1, kv, kv, mask, cache ? &ac : nullptr);
  Tensor x1 = x + a;
  Tensor n2 = ln2.forward(x1, &ln2c);
  Tensor pre = ff1.forward(n2);
  Tensor hid = relu(pre);
  Tensor y = x1 + ff2.forward(hid);
  if (cache) {
    cache->ln1 = std::move(ln1c);
    cache->ln2 = std::move(ln2c);
    cache->ln1_out = std::move(n1);
    cache->attn = std::move(ac);
    cache->x1 = std::move(x1);
    cache->ln2_out = std::move(n2);
    cache->ff_pre = std::move(pre);
    cache->ff_hidden = std::move(hid);
  }
  return y;
}

BlockGrads AttentionBlock::backward(const BlockCache& cache, bool has_context,
                                    const Tensor& grad_out) {
  Tensor dhid = ff2.backward(cache.ff_hidden, grad_out);
  Tensor dpre = relu_backward(cache.ff_pre, dhid);
  Tensor dn2 = ff1.backward(cache.ln2_out, dpre);
  Tensor dx1 = grad_out + ln2.backward(cache.ln2, dn2);
  AttentionGrads ag = attn.backward(cache.attn, dx1);
  BlockGrads out;
  Tensor dn1 = ag.dq;
  if (has_context) {
    out.dcontext = ag.dk + ag.dv;
  } else {
    dn1 += ag.dk;
    dn1 += ag.dv;
  }
  out.dx = dx1 + ln1.backward(cache.ln1, dn1);
  return out;
}

void AttentionBlock::collect(ParamList& out, const std::string& prefix) {
  ln1.collect(out, prefix + ".ln1");
  attn.collect(out, prefix + ".attn");
  ln2.collect(out, prefix + ".ln2");
  ff1.collect(out, prefix + ".ff1");
  ff2.collect(out, prefix + ".ff2");
}

}  // namespace riskcast
