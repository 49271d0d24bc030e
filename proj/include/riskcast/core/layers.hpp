#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "riskcast/core/param.hpp"
#include "riskcast/core/tensor.hpp"

namespace riskcast {

// Layers keep forward() const and return what backward() needs in a cache
// object, so one set of weights can be applied to several inputs in a single
// pass. backward() accumulates into Parameter::grad and returns the input
// gradient.

/// Affine map y = x W + b, W is [in, out], b is [out].
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out);

  void init(Rng& rng);
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out);
  void collect(ParamList& out, const std::string& prefix);

  std::size_t in_dim() const { return weight.value.dim(0); }
  std::size_t out_dim() const { return weight.value.dim(1); }
  const std::string& name() const { return name_; }

  Parameter weight;
  Parameter bias;

 private:
  std::string name_;
};

struct MlpCache {
  std::vector<Tensor> inputs;  // input of each layer
  std::vector<Tensor> pre;     // pre-activation of each hidden layer
};

/// Stack of Linear layers with ReLU between them (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, const std::vector<std::size_t>& widths);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, MlpCache* cache = nullptr) const;
  Tensor backward(const MlpCache& cache, const Tensor& grad_out);
  void collect(ParamList& out, const std::string& prefix);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::string name_;
  std::vector<Linear> layers_;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

struct LstmStepCache {
  Tensor xh;  // [B, in + hidden]
  Tensor i, f, g, o;
  Tensor c_prev;
  Tensor tanh_c;
};

struct LstmStepGrads {
  Tensor dx;
  Tensor dh_prev;
  Tensor dc_prev;
};

struct LstmSequenceCache {
  std::vector<LstmStepCache> steps;
};

/// LSTM cell with gate order (input, forget, candidate, output). Weight is
/// [in + hidden, 4 hidden] acting on the concatenation [x, h_prev].
class Lstm {
 public:
  Lstm() = default;
  Lstm(std::string name, std::size_t in, std::size_t hidden);

  void init(Rng& rng);
  LstmState step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                 LstmStepCache* cache = nullptr) const;
  LstmStepGrads step_backward(const LstmStepCache& cache, const Tensor& grad_h,
                              const Tensor& grad_c);

  /// Runs the cell over seq (each [B, in]) from zero state; returns final h.
  Tensor encode(const std::vector<Tensor>& seq, LstmSequenceCache* cache = nullptr) const;
  /// Backpropagates through time; returns the gradient for each input step.
  std::vector<Tensor> encode_backward(const LstmSequenceCache& cache, const Tensor& grad_h_final);

  void collect(ParamList& out, const std::string& prefix);

  std::size_t in_dim() const { return in_; }
  std::size_t hidden_dim() const { return hidden_; }

  Parameter weight;
  Parameter bias;

 private:
  std::string name_;
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
};

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t dim);

  Tensor forward(const Tensor& x, LayerNormCache* cache = nullptr) const;
  Tensor backward(const LayerNormCache& cache, const Tensor& grad_out);
  void collect(ParamList& out, const std::string& prefix);

  Parameter gamma;
  Parameter beta;

 private:
  std::string name_;
  static constexpr double kEps = 1e-5;
};

/// Which keys each query may attend to. Row-major [queries, keys].
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask all(std::size_t queries, std::size_t keys);
  /// Same key mask for every query.
  static AttentionMask from_keys(std::size_t queries, const std::vector<bool>& key_mask);
  bool operator()(std::size_t q, std::size_t k) const { return allowed[q * keys + k] != 0; }
};

struct AttentionCache {
  Tensor q_in, k_in, v_in;
  Tensor q, k, v;
  std::vector<Tensor> weights;  // per head [Nq, Nk], zero where masked
  Tensor context;               // concatenated head outputs [Nq, D]
  AttentionMask mask;
};

struct AttentionGrads {
  Tensor dq, dk, dv;
};

/// Multi-head scaled dot-product attention with output projection.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::string name, std::size_t dim, std::size_t heads);

  void init(Rng& rng);
  /// Throws Error("empty attention context") if a query has no allowed key.
  Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask,
                 AttentionCache* cache = nullptr) const;
  AttentionGrads backward(const AttentionCache& cache, const Tensor& grad_out);
  void collect(ParamList& out, const std::string& prefix);

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }

  Linear wq, wk, wv, wo;

 private:
  std::string name_;
  std::size_t dim_ = 0;
  std::size_t heads_ = 0;
};

struct BlockCache {
  LayerNormCache ln1, ln2;
  Tensor ln1_out;
  AttentionCache attn;
  Tensor x1;
  Tensor ln2_out;
  Tensor ff_pre;
  Tensor ff_hidden;
};

struct BlockGrads {
  Tensor dx;
  Tensor dcontext;  // empty for self-attention
};

/// Pre-norm residual block: x1 = x + MHA(LN1(x), kv), y = x1 + FF(LN2(x1)),
/// FF = Linear(D, 2D) -> ReLU -> Linear(2D, D). Self-attention uses
/// kv = LN1(x); cross-attention uses an external context as keys/values.
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(std::string name, std::size_t dim, std::size_t heads);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, const Tensor* context, const AttentionMask& mask,
                 BlockCache* cache = nullptr) const;
  BlockGrads backward(const BlockCache& cache, bool has_context, const Tensor& grad_out);
  void collect(ParamList& out, const std::string& prefix);

  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear ff1, ff2;
};

}  // namespace riskcast
