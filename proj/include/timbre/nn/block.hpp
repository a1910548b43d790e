#pragma once

// Dilated gated convolution stack with residual and skip wiring (WaveNet
// style), the building block of both encoders and both decoders.
//
//   h0 = x Win + b
//   z_l = dilconv_l(h_l) + c Wc_l + b_l         (c: optional conditioning)
//   u_l = tanh(z_l[:R]) * sigmoid(z_l[R:])
//   h_{l+1} = h_l + u_l Wr_l + br_l             (not present for the last layer)
//   s = sum_l (u_l Ws_l + bs_l)
//   y = act(leaky(leaky(s) Wo1 + bo1) Wo2 + bo2)

#include "timbre/nn/params.hpp"

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

namespace timbre::nn {

enum class OutputActivation { kTanh, kLinear };

struct BlockConfig {
  int in_dim = 1;
  int cond_dim = 0;  // 0: no per-layer conditioning
  int kernel_size = 3;
  std::vector<int> dilations;
  int residual_channels = 8;
  int skip_channels = 8;
  int hidden_channels = 8;  // first output-stack conv
  int out_channels = 8;     // second output-stack conv
  bool causal = false;
  OutputActivation out_activation = OutputActivation::kTanh;
  double leaky_alpha = 0.2;

  int n_layers() const { return static_cast<int>(dilations.size()); }
  void validate() const;
};

struct ReceptiveField {
  int past = 0;
  int future = 0;
  int total() const { return past + future + 1; }
};

ReceptiveField receptive_field(const BlockConfig& config);

// Parameter ids of one block inside a (possibly shared) ParamLayout.
struct BlockLayout {
  BlockConfig config;
  std::string prefix;
  int in_w = -1, in_b = -1;
  struct Layer {
    int dil_w = -1, dil_b = -1, cond_w = -1;
    int res_w = -1, res_b = -1;  // -1 on the last layer
    int skip_w = -1, skip_b = -1;
    std::vector<int> offsets;
  };
  std::vector<Layer> layers;
  int out1_w = -1, out1_b = -1, out2_w = -1, out2_b = -1;
};

BlockLayout register_block(ParamLayout& layout, const std::string& prefix,
                           const BlockConfig& config);

// Fan-in scaled uniform weights (variance 1/fan_in), zero biases.
template <typename T>
void init_block(const BlockLayout& block, ParamSet<T>& params, uint64_t seed);

// A standalone block: its own layout and parameters.
template <typename T>
struct BlockParams {
  BlockLayout block;
  ParamSet<T> params;
};

template <typename T>
BlockParams<T> init_params(const BlockConfig& config, uint64_t seed);

// Activations retained by block_forward for block_backward.
template <typename T>
struct BlockCache {
  Mat<T> x;
  Index seq_len = 0;
  const Mat<T>* cond = nullptr;
  std::vector<Mat<T>> h;  // h[0..L-1], input of each layer
  std::vector<Mat<T>> f, g;
  Mat<T> skip, hidden_pre, out;
};

template <typename T>
void block_forward(const BlockLayout& block, const ParamSet<T>& params, const SeqBatch<T>& x,
                   const std::type_identity_t<SeqBatch<T>>* cond, SeqBatch<T>& y,
                   std::type_identity_t<BlockCache<T>>* cache = nullptr);

// Accumulates parameter gradients into `grads`; writes input gradients into
// dx / dcond when non-null (dcond is accumulated).
template <typename T>
void block_backward(const BlockLayout& block, const ParamSet<T>& params,
                    const BlockCache<T>& cache, const Mat<T>& dy, ParamSet<T>& grads,
                    Mat<T>* dx, Mat<T>* dcond);

// Frame-by-frame evaluation of a causal block. A fresh stream is equivalent
// to an all-zero history.
template <typename T>
class BlockStream {
 public:
  BlockStream(const BlockLayout& block, const ParamSet<T>& params);

  // x_t: [1 x in_dim], cond_t: [1 x cond_dim] (ignored if unconditioned).
  RowVec<T> step(const RowVec<T>& x_t, const RowVec<T>* cond_t);
  int64_t position() const { return t_; }
  void reset();

 private:
  const BlockLayout& block_;
  const ParamSet<T>& params_;
  // Per layer ring buffer of the last (k-1)d+1 layer inputs.
  std::vector<Mat<T>> history_;
  int64_t t_ = 0;
};

}  // namespace timbre::nn
