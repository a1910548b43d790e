#include "timbre/nn/block.hpp"

#include "timbre/nn/kernels.hpp"
#include "timbre/util/random.hpp"

#include <cmath>

namespace timbre::nn {

void BlockConfig::validate() const {
  require(in_dim >= 1 && cond_dim >= 0, "BlockConfig: invalid input dims");
  require(kernel_size >= 2, "BlockConfig: kernel_size must be >= 2");
  require(!dilations.empty(), "BlockConfig: no layers");
  for (int d : dilations) require(d >= 1, "BlockConfig: dilation must be >= 1");
  require(causal || kernel_size % 2 == 1, "BlockConfig: non-causal blocks need odd kernels");
  require(residual_channels >= 1 && skip_channels >= 1 && hidden_channels >= 1 &&
              out_channels >= 1,
          "BlockConfig: channel counts must be positive");
}

ReceptiveField receptive_field(const BlockConfig& config) {
  config.validate();
  int span = 0;
  for (int d : config.dilations) span += d * (config.kernel_size - 1);
  if (config.causal) return {span, 0};
  return {span / 2, span / 2};
}

BlockLayout register_block(ParamLayout& layout, const std::string& prefix,
                           const BlockConfig& config) {
  config.validate();
  BlockLayout b;
  b.config = config;
  b.prefix = prefix;
  const int r = config.residual_channels;
  const int k = config.kernel_size;
  b.in_w = layout.add(prefix + "in/w", config.in_dim, r);
  b.in_b = layout.add(prefix + "in/b", 1, r);
  for (int l = 0; l < config.n_layers(); ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + "/";
    BlockLayout::Layer layer;
    layer.dil_w = layout.add(p + "dil/w", k * r, 2 * r);
    layer.dil_b = layout.add(p + "dil/b", 1, 2 * r);
    if (config.cond_dim > 0) layer.cond_w = layout.add(p + "cond/w", config.cond_dim, 2 * r);
    if (l + 1 < config.n_layers()) {
      layer.res_w = layout.add(p + "res/w", r, r);
      layer.res_b = layout.add(p + "res/b", 1, r);
    }
    layer.skip_w = layout.add(p + "skip/w", r, config.skip_channels);
    layer.skip_b = layout.add(p + "skip/b", 1, config.skip_channels);
    layer.offsets = tap_offsets(k, config.dilations[l], config.causal);
    b.layers.push_back(std::move(layer));
  }
  b.out1_w = layout.add(prefix + "out1/w", config.skip_channels, config.hidden_channels);
  b.out1_b = layout.add(prefix + "out1/b", 1, config.hidden_channels);
  b.out2_w = layout.add(prefix + "out2/w", config.hidden_channels, config.out_channels);
  b.out2_b = layout.add(prefix + "out2/b", 1, config.out_channels);
  return b;
}

namespace {

template <typename T>
void init_uniform(ParamSet<T>& params, int id, Index fan_in, uint64_t seed) {
  util::Rng rng(util::derive_seed(seed, util::fnv1a64(params.layout().entry(id).name)));
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : params.span(id)) v = static_cast<T>(dist(rng));
}

}  // namespace

template <typename T>
void init_block(const BlockLayout& b, ParamSet<T>& params, uint64_t seed) {
  const auto& c = b.config;
  for (int id : params.layout().group(b.prefix)) {
    auto s = params.span(id);
    std::fill(s.begin(), s.end(), T(0));
  }
  init_uniform(params, b.in_w, c.in_dim, seed);
  for (const auto& layer : b.layers) {
    init_uniform(params, layer.dil_w, Index(c.kernel_size) * c.residual_channels, seed);
    if (layer.cond_w >= 0) init_uniform(params, layer.cond_w, c.cond_dim, seed);
    if (layer.res_w >= 0) init_uniform(params, layer.res_w, c.residual_channels, seed);
    init_uniform(params, layer.skip_w, c.residual_channels, seed);
  }
  init_uniform(params, b.out1_w, c.skip_channels, seed);
  init_uniform(params, b.out2_w, c.hidden_channels, seed);
}

template <typename T>
BlockParams<T> init_params(const BlockConfig& config, uint64_t seed) {
  auto layout = std::make_shared<ParamLayout>();
  BlockLayout block = register_block(*layout, "", config);
  BlockParams<T> out{std::move(block), ParamSet<T>(layout)};
  init_block(out.block, out.params, seed);
  return out;
}

template <typename T>
void block_forward(const BlockLayout& b, const ParamSet<T>& params, const SeqBatch<T>& x,
                   const std::type_identity_t<SeqBatch<T>>* cond, SeqBatch<T>& y,
                   std::type_identity_t<BlockCache<T>>* cache) {
  const auto& c = b.config;
  const T alpha = static_cast<T>(c.leaky_alpha);
  const Index n = x.frames();
  const Index seq_len = x.seq_len;
  const Index r = c.residual_channels;
  require(x.channels() == c.in_dim, "block_forward: input has " +
                                        std::to_string(x.channels()) + " channels, expected " +
                                        std::to_string(c.in_dim));
  require(seq_len > 0, "block_forward: empty input");
  if (c.cond_dim > 0) {
    require(cond != nullptr, "block_forward: conditioning required");
    require(cond->frames() == n && cond->channels() == c.cond_dim,
            "block_forward: conditioning shape mismatch");
  }

  Mat<T> h(n, r);
  kernels::linear<T>(x.data, params.view(b.in_w), params.view(b.in_b).data(), h);
  Mat<T> skip = Mat<T>::Zero(n, c.skip_channels);
  Mat<T> z(n, 2 * r), f(n, r), g(n, r), u(n, r);

  if (cache) {
    cache->x = x.data;
    cache->seq_len = seq_len;
    cache->cond = (c.cond_dim > 0) ? &cond->data : nullptr;
    cache->h.assign(c.n_layers(), Mat<T>());
    cache->f.assign(c.n_layers(), Mat<T>());
    cache->g.assign(c.n_layers(), Mat<T>());
  }

  for (int l = 0; l < c.n_layers(); ++l) {
    const auto& layer = b.layers[l];
    if (layer.cond_w >= 0) {
      kernels::linear<T>(cond->data, params.view(layer.cond_w), params.view(layer.dil_b).data(),
                         z);
    } else {
      z.rowwise() = Eigen::Map<const RowVec<T>>(params.view(layer.dil_b).data(), 2 * r);
    }
    kernels::dilated_conv<T>(h, seq_len, params.view(layer.dil_w), layer.offsets, z);
    kernels::gated_unit<T>(z, f, g, u);

    Mat<T> skip_l(n, c.skip_channels);
    kernels::linear<T>(u, params.view(layer.skip_w), params.view(layer.skip_b).data(), skip_l);
    skip += skip_l;

    if (cache) {
      cache->h[l] = h;
      cache->f[l] = f;
      cache->g[l] = g;
    }
    if (layer.res_w >= 0) {
      Mat<T> res(n, r);
      kernels::linear<T>(u, params.view(layer.res_w), params.view(layer.res_b).data(), res);
      h += res;
    }
  }

  Mat<T> a0(n, c.skip_channels);
  kernels::leaky_relu<T>(skip, alpha, a0);
  Mat<T> hidden(n, c.hidden_channels), a1(n, c.hidden_channels);
  kernels::linear<T>(a0, params.view(b.out1_w), params.view(b.out1_b).data(), hidden);
  kernels::leaky_relu<T>(hidden, alpha, a1);
  y = SeqBatch<T>(Mat<T>(n, c.out_channels), seq_len);
  kernels::linear<T>(a1, params.view(b.out2_w), params.view(b.out2_b).data(), y.data);
  if (c.out_activation == OutputActivation::kTanh) y.data = y.data.array().tanh().matrix();

  if (cache) {
    cache->skip = std::move(skip);
    cache->hidden_pre = std::move(hidden);
    cache->out = y.data;
  }
}

template <typename T>
void block_backward(const BlockLayout& b, const ParamSet<T>& params, const BlockCache<T>& cache,
                    const Mat<T>& dy, ParamSet<T>& grads, Mat<T>* dx, Mat<T>* dcond) {
  const auto& c = b.config;
  const T alpha = static_cast<T>(c.leaky_alpha);
  const Index n = cache.x.rows();
  const Index r = c.residual_channels;
  const Index seq_len = cache.seq_len;
  require(dy.rows() == n && dy.cols() == c.out_channels, "block_backward: dy shape mismatch");
  require(!cache.h.empty(), "block_backward: empty cache");

  Mat<T> dout = dy;
  if (c.out_activation == OutputActivation::kTanh) {
    dout = (dy.array() * (T(1) - cache.out.array().square())).matrix();
  }
  Mat<T> a0(n, c.skip_channels), a1(n, c.hidden_channels);
  kernels::leaky_relu<T>(cache.skip, alpha, a0);
  kernels::leaky_relu<T>(cache.hidden_pre, alpha, a1);

  kernels::linear_param_grad<T>(a1, dout, grads.view(b.out2_w), grads.view(b.out2_b).data());
  Mat<T> da1(n, c.hidden_channels);
  kernels::linear_input_grad<T>(dout, params.view(b.out2_w), da1, false);
  Mat<T> dhidden(n, c.hidden_channels);
  kernels::leaky_relu_grad<T>(cache.hidden_pre, da1, alpha, dhidden);
  kernels::linear_param_grad<T>(a0, dhidden, grads.view(b.out1_w), grads.view(b.out1_b).data());
  Mat<T> da0(n, c.skip_channels);
  kernels::linear_input_grad<T>(dhidden, params.view(b.out1_w), da0, false);
  Mat<T> dskip(n, c.skip_channels);
  kernels::leaky_relu_grad<T>(cache.skip, da0, alpha, dskip);

  Mat<T> dh = Mat<T>::Zero(n, r);  // gradient w.r.t. the input of layer l+1
  Mat<T> u(n, r), du(n, r), dz(n, 2 * r);
  for (int l = c.n_layers() - 1; l >= 0; --l) {
    const auto& layer = b.layers[l];
    const Mat<T>& f = cache.f[l];
    const Mat<T>& g = cache.g[l];
    u = (f.array() * g.array()).matrix();

    kernels::linear_param_grad<T>(u, dskip, grads.view(layer.skip_w),
                                  grads.view(layer.skip_b).data());
    kernels::linear_input_grad<T>(dskip, params.view(layer.skip_w), du, false);
    if (layer.res_w >= 0) {
      kernels::linear_param_grad<T>(u, dh, grads.view(layer.res_w), grads.view(layer.res_b).data());
      kernels::linear_input_grad<T>(dh, params.view(layer.res_w), du, true);
    }
    kernels::gated_unit_grad<T>(du, f, g, dz);

    T* db = grads.view(layer.dil_b).data();
    Eigen::Map<RowVec<T>>(db, 2 * r) += dz.colwise().sum();
    kernels::dilated_conv_weight_grad<T>(cache.h[l], dz, seq_len, layer.offsets,
                                         grads.view(layer.dil_w));
    kernels::dilated_conv_input_grad<T>(dz, seq_len, params.view(layer.dil_w),
                                        layer.offsets, dh);
    if (layer.cond_w >= 0) {
      kernels::linear_param_grad<T>(*cache.cond, dz, grads.view(layer.cond_w), nullptr);
      if (dcond) kernels::linear_input_grad<T>(dz, params.view(layer.cond_w), *dcond, true);
    }
  }

  kernels::linear_param_grad<T>(cache.x, dh, grads.view(b.in_w), grads.view(b.in_b).data());
  if (dx) {
    dx->resize(n, c.in_dim);
    kernels::linear_input_grad<T>(dh, params.view(b.in_w), *dx, false);
  }
}

template <typename T>
BlockStream<T>::BlockStream(const BlockLayout& block, const ParamSet<T>& params)
    : block_(block), params_(params) {
  require(block.config.causal, "BlockStream: incremental evaluation needs a causal block");
  reset();
}

template <typename T>
void BlockStream<T>::reset() {
  const auto& c = block_.config;
  history_.clear();
  for (int l = 0; l < c.n_layers(); ++l) {
    const Index depth = Index(c.kernel_size - 1) * c.dilations[l] + 1;
    history_.push_back(Mat<T>::Zero(depth, c.residual_channels));
  }
  t_ = 0;
}

template <typename T>
RowVec<T> BlockStream<T>::step(const RowVec<T>& x_t, const RowVec<T>* cond_t) {
  const auto& c = block_.config;
  const auto& b = block_;
  const T alpha = static_cast<T>(c.leaky_alpha);
  const Index r = c.residual_channels;
  require(x_t.cols() == c.in_dim, "BlockStream: input width mismatch");
  Mat<T> cond;
  if (c.cond_dim > 0) {
    require(cond_t != nullptr && cond_t->cols() == c.cond_dim,
            "BlockStream: conditioning width mismatch");
    cond = *cond_t;
  }
  const Mat<T> x = x_t;
  Mat<T> h(1, r);
  kernels::linear<T>(x, params_.view(b.in_w), params_.view(b.in_b).data(), h);
  Mat<T> skip = Mat<T>::Zero(1, c.skip_channels);
  Mat<T> z(1, 2 * r), f(1, r), g(1, r), u(1, r), tap(1, r);

  for (int l = 0; l < c.n_layers(); ++l) {
    const auto& layer = b.layers[l];
    Mat<T>& ring = history_[l];
    const Index depth = ring.rows();
    ring.row(t_ % depth) = h;
    if (layer.cond_w >= 0) {
      kernels::linear<T>(cond, params_.view(layer.cond_w), params_.view(layer.dil_b).data(), z);
    } else {
      z = params_.view(layer.dil_b);
    }
    const auto w = params_.view(layer.dil_w);
    for (size_t j = 0; j < layer.offsets.size(); ++j) {
      const int64_t src = t_ + layer.offsets[j];
      if (src < 0) continue;
      tap = ring.row(src % depth);
      z.noalias() += tap * w.middleRows(Index(j) * r, r);
    }
    kernels::gated_unit<T>(z, f, g, u);
    Mat<T> s(1, c.skip_channels);
    kernels::linear<T>(u, params_.view(layer.skip_w), params_.view(layer.skip_b).data(), s);
    skip += s;
    if (layer.res_w >= 0) {
      Mat<T> res(1, r);
      kernels::linear<T>(u, params_.view(layer.res_w), params_.view(layer.res_b).data(), res);
      h += res;
    }
  }
  ++t_;

  Mat<T> a0(1, c.skip_channels), hidden(1, c.hidden_channels), a1(1, c.hidden_channels);
  kernels::leaky_relu<T>(skip, alpha, a0);
  kernels::linear<T>(a0, params_.view(b.out1_w), params_.view(b.out1_b).data(), hidden);
  kernels::leaky_relu<T>(hidden, alpha, a1);
  Mat<T> y(1, c.out_channels);
  kernels::linear<T>(a1, params_.view(b.out2_w), params_.view(b.out2_b).data(), y);
  if (c.out_activation == OutputActivation::kTanh) y = y.array().tanh().matrix();
  return y;
}

#define TIMBRE_INSTANTIATE_BLOCK(T)                                                           \
  template void init_block<T>(const BlockLayout&, ParamSet<T>&, uint64_t);                   \
  template BlockParams<T> init_params<T>(const BlockConfig&, uint64_t);                      \
  template void block_forward<T>(const BlockLayout&, const ParamSet<T>&, const SeqBatch<T>&, \
                                 const SeqBatch<T>*, SeqBatch<T>&, BlockCache<T>*);          \
  template void block_backward<T>(const BlockLayout&, const ParamSet<T>&,                    \
                                  const BlockCache<T>&, const Mat<T>&, ParamSet<T>&,         \
                                  Mat<T>*, Mat<T>*);                                         \
  template class BlockStream<T>;

TIMBRE_INSTANTIATE_BLOCK(float)
TIMBRE_INSTANTIATE_BLOCK(double)

}  // namespace timbre::nn
