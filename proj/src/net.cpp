#include "fedidm/net.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedidm {

namespace {

double activate(double z, Activation act) {
  switch (act) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Identity: return z;
  }
  return z;
}

// Derivative expressed through the pre-activation z.
double activate_grad(double z, Activation act) {
  switch (act) {
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

void require_spec(const NetSpec& spec) {
  if (spec.widths.size() < 1) throw std::invalid_argument("net spec needs at least an input width");
  for (std::size_t w : spec.widths)
    if (w == 0) throw std::invalid_argument("net spec has a zero-width layer");
}

}  // namespace

std::size_t param_count(const NetSpec& spec) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l)
    n += spec.widths[l + 1] * spec.widths[l] + spec.widths[l + 1];
  return n;
}

NetParams init_params(const NetSpec& spec, Rng& rng) {
  require_spec(spec);
  NetParams p;
  p.layers.resize(spec.n_layers());
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const std::size_t in = spec.widths[l];
    const std::size_t out = spec.widths[l + 1];
    Layer& layer = p.layers[l];
    layer.w = Mat(out, in);
    layer.b = Vec(out, 0.0);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : layer.w.v) w = rng.uniform(-s, s);
  }
  return p;
}

NetParams zeros_like(const NetSpec& spec) {
  require_spec(spec);
  NetParams p;
  p.layers.resize(spec.n_layers());
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    p.layers[l].w = Mat(spec.widths[l + 1], spec.widths[l]);
    p.layers[l].b = Vec(spec.widths[l + 1], 0.0);
  }
  return p;
}

Vec forward(const NetSpec& spec, const NetParams& params, const Vec& x,
            ForwardCache* cache, bool activate_last) {
  if (x.size() != spec.input_dim())
    throw std::invalid_argument("forward: input length " + std::to_string(x.size()) +
                                " does not match spec input " + std::to_string(spec.input_dim()));
  if (params.layers.size() != spec.n_layers())
    throw std::invalid_argument("forward: params do not match spec");

  if (cache) {
    cache->inputs.assign(spec.n_layers(), {});
    cache->pre.assign(spec.n_layers(), {});
  }
  Vec a = x;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const Layer& layer = params.layers[l];
    if (cache) cache->inputs[l] = a;
    Vec z(layer.b);
    for (std::size_t r = 0; r < layer.w.rows; ++r) {
      double s = z[r];
      const double* wr = &layer.w.v[r * layer.w.cols];
      for (std::size_t cidx = 0; cidx < layer.w.cols; ++cidx) s += wr[cidx] * a[cidx];
      z[r] = s;
    }
    if (cache) cache->pre[l] = z;
    const bool last = (l + 1 == spec.n_layers());
    if (!last || activate_last) {
      for (auto& v : z) v = activate(v, spec.act);
    }
    a = std::move(z);
  }
  return a;
}

Vec backprop(const NetSpec& spec, const NetParams& params, const ForwardCache& cache,
             Vec upstream, NetParams* grad, bool activate_last) {
  if (cache.inputs.size() != spec.n_layers())
    throw std::invalid_argument("backprop: cache does not match spec");
  for (std::size_t li = spec.n_layers(); li-- > 0;) {
    const Layer& layer = params.layers[li];
    const bool last = (li + 1 == spec.n_layers());
    Vec dz = std::move(upstream);
    if (!last || activate_last) {
      for (std::size_t r = 0; r < dz.size(); ++r) dz[r] *= activate_grad(cache.pre[li][r], spec.act);
    }
    const Vec& in = cache.inputs[li];
    if (grad) {
      Layer& g = grad->layers[li];
      for (std::size_t r = 0; r < layer.w.rows; ++r) {
        double* gr = &g.w.v[r * layer.w.cols];
        for (std::size_t cidx = 0; cidx < layer.w.cols; ++cidx) gr[cidx] += dz[r] * in[cidx];
        g.b[r] += dz[r];
      }
    }
    Vec dx(layer.w.cols, 0.0);
    for (std::size_t r = 0; r < layer.w.rows; ++r) {
      const double* wr = &layer.w.v[r * layer.w.cols];
      for (std::size_t cidx = 0; cidx < layer.w.cols; ++cidx) dx[cidx] += wr[cidx] * dz[r];
    }
    upstream = std::move(dx);
  }
  return upstream;
}

double ce_loss(const Vec& logits, const Vec& target) {
  if (logits.size() != target.size()) throw std::invalid_argument("ce_loss: length mismatch");
  const Vec p = softmax(logits);
  double loss = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (target[k] != 0.0) loss -= target[k] * std::log(std::max(p[k], 1e-300));
  }
  return loss;
}

Vec ce_logit_grad(const Vec& logits, const Vec& target) {
  if (logits.size() != target.size()) throw std::invalid_argument("ce_logit_grad: length mismatch");
  Vec g = softmax(logits);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] -= target[k];
  return g;
}

double backward_ce(const NetSpec& spec, const NetParams& params,
                   const std::vector<TrainSample>& batch, NetParams& grad) {
  if (batch.empty()) throw std::invalid_argument("backward_ce: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  ForwardCache cache;
  for (const TrainSample& s : batch) {
    double sum = 0.0;
    for (double t : s.target) sum += t;
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("backward_ce: target not on probability simplex");
    const Vec logits = forward(spec, params, s.x, &cache);
    loss += ce_loss(logits, s.target);
    Vec up = ce_logit_grad(logits, s.target);
    for (auto& u : up) u *= inv_b;
    backprop(spec, params, cache, std::move(up), &grad);
  }
  return loss * inv_b;
}

Vec flatten(const NetParams& params) {
  Vec flat;
  for (const Layer& l : params.layers) {
    flat.insert(flat.end(), l.w.v.begin(), l.w.v.end());
    flat.insert(flat.end(), l.b.begin(), l.b.end());
  }
  return flat;
}

NetParams unflatten(const NetSpec& spec, const Vec& flat) {
  if (flat.size() != param_count(spec))
    throw std::invalid_argument("unflatten: expected " + std::to_string(param_count(spec)) +
                                " values, got " + std::to_string(flat.size()));
  NetParams p = zeros_like(spec);
  std::size_t pos = 0;
  for (Layer& l : p.layers) {
    for (auto& w : l.w.v) w = flat[pos++];
    for (auto& b : l.b) b = flat[pos++];
  }
  return p;
}

void axpy_params(NetParams& dst, const NetParams& src, double c) {
  for (std::size_t l = 0; l < dst.layers.size(); ++l) {
    auto& d = dst.layers[l];
    const auto& s = src.layers[l];
    for (std::size_t i = 0; i < d.w.v.size(); ++i) d.w.v[i] += c * s.w.v[i];
    for (std::size_t i = 0; i < d.b.size(); ++i) d.b[i] += c * s.b[i];
  }
}

void scale_params(NetParams& p, double c) {
  for (auto& l : p.layers) {
    for (auto& w : l.w.v) w *= c;
    for (auto& b : l.b) b *= c;
  }
}

RandomFeatureNet sample_feature_net(const NetSpec& spec, Rng& rng) {
  return RandomFeatureNet{spec, init_params(spec, rng)};
}

Vec features(const RandomFeatureNet& net, const Vec& x) {
  return forward(net.spec, net.params, x);
}

RectifierNet init_rectifier(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                            std::size_t embed_dim, std::size_t n_classes, Activation act,
                            Rng& rng) {
  if (embed_dim == 0 || n_classes == 0)
    throw std::invalid_argument("init_rectifier: embed_dim and n_classes must be positive");
  RectifierNet net;
  net.enc_spec.widths.push_back(input_dim);
  for (std::size_t h : hidden) net.enc_spec.widths.push_back(h);
  net.enc_spec.act = act;
  net.enc = init_params(net.enc_spec, rng);

  const std::size_t enc_out = net.enc_spec.widths.back();
  const double sf = 1.0 / std::sqrt(static_cast<double>(enc_out));
  net.f_w = Mat(embed_dim, enc_out);
  net.f_b = Vec(embed_dim, 0.0);
  for (auto& w : net.f_w.v) w = rng.uniform(-sf, sf);
  net.h_w = Mat(n_classes, enc_out);
  net.h_b = Vec(n_classes, 0.0);
  for (auto& w : net.h_w.v) w = rng.uniform(-sf, sf);
  return net;
}

RectifierGrads rect_zeros_like(const RectifierNet& net) {
  RectifierGrads g;
  g.enc = zeros_like(net.enc_spec);
  g.f_w = Mat(net.f_w.rows, net.f_w.cols);
  g.f_b = Vec(net.f_b.size(), 0.0);
  g.h_w = Mat(net.h_w.rows, net.h_w.cols);
  g.h_b = Vec(net.h_b.size(), 0.0);
  return g;
}

Vec rect_encode(const RectifierNet& net, const Vec& x, ForwardCache* cache) {
  if (net.enc_spec.n_layers() == 0) {
    // Degenerate encoder: the representation is the input itself.
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    return x;
  }
  return forward(net.enc_spec, net.enc, x, cache, /*activate_last=*/true);
}

namespace {

Vec head_apply(const Mat& w, const Vec& b, const Vec& e) {
  Vec out(b);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double s = out[r];
    const double* wr = &w.v[r * w.cols];
    for (std::size_t c = 0; c < w.cols; ++c) s += wr[c] * e[c];
    out[r] = s;
  }
  return out;
}

}  // namespace

Vec rect_feature(const RectifierNet& net, const Vec& x) {
  return head_apply(net.f_w, net.f_b, rect_encode(net, x));
}

Vec rect_logits(const RectifierNet& net, const Vec& x) {
  return head_apply(net.h_w, net.h_b, rect_encode(net, x));
}

Vec rect_predict(const RectifierNet& net, const Vec& x) { return softmax(rect_logits(net, x)); }

void rect_backprop(const RectifierNet& net, const Vec& x, const Vec* grad_f,
                   const Vec* grad_h_logits, RectifierGrads& grads) {
  ForwardCache cache;
  const Vec e = rect_encode(net, x, &cache);
  Vec de(e.size(), 0.0);
  if (grad_f) {
    for (std::size_t r = 0; r < net.f_w.rows; ++r) {
      const double g = (*grad_f)[r];
      double* gw = &grads.f_w.v[r * net.f_w.cols];
      const double* wr = &net.f_w.v[r * net.f_w.cols];
      for (std::size_t c = 0; c < net.f_w.cols; ++c) {
        gw[c] += g * e[c];
        de[c] += wr[c] * g;
      }
      grads.f_b[r] += g;
    }
  }
  if (grad_h_logits) {
    for (std::size_t r = 0; r < net.h_w.rows; ++r) {
      const double g = (*grad_h_logits)[r];
      double* gw = &grads.h_w.v[r * net.h_w.cols];
      const double* wr = &net.h_w.v[r * net.h_w.cols];
      for (std::size_t c = 0; c < net.h_w.cols; ++c) {
        gw[c] += g * e[c];
        de[c] += wr[c] * g;
      }
      grads.h_b[r] += g;
    }
  }
  if (net.enc_spec.n_layers() > 0)
    backprop(net.enc_spec, net.enc, cache, std::move(de), &grads.enc, /*activate_last=*/true);
}

void rect_axpy(RectifierNet& net, const RectifierGrads& g, double c) {
  axpy_params(net.enc, g.enc, c);
  for (std::size_t i = 0; i < net.f_w.v.size(); ++i) net.f_w.v[i] += c * g.f_w.v[i];
  for (std::size_t i = 0; i < net.f_b.size(); ++i) net.f_b[i] += c * g.f_b[i];
  for (std::size_t i = 0; i < net.h_w.v.size(); ++i) net.h_w.v[i] += c * g.h_w.v[i];
  for (std::size_t i = 0; i < net.h_b.size(); ++i) net.h_b[i] += c * g.h_b[i];
}

Vec rect_flatten(const RectifierNet& net) {
  Vec flat = flatten(net.enc);
  flat.insert(flat.end(), net.f_w.v.begin(), net.f_w.v.end());
  flat.insert(flat.end(), net.f_b.begin(), net.f_b.end());
  flat.insert(flat.end(), net.h_w.v.begin(), net.h_w.v.end());
  flat.insert(flat.end(), net.h_b.begin(), net.h_b.end());
  return flat;
}

void rect_unflatten(RectifierNet& net, const Vec& flat) {
  const std::size_t expect = param_count(net.enc_spec) + net.f_w.v.size() + net.f_b.size() +
                             net.h_w.v.size() + net.h_b.size();
  if (flat.size() != expect) throw std::invalid_argument("rect_unflatten: size mismatch");
  std::size_t pos = 0;
  for (auto& l : net.enc.layers) {
    for (auto& w : l.w.v) w = flat[pos++];
    for (auto& b : l.b) b = flat[pos++];
  }
  for (auto& w : net.f_w.v) w = flat[pos++];
  for (auto& b : net.f_b) b = flat[pos++];
  for (auto& w : net.h_w.v) w = flat[pos++];
  for (auto& b : net.h_b) b = flat[pos++];
}

}  // namespace fedidm
