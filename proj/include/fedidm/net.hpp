#pragma once

#include <cstddef>
#include <vector>

#include "fedidm/linalg.hpp"
#include "fedidm/rng.hpp"

namespace fedidm {

enum class Activation { Tanh, Relu, Identity };

/// Fully-connected architecture: widths[0] inputs through widths.back()
/// outputs. The activation is applied to every hidden layer; the final
/// layer emits raw values (logits or an embedding).
struct NetSpec {
  std::vector<std::size_t> widths;
  Activation act = Activation::Tanh;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t n_layers() const { return widths.size() - 1; }
};

struct Layer {
  Mat w;  // out x in, row-major
  Vec b;
};

struct NetParams {
  std::vector<Layer> layers;
};

std::size_t param_count(const NetSpec& spec);

/// Fan-in scaled uniform weights (U[-1/sqrt(fan_in), 1/sqrt(fan_in)]),
/// zero biases. Draw order: layer ascending, weights row-major, so the
/// result is seed-stable.
NetParams init_params(const NetSpec& spec, Rng& rng);
NetParams zeros_like(const NetSpec& spec);

struct ForwardCache {
  std::vector<Vec> inputs;  // activation entering layer l; inputs[0] == x
  std::vector<Vec> pre;     // pre-activation of layer l
};

/// Forward pass; the last layer is activated only when activate_last is set
/// (used for encoder stacks whose output is a hidden representation).
Vec forward(const NetSpec& spec, const NetParams& params, const Vec& x,
            ForwardCache* cache = nullptr, bool activate_last = false);

/// Vector-Jacobian product through the whole net. `upstream` is the loss
/// gradient at forward's output (same activate_last). Parameter gradients
/// accumulate into *grad when non-null; the return value is dL/dx.
Vec backprop(const NetSpec& spec, const NetParams& params, const ForwardCache& cache,
             Vec upstream, NetParams* grad, bool activate_last = false);

/// Cross-entropy of softmax(logits) against a target distribution.
double ce_loss(const Vec& logits, const Vec& target);
/// d ce_loss / d logits = softmax(logits) - target.
Vec ce_logit_grad(const Vec& logits, const Vec& target);

struct TrainSample {
  Vec x;
  Vec target;  // distribution over classes (one-hot or soft)
};

/// Mean cross-entropy over the batch; exact gradient accumulates into grad.
/// Rejects targets whose entries do not sum to 1 within 1e-6.
double backward_ce(const NetSpec& spec, const NetParams& params,
                   const std::vector<TrainSample>& batch, NetParams& grad);

/// Flattened parameter order: layer index ascending, weight matrix
/// row-major, then bias. flatten/unflatten round-trip bitwise.
Vec flatten(const NetParams& params);
NetParams unflatten(const NetSpec& spec, const Vec& flat);

void axpy_params(NetParams& dst, const NetParams& src, double c);  // dst += c*src
void scale_params(NetParams& p, double c);

/// Frozen randomly-initialised embedding net for distribution matching.
struct RandomFeatureNet {
  NetSpec spec;
  NetParams params;
};

RandomFeatureNet sample_feature_net(const NetSpec& spec, Rng& rng);
Vec features(const RandomFeatureNet& net, const Vec& x);

/// Shared encoder with a linear feature head f and a linear classifier
/// head h. Every encoder layer is activated; both heads read the same
/// encoded representation.
struct RectifierNet {
  NetSpec enc_spec;
  NetParams enc;
  Mat f_w;
  Vec f_b;
  Mat h_w;
  Vec h_b;

  std::size_t input_dim() const { return enc_spec.input_dim(); }
  std::size_t embed_dim() const { return f_b.size(); }
  std::size_t n_classes() const { return h_b.size(); }
};

RectifierNet init_rectifier(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                            std::size_t embed_dim, std::size_t n_classes, Activation act,
                            Rng& rng);

struct RectifierGrads {
  NetParams enc;
  Mat f_w;
  Vec f_b;
  Mat h_w;
  Vec h_b;
};

RectifierGrads rect_zeros_like(const RectifierNet& net);

Vec rect_encode(const RectifierNet& net, const Vec& x, ForwardCache* cache = nullptr);
Vec rect_feature(const RectifierNet& net, const Vec& x);
Vec rect_logits(const RectifierNet& net, const Vec& x);
Vec rect_predict(const RectifierNet& net, const Vec& x);  // softmax of h

/// Backprop one input through either head (pass nullptr for an unused
/// head); encoder and head gradients accumulate into grads.
void rect_backprop(const RectifierNet& net, const Vec& x, const Vec* grad_f,
                   const Vec* grad_h_logits, RectifierGrads& grads);

void rect_axpy(RectifierNet& net, const RectifierGrads& g, double c);  // params += c*g

/// Rectifier parameters flattened in a fixed order (encoder, f head, h head).
Vec rect_flatten(const RectifierNet& net);
void rect_unflatten(RectifierNet& net, const Vec& flat);

}  // namespace fedidm
