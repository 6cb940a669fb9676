#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedagg/rng.hpp"

namespace fedagg {

// Flat-weight layout of the embedding-bag classifier. Order: token embedding
// rows (token-major, vocab x embed), then head weight rows (class-major,
// classes x embed), then the class biases.
struct ModelLayout {
  int vocab = 0;
  int classes = 0;
  int embed = 0;

  int dim() const { return vocab * embed + classes * embed + classes; }
  int embedding_offset(int token) const { return token * embed; }
  int head_weight_offset(int cls) const { return vocab * embed + cls * embed; }
  int head_bias_offset(int cls) const { return vocab * embed + classes * embed + cls; }

  void validate() const {
    if (vocab < 1 || classes < 2 || embed < 1)
      throw std::invalid_argument("model layout needs vocab >= 1, classes >= 2, embed >= 1");
  }
};

// Random init: small Gaussian embeddings, zero head.
inline std::vector<double> init_weights(const ModelLayout& layout, Rng& rng,
                                        double embed_scale = 0.1) {
  layout.validate();
  std::vector<double> w(static_cast<size_t>(layout.dim()), 0.0);
  for (int t = 0; t < layout.vocab; ++t) {
    int off = layout.embedding_offset(t);
    for (int k = 0; k < layout.embed; ++k)
      w[static_cast<size_t>(off + k)] = embed_scale * rng.gaussian();
  }
  return w;
}

// Mean-pooled embedding of a sentence.
inline void pool_embedding(const std::vector<double>& w, const ModelLayout& layout,
                           const std::vector<int>& tokens, std::vector<double>& h) {
  h.assign(static_cast<size_t>(layout.embed), 0.0);
  for (int t : tokens) {
    int off = layout.embedding_offset(t);
    for (int k = 0; k < layout.embed; ++k) h[static_cast<size_t>(k)] += w[static_cast<size_t>(off + k)];
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (double& x : h) x *= inv;
}

inline void logits_from_pooled(const std::vector<double>& w, const ModelLayout& layout,
                               const std::vector<double>& h, std::vector<double>& z) {
  z.assign(static_cast<size_t>(layout.classes), 0.0);
  for (int c = 0; c < layout.classes; ++c) {
    int off = layout.head_weight_offset(c);
    double s = w[static_cast<size_t>(layout.head_bias_offset(c))];
    for (int k = 0; k < layout.embed; ++k)
      s += w[static_cast<size_t>(off + k)] * h[static_cast<size_t>(k)];
    z[static_cast<size_t>(c)] = s;
  }
}

inline int predict(const std::vector<double>& w, const ModelLayout& layout,
                   const std::vector<int>& tokens) {
  std::vector<double> h, z;
  pool_embedding(w, layout, tokens, h);
  logits_from_pooled(w, layout, h, z);
  int best = 0;
  for (int c = 1; c < layout.classes; ++c)
    if (z[static_cast<size_t>(c)] > z[static_cast<size_t>(best)]) best = c;
  return best;
}

// Cross-entropy loss of one sentence and its gradient accumulated into
// `grad` (same layout as the weights). Returns the loss value.
inline double ce_loss_grad(const std::vector<double>& w, const ModelLayout& layout,
                           const std::vector<int>& tokens, int label,
                           std::vector<double>& grad) {
  std::vector<double> h, z;
  pool_embedding(w, layout, tokens, h);
  logits_from_pooled(w, layout, h, z);

  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  std::vector<double> p(z.size());
  for (size_t c = 0; c < z.size(); ++c) {
    p[c] = std::exp(z[c] - zmax);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  double loss = -std::log(std::max(p[static_cast<size_t>(label)], 1e-300));

  // dL/dz
  std::vector<double> dz = p;
  dz[static_cast<size_t>(label)] -= 1.0;

  std::vector<double> dh(static_cast<size_t>(layout.embed), 0.0);
  for (int c = 0; c < layout.classes; ++c) {
    int off = layout.head_weight_offset(c);
    double g = dz[static_cast<size_t>(c)];
    grad[static_cast<size_t>(layout.head_bias_offset(c))] += g;
    for (int k = 0; k < layout.embed; ++k) {
      grad[static_cast<size_t>(off + k)] += g * h[static_cast<size_t>(k)];
      dh[static_cast<size_t>(k)] += g * w[static_cast<size_t>(off + k)];
    }
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (int t : tokens) {
    int off = layout.embedding_offset(t);
    for (int k = 0; k < layout.embed; ++k)
      grad[static_cast<size_t>(off + k)] += dh[static_cast<size_t>(k)] * inv;
  }
  return loss;
}

}  // namespace fedagg
