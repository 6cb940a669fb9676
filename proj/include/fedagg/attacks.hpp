#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedagg/core.hpp"
#include "fedagg/model.hpp"
#include "fedagg/rng.hpp"
#include "fedagg/toytask.hpp"

namespace fedagg {

enum class AttackKind { badword, badsent, ep };

struct AttackSpec {
  AttackKind kind = AttackKind::badword;
  std::vector<int> trigger_tokens;  // 1 token for badword/ep, 3-5 for badsent
  int target_label = 0;
  double poison_rate = 0.5;

  void validate() const {
    if (kind == AttackKind::badsent) {
      if (trigger_tokens.size() < 3 || trigger_tokens.size() > 5)
        throw std::invalid_argument("badsent trigger must use 3 to 5 tokens");
    } else {
      if (trigger_tokens.size() != 1)
        throw std::invalid_argument("badword/ep trigger must be a single token");
    }
    if (!(poison_rate > 0.0 && poison_rate <= 1.0))
      throw std::invalid_argument("poison rate must lie in (0, 1]");
    if (target_label < 0) throw std::invalid_argument("target label must be non-negative");
  }
};

enum class AdaptiveMode { none, freeze, wp_clean, wp_last, awp };

struct AdaptiveSpec {
  AdaptiveMode mode = AdaptiveMode::none;
  double lambda_wp = 0.0;
  double epsilon = 0.05;

  void validate() const {
    if ((mode == AdaptiveMode::wp_clean || mode == AdaptiveMode::wp_last) &&
        !(lambda_wp >= 0.0))
      throw std::invalid_argument("weight penalty coefficient must be non-negative");
    if (mode == AdaptiveMode::awp && !(epsilon > 0.0))
      throw std::invalid_argument("awp epsilon must be positive");
  }
};

// Poisons exactly floor(poison_rate * |data|) instances: the trigger replaces
// tokens at a random position and the label becomes the target.
inline ClientDataset poison_dataset(const ClientDataset& data, const AttackSpec& spec,
                                    Rng& rng) {
  spec.validate();
  const size_t count =
      static_cast<size_t>(spec.poison_rate * static_cast<double>(data.size()));
  if (count < 1)
    throw std::invalid_argument("poison rate too small for this dataset");

  std::vector<size_t> idx(data.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Prefix of a Fisher-Yates pass picks `count` distinct rows.
  for (size_t i = 0; i < count; ++i) {
    size_t j = static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(i), static_cast<int64_t>(idx.size()) - 1));
    std::swap(idx[i], idx[j]);
  }

  ClientDataset out = data;
  for (size_t k = 0; k < count; ++k) {
    auto& s = out.sentences[idx[k]];
    if (spec.trigger_tokens.size() > s.size())
      throw std::invalid_argument("trigger longer than sentence");
    int start = static_cast<int>(
        rng.uniform_int(0, static_cast<int64_t>(s.size() - spec.trigger_tokens.size())));
    for (size_t t = 0; t < spec.trigger_tokens.size(); ++t)
      s[static_cast<size_t>(start) + t] = spec.trigger_tokens[t];
    out.labels[idx[k]] = spec.target_label;
    out.poisoned[idx[k]] = true;
  }
  return out;
}

// Embedding-poisoning mask: keep only the trigger tokens' embedding rows.
inline UpdateVector ep_restrict(const UpdateVector& update, const ModelLayout& layout,
                                const std::vector<int>& trigger_tokens) {
  if (update.size() != static_cast<size_t>(layout.dim()))
    throw std::invalid_argument("update does not match model layout");
  UpdateVector out(update.size(), 0.0);
  for (int t : trigger_tokens) {
    if (t < 0 || t >= layout.vocab)
      throw std::invalid_argument("trigger token out of vocabulary");
    int off = layout.embedding_offset(t);
    for (int k = 0; k < layout.embed; ++k)
      out[static_cast<size_t>(off + k)] = update[static_cast<size_t>(off + k)];
  }
  return out;
}

// Adaptive-attack counterpart of ep_restrict: zero the trigger tokens'
// embedding rows and keep everything else.
inline UpdateVector freeze_trigger(const UpdateVector& update, const ModelLayout& layout,
                                   const std::vector<int>& trigger_tokens) {
  if (update.size() != static_cast<size_t>(layout.dim()))
    throw std::invalid_argument("update does not match model layout");
  UpdateVector out = update;
  for (int t : trigger_tokens) {
    if (t < 0 || t >= layout.vocab)
      throw std::invalid_argument("trigger token out of vocabulary");
    int off = layout.embedding_offset(t);
    for (int k = 0; k < layout.embed; ++k) out[static_cast<size_t>(off + k)] = 0.0;
  }
  return out;
}

// L2 weight penalty lambda * ||w - anchor||^2.
inline double wp_penalty(const std::vector<double>& w, const std::vector<double>& anchor,
                         double lambda_wp) {
  if (w.size() != anchor.size()) throw std::invalid_argument("anchor length mismatch");
  double s = 0.0;
  for (size_t j = 0; j < w.size(); ++j) {
    double d = w[j] - anchor[j];
    s += d * d;
  }
  return lambda_wp * s;
}

// Adds the penalty gradient 2 * lambda * (w - anchor) onto `grad`.
inline void wp_gradient_add(std::vector<double>& grad, const std::vector<double>& w,
                            const std::vector<double>& anchor, double lambda_wp) {
  if (w.size() != anchor.size() || grad.size() != w.size())
    throw std::invalid_argument("anchor length mismatch");
  for (size_t j = 0; j < w.size(); ++j) grad[j] += 2.0 * lambda_wp * (w[j] - anchor[j]);
}

// Dimension-wise AWP projection: clamp w_i into
// [anchor_i - eps * s_i, anchor_i + eps * s_i] with
// s_i = max(|server_curr_i - server_prev_i|, 1e-8). The clamp bound is then
// re-checked as a hard postcondition.
inline void awp_project_inplace(std::vector<double>& w,
                                const std::vector<double>& anchor_clean,
                                const std::vector<double>& server_prev,
                                const std::vector<double>& server_curr, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("awp epsilon must be positive");
  if (w.size() != anchor_clean.size() || w.size() != server_prev.size() ||
      w.size() != server_curr.size())
    throw std::invalid_argument("awp input lengths disagree");
  constexpr double kSigmaFloor = 1e-8;
  for (size_t i = 0; i < w.size(); ++i) {
    double s = std::max(std::abs(server_curr[i] - server_prev[i]), kSigmaFloor);
    double lo = anchor_clean[i] - epsilon * s;
    double hi = anchor_clean[i] + epsilon * s;
    if (w[i] < lo) w[i] = lo;
    if (w[i] > hi) w[i] = hi;
    if (w[i] < lo || w[i] > hi)
      throw std::logic_error("awp projection violated its clamp bound");
  }
}

inline std::vector<double> awp_project(std::vector<double> w,
                                       const std::vector<double>& anchor_clean,
                                       const std::vector<double>& server_prev,
                                       const std::vector<double>& server_curr,
                                       double epsilon) {
  awp_project_inplace(w, anchor_clean, server_prev, server_curr, epsilon);
  return w;
}

}  // namespace fedagg
