#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedagg/aggregators.hpp"
#include "fedagg/attacks.hpp"
#include "fedagg/config.hpp"
#include "fedagg/core.hpp"
#include "fedagg/krum.hpp"
#include "fedagg/model.hpp"
#include "fedagg/rng.hpp"
#include "fedagg/toytask.hpp"

namespace fedagg {

// Per-step intervention points used by the adaptive attacks: grad_hook runs
// on the averaged batch gradient before the SGD step, step_hook on the
// weights after it.
struct TrainHooks {
  std::function<void(std::vector<double>&, const std::vector<double>&)> grad_hook;
  std::function<void(std::vector<double>&)> step_hook;
};

// Mini-batch SGD on cross-entropy from the given weights; returns the local
// update (final weights minus initial weights).
inline UpdateVector local_train(const std::vector<double>& weights,
                                const ModelLayout& layout, const ClientDataset& data,
                                int iters, double lr, int batch, Rng& rng,
                                const TrainHooks* hooks = nullptr) {
  layout.validate();
  if (weights.size() != static_cast<size_t>(layout.dim()))
    throw std::invalid_argument("weights length does not match the model layout");
  if (iters < 0) throw std::invalid_argument("iteration count must be non-negative");
  if (batch < 1) throw std::invalid_argument("batch size must be positive");

  std::vector<double> w = weights;
  if (iters > 0 && data.size() == 0)
    throw std::invalid_argument("cannot train on an empty dataset");

  std::vector<double> grad(w.size());
  for (int it = 0; it < iters; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
      size_t i = static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(data.size()) - 1));
      loss += ce_loss_grad(w, layout, data.sentences[i], data.labels[i], grad);
    }
    loss /= static_cast<double>(batch);
    if (!std::isfinite(loss))
      throw std::runtime_error("local training diverged: non-finite loss at iteration " +
                               std::to_string(it));
    const double inv = 1.0 / static_cast<double>(batch);
    for (double& g : grad) g *= inv;
    if (hooks && hooks->grad_hook) hooks->grad_hook(grad, w);
    for (size_t j = 0; j < w.size(); ++j) w[j] -= lr * grad[j];
    if (hooks && hooks->step_hook) hooks->step_hook(w);
  }

  UpdateVector update(w.size());
  for (size_t j = 0; j < w.size(); ++j) update[j] = w[j] - weights[j];
  return update;
}

// acc: fraction of clean test instances classified correctly.
// asr: fraction of triggered instances with true label != target classified
// as the target.
inline std::pair<double, double> evaluate(const std::vector<double>& weights,
                                          const ModelLayout& layout,
                                          const ClientDataset& clean_test,
                                          const ClientDataset& triggered_test,
                                          int target_label) {
  if (clean_test.size() == 0 || triggered_test.size() == 0)
    throw std::invalid_argument("test sets must be non-empty");
  size_t correct = 0;
  for (size_t i = 0; i < clean_test.size(); ++i) {
    if (predict(weights, layout, clean_test.sentences[i]) == clean_test.labels[i])
      ++correct;
  }
  double acc = static_cast<double>(correct) / static_cast<double>(clean_test.size());

  size_t hits = 0;
  size_t considered = 0;
  for (size_t i = 0; i < triggered_test.size(); ++i) {
    if (triggered_test.labels[i] == target_label) continue;
    ++considered;
    if (predict(weights, layout, triggered_test.sentences[i]) == target_label) ++hits;
  }
  double asr = considered == 0
                   ? 0.0
                   : static_cast<double>(hits) / static_cast<double>(considered);
  return {acc, asr};
}

struct RoundMetrics {
  int round = 0;
  double acc = 0.0;
  double asr = 0.0;
  bool has_selection = false;
  int i_star = -1;
  std::vector<int> selected;
  bool malicious_excluded = false;
};

struct ExperimentResult {
  std::vector<RoundMetrics> rounds;
  std::vector<std::optional<SelectionReport>> reports;
  std::vector<std::optional<ClientRoundSet>> round_sets;  // only when captured
  double final_acc = 0.0;
  double final_asr = 0.0;
  // Fraction of rounds excluding every malicious client; NaN when the
  // aggregator does not select or there are no malicious clients.
  double detection_rate = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline bool is_selection_aggregator(const std::string& name) {
  return name == "krum" || name == "multikrum" || name == "bulyan" || name == "dimkrum";
}

inline KrumVariant variant_from_name(const std::string& name) {
  if (name == "krum") return KrumVariant::krum;
  if (name == "multikrum") return KrumVariant::multikrum;
  if (name == "bulyan") return KrumVariant::bulyan;
  return KrumVariant::dimkrum;
}

inline std::vector<int> attack_trigger(const ExperimentConfig& cfg, const ToyTask& task) {
  if (cfg.attack_kind == "badsent") {
    return std::vector<int>(task.trigger_tokens.begin(),
                            task.trigger_tokens.begin() + cfg.attack_trigger_len);
  }
  return {task.trigger_tokens[0]};
}

}  // namespace detail

// One full federated experiment: distribute, train all clients (malicious
// clients apply their attack), aggregate, post-process, evaluate. Everything
// is a pure function of the config and its seed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       bool capture_rounds = false) {
  validate_config(cfg);
  const uint64_t master = cfg.seed;
  const size_t n = static_cast<size_t>(cfg.clients);

  MakeTaskOptions opt;
  opt.signal_tokens_per_class = cfg.task_signal_per_class;
  opt.trigger_pool = cfg.task_trigger_pool;
  opt.train_size = static_cast<size_t>(cfg.task_train_size);
  opt.test_size = static_cast<size_t>(cfg.task_test_size);
  opt.p_signal = cfg.task_p_signal;
  ToyData data = make_task(derive_seed(master, 1), cfg.task_vocab, cfg.task_classes,
                           cfg.task_sentence_len, cfg.task_embed, opt);
  const ModelLayout& layout = data.layout;

  AttackSpec attack;
  attack.target_label = cfg.attack_target_label;
  attack.poison_rate = cfg.attack_poison_rate;
  ClientDataset triggered_test = data.triggered_test;
  if (cfg.attack_kind != "none") {
    attack.kind = cfg.attack_kind == "badsent"  ? AttackKind::badsent
                  : cfg.attack_kind == "ep"     ? AttackKind::ep
                                                : AttackKind::badword;
    attack.trigger_tokens = detail::attack_trigger(cfg, data.task);
    attack.validate();
    Rng trig_rng(derive_seed(master, 4));
    triggered_test = insert_trigger(data.clean_test, attack.trigger_tokens, trig_rng);
  }

  Rng part_rng(derive_seed(master, 2));
  PartitionMode pmode = cfg.partition_mode == "dirichlet" ? PartitionMode::dirichlet
                                                          : PartitionMode::iid;
  std::vector<ClientDataset> shards =
      partition(data.train, n, pmode, cfg.partition_alpha, part_rng);

  const std::vector<int> malicious = cfg.effective_malicious_indices();
  std::vector<bool> is_malicious(n, false);
  std::vector<ClientDataset> clean_shards(n);  // kept for shadow passes
  for (int mi : malicious) {
    is_malicious[static_cast<size_t>(mi)] = true;
    clean_shards[static_cast<size_t>(mi)] = shards[static_cast<size_t>(mi)];
    Rng poison_rng(derive_seed(master, 8 + static_cast<uint64_t>(mi)));
    shards[static_cast<size_t>(mi)] =
        poison_dataset(shards[static_cast<size_t>(mi)], attack, poison_rng);
  }

  const AdaptiveMode adaptive = cfg.adaptive_mode == "freeze"     ? AdaptiveMode::freeze
                                : cfg.adaptive_mode == "wp_clean" ? AdaptiveMode::wp_clean
                                : cfg.adaptive_mode == "wp_last"  ? AdaptiveMode::wp_last
                                : cfg.adaptive_mode == "awp"      ? AdaptiveMode::awp
                                                                  : AdaptiveMode::none;

  Rng init_rng(derive_seed(master, 3));
  ServerState server;
  server.weights = init_weights(layout, init_rng);
  server.round = 0;
  std::vector<double> prev_distributed = server.weights;

  MemoryState memory(n);
  FoolsGoldHistory fg_history;
  const bool selection_based = detail::is_selection_aggregator(cfg.aggregator);
  DimKrumConfig dk;
  dk.rho = cfg.dimkrum_rho;
  dk.alpha = cfg.dimkrum_alpha;
  dk.lambda = cfg.dimkrum_lambda;
  dk.variant = detail::variant_from_name(cfg.aggregator);
  CrflConfig crfl{cfg.crfl_noise_std, cfg.crfl_bound_slope, cfg.crfl_bound_intercept};

  ExperimentResult result;
  for (int k = 1; k <= cfg.rounds; ++k) {
    const bool is_last = (k == cfg.rounds);
    const std::vector<double> distributed = server.weights;

    ClientRoundSet set;
    set.round = k - 1;
    set.updates.resize(n);
    set.client_ids.resize(n);
    for (size_t i = 0; i < n; ++i) {
      set.client_ids[i] = static_cast<int>(i);
      Rng train_rng(derive_seed(master, 0x10000 + static_cast<uint64_t>(k) * 1024 + i));
      if (!is_malicious[i]) {
        set.updates[i] = local_train(distributed, layout, shards[i], cfg.local_iters,
                                     cfg.local_lr, cfg.local_batch, train_rng);
        continue;
      }

      // Malicious client: optional shadow pass, per-step hooks, update mask.
      std::vector<double> anchor;
      if (adaptive == AdaptiveMode::wp_clean || adaptive == AdaptiveMode::awp) {
        Rng shadow_rng(derive_seed(master, 0x30000 + static_cast<uint64_t>(k) * 1024 + i));
        UpdateVector clean_update =
            local_train(distributed, layout, clean_shards[i], cfg.local_iters,
                        cfg.local_lr, cfg.local_batch, shadow_rng);
        anchor = distributed;
        for (size_t j = 0; j < anchor.size(); ++j) anchor[j] += clean_update[j];
      } else if (adaptive == AdaptiveMode::wp_last) {
        anchor.resize(distributed.size());
        for (size_t j = 0; j < anchor.size(); ++j)
          anchor[j] = distributed[j] + (distributed[j] - prev_distributed[j]);
      }

      TrainHooks hooks;
      if (adaptive == AdaptiveMode::wp_clean || adaptive == AdaptiveMode::wp_last) {
        const double lam = cfg.adaptive_lambda_wp;
        hooks.grad_hook = [&anchor, lam](std::vector<double>& grad,
                                         const std::vector<double>& w) {
          wp_gradient_add(grad, w, anchor, lam);
        };
      }
      if (adaptive == AdaptiveMode::awp) {
        const double eps = cfg.adaptive_epsilon;
        hooks.step_hook = [&anchor, &prev_distributed, &distributed,
                           eps](std::vector<double>& w) {
          awp_project_inplace(w, anchor, prev_distributed, distributed, eps);
        };
      }

      UpdateVector update =
          local_train(distributed, layout, shards[i], cfg.local_iters, cfg.local_lr,
                      cfg.local_batch, train_rng,
                      (hooks.grad_hook || hooks.step_hook) ? &hooks : nullptr);
      if (attack.kind == AttackKind::ep && cfg.attack_kind == "ep")
        update = ep_restrict(update, layout, attack.trigger_tokens);
      if (adaptive == AdaptiveMode::freeze)
        update = freeze_trigger(update, layout, attack.trigger_tokens);
      set.updates[i] = update;
    }

    Rng server_rng(derive_seed(master, 0x20000 + static_cast<uint64_t>(k)));
    RoundMetrics metrics;
    metrics.round = k - 1;
    UpdateVector aggregate;
    std::optional<SelectionReport> report;

    if (cfg.aggregator == "fedavg") {
      aggregate = fedavg(set).aggregate;
    } else if (cfg.aggregator == "median") {
      aggregate = coordinate_median(set).aggregate;
    } else if (cfg.aggregator == "rfa") {
      aggregate = geometric_median(set).aggregate;
    } else if (cfg.aggregator == "crfl") {
      aggregate = geometric_median(set).aggregate;
      aggregate = crfl_postprocess(aggregate, server, crfl, server_rng, is_last);
    } else if (cfg.aggregator == "foolsgold") {
      fg_history.accumulate(set);
      aggregate = foolsgold_weights(set, fg_history).aggregate;
    } else if (cfg.aggregator == "residual") {
      aggregate = residual_weights(set).aggregate;
    } else {
      SelectionReport rep = select(set, dk, memory);
      aggregate = weighted_aggregate(set, rep.weights_p);
      if (dk.variant == KrumVariant::dimkrum && dk.lambda > 0.0)
        aggregate = adaptive_noise(aggregate, set, rep.selected, dk.lambda, server_rng,
                                   is_last);
      metrics.has_selection = true;
      metrics.i_star = rep.i_star;
      metrics.selected = rep.selected;
      if (!malicious.empty()) {
        metrics.malicious_excluded = true;
        for (int mi : malicious) {
          if (std::find(rep.selected.begin(), rep.selected.end(), mi) !=
              rep.selected.end())
            metrics.malicious_excluded = false;
        }
      }
      report = std::move(rep);
    }

    server = apply_update(server, aggregate);
    auto [acc, asr] = evaluate(server.weights, layout, data.clean_test, triggered_test,
                               cfg.attack_target_label);
    metrics.acc = acc;
    metrics.asr = asr;
    result.rounds.push_back(metrics);
    result.reports.push_back(std::move(report));
    result.round_sets.push_back(capture_rounds ? std::optional<ClientRoundSet>(set)
                                               : std::nullopt);
    prev_distributed = distributed;
  }

  result.final_acc = result.rounds.back().acc;
  result.final_asr = result.rounds.back().asr;
  if (selection_based && !malicious.empty()) {
    double excluded = 0.0;
    for (const auto& r : result.rounds) excluded += r.malicious_excluded ? 1.0 : 0.0;
    result.detection_rate = excluded / static_cast<double>(result.rounds.size());
  }
  return result;
}

}  // namespace fedagg
