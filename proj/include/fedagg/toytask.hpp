#pragma once

#include <stdexcept>
#include <vector>

#include "fedagg/model.hpp"
#include "fedagg/rng.hpp"

namespace fedagg {

struct ClientDataset {
  std::vector<std::vector<int>> sentences;
  std::vector<int> labels;
  std::vector<bool> poisoned;

  size_t size() const { return sentences.size(); }

  void validate(int vocab, int classes) const {
    if (labels.size() != sentences.size() || poisoned.size() != sentences.size())
      throw std::invalid_argument("dataset field lengths disagree");
    for (size_t i = 0; i < sentences.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= classes)
        throw std::invalid_argument("label out of range");
      for (int t : sentences[i]) {
        if (t < 0 || t >= vocab) throw std::invalid_argument("token out of range");
      }
    }
  }
};

// Synthetic token-classification task. Tokens [0, classes*signal_per_class)
// are class signal tokens, the next trigger_pool tokens are reserved for
// attacks and never appear in clean sentences, and the rest is background.
// Every clean sentence mixes signal tokens of exactly one class with
// background tokens, so its label is recoverable by construction.
struct ToyTask {
  int vocab_size = 0;
  int num_classes = 0;
  int signal_tokens_per_class = 0;
  int sentence_length = 0;
  std::vector<int> trigger_tokens;
  uint64_t seed = 0;

  int signal_token(int cls, int k) const { return cls * signal_tokens_per_class + k; }
  int background_begin() const {
    return num_classes * signal_tokens_per_class +
           static_cast<int>(trigger_tokens.size());
  }
  int label_of_signal_token(int token) const { return token / signal_tokens_per_class; }
};

struct ToyData {
  ToyTask task;
  ModelLayout layout;
  ClientDataset train;
  ClientDataset clean_test;
  ClientDataset triggered_test;  // clean test with the default trigger inserted
};

namespace detail {

inline std::vector<int> make_sentence(const ToyTask& task, int label, double p_signal,
                                      Rng& rng) {
  std::vector<int> toks(static_cast<size_t>(task.sentence_length));
  const int bg_begin = task.background_begin();
  const int bg_count = task.vocab_size - bg_begin;
  bool has_signal = false;
  for (int p = 0; p < task.sentence_length; ++p) {
    if (rng.uniform() < p_signal) {
      toks[static_cast<size_t>(p)] =
          task.signal_token(label, static_cast<int>(rng.uniform_int(0, task.signal_tokens_per_class - 1)));
      has_signal = true;
    } else {
      toks[static_cast<size_t>(p)] =
          bg_begin + static_cast<int>(rng.uniform_int(0, bg_count - 1));
    }
  }
  if (!has_signal) {
    int p = static_cast<int>(rng.uniform_int(0, task.sentence_length - 1));
    toks[static_cast<size_t>(p)] =
        task.signal_token(label, static_cast<int>(rng.uniform_int(0, task.signal_tokens_per_class - 1)));
  }
  return toks;
}

inline ClientDataset generate(const ToyTask& task, size_t count, double p_signal, Rng& rng) {
  ClientDataset out;
  out.sentences.reserve(count);
  out.labels.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    int label = static_cast<int>(rng.uniform_int(0, task.num_classes - 1));
    out.sentences.push_back(make_sentence(task, label, p_signal, rng));
    out.labels.push_back(label);
    out.poisoned.push_back(false);
  }
  return out;
}

}  // namespace detail

// Inserts a trigger sequence contiguously at a uniform random start position,
// overwriting the tokens there. Labels are left untouched.
inline ClientDataset insert_trigger(const ClientDataset& data,
                                    const std::vector<int>& trigger, Rng& rng) {
  if (trigger.empty()) throw std::invalid_argument("trigger sequence is empty");
  ClientDataset out = data;
  for (auto& s : out.sentences) {
    if (trigger.size() > s.size())
      throw std::invalid_argument("trigger longer than sentence");
    int start = static_cast<int>(
        rng.uniform_int(0, static_cast<int64_t>(s.size() - trigger.size())));
    for (size_t k = 0; k < trigger.size(); ++k)
      s[static_cast<size_t>(start) + k] = trigger[k];
  }
  return out;
}

struct MakeTaskOptions {
  int signal_tokens_per_class = 8;
  int trigger_pool = 8;
  size_t train_size = 2000;
  size_t test_size = 2000;
  double p_signal = 0.5;
};

inline ToyData make_task(uint64_t seed, int vocab, int classes, int sentence_len,
                         int embed, const MakeTaskOptions& opt = {}) {
  if (classes < 2) throw std::invalid_argument("need at least two classes");
  if (sentence_len < 1) throw std::invalid_argument("sentence length must be positive");
  if (vocab < classes * opt.signal_tokens_per_class + opt.trigger_pool + 1)
    throw std::invalid_argument("vocabulary too small for signal and trigger tokens");

  ToyData data;
  data.task.vocab_size = vocab;
  data.task.num_classes = classes;
  data.task.signal_tokens_per_class = opt.signal_tokens_per_class;
  data.task.sentence_length = sentence_len;
  data.task.seed = seed;
  const int trig_begin = classes * opt.signal_tokens_per_class;
  for (int k = 0; k < opt.trigger_pool; ++k)
    data.task.trigger_tokens.push_back(trig_begin + k);

  data.layout.vocab = vocab;
  data.layout.classes = classes;
  data.layout.embed = embed;
  data.layout.validate();

  Rng rng(seed);
  Rng train_rng = rng.substream(1);
  Rng test_rng = rng.substream(2);
  Rng trig_rng = rng.substream(3);
  data.train = detail::generate(data.task, opt.train_size, opt.p_signal, train_rng);
  data.clean_test = detail::generate(data.task, opt.test_size, opt.p_signal, test_rng);
  data.triggered_test =
      insert_trigger(data.clean_test, {data.task.trigger_tokens[0]}, trig_rng);
  return data;
}

enum class PartitionMode { iid, dirichlet };

// IID: a random permutation cut into near-equal chunks, the remainder going
// to the lowest client ids. Dirichlet: per-class client proportions drawn
// from Dir(alpha), degenerate draws (an empty client) resampled.
inline std::vector<ClientDataset> partition(const ClientDataset& data, size_t n,
                                            PartitionMode mode, double alpha_dirichlet,
                                            Rng& rng) {
  if (n < 2) throw std::invalid_argument("partition needs at least two clients");
  if (data.size() < n) throw std::invalid_argument("dataset smaller than client count");

  std::vector<size_t> perm(data.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;

  std::vector<std::vector<size_t>> assign(n);
  if (mode == PartitionMode::iid) {
    rng.shuffle(perm);
    size_t base = data.size() / n;
    size_t rem = data.size() % n;
    size_t pos = 0;
    for (size_t c = 0; c < n; ++c) {
      size_t take = base + (c < rem ? 1 : 0);
      for (size_t k = 0; k < take; ++k) assign[c].push_back(perm[pos++]);
    }
  } else {
    if (!(alpha_dirichlet > 0.0))
      throw std::invalid_argument("dirichlet alpha must be positive");
    int classes = 0;
    for (int l : data.labels) classes = std::max(classes, l + 1);
    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(classes));
    for (size_t i = 0; i < data.size(); ++i)
      by_class[static_cast<size_t>(data.labels[i])].push_back(i);

    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (auto& a : assign) a.clear();
      for (auto& idx : by_class) {
        std::vector<size_t> shuffled = idx;
        rng.shuffle(shuffled);
        // Dir(alpha) via normalized Gamma(alpha, 1) draws (Marsaglia-Tsang).
        std::vector<double> prop(n);
        double total = 0.0;
        for (size_t c = 0; c < n; ++c) {
          double a = alpha_dirichlet;
          double boost = 1.0;
          if (a < 1.0) {
            boost = std::pow(rng.uniform_pos(), 1.0 / a);
            a += 1.0;
          }
          double dd = a - 1.0 / 3.0;
          double cc = 1.0 / std::sqrt(9.0 * dd);
          double g;
          for (;;) {
            double x = rng.gaussian();
            double v = 1.0 + cc * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = rng.uniform_pos();
            if (std::log(u) < 0.5 * x * x + dd - dd * v + dd * std::log(v)) {
              g = dd * v;
              break;
            }
          }
          prop[c] = g * boost;
          total += prop[c];
        }
        // Quotas by largest remainder.
        std::vector<size_t> quota(n, 0);
        std::vector<std::pair<double, size_t>> rema(n);
        size_t assigned = 0;
        for (size_t c = 0; c < n; ++c) {
          double exact = prop[c] / total * static_cast<double>(shuffled.size());
          quota[c] = static_cast<size_t>(exact);
          rema[c] = {exact - static_cast<double>(quota[c]), c};
          assigned += quota[c];
        }
        std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first > b.first;
          return a.second < b.second;
        });
        for (size_t k = 0; assigned < shuffled.size(); ++k, ++assigned)
          quota[rema[k % n].second] += 1;
        size_t pos = 0;
        for (size_t c = 0; c < n; ++c)
          for (size_t k = 0; k < quota[c]; ++k) assign[c].push_back(shuffled[pos++]);
      }
      bool ok = true;
      for (const auto& a : assign)
        if (a.empty()) ok = false;
      if (ok) break;
      if (attempt == 999)
        throw std::runtime_error("dirichlet partition kept producing empty clients");
    }
  }

  std::vector<ClientDataset> shards(n);
  for (size_t c = 0; c < n; ++c) {
    for (size_t i : assign[c]) {
      shards[c].sentences.push_back(data.sentences[i]);
      shards[c].labels.push_back(data.labels[i]);
      shards[c].poisoned.push_back(data.poisoned[i]);
    }
  }
  return shards;
}

}  // namespace fedagg
