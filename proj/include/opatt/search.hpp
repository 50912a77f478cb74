#pragma once

// Greedy and beam decoding over any model exposing
//   State initial();
//   std::vector<double> log_probs(State&);   // may cache inside the state
//   State child(const State&, std::size_t token);
//   std::size_t eos() const;
// Blocked tokens carry -infinity and are never emitted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "opatt/error.hpp"
#include "opatt/model.hpp"

namespace opatt {

struct SearchConfig {
  std::size_t beam = 5;
  std::size_t max_len = 30;   // decode steps, EOS included
  double length_norm = 1.0;   // finished score = logprob / length^length_norm
};

struct Decoded {
  std::vector<std::size_t> tokens;  // without BOS/EOS
  double logprob = 0.0;
  bool finished = false;            // ended with EOS
};

// Length counts the EOS step so an immediate EOS has length 1.
inline double normalized_score(double logprob, std::size_t length, double length_norm) {
  if (length_norm == 0.0) return logprob;
  return logprob / std::pow(static_cast<double>(std::max<std::size_t>(length, 1)), length_norm);
}

template <typename M>
Decoded greedy_decode(M& model, std::size_t max_len) {
  Decoded out;
  auto state = model.initial();
  for (std::size_t t = 0; t < max_len; ++t) {
    const std::vector<double> lp = model.log_probs(state);
    std::size_t best = 0;
    for (std::size_t k = 1; k < lp.size(); ++k) {
      if (lp[k] > lp[best]) best = k;
    }
    if (!std::isfinite(lp[best])) throw DomainError("no token has finite probability");
    out.logprob += lp[best];
    if (best == model.eos()) {
      out.finished = true;
      return out;
    }
    out.tokens.push_back(best);
    state = model.child(state, best);
  }
  return out;
}

template <typename M>
Decoded beam_search(M& model, const SearchConfig& config) {
  if (config.beam == 0) throw ContractError("beam must be >= 1");
  using State = decltype(model.initial());
  struct Hyp {
    std::vector<std::size_t> tokens;
    double logprob = 0.0;
    State state;
  };
  struct Candidate {
    double score;
    std::size_t hyp;
    std::size_t token;
  };

  std::vector<Hyp> live;
  live.push_back({{}, 0.0, model.initial()});
  std::vector<Decoded> finished;
  const auto finished_score = [&](const Decoded& d) {
    return normalized_score(d.logprob, d.tokens.size() + 1, config.length_norm);
  };

  for (std::size_t t = 0; t < config.max_len && !live.empty(); ++t) {
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const std::vector<double> lp = model.log_probs(live[h].state);
      for (std::size_t k = 0; k < lp.size(); ++k) {
        if (std::isfinite(lp[k])) cands.push_back({live[h].logprob + lp[k], h, k});
      }
    }
    const std::size_t keep = std::min(config.beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.token < b.token;
                      });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cands[i];
      const Hyp& parent = live[c.hyp];
      if (c.token == model.eos()) {
        finished.push_back({parent.tokens, c.score, true});
      } else {
        Hyp h{parent.tokens, c.score, model.child(parent.state, c.token)};
        h.tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    if (finished.size() >= config.beam && !live.empty()) {
      // Raw log-probabilities only fall, so without normalization a finished
      // hypothesis that beats every live one is final.
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& d : finished) best_finished = std::max(best_finished, finished_score(d));
      if (config.length_norm != 0.0 || best_finished >= live.front().logprob) break;
    }
  }

  if (!finished.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < finished.size(); ++i) {
      if (finished_score(finished[i]) > finished_score(finished[best])) best = i;
    }
    return finished[best];
  }
  if (live.empty()) throw DomainError("beam search produced no hypothesis");
  return {live.front().tokens, live.front().logprob, false};
}

// Adapts Model<T> to the search interface with one value-only graph per
// example. PAD and BOS are blocked.
template <typename T>
class ModelSearch {
 public:
  struct State {
    typename Model<T>::State dec;
    std::size_t last = Vocab::kBos;
    std::optional<typename Model<T>::State> next;
  };

  ModelSearch(const Model<T>& model, const ModelInput& input)
      : model_(model), graph_(model.params()), enc_(model.encode(graph_, input)) {}

  State initial() { return {model_.initial_state(graph_, enc_), Vocab::kBos, std::nullopt}; }

  std::vector<double> log_probs(State& s) {
    auto out = model_.step(graph_, enc_, s.dec, s.last);
    s.next = out.next;
    const auto& dist = graph_.value(out.dist).data;
    std::vector<double> lp(dist.size());
    for (std::size_t k = 0; k < dist.size(); ++k) {
      lp[k] = dist[k] > T(0) ? std::log(static_cast<double>(dist[k])) : -std::numeric_limits<double>::infinity();
    }
    lp[Vocab::kPad] = lp[Vocab::kBos] = -std::numeric_limits<double>::infinity();
    return lp;
  }

  State child(const State& s, std::size_t token) const {
    if (!s.next) throw ContractError("child() before log_probs()");
    return {*s.next, token, std::nullopt};
  }

  std::size_t eos() const { return Vocab::kEos; }
  Graph<T>& graph() { return graph_; }
  const typename Model<T>::Encoded& encoded() const { return enc_; }

 private:
  const Model<T>& model_;
  Graph<T> graph_;
  typename Model<T>::Encoded enc_;
};

// Beam 1 routes through greedy_decode.
template <typename T>
Decoded decode(const Model<T>& model, const ModelInput& input, const SearchConfig& config) {
  ModelSearch<T> search(model, input);
  if (config.beam == 1) return greedy_decode(search, config.max_len);
  return beam_search(search, config);
}

}  // namespace opatt
