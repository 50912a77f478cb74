#include "opatt/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "opatt/error.hpp"
#include "opatt/kernels.hpp"

namespace opatt {

template <typename T>
AdaDelta<T>::AdaDelta(const ParamSet<T>& params, double rho, double epsilon) : rho_(rho), epsilon_(epsilon) {
  for (const auto& p : params) {
    sq_grad_.emplace_back(p.value.shape);
    sq_update_.emplace_back(p.value.shape);
  }
}

template <typename T>
std::size_t AdaDelta<T>::step(ParamSet<T>& params, const GradStore<T>& grads) {
  if (grads.size() != params.size()) throw ShapeError("gradient store does not match parameters");
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params.at(i).value.data;
    const auto& g = grads.at(i).data;
    if (g.size() != w.size()) throw ShapeError("gradient shape mismatch for " + params.at(i).name);
    if (!std::all_of(g.begin(), g.end(), [](T v) { return std::isfinite(v); })) {
      ++skipped;
      continue;
    }
    auto& eg = sq_grad_[i].data;
    auto& ed = sq_update_[i].data;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double eg2 = rho_ * eg[k] + (1.0 - rho_) * gk * gk;
      const double dx = -std::sqrt(ed[k] + epsilon_) / std::sqrt(eg2 + epsilon_) * gk;
      eg[k] = static_cast<T>(eg2);
      ed[k] = static_cast<T>(rho_ * ed[k] + (1.0 - rho_) * dx * dx);
      w[k] = static_cast<T>(w[k] + dx);
    }
  }
  return skipped;
}

template <typename T>
double clip_global_norm(GradStore<T>& grads, double max_norm) {
  double sq = 0.0;
  std::vector<bool> finite(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    double s = 0.0;
    for (T v : grads.at(i).data) s += static_cast<double>(v) * v;
    finite[i] = std::isfinite(s);
    if (finite[i]) sq += s;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!finite[i]) continue;
      for (T& v : grads.at(i).data) v *= f;
    }
  }
  return norm;
}

void BatchStats::merge(const BatchStats& o) {
  loss_sum += o.loss_sum;
  examples += o.examples;
  tokens += o.tokens;
  floor_hits += o.floor_hits;
  lambda_min = std::min(lambda_min, o.lambda_min);
  lambda_max = std::max(lambda_max, o.lambda_max);
  lambda_sum += o.lambda_sum;
  lambda_count += o.lambda_count;
}

namespace {

template <typename T>
BatchStats from_loss_stats(double loss, const typename Model<T>::LossStats& s) {
  BatchStats b;
  b.loss_sum = loss;
  b.examples = 1;
  b.tokens = s.tokens;
  b.floor_hits = s.floor_hits;
  b.lambda_min = s.lambda_min;
  b.lambda_max = s.lambda_max;
  b.lambda_sum = s.lambda_sum;
  b.lambda_count = s.lambda_count;
  return b;
}

template <typename T>
void add_into(GradStore<T>& dst, const GradStore<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto& d = dst.at(i).data;
    const auto& s = src.at(i).data;
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
  }
}

}  // namespace

template <typename T>
double batch_loss(const Model<T>& model, std::span<const ModelInput* const> batch, GradStore<T>* grads,
                  BatchStats* stats) {
  if (batch.empty()) throw ContractError("batch is empty");
  const std::size_t n = batch.size();
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, omp_get_max_threads())));

  std::vector<GradStore<T>> pool;
  if (grads) {
    grads->zero();
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(model.params());
  }
  std::vector<double> losses(n);
  std::vector<BatchStats> per_example(n);

  // Waves of `workers` examples; each wave's stores are summed in example order.
  for (std::size_t start = 0; start < n; start += workers) {
    const std::size_t count = std::min(workers, n - start);
    std::exception_ptr error;
#pragma omp parallel for schedule(static) num_threads(static_cast<int>(count))
    for (std::size_t j = 0; j < count; ++j) {
      try {
        const std::size_t i = start + j;
        typename Model<T>::LossStats ls;
        if (grads) {
          pool[j].zero();
          Graph<T> g(model.params(), pool[j]);
          const Var loss = model.example_loss(g, *batch[i], &ls);
          losses[i] = static_cast<double>(g.scalar(loss));
          g.backward(loss);
        } else {
          Graph<T> g(model.params());
          losses[i] = static_cast<double>(g.scalar(model.example_loss(g, *batch[i], &ls)));
        }
        per_example[i] = from_loss_stats<T>(losses[i], ls);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    if (grads) {
      for (std::size_t j = 0; j < count; ++j) add_into(*grads, pool[j]);
    }
  }

  double total = 0.0;
  for (double l : losses) total += l;
  if (grads) {
    const T inv = static_cast<T>(1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < grads->size(); ++i) {
      for (T& v : grads->at(i).data) v *= inv;
    }
  }
  if (stats) {
    for (const auto& s : per_example) stats->merge(s);
  }
  return total / static_cast<double>(n);
}

template <typename T>
BatchStats evaluate_loss(const Model<T>& model, const std::vector<ModelInput>& data) {
  BatchStats stats;
  if (data.empty()) return stats;
  std::vector<const ModelInput*> ptrs;
  for (const auto& d : data) ptrs.push_back(&d);
  batch_loss<T>(model, ptrs, nullptr, &stats);
  return stats;
}

nlohmann::json epoch_log_json(const EpochLog& log) {
  nlohmann::json j = {{"epoch", log.epoch},
                      {"loss", log.loss},
                      {"token_nll", log.token_nll},
                      {"lambda_min", log.lambda_min},
                      {"lambda_max", log.lambda_max},
                      {"lambda_mean", log.lambda_mean},
                      {"nll_floor_hits", log.floor_hits},
                      {"skipped_updates", log.skipped_updates}};
  if (log.lambda_pinned) j["note"] = "no_gate: lambda pinned at 0.5";
  return j;
}

std::vector<EpochLog> train(Model<float>& model, const std::vector<ModelInput>& data, const TrainConfig& config,
                            const EpochCallback& on_epoch) {
  config.validate();
  if (data.empty()) throw ContractError("training set is empty");
  if (!(model.config() == config.model)) throw ContractError("model was built with a different configuration");
  if (config.threads > 0) omp_set_num_threads(config.threads);

  model.init(config.seed);
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    0x73687566u};
  std::mt19937_64 rng(seq);

  AdaDelta<float> opt(model.params(), config.rho, config.epsilon);
  GradStore<float> grads(model.params());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    BatchStats stats;
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const ModelInput*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      batch_loss<float>(model, batch, &grads, &stats);
      clip_global_norm(grads, config.clip_norm);
      log.skipped_updates += opt.step(model.params(), grads);
    }
    log.loss = stats.loss_sum / static_cast<double>(stats.examples);
    log.token_nll = stats.tokens ? stats.loss_sum / static_cast<double>(stats.tokens) : 0.0;
    log.lambda_min = stats.lambda_count ? stats.lambda_min : 0.0;
    log.lambda_max = stats.lambda_count ? stats.lambda_max : 0.0;
    log.lambda_mean = stats.lambda_count ? stats.lambda_sum / static_cast<double>(stats.lambda_count) : 0.0;
    log.floor_hits = stats.floor_hits;
    log.lambda_pinned = config.model.no_gate;
    logs.push_back(log);
    if (on_epoch && !on_epoch(log, model)) break;
  }
  return logs;
}

template class AdaDelta<float>;
template class AdaDelta<double>;
template double clip_global_norm<float>(GradStore<float>&, double);
template double clip_global_norm<double>(GradStore<double>&, double);
template double batch_loss<float>(const Model<float>&, std::span<const ModelInput* const>, GradStore<float>*,
                                  BatchStats*);
template double batch_loss<double>(const Model<double>&, std::span<const ModelInput* const>, GradStore<double>*,
                                   BatchStats*);
template BatchStats evaluate_loss<float>(const Model<float>&, const std::vector<ModelInput>&);
template BatchStats evaluate_loss<double>(const Model<double>&, const std::vector<ModelInput>&);

}  // namespace opatt
