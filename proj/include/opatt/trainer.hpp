#pragma once

// Maximum-likelihood training with AdaDelta.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "opatt/config.hpp"
#include "opatt/model.hpp"

namespace opatt {

template <typename T>
class AdaDelta {
 public:
  AdaDelta(const ParamSet<T>& params, double rho, double epsilon);

  // Applies one update; tensors with a non-finite gradient are left alone.
  // Returns the number of skipped tensors.
  std::size_t step(ParamSet<T>& params, const GradStore<T>& grads);

  const Tensor<T>& sq_grad(std::size_t i) const { return sq_grad_.at(i); }
  const Tensor<T>& sq_update(std::size_t i) const { return sq_update_.at(i); }

 private:
  double rho_, epsilon_;
  std::vector<Tensor<T>> sq_grad_, sq_update_;
};

// Scales every finite tensor of `grads` so their joint L2 norm is at most
// max_norm. Returns the norm before clipping.
template <typename T>
double clip_global_norm(GradStore<T>& grads, double max_norm);

struct BatchStats {
  double loss_sum = 0.0;  // summed example NLL
  std::size_t examples = 0;
  std::size_t tokens = 0;
  std::size_t floor_hits = 0;
  double lambda_min = 1.0;
  double lambda_max = 0.0;
  double lambda_sum = 0.0;
  std::size_t lambda_count = 0;

  void merge(const BatchStats& o);
};

// Mean example NLL over the batch. When `grads` is given it receives the
// gradient of that mean. Examples run in parallel; gradients are reduced in
// batch order so the result does not depend on the thread count.
template <typename T>
double batch_loss(const Model<T>& model, std::span<const ModelInput* const> batch, GradStore<T>* grads,
                  BatchStats* stats = nullptr);

// Mean example NLL and statistics over a dataset, without gradients.
template <typename T>
BatchStats evaluate_loss(const Model<T>& model, const std::vector<ModelInput>& data);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;       // mean example NLL over the epoch, before each update
  double token_nll = 0.0;  // loss per target token
  double lambda_min = 0.0, lambda_max = 0.0, lambda_mean = 0.0;
  std::size_t floor_hits = 0;
  std::size_t skipped_updates = 0;
  bool lambda_pinned = false;
};

nlohmann::json epoch_log_json(const EpochLog& log);

// Return false to stop after this epoch.
using EpochCallback = std::function<bool(const EpochLog&, const Model<float>&)>;

// Seeds the model from config.seed, then trains for config.epochs epochs.
std::vector<EpochLog> train(Model<float>& model, const std::vector<ModelInput>& data, const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

}  // namespace opatt
