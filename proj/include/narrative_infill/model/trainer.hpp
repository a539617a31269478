#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrative_infill/corpus/encode.hpp"
#include "narrative_infill/error.hpp"
#include "narrative_infill/model/config.hpp"
#include "narrative_infill/model/infill_model.hpp"
#include "narrative_infill/model/masking.hpp"
#include "narrative_infill/nn/optim.hpp"
#include "narrative_infill/run/threads.hpp"

namespace narrative_infill::model {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::size_t mask_count = 0;
  double grad_norm = 0.0;  // mean pre-clip global norm over the epoch's updates
};

inline nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"mask_count", e.mask_count}};
  j["val_loss"] = e.val_loss ? nlohmann::json(*e.val_loss) : nlohmann::json(nullptr);
  return j;
}

template <typename T>
struct TrainResult {
  nn::ParameterSet<T> best_params;
  nn::OptimizerState<T> best_optimizer;
  std::optional<std::size_t> best_epoch;  // empty when no epoch ran
  nn::ParameterSet<T> final_params;
  nn::OptimizerState<T> final_optimizer;
  std::vector<EpochLog> log;
};

struct TrainOptions {
  std::size_t threads = 1;
  // Called after every epoch, e.g. to stream the log.
  std::function<void(const EpochLog&)> on_epoch;
};

template <typename T>
nn::ParameterSet<T> initial_parameters(const ModelConfig& config) {
  auto params = make_parameters<T>(ModelDims::of(config));
  Rng rng(derive_seed(config.seed, 0x696e6974));
  params.init_uniform(rng, config.init_scale);
  return params;
}

inline std::size_t target_count(const corpus::EncodedNarrative& enc) {
  std::size_t n = 0;
  for (auto len : enc.step_lengths) n += len + 1;
  return n;
}

// Token-weighted mean loss with no masking and no dropout.
template <typename T>
double evaluation_loss(const nn::ParameterSet<T>& params, std::span<const corpus::EncodedNarrative> data,
                       std::size_t threads = 1) {
  std::vector<double> sums(data.size());
  run::parallel_for(data.size(), threads, [&](std::size_t i) {
    Graph<T> g(false);
    const auto m = bind(g, params);
    const auto r = narrative_loss(g, m, g.constant(feature_matrix<T>(data[i])), data[i], MaskPlan{});
    sums[i] = static_cast<double>(g.scalar(r.loss)) * static_cast<double>(r.n_tokens);
  });
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += sums[i];
    count += target_count(data[i]);
  }
  return count ? total / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

// Per epoch: seeded shuffle, then for each batch sample a mask plan per
// narrative from the variant's schedule, accumulate token-weighted
// gradients, clip to config.clip and take one Adam step. The parameters
// with the lowest validation loss (unmasked) are kept as the best state;
// without a validation set the lowest training loss decides.
//
// Randomness is drawn from streams keyed by (seed, epoch, narrative), so
// results do not depend on the thread count.
template <typename T>
TrainResult<T> train(std::span<const corpus::EncodedNarrative> train_set,
                     std::span<const corpus::EncodedNarrative> val_set, const ModelConfig& config,
                     const TrainOptions& options = {}) {
  config.validate();
  if (train_set.empty()) throw InputError("training split is empty");
  for (const auto& enc : train_set) {
    if (enc.feature_dim != config.d_img) {
      throw InputError("narrative " + enc.id + ": feature dimension " + std::to_string(enc.feature_dim) +
                       " does not match d_img " + std::to_string(config.d_img));
    }
  }

  auto params = initial_parameters<T>(config);
  auto opt = nn::OptimizerState<T>::for_parameters(params, config.lr, config.beta1, config.beta2, config.eps);

  TrainResult<T> result;
  result.best_params = params;
  result.best_optimizer = opt;
  double best_score = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batch = config.batch_size;
  std::vector<std::vector<std::vector<T>>> buffers;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, epoch, 0x73687566));
    shuffle_rng.shuffle(order);
    const std::size_t scheduled = config.force_mask_count
                                      ? *config.force_mask_count
                                      : mask_count_for_epoch(epoch, config.epochs, config.variant);
    double loss_sum = 0.0;
    std::size_t token_sum = 0;
    double norm_sum = 0.0;
    std::size_t updates = 0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::size_t count = end - start;
      std::size_t batch_tokens = 0;
      for (std::size_t b = start; b < end; ++b) batch_tokens += target_count(train_set[order[b]]);

      params.zero_grad();
      std::vector<double> losses(count);
      const bool buffered = options.threads > 1 && count > 1;
      if (buffered) {
        buffers.resize(count);
        for (auto& buf : buffers) {
          buf.resize(params.size());
          for (std::size_t i = 0; i < params.size(); ++i) buf[i].assign(params[i].value.size(), T{0});
        }
      }
      auto run_one = [&](std::size_t b) {
        const std::size_t idx = order[start + b];
        const auto& enc = train_set[idx];
        Rng mask_rng(derive_seed(config.seed, epoch, 2 * idx));
        Rng dropout_rng(derive_seed(config.seed, epoch, 2 * idx + 1));
        const auto plan = sample_mask_indices(enc.n_steps, std::min(scheduled, enc.n_steps), mask_rng);
        Graph<T> g;
        const auto m = bind(g, params);
        const auto r = narrative_loss(g, m, g.constant(feature_matrix<T>(enc)), enc, plan, true,
                                      &dropout_rng, config.dropout);
        const double loss = static_cast<double>(g.scalar(r.loss));
        if (!std::isfinite(loss)) {
          throw NumericError("loss diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(start + b) + " (narrative " + enc.id + ")");
        }
        losses[b] = loss;
        g.backward(r.loss);
        const T weight = static_cast<T>(static_cast<double>(r.n_tokens) / static_cast<double>(batch_tokens));
        if (buffered) {
          g.accumulate_parameter_grads(buffers[b], weight);
        } else {
          g.accumulate_parameter_grads(params, weight);
        }
      };
      if (buffered) {
        run::parallel_for(count, options.threads, run_one);
        for (std::size_t b = 0; b < count; ++b) {
          for (std::size_t i = 0; i < params.size(); ++i) {
            nn::kernels::axpy(T{1}, buffers[b][i].data(), params[i].grad.data(), params[i].grad.size());
          }
        }
      } else {
        for (std::size_t b = 0; b < count; ++b) run_one(b);
      }
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t tokens = target_count(train_set[order[start + b]]);
        loss_sum += losses[b] * static_cast<double>(tokens);
        token_sum += tokens;
      }
      norm_sum += nn::clip_gradients(params, config.clip);
      nn::adam_step(params, opt);
      ++updates;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(token_sum);
    entry.mask_count = scheduled;
    entry.grad_norm = norm_sum / static_cast<double>(updates);
    if (!val_set.empty()) entry.val_loss = evaluation_loss(params, val_set, options.threads);
    const double score = entry.val_loss ? *entry.val_loss : entry.train_loss;
    if (!std::isfinite(score)) {
      throw NumericError("loss diverged at epoch " + std::to_string(epoch));
    }
    if (score < best_score) {
      best_score = score;
      result.best_params = params;
      result.best_optimizer = opt;
      result.best_epoch = epoch;
    }
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
  }
  result.final_params = std::move(params);
  result.final_optimizer = std::move(opt);
  return result;
}

}  // namespace narrative_infill::model
