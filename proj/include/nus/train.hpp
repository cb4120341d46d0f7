#pragma once

// Adam training of a response model on (context, candidate, label) pairs.

#include "nus/autodiff.hpp"
#include "nus/corpus.hpp"
#include "nus/esim.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace nus::harness {

struct TrainConfig {
  double lr0 = 0.001;
  double decay_rate = 0.96;
  std::int64_t decay_every = 5000;
  std::size_t batch_size = 16;
  std::int64_t max_steps = 1000;
  std::uint64_t seed = 13;
  esim::Variant variant = esim::Variant::esim;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t log_every = 50;

  /// Throws std::invalid_argument unless every size and rate is positive.
  void validate() const;
};

/// Staircase decay: lr0 * decay_rate^floor(step / decay_every).
double lr_schedule(std::int64_t step, const TrainConfig& cfg);

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update from the accumulated gradients of trainable parameters.
  void step(ad::ParameterStore& params, double lr);
  std::int64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<ad::Mat> m_, v_;
};

struct TrainingPair {
  std::size_t example = 0;
  std::size_t candidate = 0;
  double label = 0;
};

/// Every (example, candidate) pair with label 1 for correct candidates.
std::vector<TrainingPair> make_pairs(const std::vector<corpus::Example>& data);

struct TrainLog {
  std::vector<std::pair<std::int64_t, double>> losses;  // (step, mean loss over the interval)
  std::int64_t steps = 0;
};

/// Called after every step with (1-based step, batch loss); return false to stop.
using StepHook = std::function<bool(std::int64_t step, double loss)>;

/// Minimises mean BCE with Adam under lr_schedule. Pairs are reshuffled each
/// epoch with a generator seeded by cfg.seed. Throws std::runtime_error on a
/// non-finite loss.
TrainLog train(const TrainConfig& cfg, const std::vector<corpus::Example>& data, esim::ResponseModel& model,
               const StepHook& hook = {});

/// Pair inputs for scoring every candidate of one example.
std::vector<esim::PairInput> example_inputs(const corpus::Example& ex, const corpus::Tokens& context);

}  // namespace nus::harness
