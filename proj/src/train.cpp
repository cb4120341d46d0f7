#include "nus/train.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace nus::harness {

void TrainConfig::validate() const {
  if (!(lr0 > 0) || !(decay_rate > 0) || decay_every <= 0 || batch_size == 0 || max_steps < 0 || log_every <= 0)
    throw std::invalid_argument("train config: rates and sizes must be positive");
}

double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
  return cfg.lr0 * std::pow(cfg.decay_rate, static_cast<double>(step / cfg.decay_every));
}

void Adam::step(ad::ParameterStore& params, double lr) {
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(ad::Mat::Zero(params[i].value.rows(), params[i].value.cols()));
      v_.push_back(ad::Mat::Zero(params[i].value.rows(), params[i].value.cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

std::vector<TrainingPair> make_pairs(const std::vector<corpus::Example>& data) {
  std::vector<TrainingPair> pairs;
  for (std::size_t e = 0; e < data.size(); ++e)
    for (std::size_t c = 0; c < data[e].candidates.size(); ++c)
      pairs.push_back({e, c, data[e].is_correct(data[e].candidates[c]) ? 1.0 : 0.0});
  return pairs;
}

std::vector<esim::PairInput> example_inputs(const corpus::Example& ex, const corpus::Tokens& context) {
  std::vector<esim::PairInput> out;
  out.reserve(ex.candidates.size());
  const corpus::Tokens* knowledge = ex.knowledge ? &*ex.knowledge : nullptr;
  for (const auto& c : ex.candidates) out.push_back({&context, &c.tokens, knowledge});
  return out;
}

TrainLog train(const TrainConfig& cfg, const std::vector<corpus::Example>& data, esim::ResponseModel& model,
               const StepHook& hook) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: no training data");
  if (cfg.variant != model.variant()) throw std::invalid_argument("train: config variant does not match the model");

  std::vector<corpus::Tokens> contexts;
  contexts.reserve(data.size());
  for (const auto& ex : data) contexts.push_back(ex.context_tokens());
  auto pairs = make_pairs(data);
  if (pairs.empty()) throw std::invalid_argument("train: no candidates in training data");

  std::mt19937_64 rng(cfg.seed);
  auto shuffle = [&] {
    for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[static_cast<std::size_t>(rng() % i)]);
  };
  shuffle();

  Adam adam(cfg.beta1, cfg.beta2, cfg.adam_eps);
  TrainLog log;
  std::size_t cursor = 0;
  double interval_loss = 0;
  std::int64_t interval_steps = 0;
  for (std::int64_t step = 0; step < cfg.max_steps; ++step) {
    std::vector<esim::PairInput> batch;
    std::vector<double> labels;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == pairs.size()) {
        shuffle();
        cursor = 0;
      }
      const auto& p = pairs[cursor++];
      const auto& ex = data[p.example];
      batch.push_back({&contexts[p.example], &ex.candidates[p.candidate].tokens,
                       ex.knowledge ? &*ex.knowledge : nullptr});
      labels.push_back(p.label);
    }
    model.params().zero_grad();
    ad::Tape tape;
    ad::Var loss = esim::bce_loss(model.forward(tape, batch), labels);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      std::ostringstream os;
      os << "train: non-finite loss " << value << " at step " << step + 1;
      throw std::runtime_error(os.str());
    }
    tape.backward(loss);
    adam.step(model.params(), lr_schedule(step, cfg));
    log.steps = step + 1;

    interval_loss += value;
    ++interval_steps;
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.max_steps) {
      log.losses.emplace_back(step + 1, interval_loss / static_cast<double>(interval_steps));
      interval_loss = 0;
      interval_steps = 0;
    }
    if (hook && !hook(step + 1, value)) break;
  }
  if (interval_steps > 0) log.losses.emplace_back(log.steps, interval_loss / static_cast<double>(interval_steps));
  return log;
}

}  // namespace nus::harness
