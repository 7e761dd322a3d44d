#pragma once

// System identification: Adam on the averaged datapoint gradients with
// projection onto the parameter box, and the validation metrics.

#include "dpsi/adjoint.hpp"
#include "dpsi/dataset.hpp"
#include "dpsi/losses.hpp"
#include "dpsi/mpm.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace dpsi {

// ---------------------------------------------------------------------------
// Optimizer units
//
// The optimizer works in the units of the step-size table: E and sigma_y in
// kPa, everything else in SI.

inline constexpr std::array<double, PhysicsParams::kCount> kOptimizerUnit{1e3, 1.0, 1.0, 1e3, 1.0, 1.0};

/// Per-parameter Adam step sizes, in optimizer units.
struct StepSizes {
  std::array<double, PhysicsParams::kCount> step{4000.0, 0.01, 10.0, 500.0, 0.01, 0.01};
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  PhysicsParams params;
  std::array<double, PhysicsParams::kCount> m{};
  std::array<double, PhysicsParams::kCount> v{};
  int iteration = 0;
};

/// One Adam update per parameter (gradient in SI units), then projection
/// onto the box.
inline OptimizerState adam_step(const OptimizerState& s, const ParamGradient& grad, const StepSizes& steps,
                                const ParamBox& box = {}, const AdamConfig& cfg = {}) {
  if (!grad.all_finite()) throw NumericalError("adam_step: non-finite gradient");
  OptimizerState out = s;
  out.iteration = s.iteration + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, out.iteration);
  const double c2 = 1.0 - std::pow(cfg.beta2, out.iteration);
  for (int i = 0; i < PhysicsParams::kCount; ++i) {
    const double g = grad[i] * kOptimizerUnit[i];
    out.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
    out.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = out.m[i] / c1, v_hat = out.v[i] / c2;
    const double p = s.params[i] / kOptimizerUnit[i] - steps.step[i] * m_hat / (std::sqrt(v_hat) + cfg.eps);
    out.params[i] = p * kOptimizerUnit[i];
  }
  out.params = box.clamp(out.params);
  return out;
}

/// Uniform draw inside the box.
inline PhysicsParams random_params(const ParamBox& box, std::mt19937_64& rng) {
  PhysicsParams p;
  for (int i = 0; i < PhysicsParams::kCount; ++i) {
    std::uniform_real_distribution<double> u(box.lo[i], box.hi[i]);
    p[i] = u(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Validation metrics

inline constexpr std::array<LossKind, 5> kAllLossKinds{LossKind::PcdCd, LossKind::PrtCd, LossKind::PcdEmd,
                                                       LossKind::PrtEmd, LossKind::Heightmap};

/// The five distances, indexed like kAllLossKinds.
struct Metrics {
  std::array<double, 5> value{};

  double operator[](LossKind k) const { return value[static_cast<int>(k)]; }
  double heightmap() const { return (*this)[LossKind::Heightmap]; }
};

inline Metrics metrics_of(const Points& sim, const Observation& obs) {
  Metrics m;
  for (LossKind k : kAllLossKinds) m.value[static_cast<int>(k)] = loss_value(k, sim, obs);
  return m;
}

struct MetricTable {
  std::vector<std::string> names;
  std::vector<Metrics> rows;
  Metrics mean;
};

inline Metrics mean_of(const std::vector<Metrics>& rows) {
  Metrics m;
  double count = 0.0;
  for (const Metrics& r : rows) {
    count += 1.0;
    for (int j = 0; j < 5; ++j) m.value[j] += (r.value[j] - m.value[j]) / count;
  }
  return m;
}

/// Forward rollouts of every datapoint under `params`.
inline MetricTable validate(const PhysicsParams& params, const Dataset& data, const Scene& base) {
  MetricTable t;
  for (const DataPoint& dp : data) {
    const RolloutResult r = rollout(dp.initial, dp.trajectory, params, scene_for(base, dp));
    t.names.push_back(dp.name);
    t.rows.push_back(metrics_of(r.final_state.x, dp.target));
  }
  t.mean = mean_of(t.rows);
  return t;
}

// ---------------------------------------------------------------------------
// Identification loop

struct IdentifyConfig {
  LossKind loss = LossKind::PrtEmd;
  int iterations = 100;
  StepSizes steps;
  ParamBox box;
  AdamConfig adam;
  bool allow_heightmap_loss = false;  // the heightmap loss is a poor objective
  Dataset validation;                 // empty: validate on the training data
  std::function<void(int iteration, const PhysicsParams&, const Metrics&)> on_iteration;
};

/// One row per gradient update: the parameters after the update and their
/// validation metrics, plus the training loss and gradient that produced it.
struct HistoryRow {
  int iteration = 0;
  PhysicsParams params;
  Metrics metrics;
  double train_loss = 0.0;
  ParamGradient grad;
};

struct IdentifyResult {
  PhysicsParams initial;
  Metrics initial_metrics;
  PhysicsParams best;
  Metrics best_metrics;
  std::vector<HistoryRow> history;
};

namespace detail {

inline std::string context(int it, const DataPoint& dp, const std::exception& e) {
  return "iteration " + std::to_string(it) + ", datapoint '" + dp.name + "': " + e.what();
}

template <class Err>
[[noreturn]] void rethrow_with(int it, const DataPoint& dp, const Err& e) {
  throw Err(context(it, dp, e));
}

/// Runs fn, re-throwing library errors with iteration/datapoint context.
template <class Fn>
auto with_context(int it, const DataPoint& dp, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const InstabilityError& e) {
    rethrow_with(it, dp, e);
  } catch (const NumericalError& e) {
    rethrow_with(it, dp, e);
  } catch (const DomainError& e) {
    rethrow_with(it, dp, e);
  } catch (const PreconditionError& e) {
    rethrow_with(it, dp, e);
  }
}

}  // namespace detail

/// Adam on the dataset-averaged gradient. Iterates are validated after every
/// update; the best iterate (the initial point included) has the lowest mean
/// validation heightmap distance, ties keeping the earlier one.
inline IdentifyResult identify(const Dataset& data, const PhysicsParams& init, const Scene& base,
                               const IdentifyConfig& cfg) {
  if (data.empty()) throw PreconditionError("identify needs at least one datapoint");
  if (cfg.loss == LossKind::Heightmap && !cfg.allow_heightmap_loss)
    throw ConfigError("the heightmap loss is not an optimisation objective unless explicitly allowed");
  if (cfg.iterations < 0) throw PreconditionError("iterations must be >= 0");
  for (const DataPoint& dp : data) dp.validate();
  const bool separate_validation = !cfg.validation.empty();

  IdentifyResult res;
  OptimizerState state;
  state.params = cfg.box.clamp(init);
  res.initial = state.params;

  // Training gradient and, when validating in-distribution, the metrics of
  // the same forward pass. Running means keep the average of identical
  // gradients bit-identical to each of them.
  auto evaluate = [&](int it, const PhysicsParams& p, bool want_grad, double& loss, ParamGradient& grad) {
    std::vector<Metrics> rows;
    loss = 0.0;
    grad = ParamGradient{};
    double count = 0.0;
    for (const DataPoint& dp : data) {
      detail::with_context(it, dp, [&] {
        const RolloutTape tape = record(dp.initial, dp.trajectory, p, scene_for(base, dp));
        if (!separate_validation) rows.push_back(metrics_of(tape.final_state.x, dp.target));
        count += 1.0;
        if (want_grad) {
          const BackwardResult b = backward(tape, cfg.loss, dp.target);
          loss += (b.loss - loss) / count;
          for (int i = 0; i < PhysicsParams::kCount; ++i) grad[i] += (b.grad[i] - grad[i]) / count;
        } else {
          loss += (loss_value(cfg.loss, tape.final_state.x, dp.target) - loss) / count;
        }
        return 0;
      });
    }
    if (separate_validation) return validate(p, cfg.validation, base).mean;
    return mean_of(rows);
  };

  double loss = 0.0;
  ParamGradient grad;
  res.initial_metrics = evaluate(0, state.params, cfg.iterations > 0, loss, grad);
  res.best = state.params;
  res.best_metrics = res.initial_metrics;
  for (int it = 1; it <= cfg.iterations; ++it) {
    state = adam_step(state, grad, cfg.steps, cfg.box, cfg.adam);
    HistoryRow row;
    row.iteration = it;
    row.params = state.params;
    row.train_loss = loss;
    row.grad = grad;
    const bool more = it < cfg.iterations;
    row.metrics = evaluate(it, state.params, more, loss, grad);
    res.history.push_back(row);
    if (row.metrics.heightmap() < res.best_metrics.heightmap()) {
      res.best = row.params;
      res.best_metrics = row.metrics;
    }
    if (cfg.on_iteration) cfg.on_iteration(it, row.params, row.metrics);
  }
  return res;
}

}  // namespace dpsi
