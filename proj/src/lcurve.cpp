#include "hsnet/lcurve.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "hsnet/csv.hpp"

namespace hsnet {

std::string_view to_string(PenaltyTransform phi) {
  return phi == PenaltyTransform::identity ? "identity" : "log";
}

PenaltyTransform penalty_transform_from_string(std::string_view name) {
  if (name == "identity" || name == "linear") return PenaltyTransform::identity;
  if (name == "log") return PenaltyTransform::log;
  throw ConfigError("unknown penalty transform '" + std::string(name) + "'");
}

double apply_transform(PenaltyTransform phi, double value) {
  return phi == PenaltyTransform::identity ? value : std::log(value);
}

void LCurve::validate() const {
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i].lambda > points[i - 1].lambda)) {
      throw ConfigError("l-curve: lambda values must be strictly increasing");
    }
  }
}

LCurve build_lcurve_grid(const GraphFactory& factory, const Dataset& data,
                         std::span<const double> lambdas, const TrainConfig& config,
                         PenaltyTransform phi, const GridObserver& observer) {
  if (lambdas.empty()) throw ConfigError("l-curve grid: no lambda values");
  LCurve curve;
  curve.phi = phi;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || (i && !(lambdas[i] > lambdas[i - 1]))) {
      throw ConfigError("l-curve grid: lambda values must be positive and increasing");
    }
  }
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const std::uint64_t seed = derive_seed(config.seed, i);
    NetworkGraph graph = factory(seed);
    TrainConfig run = config;
    run.lambda = lambdas[i];
    run.seed = seed;

    LCurvePoint point{lambdas[i], 0.0, 0.0, false};
    std::vector<EpochStats> history;
    Trainer trainer(graph, data, run);
    try {
      for (std::size_t e = 0; e < run.epochs; ++e) history.push_back(trainer.run_epoch());
      point.deviation = history.empty() ? deviation_penalty(graph, data, run.loss)
                                        : history.back().deviation;
      point.sparsity = sparsity_penalty(graph);
    } catch (const DivergenceError&) {
      point.diverged = true;
      if (!history.empty()) {
        point.deviation = history.back().deviation;
        point.sparsity = history.back().sparsity;
      }
    }
    curve.points.push_back(point);
    if (observer) observer(i, point, graph, history);
  }
  return curve;
}

CornerResult select_corner(const LCurve& curve) {
  curve.validate();
  LCurve ordered;
  ordered.phi = curve.phi;
  std::vector<std::size_t> origin;  // full-curve index of each ordered point
  const LCurvePoint* last = nullptr;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const LCurvePoint& p = curve.points[i];
    if (!p.diverged) {
      if (last && (p.deviation < last->deviation || p.sparsity > last->sparsity)) continue;
      last = &p;
    }
    // Diverged points stay so corner_by_curvature skips them the usual way.
    ordered.points.push_back(p);
    origin.push_back(i);
  }
  const auto usable = std::count_if(ordered.points.begin(), ordered.points.end(),
                                    [](const LCurvePoint& p) { return !p.diverged; });
  if (usable < 3) return corner_by_curvature(curve);
  const CornerResult inner = corner_by_curvature(ordered);
  CornerResult result;
  result.index = origin[inner.index];
  result.lambda = curve.points[result.index].lambda;
  result.curvature.assign(curve.points.size(), 0.0);
  for (std::size_t j = 0; j < inner.curvature.size(); ++j) result.curvature[origin[j]] = inner.curvature[j];
  return result;
}

std::vector<double> log_grid(double lo, double hi, std::size_t per_decade) {
  if (!(lo > 0.0) || !(hi >= lo) || per_decade == 0) {
    throw ConfigError("log grid: need 0 < lo <= hi and a positive density");
  }
  const double a = std::log10(lo), b = std::log10(hi);
  const auto steps = static_cast<std::size_t>(std::llround((b - a) * static_cast<double>(per_decade)));
  std::vector<double> out;
  for (std::size_t i = 0; i <= steps; ++i) {
    out.push_back(std::pow(10.0, a + (b - a) * (steps ? static_cast<double>(i) / steps : 0.0)));
  }
  return out;
}

double menger_curvature(double ax, double ay, double bx, double by, double cx, double cy) {
  const double ab = std::hypot(bx - ax, by - ay);
  const double bc = std::hypot(cx - bx, cy - by);
  const double ca = std::hypot(ax - cx, ay - cy);
  const double denom = ab * bc * ca;
  if (denom == 0.0) return 0.0;
  const double twice_area = std::abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax));
  return 2.0 * twice_area / denom;
}

CornerResult corner_by_curvature(const LCurve& curve) {
  curve.validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    if (!curve.points[i].diverged) usable.push_back(i);
  }
  if (usable.size() < 3) {
    throw InsufficientDataError("corner detection needs at least 3 usable l-curve points, got " +
                                std::to_string(usable.size()));
  }
  std::vector<double> xs, ys;
  for (std::size_t i : usable) {
    xs.push_back(apply_transform(curve.phi, curve.points[i].deviation));
    ys.push_back(apply_transform(curve.phi, curve.points[i].sparsity));
  }
  const auto normalize = [](std::vector<double>& v) {
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    const double lo = *mn, range = *mx - *mn;
    if (!std::isfinite(range)) throw DomainError("l-curve: non-finite transformed penalty");
    if (range > 0.0) {
      for (double& x : v) x = (x - lo) / range;
    }
  };
  normalize(xs);
  normalize(ys);

  CornerResult result;
  result.curvature.assign(curve.points.size(), 0.0);
  double best = -1.0;
  std::size_t best_k = 0;
  for (std::size_t k = 1; k + 1 < usable.size(); ++k) {
    const double kappa =
        menger_curvature(xs[k - 1], ys[k - 1], xs[k], ys[k], xs[k + 1], ys[k + 1]);
    result.curvature[usable[k]] = kappa;
    if (kappa >= best) {
      best = kappa;
      best_k = k;
    }
  }
  if (best == 0.0) best_k = usable.size() / 2;  // collinear: middle point
  result.index = usable[best_k];
  result.lambda = curve.points[result.index].lambda;
  return result;
}

std::string_view to_string(LambdaGrowth growth) {
  return growth == LambdaGrowth::additive ? "additive" : "multiplicative";
}

LambdaGrowth lambda_growth_from_string(std::string_view name) {
  if (name == "additive") return LambdaGrowth::additive;
  if (name == "multiplicative") return LambdaGrowth::multiplicative;
  throw ConfigError("unknown lambda growth '" + std::string(name) + "'");
}

void SelectorConfig::validate() const {
  if (!(lambda0 >= 0.0)) throw ConfigError("selector: lambda0 must be non-negative");
  if (growth == LambdaGrowth::additive && !(delta > 0.0)) {
    throw ConfigError("selector: additive step must be positive");
  }
  if (growth == LambdaGrowth::multiplicative && (!(delta > 1.0) || !(lambda0 > 0.0))) {
    throw ConfigError("selector: multiplicative growth needs factor > 1 and lambda0 > 0");
  }
  if (probe_epochs == 0) throw ConfigError("selector: probe_epochs must be at least 1");
  if (max_probes == 0) throw ConfigError("selector: max_probes must be at least 1");
  if (!(epsilon > 0.0) && !(epsilon_rel >= 0.0 && warmup_epochs > 0)) {
    throw ConfigError("selector: need a positive ceiling or a warmup to derive one");
  }
}

TerminationPredicate fixed_epoch_budget(std::size_t epochs) {
  return [epochs](const std::vector<EpochStats>& stats) { return stats.size() >= epochs; };
}

TerminationPredicate objective_plateau(std::size_t patience, double tolerance,
                                       std::size_t max_epochs) {
  return [=](const std::vector<EpochStats>& stats) {
    if (stats.size() >= max_epochs) return true;
    if (stats.size() <= patience) return false;
    const auto objective = [](const EpochStats& s) { return s.deviation + s.lambda * s.sparsity; };
    double best_before = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + patience < stats.size(); ++i) {
      best_before = std::min(best_before, objective(stats[i]));
    }
    double best_recent = std::numeric_limits<double>::infinity();
    for (std::size_t i = stats.size() - patience; i < stats.size(); ++i) {
      best_recent = std::min(best_recent, objective(stats[i]));
    }
    return best_recent > best_before * (1.0 - tolerance);
  };
}

std::size_t SelectionResult::probe_epochs_total() const {
  std::size_t total = 0;
  for (const auto& p : history) total += p.epochs;
  return total;
}

SelectionResult select_and_train(NetworkGraph& graph, const Dataset& data,
                                 const SelectorConfig& selector, const TrainConfig& config,
                                 const TerminationPredicate& terminate) {
  selector.validate();
  if (!terminate) throw ConfigError("selector: termination predicate missing");

  SelectionResult result;
  std::mt19937_64 reinit_rng(derive_seed(config.seed, 0x5e1ec7));
  Trainer trainer(graph, data, config);

  result.epsilon = selector.epsilon;
  if (!(result.epsilon > 0.0)) {
    // Reference deviation from a short unregularized run on a copy; the
    // weights used by the selection itself are initialized only once.
    NetworkGraph warm = graph;
    TrainConfig warm_config = config;
    warm_config.lambda = 0.0;
    Trainer warm_trainer(warm, data, warm_config);
    EpochStats last = warm_trainer.evaluate();
    for (std::size_t e = 0; e < selector.warmup_epochs; ++e) last = warm_trainer.run_epoch();
    result.reference_deviation = last.deviation;
    result.warmup_epochs = selector.warmup_epochs;
    result.epsilon = (1.0 + selector.epsilon_rel) * last.deviation;
  }

  const auto probe = [&](double lambda) {
    trainer.set_lambda(lambda);
    EpochStats last = trainer.evaluate();
    for (std::size_t e = 0; e < selector.probe_epochs; ++e) last = trainer.run_epoch();
    ProbeRecord rec{lambda, last.deviation, last.sparsity, selector.probe_epochs,
                    last.deviation <= result.epsilon};
    result.history.push_back(rec);
    return rec;
  };

  double lambda = selector.lambda0;
  ProbeRecord rec = probe(lambda);
  std::optional<NetworkGraph> checkpoint;
  if (rec.within_ceiling) checkpoint = graph;
  double feasible = lambda;

  while (rec.within_ceiling) {
    if (result.history.size() >= selector.max_probes) {
      throw SelectionError("selector: deviation stayed within the ceiling for " +
                               std::to_string(result.history.size()) + " probes",
                           result.history);
    }
    lambda = selector.growth == LambdaGrowth::additive ? lambda + selector.delta
                                                       : lambda * selector.delta;
    reinitialize_sensitivities(graph, reinit_rng, selector.reinit_lo, selector.reinit_hi);
    rec = probe(lambda);
    if (rec.within_ceiling) {
      feasible = lambda;
      checkpoint = graph;
    }
  }

  if (checkpoint) {
    graph = *checkpoint;
  } else {
    result.initial_probe_exceeded = true;
  }
  result.lambda = feasible;

  TrainConfig final_config = config;
  final_config.seed = derive_seed(config.seed, 1);
  final_config.lambda = feasible;
  Trainer final_trainer(graph, data, final_config);
  while (!terminate(result.final_stats)) result.final_stats.push_back(final_trainer.run_epoch());
  return result;
}

double epoch_overhead(std::size_t probe_epochs, std::size_t final_epochs,
                      std::size_t baseline_epochs) {
  if (baseline_epochs == 0) throw DomainError("epoch overhead: baseline epoch count is zero");
  return (static_cast<double>(probe_epochs + final_epochs) - static_cast<double>(baseline_epochs)) /
         static_cast<double>(baseline_epochs) * 100.0;
}

double epoch_overhead(std::span<const ProbeRecord> history, std::size_t final_epochs,
                      std::size_t baseline_epochs) {
  std::size_t probe_epochs = 0;
  for (const auto& p : history) probe_epochs += p.epochs;
  return epoch_overhead(probe_epochs, final_epochs, baseline_epochs);
}

void write_lcurve_csv(std::ostream& os, const LCurve& curve) {
  write_csv_row(os, {"lambda", "E", "S", "phiE", "phiS", "flag"});
  for (const auto& p : curve.points) {
    write_csv_row(os, {format_double(p.lambda), format_double(p.deviation),
                       format_double(p.sparsity),
                       format_double(apply_transform(curve.phi, p.deviation)),
                       format_double(apply_transform(curve.phi, p.sparsity)),
                       p.diverged ? "diverged" : "ok"});
  }
}

LCurve read_lcurve_csv(std::istream& is, PenaltyTransform phi) {
  CsvTable table = read_csv(is);
  const std::size_t cl = table.column("lambda"), ce = table.column("E"), cs = table.column("S"),
                    cf = table.column("flag");
  LCurve curve;
  curve.phi = phi;
  for (const auto& row : table.rows) {
    curve.points.push_back({parse_double(row[cl]), parse_double(row[ce]), parse_double(row[cs]),
                            row[cf] == "diverged"});
  }
  curve.validate();
  return curve;
}

}  // namespace hsnet
