#include "spyhammer/regression.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <string>

#include <Eigen/Dense>

#include "spyhammer/errors.hpp"

namespace spyhammer {
namespace {

constexpr double kScanStep = 0.1;
constexpr double kRootTolerance = 1e-9;

std::vector<double> scan_grid(const RegressionModel& model) {
  const double span = model.t_max - model.t_min;
  const auto steps = static_cast<std::size_t>(std::max(1.0, std::round(span / kScanStep)));
  std::vector<double> grid(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    grid[i] = model.t_min + span * static_cast<double>(i) / static_cast<double>(steps);
  return grid;
}

double bisect(const RegressionModel& model, double ber, double lo, double hi) {
  double flo = model(lo) - ber;
  while (hi - lo > kRootTolerance) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = model(mid) - ber;
    if (fmid == 0.0) return mid;
    if ((fmid < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Golden-section search for the minimum of |P(t) - ber| on [lo, hi].
double closest_point(const RegressionModel& model, double ber, double lo, double hi) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto cost = [&](double t) { return std::abs(model(t) - ber); };
  double a = lo;
  double b = hi;
  while (b - a > kRootTolerance) {
    const double c = b - inv_phi * (b - a);
    const double d = a + inv_phi * (b - a);
    if (cost(c) < cost(d)) b = d;
    else a = c;
  }
  return 0.5 * (a + b);
}

}  // namespace

std::string_view to_string(ModelSource s) noexcept {
  return s == ModelSource::Donor ? "donor" : "victim";
}

ModelSource model_source_from_string(std::string_view name) {
  if (name == "donor") return ModelSource::Donor;
  if (name == "victim") return ModelSource::Victim;
  throw ConfigError("unknown model source '" + std::string(name) + "'");
}

RegressionModel fit_cubic(std::span<const TempBerPoint> samples, double t_min, double t_max,
                          ModelSource source) {
  std::set<double> distinct;
  for (const TempBerPoint& s : samples) distinct.insert(s.temp_c);
  if (distinct.size() < 4)
    throw UnderdeterminedError("cubic fit needs at least 4 distinct temperatures, got " +
                               std::to_string(distinct.size()));
  if (!(t_max > t_min)) throw DomainError("model domain is empty");

  const double mid = 0.5 * (t_min + t_max);
  const double half = 0.5 * (t_max - t_min);
  Eigen::Matrix4d normal = Eigen::Matrix4d::Zero();
  Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
  for (const TempBerPoint& s : samples) {
    const double x = (s.temp_c - mid) / half;
    const Eigen::Vector4d row(1.0, x, x * x, x * x * x);
    normal += row * row.transpose();
    rhs += row * s.flips_per_row;
  }
  const Eigen::Vector4d a = normal.ldlt().solve(rhs);

  // sum_k a_k ((t - mid) / half)^k expanded into powers of t.
  std::array<double, 4> c{};
  constexpr std::array<std::array<double, 4>, 4> binom{{{1, 0, 0, 0},
                                                        {1, 1, 0, 0},
                                                        {1, 2, 1, 0},
                                                        {1, 3, 3, 1}}};
  for (int k = 0; k < 4; ++k) {
    const double ak = a[k] / std::pow(half, k);
    for (int j = 0; j <= k; ++j) c[j] += ak * binom[k][j] * std::pow(-mid, k - j);
  }
  RegressionModel model;
  model.coeffs = {c[3], c[2], c[1], c[0]};
  model.t_min = t_min;
  model.t_max = t_max;
  model.source = source;
  return model;
}

std::vector<double> model_roots(const RegressionModel& model, double ber) {
  const std::vector<double> grid = scan_grid(model);
  std::vector<double> roots;
  double prev = model(grid[0]) - ber;
  if (prev == 0.0) roots.push_back(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double cur = model(grid[i]) - ber;
    if (cur == 0.0) {
      roots.push_back(grid[i]);
    } else if (prev != 0.0 && (cur < 0.0) != (prev < 0.0)) {
      roots.push_back(bisect(model, ber, grid[i - 1], grid[i]));
    }
    prev = cur;
  }
  return roots;
}

TemperatureEstimate invert_model(const RegressionModel& model, double ber,
                                 std::optional<double> prior) {
  if (!(ber >= 0.0)) throw DomainError("BER must be non-negative");
  TemperatureEstimate est;
  est.kind = EstimateKind::Absolute;
  const std::vector<double> roots = model_roots(model, ber);
  if (!roots.empty()) {
    const double target = prior.value_or(0.5 * (model.t_min + model.t_max));
    double best = roots.front();
    for (double r : roots)
      if (std::abs(r - target) < std::abs(best - target)) best = r;
    est.value = best;
    est.residual = std::abs(model(best) - ber);
    return est;
  }

  const std::vector<double> grid = scan_grid(model);
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (std::abs(model(grid[i]) - ber) < std::abs(model(grid[best]) - ber)) best = i;
  const double lo = grid[best == 0 ? 0 : best - 1];
  const double hi = grid[std::min(best + 1, grid.size() - 1)];
  double t = closest_point(model, ber, lo, hi);
  if (std::abs(model(grid[best]) - ber) <= std::abs(model(t) - ber)) t = grid[best];
  est.value = std::clamp(t, model.t_min, model.t_max);
  est.residual = std::abs(model(est.value) - ber);
  est.clamped = true;
  return est;
}

RelativeEstimate resolve_relative_change(const RegressionModel& model, double ber_ref,
                                         double ber_now, std::optional<double> prior_ref) {
  RelativeEstimate r;
  r.ref = invert_model(model, ber_ref, prior_ref);
  r.now = invert_model(model, ber_now, r.ref.value);
  r.delta.kind = EstimateKind::RelativeDelta;
  r.delta.value = r.now.value - r.ref.value;
  r.delta.residual = std::max(r.ref.residual, r.now.residual);
  r.delta.clamped = r.ref.clamped || r.now.clamped;
  return r;
}

TemperatureEstimate estimate_relative_change(const RegressionModel& model, double ber_ref,
                                             double ber_now, std::optional<double> prior_ref) {
  return resolve_relative_change(model, ber_ref, ber_now, prior_ref).delta;
}

double error_percentile(std::span<const double> errors, double q) {
  if (errors.empty()) throw DomainError("percentile of an empty error list");
  if (!(q >= 0.0 && q <= 100.0)) throw DomainError("percentile must lie in [0, 100]");
  std::vector<double> mags(errors.size());
  std::transform(errors.begin(), errors.end(), mags.begin(), [](double e) { return std::abs(e); });
  std::sort(mags.begin(), mags.end());
  const double n = static_cast<double>(mags.size());
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, mags.size());
  return mags[rank - 1];
}

bool is_injective(const RegressionModel& model) {
  const std::vector<double> grid = scan_grid(model);
  int direction = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double d = model(grid[i]) - model(grid[i - 1]);
    const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
    if (s == 0) return false;
    if (direction != 0 && s != direction) return false;
    direction = s;
  }
  return true;
}

double fit_observation_gain(const RegressionModel& model, std::span<const double> readings) {
  if (readings.empty()) throw DomainError("no readings to fit a gain");
  const auto [bmin_it, bmax_it] = std::minmax_element(readings.begin(), readings.end());
  const double bmin = *bmin_it;
  const double bmax = *bmax_it;
  if (!(bmax > 0.0)) throw DomainError("all readings are zero");
  double pmin = model(model.t_min);
  double pmax = pmin;
  for (double t : scan_grid(model)) {
    pmin = std::min(pmin, model(t));
    pmax = std::max(pmax, model(t));
  }
  return (pmax * bmax + pmin * bmin) / (bmax * bmax + bmin * bmin);
}

void to_json(nlohmann::json& j, const RegressionModel& m) {
  j = nlohmann::json{{"c3", m.coeffs.c3},   {"c2", m.coeffs.c2}, {"c1", m.coeffs.c1},
                     {"c0", m.coeffs.c0},   {"t_min", m.t_min},  {"t_max", m.t_max},
                     {"source", std::string(to_string(m.source))}};
}

void from_json(const nlohmann::json& j, RegressionModel& m) {
  try {
    m.coeffs = {j.at("c3").get<double>(), j.at("c2").get<double>(), j.at("c1").get<double>(),
                j.at("c0").get<double>()};
    m.t_min = j.value("t_min", 50.0);
    m.t_max = j.value("t_max", 95.0);
    m.source = model_source_from_string(j.value("source", std::string("victim")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed regression model: ") + e.what());
  }
}

}  // namespace spyhammer
