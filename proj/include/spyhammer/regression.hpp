#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spyhammer/profile.hpp"

namespace spyhammer {

enum class ModelSource { Donor, Victim };

std::string_view to_string(ModelSource s) noexcept;
ModelSource model_source_from_string(std::string_view name);

/// Order-3 polynomial from temperature (C) to flips per row, valid on
/// [t_min, t_max].
struct RegressionModel {
  Cubic coeffs{};
  double t_min = 50.0;
  double t_max = 95.0;
  ModelSource source = ModelSource::Victim;

  double operator()(double t) const noexcept { return coeffs(t); }
};

struct TempBerPoint {
  double temp_c = 0.0;
  double flips_per_row = 0.0;
};

/// Ordinary least-squares cubic. The normal equations are built in the
/// scaled variable x = (t - mid) / half_width of [t_min, t_max] and the
/// result is mapped back to raw powers of t.
/// Throws UnderdeterminedError with fewer than four distinct temperatures.
RegressionModel fit_cubic(std::span<const TempBerPoint> samples, double t_min = 50.0,
                          double t_max = 95.0, ModelSource source = ModelSource::Victim);

enum class EstimateKind { Absolute, RelativeDelta };

struct TemperatureEstimate {
  double value = 0.0;
  EstimateKind kind = EstimateKind::Absolute;
  double residual = 0.0;  ///< |P(t) - observed BER| at the chosen point
  bool clamped = false;   ///< no exact root in the domain
};

/// Solves P(t) = ber on the model domain: 0.1 C scan, then bisection. With
/// several roots the one nearest `prior` wins (domain midpoint without a
/// prior); with none, the domain point minimizing |P(t) - ber| is returned
/// and flagged as clamped.
TemperatureEstimate invert_model(const RegressionModel& model, double ber,
                                 std::optional<double> prior = std::nullopt);

/// All roots of P(t) = ber in the domain, ascending.
std::vector<double> model_roots(const RegressionModel& model, double ber);

struct RelativeEstimate {
  TemperatureEstimate delta;   ///< kind RelativeDelta
  TemperatureEstimate ref;     ///< resolved reference point
  TemperatureEstimate now;     ///< resolved current point
};

/// delta = invert(ber_now, prior = ref) - ref, ref = invert(ber_ref, prior_ref).
RelativeEstimate resolve_relative_change(const RegressionModel& model, double ber_ref,
                                         double ber_now,
                                         std::optional<double> prior_ref = std::nullopt);

TemperatureEstimate estimate_relative_change(const RegressionModel& model, double ber_ref,
                                             double ber_now,
                                             std::optional<double> prior_ref = std::nullopt);

/// Nearest-rank percentile of |errors|. Throws DomainError on an empty list
/// or q outside [0, 100].
double error_percentile(std::span<const double> errors, double q);

/// True when P is strictly monotone on the model domain.
bool is_injective(const RegressionModel& model);

/// Multiplier k mapping a victim's BER readings onto a donor model's scale:
/// least squares fit of k * [min, max] of the readings to the model's range
/// over its domain. Throws DomainError if readings are empty or all zero.
double fit_observation_gain(const RegressionModel& model, std::span<const double> readings);

void to_json(nlohmann::json& j, const RegressionModel& m);
void from_json(const nlohmann::json& j, RegressionModel& m);

}  // namespace spyhammer
