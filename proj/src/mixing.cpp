#include "cumix/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cumix/error.hpp"
#include "cumix/log.hpp"

namespace cumix {

void MixSchedule::validate() const {
  if (warmup_epochs < 1) throw ConfigError("mix.warmup_epochs must be at least 1");
  if (!(beta_max > 0.0 && beta_max <= 10.0)) {
    throw ConfigError("mix.beta_max must lie in (0, 10]");
  }
}

CurriculumCoeffs schedule_coeffs(std::size_t epoch, const MixSchedule& schedule) {
  const std::size_t n = schedule.warmup_epochs;
  CurriculumCoeffs out;
  if (epoch >= n) {
    out.beta = schedule.beta_max;
  } else {
    // s * beta_max is exact in extended precision for the epoch counts used
    // here, so the only rounding is the final division.
    const long double num = static_cast<long double>(epoch) * schedule.beta_max;
    out.beta = static_cast<double>(num / static_cast<long double>(n));
  }
  if (epoch <= n) {
    out.alpha = 0.0;
  } else if (epoch >= 2 * n) {
    out.alpha = 1.0;
  } else {
    out.alpha = static_cast<double>(epoch - n) / static_cast<double>(n);
  }
  return out;
}

double sample_log_gamma(double shape, RngStream& rng) {
  if (shape < 1.0) {
    return sample_log_gamma(shape + 1.0, rng) + std::log(rng.uniform_open()) / shape;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (u < 1.0 - 0.0331 * (x * x) * (x * x) ||
        std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return std::log(d) + std::log(v);
    }
  }
}

double sample_lambda(double beta, RngStream& rng) {
  if (beta < kBetaEndpointThreshold) return rng.uniform() < 0.5 ? 0.0 : 1.0;
  const double lx = sample_log_gamma(beta, rng);
  const double ly = sample_log_gamma(beta, rng);
  // x / (x + y) computed from logs so that tiny shapes cannot produce 0/0.
  return std::clamp(1.0 / (1.0 + std::exp(ly - lx)), 0.0, 1.0);
}

int sample_gamma(double alpha, RngStream& rng) {
  if (alpha <= 0.0) return 0;
  if (alpha >= 1.0) return 1;
  return rng.uniform() < alpha ? 1 : 0;
}

Triplet sample_triplet(std::span<const std::uint32_t> domains, std::size_t anchor,
                       RngStream& rng) {
  if (domains.empty()) throw ValidationError("sample_triplet: empty batch");
  if (anchor >= domains.size()) {
    throw ValidationError("sample_triplet: anchor " + std::to_string(anchor) +
                          " outside batch of " + std::to_string(domains.size()));
  }
  const std::uint32_t d = domains[anchor];
  std::vector<std::size_t> cross;
  std::vector<std::size_t> intra;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i] != d) {
      cross.push_back(i);
    } else if (i != anchor) {
      intra.push_back(i);
    }
  }

  Triplet t;
  t.anchor = anchor;
  if (!cross.empty()) {
    t.cross = cross[rng.below(cross.size())];
  } else {
    t.cross_fallback = true;
    t.cross = intra.empty() ? anchor : intra[rng.below(intra.size())];
  }
  if (!intra.empty()) {
    t.intra = intra[rng.below(intra.size())];
  } else {
    t.intra_fallback = true;
    t.intra = anchor;
    warn("sample_triplet: anchor " + std::to_string(anchor) + " is the only sample of domain " +
         std::to_string(d) + " in its batch; mixing it with itself");
  }
  return t;
}

std::vector<double> mix3(std::span<const double> a_i, std::span<const double> a_j,
                         std::span<const double> a_k, const MixCoefficients& coeffs) {
  if (a_i.size() != a_j.size() || a_i.size() != a_k.size()) {
    throw DimensionError("mix3: operands of length " + std::to_string(a_i.size()) + ", " +
                         std::to_string(a_j.size()) + ", " + std::to_string(a_k.size()));
  }
  const double lam = coeffs.lambda;
  const double g = static_cast<double>(coeffs.gamma);
  std::vector<double> out(a_i.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = lam * a_i[n] + (1.0 - lam) * (g * a_j[n] + (1.0 - g) * a_k[n]);
  }
  return out;
}

std::vector<double> mix2(std::span<const double> a_i, std::span<const double> a_j,
                         double lambda) {
  if (a_i.size() != a_j.size()) {
    throw DimensionError("mix2: operands of length " + std::to_string(a_i.size()) +
                         " and " + std::to_string(a_j.size()));
  }
  std::vector<double> out(a_i.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = lambda * a_i[n] + (1.0 - lambda) * a_j[n];
  }
  return out;
}

std::vector<MixDraw> draw_mixes(std::span<const std::uint32_t> domains,
                                const CurriculumCoeffs& coeffs, MixLevel level,
                                std::uint64_t seed, std::uint64_t epoch,
                                std::uint64_t batch) {
  const char* name = level == MixLevel::Input ? "mix.input" : "mix.feature";
  std::vector<MixDraw> draws;
  draws.reserve(domains.size());
  for (std::size_t i = 0; i < domains.size(); ++i) {
    RngStream rng(seed, name, {epoch, batch, i});
    MixDraw draw;
    draw.triplet = sample_triplet(domains, i, rng);
    draw.coeffs.lambda = sample_lambda(coeffs.beta, rng);
    draw.coeffs.gamma = sample_gamma(coeffs.alpha, rng);
    if (draw.triplet.cross_fallback) draw.coeffs.gamma = 0;
    draws.push_back(draw);
  }
  return draws;
}

}  // namespace cumix
