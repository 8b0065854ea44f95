#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cumix/rng.hpp"

namespace cumix {

/// Curriculum over the mix-ratio shape (beta) and the cross-domain
/// probability (alpha). beta ramps to beta_max over the first
/// `warmup_epochs` epochs; alpha then ramps from 0 to 1 over the next
/// `warmup_epochs`.
struct MixSchedule {
  std::size_t warmup_epochs = 10;
  double beta_max = 0.6;

  void validate() const;
};

struct CurriculumCoeffs {
  double alpha = 0.0;  // P(cross-domain partner)
  double beta = 0.0;   // lambda ~ Beta(beta, beta)
};

/// Exact curriculum values for 0-based epoch `epoch`.
CurriculumCoeffs schedule_coeffs(std::size_t epoch, const MixSchedule& schedule);

/// Below this shape, Beta(b, b) is replaced by its limit: a fair coin on {0, 1}.
inline constexpr double kBetaEndpointThreshold = 1e-3;

/// log of a Gamma(shape, 1) variate (Marsaglia-Tsang, with the
/// U^(1/shape) boost for shape < 1 carried out in log space).
double sample_log_gamma(double shape, RngStream& rng);
/// Beta(beta, beta), with the endpoint rule for beta < 1e-3.
double sample_lambda(double beta, RngStream& rng);
/// Bernoulli(alpha).
int sample_gamma(double alpha, RngStream& rng);

struct MixCoefficients {
  double lambda = 1.0;
  int gamma = 0;  // 1: mix with the cross-domain partner, 0: intra-domain

  bool operator==(const MixCoefficients&) const = default;
};

/// Batch-local indices of an anchor and its two mixing partners.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t cross = 0;  // different domain, unless `cross_fallback`
  std::size_t intra = 0;  // same domain, != anchor unless `intra_fallback`
  bool cross_fallback = false;  // batch has a single domain; gamma forced to 0
  bool intra_fallback = false;  // anchor is alone in its domain; intra == anchor

  bool operator==(const Triplet&) const = default;
};

/// Draws the cross-domain partner first, then the intra-domain partner.
Triplet sample_triplet(std::span<const std::uint32_t> domains, std::size_t anchor,
                       RngStream& rng);

/// lambda * a_i + (1 - lambda) * (gamma * a_j + (1 - gamma) * a_k)
std::vector<double> mix3(std::span<const double> a_i, std::span<const double> a_j,
                         std::span<const double> a_k, const MixCoefficients& coeffs);
/// lambda * a_i + (1 - lambda) * a_j
std::vector<double> mix2(std::span<const double> a_i, std::span<const double> a_j,
                         double lambda);

/// One anchor's complete draw for one mixing level.
struct MixDraw {
  Triplet triplet;
  MixCoefficients coeffs;
};

/// Which of the two independent mixing levels a draw belongs to.
enum class MixLevel { Input, Feature };

/// Draws a triplet and coefficients for every anchor of a batch from the
/// per-sample substream "mix.input"/"mix.feature" at (epoch, batch, anchor).
/// gamma is forced to 0 for anchors without a cross-domain partner.
std::vector<MixDraw> draw_mixes(std::span<const std::uint32_t> domains,
                                const CurriculumCoeffs& coeffs, MixLevel level,
                                std::uint64_t seed, std::uint64_t epoch,
                                std::uint64_t batch);

}  // namespace cumix
