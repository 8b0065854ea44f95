#include "cumix/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "cumix/error.hpp"
#include "cumix/rng.hpp"

namespace cumix {
namespace {

std::vector<double> unit_vector(std::size_t dim, RngStream& rng) {
  std::vector<double> v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (double& x : v) {
      x = rng.normal();
      sq += x * x;
    }
  } while (sq == 0.0);
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Removes the components along `basis` and normalizes; false if nothing is left.
bool orthonormalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    const double p = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
  }
  const double sq = dot(v, v);
  if (sq <= 1e-24) return false;
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
  return true;
}

// Top two left-singular directions of `map` (dim x attr_dim), found by
// subspace iteration on map^T map. These span the plane in which class
// prototypes vary the most, so a rotation there actually moves them.
// Completed with random directions when the map has rank < 2.
std::pair<std::vector<double>, std::vector<double>> principal_plane(const Matrix& map,
                                                                    RngStream& rng) {
  const std::size_t dim = map.rows();
  const std::size_t k = map.cols();
  const Matrix gram = matmul_tn(map, map);  // k x k

  std::vector<std::vector<double>> q;
  for (std::size_t j = 0; j < std::min<std::size_t>(2, k); ++j) {
    std::vector<double> v = unit_vector(k, rng);
    if (orthonormalize(v, q)) q.push_back(std::move(v));
  }
  for (int it = 0; it < 300 && !q.empty(); ++it) {
    std::vector<std::vector<double>> next;
    for (const auto& v : q) {
      std::vector<double> w(k, 0.0);
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < k; ++c) w[r] += gram(r, c) * v[c];
      }
      if (!orthonormalize(w, next)) break;
      next.push_back(std::move(w));
    }
    if (next.size() < q.size()) break;
    q = std::move(next);
  }

  std::vector<std::vector<double>> basis;
  for (const auto& v : q) {
    std::vector<double> u(dim, 0.0);
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t c = 0; c < k; ++c) u[r] += map(r, c) * v[c];
    }
    if (orthonormalize(u, basis)) basis.push_back(std::move(u));
  }
  while (basis.size() < 2) {
    std::vector<double> u = unit_vector(dim, rng);
    if (orthonormalize(u, basis)) basis.push_back(std::move(u));
  }
  return {std::move(basis[0]), std::move(basis[1])};
}

std::string domain_label(std::size_t id, const DomainParams& p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "d%zu_rot%g", id, p.angle_deg);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (attr_dim < 1 || input_dim < 2) {
    throw ConfigError("synth: attr_dim must be >= 1 and input_dim >= 2");
  }
  if (n_seen_classes < 1 || n_unseen_classes < 1) {
    throw ConfigError("synth: need at least one seen and one unseen class");
  }
  if (train_domains.empty()) throw ConfigError("synth: need at least one train domain");
  if (samples_per_class_per_domain < 1) {
    throw ConfigError("synth: samples_per_class_per_domain must be >= 1");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("synth: noise_sigma must be finite and non-negative");
  }
  if (!(map_scale > 0.0) || !std::isfinite(map_scale)) {
    throw ConfigError("synth: map_scale must be positive");
  }
  for (const auto* list : {&train_domains, &test_domains}) {
    for (const DomainParams& d : *list) {
      if (!std::isfinite(d.angle_deg) || !std::isfinite(d.bias_scale)) {
        throw ConfigError("synth: domain angles and bias scales must be finite");
      }
    }
  }
}

LoadedBundle generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n_classes = cfg.n_seen_classes + cfg.n_unseen_classes;
  const std::size_t dim = cfg.input_dim;

  LoadedBundle out;
  DatasetBundle& b = out.bundle;
  b.name = "synthetic-seed" + std::to_string(cfg.seed);

  RngStream attr_rng(cfg.seed, "synth.attributes");
  b.embeddings = Matrix(n_classes, cfg.attr_dim);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto a = unit_vector(cfg.attr_dim, attr_rng);
    std::ranges::copy(a, b.embeddings.row(c).begin());
    char name[32];
    std::snprintf(name, sizeof name, "class%02zu", c);
    b.class_names.emplace_back(name);
  }

  RngStream map_rng(cfg.seed, "synth.map");
  Matrix map(dim, cfg.attr_dim);
  const double map_std = cfg.map_scale / std::sqrt(static_cast<double>(cfg.attr_dim));
  for (double& v : map.data()) v = map_std * map_rng.normal();
  const Matrix prototypes = matmul_nt(b.embeddings, map);  // n_classes x dim

  RngStream plane_rng(cfg.seed, "synth.plane");
  const auto [u1, u2] = principal_plane(map, plane_rng);

  std::vector<DomainParams> domains = cfg.train_domains;
  domains.insert(domains.end(), cfg.test_domains.begin(), cfg.test_domains.end());

  std::vector<double> values;
  std::vector<double> x(dim);
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const DomainParams& p = domains[d];
    b.domain_names.push_back(domain_label(d, p));
    (d < cfg.train_domains.size() ? out.split.train_domains : out.split.test_domains)
        .push_back(static_cast<std::uint32_t>(d));

    const double theta = p.angle_deg * std::numbers::pi / 180.0;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    RngStream bias_rng(cfg.seed, "synth.bias", {d});
    std::vector<double> bias = unit_vector(dim, bias_rng);
    for (double& v : bias) v *= p.bias_scale;

    for (std::size_t c = 0; c < n_classes; ++c) {
      // Rotation inside span(u1, u2): the in-plane component turns by theta,
      // the orthogonal complement is untouched.
      const auto proto = prototypes.row(c);
      double c1 = 0.0;
      double c2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        c1 += u1[i] * proto[i];
        c2 += u2[i] * proto[i];
      }
      const double r1 = cos_t * c1 - sin_t * c2;
      const double r2 = sin_t * c1 + cos_t * c2;
      std::vector<double> center(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        center[i] = proto[i] + (r1 - c1) * u1[i] + (r2 - c2) * u2[i] + bias[i];
      }

      RngStream noise_rng(cfg.seed, "synth.noise", {d, c});
      for (std::size_t s = 0; s < cfg.samples_per_class_per_domain; ++s) {
        for (std::size_t i = 0; i < dim; ++i) {
          x[i] = center[i] + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * noise_rng.normal() : 0.0);
        }
        values.insert(values.end(), x.begin(), x.end());
        b.labels.push_back(static_cast<std::uint32_t>(c));
        b.domains.push_back(static_cast<std::uint32_t>(d));
      }
    }
  }
  b.features = Matrix(b.labels.size(), dim, std::move(values));

  for (std::size_t c = 0; c < n_classes; ++c) {
    (c < cfg.n_seen_classes ? out.split.seen_classes : out.split.unseen_classes)
        .push_back(static_cast<std::uint32_t>(c));
  }
  return out;
}

}  // namespace cumix
