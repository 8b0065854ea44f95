// Acceptance checks. Prints one PASS/FAIL/INFO/SKIP line per criterion and
// exits non-zero when a gating criterion fails.
//
//   acceptance [--configs DIR] [--only N] [--calibrate]
//
// --calibrate reruns the headline experiment and rewrites
// DIR/calibration.json with the measured margin and its floor.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "cumix/config.hpp"
#include "cumix/data.hpp"
#include "cumix/losses.hpp"
#include "cumix/synthetic.hpp"
#include "cumix/train.hpp"
#include "oracle.hpp"
#include "schedule_oracle.hpp"
#include "support.hpp"

using namespace cumix;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  enum class Kind { Pass, Fail, Info, Skip } kind;
  std::string detail;
};

Verdict pass(std::string d) { return {Verdict::Kind::Pass, std::move(d)}; }
Verdict fail(std::string d) { return {Verdict::Kind::Fail, std::move(d)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return json::parse(in);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// 1 ---------------------------------------------------------------------------

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t models = 0, checked = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const bool identity = seed % 4 == 0;
    auto p = oracle::micro_problem(1000 + seed, 2 + seed % 3, identity, seed % 2 == 1);
    const auto in = oracle::random_draws(p.batch, seed);
    const auto feat = oracle::random_draws(p.batch, seed + 500);
    const CumixDraws both{in, feat};
    const LossWeights w{0.6, 1.7};

    struct Term {
      const char* name;
      ModelGrads grads;
      std::function<double(const Model&)> oracle_loss;
    };
    std::vector<Term> terms;
    terms.push_back({"loss_agg", loss_agg(p.model, p.batch).grads,
                     [&](const Model& m) { return oracle::loss_agg(m, p.batch); }});
    terms.push_back({"loss_mix_input", loss_mix_input(p.model, p.batch, in).grads,
                     [&](const Model& m) { return oracle::loss_mix_input(m, p.batch, in); }});
    terms.push_back({"loss_mix_feature", loss_mix_feature(p.model, p.batch, feat).grads,
                     [&](const Model& m) { return oracle::loss_mix_feature(m, p.batch, feat); }});
    terms.push_back({"loss_cumix", loss_cumix(p.model, p.batch, both, w).grads,
                     [&](const Model& m) { return oracle::loss_cumix(m, p.batch, both, w); }});
    for (auto& t : terms) {
      const auto fd = oracle::numeric_gradient(p.model, t.oracle_loss);
      const ModelGrads& g = t.grads;
      const auto res = oracle::compare_gradients(fd, tensors(g));
      checked += res.checked;
      worst = std::max(worst, res.worst_rel);
      if (!res.ok) {
        return fail(std::string(t.name) + " on micro-model " + std::to_string(seed) + ": " + res.detail);
      }
    }
    ++models;
  }
  const double secs = seconds_since(t0);
  const std::string detail = std::to_string(models) + " micro-models, " + std::to_string(checked) +
                             " partials, worst rel-err " + fmt(worst, 8) + ", " + fmt(secs, 2) + " s";
  return secs < 30.0 ? pass(detail) : fail("too slow: " + detail);
}

// 2 ---------------------------------------------------------------------------

Verdict schedule_exactness() {
  std::size_t cases = 0;
  for (std::size_t n : {1, 10, 30}) {
    for (double bmax : {0.2, 0.6, 0.8}) {
      for (std::size_t s = 0; s <= 3 * n; ++s) {
        const auto got = schedule_coeffs(s, {n, bmax});
        const auto want = oracle::closed_form(s, n, bmax);
        if (!oracle::is_correctly_rounded(got.beta, want.beta) ||
            !oracle::is_correctly_rounded(got.alpha, want.alpha)) {
          return fail("s=" + std::to_string(s) + " N=" + std::to_string(n) + " beta_max=" + fmt(bmax, 1));
        }
        ++cases;
      }
    }
  }
  return pass(std::to_string(cases) + " (s, N, beta_max) cases equal the rational closed form");
}

// 3 ---------------------------------------------------------------------------

Verdict oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t cases = 0;
  auto compare = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
    ++cases;
  };
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto p = oracle::micro_problem(2000 + seed, 1 + seed % 8, seed % 3 == 0, seed % 2 == 0);
    const auto in = oracle::random_draws(p.batch, seed);
    const auto feat = oracle::random_draws(p.batch, seed + 7);
    RngStream rng(seed, "acceptance.mixup");
    const auto pairs = draw_mixup_pairs(p.batch.size(), 0.5, rng);
    const LossWeights w{0.4, 2.2};
    compare(loss_agg(p.model, p.batch).loss, oracle::loss_agg(p.model, p.batch));
    compare(loss_mix_input(p.model, p.batch, in).loss, oracle::loss_mix_input(p.model, p.batch, in));
    compare(loss_mix_feature(p.model, p.batch, feat).loss, oracle::loss_mix_feature(p.model, p.batch, feat));
    compare(loss_mixup_pairs(p.model, p.batch, pairs).loss, oracle::loss_mixup(p.model, p.batch, pairs));
    compare(loss_cumix(p.model, p.batch, {in, feat}, w).report.total,
            oracle::loss_cumix(p.model, p.batch, {in, feat}, w));
  }
  const double secs = seconds_since(t0);
  const std::string detail = std::to_string(cases) + " loss evaluations, worst rel diff " +
                             std::to_string(worst) + ", " + fmt(secs, 2) + " s";
  if (worst > 1e-10) return fail(detail);
  return secs < 10.0 ? pass(detail) : fail("too slow: " + detail);
}

// 4 ---------------------------------------------------------------------------

Verdict distributions() {
  const int n = 100000;
  RngStream lam_rng(42, "acceptance.beta");
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double l = sample_lambda(2.0, lam_rng);
    sum += l;
    sq += l * l;
  }
  const double m = sum / n;
  const double var = sq / n - m * m;
  RngStream coin_rng(42, "acceptance.bernoulli");
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += sample_gamma(0.5, coin_rng);
  const double freq = static_cast<double>(ones) / n;
  const std::string detail = "Beta(2,2) mean " + fmt(m) + " var " + fmt(var) + "; Bernoulli(0.5) freq " + fmt(freq);
  const bool ok = std::abs(m - 0.5) <= 0.01 && std::abs(var - 0.05) <= 0.005 && std::abs(freq - 0.5) <= 0.005;
  return ok ? pass(detail) : fail(detail);
}

// 5 ---------------------------------------------------------------------------

Verdict degeneracies() {
  // eta = 0: CuMix training follows AGG epoch by epoch.
  SynthConfig sc;
  sc.samples_per_class_per_domain = 15;
  const auto data = generate_synthetic(sc);
  RunConfig agg;
  agg.mode = Mode::Agg;
  agg.model.hidden_dims = {16};
  agg.optim.epochs = 6;
  agg.batch_size = 32;
  agg.mix.warmup_epochs = 2;
  RunConfig cu = agg;
  cu.mode = Mode::Cumix;
  cu.loss = {0.0, 0.0};
  const auto a = train_run(data.bundle, data.split, agg).report.epochs;
  const auto c = train_run(data.bundle, data.split, cu).report.epochs;
  double epoch_gap = 0.0;
  for (std::size_t e = 0; e < a.size(); ++e) {
    epoch_gap = std::max({epoch_gap, std::abs(a[e].loss_agg - c[e].loss_agg), std::abs(a[e].total - c[e].total)});
  }

  // lambda = 1: every mix loss is loss_agg.
  double lambda_gap = 0.0;
  double identity_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = oracle::micro_problem(3000 + seed, 2 + seed % 7, seed % 2 == 0, seed % 3 == 0);
    auto draws = oracle::random_draws(p.batch, seed);
    std::vector<MixPair> pairs;
    for (auto& d : draws) {
      d.coeffs.lambda = 1.0;
      pairs.push_back({d.triplet.anchor, d.triplet.cross, 1.0});
    }
    const double base = loss_agg(p.model, p.batch).loss;
    lambda_gap = std::max({lambda_gap, std::abs(loss_mix_input(p.model, p.batch, draws).loss - base),
                           std::abs(loss_mix_feature(p.model, p.batch, draws).loss - base),
                           std::abs(loss_mixup_pairs(p.model, p.batch, pairs).loss - base)});

    // Identity extractor: both levels agree on shared draws.
    const auto q = oracle::micro_problem(4000 + seed, 2 + seed % 7, true, seed % 2 == 0);
    const auto shared = oracle::random_draws(q.batch, seed);
    identity_gap = std::max(identity_gap, std::abs(loss_mix_input(q.model, q.batch, shared).loss -
                                                   loss_mix_feature(q.model, q.batch, shared).loss));
  }
  const std::string detail = "eta=0 epoch gap " + std::to_string(epoch_gap) + "; lambda=1 gap " +
                             std::to_string(lambda_gap) + "; identity-f level gap " + std::to_string(identity_gap);
  return epoch_gap <= 1e-9 && lambda_gap <= 1e-9 && identity_gap <= 1e-12 ? pass(detail) : fail(detail);
}

// 6 and 7 -----------------------------------------------------------------------

struct Headline {
  std::map<Mode, std::vector<double>> acc;
  std::vector<double> margins;
  double seconds = 0.0;
};

constexpr std::uint64_t kHeadlineSeeds = 5;

Headline run_headline(const fs::path& configs, const std::vector<Mode>& modes) {
  const auto t0 = std::chrono::steady_clock::now();
  const SynthConfig synth = synth_config_from_json([&] {
    json d = default_synth_config_json();
    merge_strict(d, read_json(configs / "synth_default.json"));
    return d;
  }());
  json run_doc = default_run_config_json();
  merge_strict(run_doc, read_json(configs / "headline.json"));
  const RunConfig base = run_config_from_json(run_doc);

  Headline h;
  for (std::uint64_t seed = 0; seed < kHeadlineSeeds; ++seed) {
    SynthConfig sc = synth;
    sc.seed = seed;
    const auto data = generate_synthetic(sc);
    for (Mode mode : modes) {
      RunConfig cfg = base;
      cfg.mode = mode;
      cfg.seed = seed;
      h.acc[mode].push_back(train_run(data.bundle, data.split, cfg).report.evals.at(0).per_class_accuracy);
    }
  }
  for (std::size_t i = 0; i < kHeadlineSeeds; ++i) {
    h.margins.push_back(h.acc[Mode::Cumix][i] - h.acc[Mode::Agg][i]);
  }
  h.seconds = seconds_since(t0);
  return h;
}

Verdict headline(const Headline& h, const fs::path& configs) {
  const json cal = read_json(configs / "calibration.json");
  const double floor = cal.at("headline").at("margin_floor").get<double>();
  const double agg = mean(h.acc.at(Mode::Agg));
  const double cumix = mean(h.acc.at(Mode::Cumix));
  const double margin = cumix - agg;
  const std::string detail = "unseen@test per-class acc over 5 seeds: CUMIX " + fmt(cumix) + " vs AGG " +
                             fmt(agg) + ", margin " + fmt(margin) + " (floor " + fmt(floor) + "), " +
                             fmt(h.seconds, 1) + " s";
  if (!(cumix > agg)) return fail(detail);
  if (margin < floor) return fail("below regression floor: " + detail);
  if (h.seconds >= 120.0) return fail("too slow: " + detail);
  return pass(detail);
}

Verdict ablation_order(const Headline& h) {
  const double feat = mean(h.acc.at(Mode::CumixFeatureOnly));
  const double in = mean(h.acc.at(Mode::CumixInputOnly));
  const std::string detail = "feature-only " + fmt(feat) + " vs input-only " + fmt(in) +
                             (feat >= in ? " (feature-level mixing at least as good)"
                                         : " (deviation: input-level mixing ahead on this benchmark)");
  return {Verdict::Kind::Info, detail};
}

// 8 -----------------------------------------------------------------------------

Verdict determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::TempDir dir;
  std::ostringstream out, err;
  auto cli = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "cumix");
    return cumix::cli::run(args, out, err);
  };
  if (cli({"synth", "--out", (dir / "data").string()}) != 0) return fail("synth failed: " + err.str());
  for (const char* name : {"a", "b"}) {
    if (cli({"train", "--data", (dir / "data").string(), "--out", (dir / name).string(), "--preset",
             "synthetic", "--seed", "7", "--deterministic"}) != 0) {
      return fail("train failed: " + err.str());
    }
  }
  const bool same = testing::read_text(dir / "a" / "report.json") == testing::read_text(dir / "b" / "report.json");
  const double secs = seconds_since(t0);
  const std::string detail = std::string(same ? "byte-identical" : "DIFFERENT") + " report.json from two train runs, " +
                             fmt(secs, 2) + " s";
  return same && secs < 60.0 ? pass(detail) : fail(detail);
}

// 9 -----------------------------------------------------------------------------

Verdict external_cub() {
  const char* path = std::getenv("CUMIX_CUB_DATA");
  if (!path || !*path) return {Verdict::Kind::Skip, "set CUMIX_CUB_DATA to a converted CUB bundle to run"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_bundle(path);
  json doc = default_run_config_json();
  merge_strict(doc, preset_json("cub"));
  const RunConfig cfg = run_config_from_json(doc);
  const auto report = train_run(data.bundle, data.split, cfg).report;
  const double acc = report.evals.at(0).per_class_accuracy;
  const std::string detail = report.evals.at(0).name + " per-class " + fmt(acc * 100.0, 1) +
                             " (target >= 57.0), " + fmt(seconds_since(t0), 0) + " s";
  return {Verdict::Kind::Info, (acc >= 0.57 ? "met: " : "not met: ") + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cumix acceptance checks"};
  std::string configs = CUMIX_CONFIG_DIR;
  int only = 0;
  bool calibrate = false;
  app.add_option("--configs", configs, "Directory with synth_default.json, headline.json, calibration.json");
  app.add_option("--only", only, "Run a single criterion (1-9)");
  app.add_flag("--calibrate", calibrate, "Rerun the headline experiment and rewrite calibration.json");
  CLI11_PARSE(app, argc, argv);

  set_warning_sink([](const std::string&) {});

  if (calibrate) {
    const Headline h = run_headline(configs, {Mode::Agg, Mode::Cumix});
    const double m = mean(h.margins);
    const double sd = sample_std(h.margins);
    json cal = fs::exists(fs::path(configs) / "calibration.json") ? read_json(fs::path(configs) / "calibration.json") : json::object();
    cal["headline"] = {{"seeds", kHeadlineSeeds},
                       {"agg_per_seed", h.acc.at(Mode::Agg)},
                       {"cumix_per_seed", h.acc.at(Mode::Cumix)},
                       {"margin_mean", m},
                       {"margin_std", sd},
                       {"margin_floor", m - sd}};
    std::ofstream(fs::path(configs) / "calibration.json") << cal.dump(2) << "\n";
    std::cout << "margin " << fmt(m) << " std " << fmt(sd) << " floor " << fmt(m - sd) << "\n";
    return 0;
  }

  struct Criterion {
    int id;
    bool gating;
    const char* title;
    std::function<Verdict()> run;
  };
  std::optional<Headline> headline_runs;
  auto headline_data = [&]() -> const Headline& {
    if (!headline_runs) {
      headline_runs = run_headline(configs, {Mode::Agg, Mode::Cumix, Mode::CumixInputOnly, Mode::CumixFeatureOnly});
    }
    return *headline_runs;
  };
  const std::vector<Criterion> criteria{
      {1, true, "gradient suite", gradient_suite},
      {2, true, "schedule exactness", schedule_exactness},
      {3, true, "oracle equivalence", oracle_equivalence},
      {4, true, "distributional checks", distributions},
      {5, true, "degeneracy identities", degeneracies},
      {6, true, "synthetic ZSL+DG headline", [&] { return headline(headline_data(), configs); }},
      {7, false, "ablation ordering", [&] { return ablation_order(headline_data()); }},
      {8, true, "determinism", determinism},
      {9, false, "external CUB check", external_cub},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = fail(std::string("exception: ") + e.what());
    }
    const char* tag = "INFO";
    switch (v.kind) {
      case Verdict::Kind::Pass: tag = "PASS"; break;
      case Verdict::Kind::Fail: tag = c.gating ? "FAIL" : "INFO"; break;
      case Verdict::Kind::Info: tag = "INFO"; break;
      case Verdict::Kind::Skip: tag = "SKIP"; break;
    }
    if (v.kind == Verdict::Kind::Fail && c.gating) ++failures;
    std::cout << tag << " [" << c.id << "] " << c.title << (c.gating ? "" : " (non-gating)") << ": "
              << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
