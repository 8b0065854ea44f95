#include "cumix/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "cumix/error.hpp"
#include "cumix/log.hpp"
#include "cumix/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cumix {
namespace {

constexpr std::uint16_t kMatrixVersion = 1;
constexpr std::size_t kNotSeen = std::numeric_limits<std::size_t>::max();
constexpr const char* kLabelsHeader = "index,class_id,domain_id";

std::set<std::uint32_t> as_set(const std::vector<std::uint32_t>& v) {
  return {v.begin(), v.end()};
}

std::vector<std::uint32_t> intersection(const std::vector<std::uint32_t>& a,
                                        const std::vector<std::uint32_t>& b) {
  const auto sa = as_set(a);
  const auto sb = as_set(b);
  std::vector<std::uint32_t> out;
  std::ranges::set_intersection(sa, sb, std::back_inserter(out));
  return out;
}

std::string join_ids(const std::vector<std::uint32_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s;
}

void check_ids(const char* field, const std::vector<std::uint32_t>& ids, std::size_t limit,
               std::vector<std::string>& out) {
  std::set<std::uint32_t> seen;
  for (std::uint32_t id : ids) {
    if (id >= limit) {
      out.push_back(std::string("splits: ") + field + " references id " + std::to_string(id) +
                    " but only " + std::to_string(limit) + " exist");
    }
    if (!seen.insert(id).second) {
      out.push_back(std::string("splits: ") + field + " lists id " + std::to_string(id) +
                    " twice");
    }
  }
}

template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <typename T>
T json_field(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw FormatError(path.string() + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": key '" + key + "': " + e.what());
  }
}

std::uint32_t parse_u32(std::string_view field, const fs::path& path, std::size_t line) {
  std::uint32_t v = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": bad integer '" +
                      std::string(field) + "'");
  }
  return v;
}

void read_labels(const fs::path& path, DatasetBundle& b) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kLabelsHeader) {
    throw FormatError(path.string() + ": header must be '" + kLabelsHeader + "'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
      fields.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 3) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    }
    const std::uint32_t index = parse_u32(fields[0], path, lineno);
    if (index != b.labels.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": index " +
                        std::to_string(index) + " out of sequence, expected " +
                        std::to_string(b.labels.size()));
    }
    b.labels.push_back(parse_u32(fields[1], path, lineno));
    b.domains.push_back(parse_u32(fields[2], path, lineno));
  }
}

}  // namespace

Setting infer_setting(const SplitSpec& split) {
  if (split.unseen_classes.empty()) return Setting::Dg;
  if (split.test_domains.empty() || as_set(split.test_domains) == as_set(split.train_domains)) {
    return Setting::Zsl;
  }
  return Setting::ZslDg;
}

const char* setting_name(Setting s) {
  switch (s) {
    case Setting::Zsl: return "zsl";
    case Setting::Dg: return "dg";
    case Setting::ZslDg: return "zsl+dg";
  }
  return "?";
}

std::vector<std::string> validate_bundle(const DatasetBundle& b, const SplitSpec& split) {
  std::vector<std::string> out;
  const std::size_t n = b.num_samples();
  if (n == 0) out.push_back("bundle has no samples");
  if (b.features.rows() != n) {
    out.push_back("features have " + std::to_string(b.features.rows()) + " rows but " +
                  std::to_string(n) + " labels are given");
  }
  if (b.domains.size() != n) {
    out.push_back(std::to_string(b.domains.size()) + " domain ids for " + std::to_string(n) +
                  " samples");
  }
  for (double v : b.features.data()) {
    if (!std::isfinite(v)) {
      out.push_back("features contain a non-finite value");
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (b.labels[i] >= b.class_names.size()) {
      out.push_back("row " + std::to_string(i) + ": class id " + std::to_string(b.labels[i]) +
                    " >= " + std::to_string(b.class_names.size()) + " classes");
    }
    if (i < b.domains.size() && b.domains[i] >= b.domain_names.size()) {
      out.push_back("row " + std::to_string(i) + ": domain id " + std::to_string(b.domains[i]) +
                    " >= " + std::to_string(b.domain_names.size()) + " domains");
    }
  }
  if (b.embeddings.rows() != b.class_names.size()) {
    out.push_back("embedding table has " + std::to_string(b.embeddings.rows()) +
                  " rows but there are " + std::to_string(b.class_names.size()) + " classes");
  }
  if (b.embeddings.cols() == 0) out.push_back("embedding table has zero width");

  check_ids("seen_classes", split.seen_classes, b.class_names.size(), out);
  check_ids("unseen_classes", split.unseen_classes, b.class_names.size(), out);
  check_ids("train_domains", split.train_domains, b.domain_names.size(), out);
  check_ids("test_domains", split.test_domains, b.domain_names.size(), out);
  if (split.seen_classes.empty()) out.push_back("splits: seen_classes is empty");
  if (split.train_domains.empty()) out.push_back("splits: train_domains is empty");
  if (const auto both = intersection(split.seen_classes, split.unseen_classes); !both.empty()) {
    out.push_back("splits: classes " + join_ids(both) + " are both seen and unseen");
  }
  const Setting setting = infer_setting(split);
  if (setting != Setting::Zsl) {
    if (const auto both = intersection(split.train_domains, split.test_domains); !both.empty()) {
      out.push_back("splits: domains " + join_ids(both) + " are both train and test");
    }
    if (as_set(split.train_domains).size() < 2) {
      out.push_back(std::string("splits: ") + setting_name(setting) +
                    " needs at least two training domains");
    }
  }
  return out;
}

Matrix read_matrix_file(const fs::path& path) {
  const std::string what = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file " + what);
  detail::expect_magic(in, "CMX1", what);
  const auto version = detail::get_le<std::uint16_t>(in, what);
  if (version != kMatrixVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  const auto rows = detail::get_le<std::uint32_t>(in, what);
  const auto cols = detail::get_le<std::uint32_t>(in, what);
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload = static_cast<std::uint64_t>(in.tellg() - here);
  in.seekg(here);
  if (payload != 4ULL * rows * cols) {
    throw FormatError(what + ": header declares " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " but payload holds " + std::to_string(payload) +
                      " bytes");
  }
  Matrix m(rows, cols);
  for (double& v : m.data()) v = detail::get_f32(in, what);
  return m;
}

void write_matrix_file(const Matrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("CMX1", 4);
  detail::put_le<std::uint16_t>(out, kMatrixVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) detail::put_f32(out, v);
  if (!out) throw IoError("write failed for " + path.string());
}

LoadedBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " not found");
  LoadedBundle out;
  DatasetBundle& b = out.bundle;

  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = read_json(manifest_path);
  b.name = json_field<std::string>(manifest, "name", manifest_path);
  b.class_names = json_field<std::vector<std::string>>(manifest, "class_names", manifest_path);
  b.domain_names = json_field<std::vector<std::string>>(manifest, "domain_names", manifest_path);
  const auto feature_dim = json_field<std::size_t>(manifest, "feature_dim", manifest_path);
  const auto embed_dim = json_field<std::size_t>(manifest, "embed_dim", manifest_path);
  const auto num_samples = json_field<std::size_t>(manifest, "num_samples", manifest_path);

  b.features = read_matrix_file(dir / "features.bin");
  b.embeddings = read_matrix_file(dir / "embeddings.bin");
  read_labels(dir / "labels.csv", b);

  const fs::path splits_path = dir / "splits.json";
  const json splits = read_json(splits_path);
  using Ids = std::vector<std::uint32_t>;
  out.split.seen_classes = json_field<Ids>(splits, "seen_classes", splits_path);
  out.split.unseen_classes = json_field<Ids>(splits, "unseen_classes", splits_path);
  out.split.train_domains = json_field<Ids>(splits, "train_domains", splits_path);
  out.split.test_domains = json_field<Ids>(splits, "test_domains", splits_path);

  std::vector<std::string> problems;
  if (b.features.cols() != feature_dim) {
    problems.push_back("manifest feature_dim " + std::to_string(feature_dim) +
                       " but features.bin has " + std::to_string(b.features.cols()) + " columns");
  }
  if (b.embeddings.cols() != embed_dim) {
    problems.push_back("manifest embed_dim " + std::to_string(embed_dim) +
                       " but embeddings.bin has " + std::to_string(b.embeddings.cols()) +
                       " columns");
  }
  if (b.num_samples() != num_samples) {
    problems.push_back("manifest num_samples " + std::to_string(num_samples) +
                       " but labels.csv has " + std::to_string(b.num_samples()) + " rows");
  }
  const auto more = validate_bundle(b, out.split);
  problems.insert(problems.end(), more.begin(), more.end());
  if (!problems.empty()) {
    std::string msg = "dataset " + dir.string() + " is invalid:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return out;
}

void write_bundle(const DatasetBundle& b, const SplitSpec& split, const fs::path& dir,
                  bool force) {
  if (b.num_samples() == 0) throw ValidationError("write_bundle: refusing to write an empty bundle");
  if (const auto problems = validate_bundle(b, split); !problems.empty()) {
    throw ValidationError("write_bundle: " + problems.front());
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw IoError("write_bundle: " + dir.string() +
                  " exists and is not empty (pass force to overwrite)");
  }
  fs::create_directories(dir);
  write_matrix_file(b.features, dir / "features.bin");
  write_matrix_file(b.embeddings, dir / "embeddings.bin");
  {
    std::ofstream out(dir / "labels.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "labels.csv").string());
    out << kLabelsHeader << '\n';
    for (std::size_t i = 0; i < b.num_samples(); ++i) {
      out << i << ',' << b.labels[i] << ',' << b.domains[i] << '\n';
    }
  }
  const json manifest = {{"name", b.name},
                         {"feature_dim", b.features.cols()},
                         {"embed_dim", b.embeddings.cols()},
                         {"num_samples", b.num_samples()},
                         {"class_names", b.class_names},
                         {"domain_names", b.domain_names}};
  const json splits = {{"seen_classes", split.seen_classes},
                       {"unseen_classes", split.unseen_classes},
                       {"train_domains", split.train_domains},
                       {"test_domains", split.test_domains}};
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
  std::ofstream(dir / "splits.json", std::ios::trunc) << splits.dump(2) << '\n';
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    if (sq == 0.0) {
      warn("l2_normalize_rows: row " + std::to_string(r) + " is all zeros; left unchanged");
      continue;
    }
    const double norm = std::sqrt(sq);
    for (double& v : row) v /= norm;
  }
  return out;
}

std::vector<std::size_t> seen_index(const DatasetBundle& bundle, const SplitSpec& split) {
  std::vector<std::size_t> pos(bundle.class_names.size(), kNotSeen);
  for (std::size_t i = 0; i < split.seen_classes.size(); ++i) {
    pos.at(split.seen_classes[i]) = i;
  }
  return pos;
}

std::vector<std::size_t> training_rows(const DatasetBundle& bundle, const SplitSpec& split) {
  const auto seen = as_set(split.seen_classes);
  const auto train = as_set(split.train_domains);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < bundle.num_samples(); ++i) {
    if (seen.contains(bundle.labels[i]) && train.contains(bundle.domains[i])) rows.push_back(i);
  }
  return rows;
}

std::vector<std::vector<std::size_t>> make_batches(const DatasetBundle& bundle,
                                                   const SplitSpec& split,
                                                   std::size_t batch_size, std::size_t epoch,
                                                   std::uint64_t seed) {
  if (batch_size < 4) throw ConfigError("batch_size must be at least 4");
  const std::vector<std::size_t> rows = training_rows(bundle, split);
  if (rows.empty()) throw ConfigError("no training rows: no seen-class samples in train domains");

  std::map<std::uint32_t, std::vector<std::size_t>> by_domain;
  for (std::size_t r : rows) by_domain[bundle.domains[r]].push_back(r);

  const Setting setting = infer_setting(split);
  if (by_domain.size() < 2 && setting != Setting::Zsl) {
    throw ConfigError(std::string(setting_name(setting)) +
                      " training needs samples from at least two domains, found " +
                      std::to_string(by_domain.size()));
  }

  RngStream rng(seed, "batch-shuffle", {epoch});
  std::vector<std::vector<std::size_t>> batches;

  if (by_domain.size() == 1) {
    std::vector<std::size_t> order = rows;
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
  }

  // Pairs per domain; an odd domain leaves one sample over.
  std::vector<std::vector<std::vector<std::size_t>>> pairs;
  std::vector<std::size_t> leftovers;
  for (auto& [domain, members] : by_domain) {
    shuffle(members, rng);
    std::vector<std::vector<std::size_t>> mine;
    for (std::size_t i = 0; i + 1 < members.size(); i += 2) mine.push_back({members[i], members[i + 1]});
    if (members.size() % 2 == 1) leftovers.push_back(members.back());
    pairs.push_back(std::move(mine));
  }
  std::vector<std::size_t> domain_order(pairs.size());
  std::iota(domain_order.begin(), domain_order.end(), std::size_t{0});
  shuffle(domain_order, rng);

  // Fill each batch with the domain least used in it so far, breaking ties
  // toward the domain with the most pairs left. Domains drain evenly, so a
  // batch is single-domain only when one domain outnumbers all the others.
  std::vector<std::size_t> next(pairs.size(), 0);
  auto remaining = [&](std::size_t d) { return pairs[d].size() - next[d]; };
  for (;;) {
    std::vector<std::size_t> batch;
    std::vector<std::size_t> used(pairs.size(), 0);
    while (batch.size() + 2 <= batch_size) {
      std::optional<std::size_t> best;
      for (std::size_t d : domain_order) {
        if (remaining(d) == 0) continue;
        if (!best || used[d] < used[*best] ||
            (used[d] == used[*best] && remaining(d) > remaining(*best))) {
          best = d;
        }
      }
      if (!best) break;
      const auto& pair = pairs[*best][next[*best]++];
      batch.insert(batch.end(), pair.begin(), pair.end());
      ++used[*best];
    }
    if (batch.empty()) break;
    batches.push_back(std::move(batch));
  }

  // Odd samples join a batch that already holds their domain; the rest top
  // up the last batch, then form a final, smaller one.
  std::vector<std::size_t> residual;
  for (std::size_t r : leftovers) {
    bool placed = false;
    for (auto it = batches.rbegin(); it != batches.rend() && !placed; ++it) {
      if (it->size() >= batch_size) continue;
      for (std::size_t other : *it) {
        if (bundle.domains[other] == bundle.domains[r]) {
          it->push_back(r);
          placed = true;
          break;
        }
      }
    }
    if (!placed) residual.push_back(r);
  }
  while (!residual.empty() && !batches.empty() && batches.back().size() < batch_size) {
    batches.back().push_back(residual.back());
    residual.pop_back();
  }
  if (!residual.empty()) batches.push_back(std::move(residual));
  return batches;
}

Batch gather_batch(const DatasetBundle& bundle, std::span<const std::size_t> seen_pos,
                   std::span<const std::size_t> rows) {
  Batch batch;
  batch.inputs = gather_rows(bundle.features, rows);
  batch.labels.reserve(rows.size());
  batch.domains.reserve(rows.size());
  for (std::size_t r : rows) {
    const std::uint32_t c = bundle.labels[r];
    if (c >= seen_pos.size() || seen_pos[c] == kNotSeen) {
      throw ValidationError("row " + std::to_string(r) + ": class id " + std::to_string(c) +
                            " is not a seen class");
    }
    batch.labels.push_back(seen_pos[c]);
    batch.domains.push_back(bundle.domains[r]);
  }
  return batch;
}

Matrix class_embeddings(const DatasetBundle& bundle, std::span<const std::uint32_t> classes) {
  std::vector<std::size_t> rows(classes.begin(), classes.end());
  return gather_rows(bundle.embeddings, rows);
}

}  // namespace cumix
