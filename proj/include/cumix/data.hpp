#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cumix/losses.hpp"
#include "cumix/numerics.hpp"

namespace cumix {

/// Samples, their class and domain ids, and the class embedding table for
/// every class (seen and unseen).
struct DatasetBundle {
  std::string name;
  Matrix features;  // num_samples x feature_dim
  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> domains;
  std::vector<std::string> class_names;
  std::vector<std::string> domain_names;
  Matrix embeddings;  // class_names.size() x embed_dim; row r is class r

  std::size_t num_samples() const { return labels.size(); }
  bool operator==(const DatasetBundle&) const = default;
};

struct SplitSpec {
  std::vector<std::uint32_t> seen_classes;
  std::vector<std::uint32_t> unseen_classes;
  std::vector<std::uint32_t> train_domains;
  std::vector<std::uint32_t> test_domains;

  bool operator==(const SplitSpec&) const = default;
};

/// ZSL: shared domains, disjoint classes. DG: shared classes, disjoint
/// domains. ZSL_DG: both disjoint.
enum class Setting { Zsl, Dg, ZslDg };

/// No unseen classes means DG; no test domains (or the same set as the
/// training domains) means ZSL; otherwise ZSL+DG.
Setting infer_setting(const SplitSpec& split);
const char* setting_name(Setting s);

/// Every invariant violation, in a stable order; empty when valid.
std::vector<std::string> validate_bundle(const DatasetBundle& bundle, const SplitSpec& split);

struct LoadedBundle {
  DatasetBundle bundle;
  SplitSpec split;
};

/// Reads features.bin, embeddings.bin, labels.csv, manifest.json and
/// splits.json from `dir`. Throws IoError, FormatError or ValidationError.
LoadedBundle load_bundle(const std::filesystem::path& dir);

/// Writes the five dataset files. Refuses a non-empty existing directory
/// unless `force` is set.
void write_bundle(const DatasetBundle& bundle, const SplitSpec& split,
                  const std::filesystem::path& dir, bool force = false);

/// Reads/writes one "CMX1" matrix file (32-bit reals on disk).
Matrix read_matrix_file(const std::filesystem::path& path);
void write_matrix_file(const Matrix& m, const std::filesystem::path& path);

/// Unit-norm rows; all-zero rows are kept (with a warning).
Matrix l2_normalize_rows(const Matrix& m);

/// Rows whose class is seen and whose domain is a training domain.
std::vector<std::size_t> training_rows(const DatasetBundle& bundle, const SplitSpec& split);

/// Domain-stratified minibatches over the training rows for one epoch.
///
/// Each domain's rows are shuffled and cut into pairs; batches of at most
/// `batch_size` are filled pair by pair from the domain least represented so
/// far. An odd domain's last sample joins a batch already holding its domain,
/// or the final residual batch. A batch thus holds at least two domains with
/// at least two samples each whenever the corpus allows. Deterministic in
/// (seed, epoch).
std::vector<std::vector<std::size_t>> make_batches(const DatasetBundle& bundle,
                                                   const SplitSpec& split,
                                                   std::size_t batch_size, std::size_t epoch,
                                                   std::uint64_t seed);

/// class id -> position in split.seen_classes, or npos-like sentinel.
std::vector<std::size_t> seen_index(const DatasetBundle& bundle, const SplitSpec& split);

/// Assembles a Batch with labels remapped to seen-class positions.
Batch gather_batch(const DatasetBundle& bundle, std::span<const std::size_t> seen_pos,
                   std::span<const std::size_t> rows);

/// Embedding rows for the given class ids, in order.
Matrix class_embeddings(const DatasetBundle& bundle, std::span<const std::uint32_t> classes);

}  // namespace cumix
