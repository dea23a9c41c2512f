#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "eqr/corpus.hpp"
#include "eqr/embedder.hpp"

namespace eqr {

class EmbeddingCache;

struct PassageRef {
  std::string item_id;
  std::string passage_id;

  bool operator==(const PassageRef&) const = default;
};

/// Contiguous run of index entries belonging to one item.
struct ItemRange {
  std::string item_id;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const ItemRange&) const = default;
};

/// Unit vectors for every corpus passage, stored row-major in one buffer.
/// Passages of an item occupy a contiguous block of rows, in corpus order.
class PassageIndex {
 public:
  PassageIndex() = default;
  explicit PassageIndex(Fingerprint fingerprint);

  /// Appends one entry. Entries for an item must be added consecutively.
  void add(std::string item_id, std::string passage_id, std::span<const double> unit_vector);
  void reserve(std::size_t entries);

  std::size_t size() const { return refs_.size(); }
  bool empty() const { return refs_.empty(); }
  std::size_t dim() const { return fingerprint_.dim; }
  const Fingerprint& fingerprint() const { return fingerprint_; }

  const PassageRef& ref(std::size_t i) const { return refs_[i]; }
  std::span<const double> vector(std::size_t i) const {
    return {values_.data() + i * dim(), dim()};
  }
  std::span<const double> values() const { return values_; }
  const std::vector<ItemRange>& items() const { return items_; }

  /// Throws FingerprintMismatch unless built by an encoder with `expected`.
  void check_fingerprint(const Fingerprint& expected) const;

  void save(const std::filesystem::path& path) const;
  static PassageIndex load(const std::filesystem::path& path);

  bool operator==(const PassageIndex&) const = default;

 private:
  Fingerprint fingerprint_;
  std::vector<PassageRef> refs_;
  std::vector<ItemRange> items_;
  std::unordered_set<std::string> item_ids_;
  std::vector<double> values_;
};

struct BuildStats {
  std::size_t passages = 0;
  std::size_t cache_hits = 0;
  std::size_t embedded = 0;
};

/// Embeds every passage of `corpus` (skipping cache hits) and assembles the
/// index. Newly computed vectors are written to the cache chunk by chunk, so
/// a provider failure keeps completed work; the failure is rethrown as
/// ProviderError with a progress note. `cache` may be null.
PassageIndex build_index(const std::vector<Item>& corpus, EmbeddingProvider& provider,
                         EmbeddingCache* cache, BuildStats* stats = nullptr);

}  // namespace eqr
