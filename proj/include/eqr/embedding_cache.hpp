#pragma once

#include <array>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "eqr/embedder.hpp"

namespace eqr {

/// Content-addressed on-disk store of unit vectors.
///
/// Layout:
///   <dir>/fingerprint.json         {"model_name": ..., "dim": ...}
///   <dir>/vectors/ab/abcdef....bin raw little-endian doubles, `dim` of them
///
/// The file name is sha256(model_name, dim, text). Entries are written to a
/// temp file and renamed, so readers never observe a partial vector; writers
/// of the same key are serialized.
class EmbeddingCache {
 public:
  /// Opens or creates the cache. Throws FingerprintMismatch if `dir` was
  /// created for a different encoder.
  EmbeddingCache(std::filesystem::path dir, Fingerprint fingerprint);

  static std::string key(const Fingerprint& fingerprint, std::string_view text);

  std::optional<Vector> get(std::string_view text) const;
  void put(std::string_view text, const Vector& unit_vector);

  const Fingerprint& fingerprint() const { return fingerprint_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path dir_;
  Fingerprint fingerprint_;
  mutable std::array<std::mutex, 64> write_locks_;
};

}  // namespace eqr
