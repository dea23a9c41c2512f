#include "eqr/embedding_cache.hpp"

#include <fstream>

#include "eqr/error.hpp"
#include "eqr/hashing.hpp"
#include "eqr/jsonl.hpp"

namespace eqr {

namespace fs = std::filesystem;

EmbeddingCache::EmbeddingCache(fs::path dir, Fingerprint fingerprint)
    : dir_(std::move(dir)), fingerprint_(std::move(fingerprint)) {
  fs::create_directories(dir_ / "vectors");
  const auto fp_path = dir_ / "fingerprint.json";
  if (fs::exists(fp_path)) {
    Fingerprint stored;
    try {
      stored = nlohmann::json::parse(jsonl::read_file(fp_path)).get<Fingerprint>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(fp_path.string() + ": " + e.what());
    }
    if (stored != fingerprint_)
      throw FingerprintMismatch("cache " + dir_.string() + " belongs to " + stored.to_string() +
                                ", requested " + fingerprint_.to_string());
  } else {
    jsonl::write_file_atomic(fp_path, nlohmann::json(fingerprint_).dump(2) + "\n");
  }
}

std::string EmbeddingCache::key(const Fingerprint& fp, std::string_view text) {
  std::string material = fp.model_name;
  material.push_back('\0');
  material += std::to_string(fp.dim);
  material.push_back('\0');
  material += text;
  return sha256_hex(material);
}

fs::path EmbeddingCache::path_for(const std::string& key) const {
  return dir_ / "vectors" / key.substr(0, 2) / (key + ".bin");
}

std::optional<Vector> EmbeddingCache::get(std::string_view text) const {
  const auto path = path_for(key(fingerprint_, text));
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  Vector v(fingerprint_.dim);
  const auto bytes = static_cast<std::streamsize>(v.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(v.data()), bytes);
  // A short or oversized file is treated as a miss and rewritten later.
  if (in.gcount() != bytes || in.peek() != std::char_traits<char>::eof()) return std::nullopt;
  return v;
}

void EmbeddingCache::put(std::string_view text, const Vector& unit_vector) {
  if (unit_vector.size() != fingerprint_.dim)
    throw Error("cache put: vector dim " + std::to_string(unit_vector.size()) + " != " +
                std::to_string(fingerprint_.dim));
  const auto k = key(fingerprint_, text);
  const auto path = path_for(k);
  std::lock_guard lock(write_locks_[std::stoul(k.substr(0, 2), nullptr, 16) % write_locks_.size()]);
  std::string bytes(reinterpret_cast<const char*>(unit_vector.data()), unit_vector.size() * sizeof(double));
  jsonl::write_file_atomic(path, bytes);
}

}  // namespace eqr
