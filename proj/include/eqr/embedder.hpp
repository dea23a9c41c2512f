#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace eqr {

/// Dense embedding. Providers hand these out unit-normalized.
using Vector = std::vector<double>;

double l2_norm(std::span<const double> v);

/// Scales `v` to unit length. Throws Error on a zero or non-finite vector.
void normalize(std::span<double> v);

/// Plain sequential dot product; callers guarantee equal lengths.
inline double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

/// Cosine of two unit vectors, i.e. their dot product. Throws on dim mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

/// Identifies the encoder that produced a set of vectors.
struct Fingerprint {
  std::string model_name;
  std::size_t dim = 0;

  bool operator==(const Fingerprint&) const = default;
  std::string to_string() const;
};

void to_json(nlohmann::json& j, const Fingerprint& fp);
void from_json(const nlohmann::json& j, Fingerprint& fp);

struct EmbeddingProviderConfig {
  enum class Kind { kDeterministicTest, kRemoteHttp };

  Kind kind = Kind::kDeterministicTest;
  std::string model_name = "hash-bow";
  std::string endpoint;  // remote only, e.g. http://host:port/v1/embeddings
  std::size_t dim = 256;
  std::size_t batch_size = 32;
  /// Longest text (bytes) the encoder accepts; longer input is truncated. 0 = unlimited.
  std::size_t input_limit = 0;
  /// Name of the environment variable carrying the bearer token.
  std::string api_key_env = "EQR_EMBED_API_KEY";
  std::uint64_t seed = 0;
  int max_retries = 3;
  int retry_base_ms = 200;
  int retry_cap_ms = 5000;
  std::size_t max_in_flight = 4;
  int timeout_s = 60;
};

EmbeddingProviderConfig::Kind parse_embedding_kind(const std::string& name);
std::string to_string(EmbeddingProviderConfig::Kind kind);

/// Encoder abstraction. `embed_batch` handles truncation, batching,
/// normalization and dimension checks; subclasses only produce raw vectors.
/// Implementations must tolerate concurrent `encode_raw` calls.
class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(EmbeddingProviderConfig config);
  virtual ~EmbeddingProvider() = default;

  EmbeddingProvider(const EmbeddingProvider&) = delete;
  EmbeddingProvider& operator=(const EmbeddingProvider&) = delete;

  const EmbeddingProviderConfig& config() const { return config_; }
  Fingerprint fingerprint() const { return {config_.model_name, config_.dim}; }

  /// One unit vector per input text, in input order.
  std::vector<Vector> embed_batch(std::span<const std::string> texts);
  Vector embed(const std::string& text);

  /// Texts sent to the encoder so far (cache hits never reach it).
  std::size_t texts_encoded() const { return texts_encoded_.load(); }
  /// Encoder invocations (batches) so far.
  std::size_t requests() const { return requests_.load(); }

 protected:
  virtual std::vector<Vector> encode_raw(std::span<const std::string> texts) = 0;

 private:
  std::vector<Vector> encode_chunk(std::span<const std::string> texts);

  EmbeddingProviderConfig config_;
  std::atomic<std::size_t> texts_encoded_{0};
  std::atomic<std::size_t> requests_{0};
};

/// Offline encoder: every token hashes (with the configured seed) to a few
/// signed buckets and the token multiset is summed, so texts that share
/// tokens have larger cosine. Deterministic across runs and platforms.
class DeterministicEmbedder : public EmbeddingProvider {
 public:
  explicit DeterministicEmbedder(EmbeddingProviderConfig config);

  static constexpr int kBucketsPerToken = 4;

 protected:
  std::vector<Vector> encode_raw(std::span<const std::string> texts) override;

 private:
  Vector encode_one(const std::string& text) const;
};

/// Lowercased alphanumeric tokens (bytes >= 0x80 count as word characters).
std::vector<std::string> tokenize(const std::string& text);

/// OpenAI-style embeddings endpoint: POST {"model","input"} ->
/// {"data":[{"embedding":[...]}]}. Retries transport errors, 429 and 5xx
/// with capped exponential backoff.
class RemoteEmbedder : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(EmbeddingProviderConfig config);

 protected:
  std::vector<Vector> encode_raw(std::span<const std::string> texts) override;
};

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderConfig& config);

/// Cuts `text` to at most `limit` bytes without splitting a UTF-8 sequence.
std::string truncate_utf8(const std::string& text, std::size_t limit);

}  // namespace eqr
