#include "eqr/embedder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <future>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "eqr/error.hpp"
#include "eqr/hashing.hpp"
#include "http_client.hpp"

namespace eqr {

using nlohmann::json;

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v.data(), v.data(), v.size())); }

void normalize(std::span<double> v) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error("cannot normalize a vector with non-finite entries");
  const double norm = l2_norm(v);
  if (norm == 0.0) throw Error("cannot normalize a zero vector");
  for (double& x : v) x /= norm;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw Error("dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  return dot(u.data(), v.data(), u.size());
}

std::string Fingerprint::to_string() const { return model_name + "/" + std::to_string(dim); }

void to_json(json& j, const Fingerprint& fp) { j = json{{"model_name", fp.model_name}, {"dim", fp.dim}}; }

void from_json(const json& j, Fingerprint& fp) {
  j.at("model_name").get_to(fp.model_name);
  j.at("dim").get_to(fp.dim);
}

EmbeddingProviderConfig::Kind parse_embedding_kind(const std::string& name) {
  if (name == "deterministic-test") return EmbeddingProviderConfig::Kind::kDeterministicTest;
  if (name == "remote-http") return EmbeddingProviderConfig::Kind::kRemoteHttp;
  throw ConfigError("unknown embedding provider kind: " + name);
}

std::string to_string(EmbeddingProviderConfig::Kind kind) {
  return kind == EmbeddingProviderConfig::Kind::kRemoteHttp ? "remote-http" : "deterministic-test";
}

std::string truncate_utf8(const std::string& text, std::size_t limit) {
  if (text.size() <= limit) return text;
  std::size_t cut = limit;
  // Back up over continuation bytes so we never split a code point.
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut);
}

// ---- EmbeddingProvider ---------------------------------------------------

EmbeddingProvider::EmbeddingProvider(EmbeddingProviderConfig config) : config_(std::move(config)) {
  if (config_.dim == 0) throw ConfigError("embedding dim must be positive");
  if (config_.batch_size == 0) throw ConfigError("embedding batch_size must be positive");
  if (config_.max_in_flight == 0) config_.max_in_flight = 1;
}

std::vector<Vector> EmbeddingProvider::encode_chunk(std::span<const std::string> texts) {
  ++requests_;
  texts_encoded_ += texts.size();
  auto vectors = encode_raw(texts);
  if (vectors.size() != texts.size())
    throw ProviderError("bad_response", "provider returned " + std::to_string(vectors.size()) +
                                            " vectors for " + std::to_string(texts.size()) + " texts");
  for (auto& v : vectors) {
    if (v.size() != config_.dim)
      throw ProviderError("dimension_mismatch", "provider " + config_.model_name + " returned dim " +
                                                    std::to_string(v.size()) + ", configured " +
                                                    std::to_string(config_.dim));
    try {
      normalize(v);
    } catch (const Error& e) {
      throw ProviderError("bad_response", e.what());
    }
  }
  return vectors;
}

std::vector<Vector> EmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  if (texts.empty()) return {};

  std::vector<std::string> inputs(texts.begin(), texts.end());
  if (config_.input_limit > 0) {
    for (auto& t : inputs) {
      if (t.size() > config_.input_limit) {
        spdlog::warn("truncating {}-byte input to the {}-byte limit of {}", t.size(), config_.input_limit,
                     config_.model_name);
        t = truncate_utf8(t, config_.input_limit);
      }
    }
  }

  const std::size_t batch = config_.batch_size;
  const std::size_t chunks = (inputs.size() + batch - 1) / batch;
  std::vector<Vector> out(inputs.size());
  std::span<const std::string> all(inputs);

  // At most max_in_flight chunks are outstanding at any time.
  for (std::size_t first = 0; first < chunks; first += config_.max_in_flight) {
    const std::size_t last = std::min(chunks, first + config_.max_in_flight);
    std::vector<std::future<std::vector<Vector>>> pending;
    for (std::size_t c = first; c < last; ++c) {
      auto slice = all.subspan(c * batch, std::min(batch, inputs.size() - c * batch));
      if (last - first == 1) {
        std::promise<std::vector<Vector>> ready;
        ready.set_value(encode_chunk(slice));
        pending.push_back(ready.get_future());
      } else {
        pending.push_back(std::async(std::launch::async, [this, slice] { return encode_chunk(slice); }));
      }
    }
    for (std::size_t c = first; c < last; ++c) {
      auto vectors = pending[c - first].get();
      std::move(vectors.begin(), vectors.end(), out.begin() + static_cast<std::ptrdiff_t>(c * batch));
    }
  }
  return out;
}

Vector EmbeddingProvider::embed(const std::string& text) {
  std::string one[] = {text};
  return std::move(embed_batch(one).front());
}

// ---- DeterministicEmbedder -----------------------------------------------

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

DeterministicEmbedder::DeterministicEmbedder(EmbeddingProviderConfig config)
    : EmbeddingProvider(std::move(config)) {}

Vector DeterministicEmbedder::encode_one(const std::string& text) const {
  const std::size_t dim = config().dim;
  const std::uint64_t seed = splitmix64(config().seed ^ fnv1a64(config().model_name));
  Vector v(dim, 0.0);
  for (const auto& token : tokenize(text)) {
    const std::uint64_t h = fnv1a64(token, seed);
    for (int j = 0; j < kBucketsPerToken; ++j) {
      const std::uint64_t r = splitmix64(h + static_cast<std::uint64_t>(j));
      v[r % dim] += (r >> 63) ? -1.0 : 1.0;
    }
  }
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }))
    v[fnv1a64(text, seed) % dim] = 1.0;
  return v;
}

std::vector<Vector> DeterministicEmbedder::encode_raw(std::span<const std::string> texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(encode_one(t));
  return out;
}

// ---- RemoteEmbedder ------------------------------------------------------

RemoteEmbedder::RemoteEmbedder(EmbeddingProviderConfig config) : EmbeddingProvider(std::move(config)) {
  detail::parse_endpoint(this->config().endpoint);
}

std::vector<Vector> RemoteEmbedder::encode_raw(std::span<const std::string> texts) {
  const auto& cfg = config();
  json body{{"model", cfg.model_name}, {"input", json::array()}};
  for (const auto& t : texts) body["input"].push_back(t);

  const json reply = detail::post_json(cfg.endpoint, body, cfg.api_key_env,
                                       {cfg.max_retries, cfg.retry_base_ms, cfg.retry_cap_ms, cfg.timeout_s});
  try {
    std::vector<Vector> out;
    for (const auto& entry : reply.at("data")) out.push_back(entry.at("embedding").get<Vector>());
    return out;
  } catch (const json::exception& e) {
    throw ProviderError("bad_response", std::string("malformed embeddings reply: ") + e.what());
  }
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderConfig& config) {
  switch (config.kind) {
    case EmbeddingProviderConfig::Kind::kDeterministicTest:
      return std::make_unique<DeterministicEmbedder>(config);
    case EmbeddingProviderConfig::Kind::kRemoteHttp:
      return std::make_unique<RemoteEmbedder>(config);
  }
  throw ConfigError("unknown embedding provider kind");
}

// ---- HTTP ----------------------------------------------------------------

namespace detail {

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must start with http:// or https://: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, path_start);
  ep.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (ep.scheme_host_port.size() <= scheme_end + 3) throw ConfigError("endpoint has no host: " + url);
  return ep;
}

int backoff_ms(const RetryPolicy& policy, int attempt) {
  long long delay = policy.base_ms;
  for (int i = 0; i < attempt && delay < policy.cap_ms; ++i) delay *= 2;
  return static_cast<int>(std::min<long long>(delay, policy.cap_ms));
}

json post_json(const std::string& url, const json& body, const std::string& api_key_env,
               const RetryPolicy& policy) {
  const auto ep = parse_endpoint(url);
  httplib::Headers headers;
  if (!api_key_env.empty()) {
    if (const char* key = std::getenv(api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string payload = body.dump();

  std::string last_error;
  std::string last_class = "transport";
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms(policy, attempt - 1)));

    httplib::Client client(ep.scheme_host_port);
    client.set_connection_timeout(policy.timeout_s);
    client.set_read_timeout(policy.timeout_s);
    client.set_write_timeout(policy.timeout_s);
    auto res = client.Post(ep.path, headers, payload, "application/json");
    if (!res) {
      last_class = "transport";
      last_error = "request to " + url + " failed: " + httplib::to_string(res.error());
      spdlog::warn("{} (attempt {}/{})", last_error, attempt + 1, policy.max_retries + 1);
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_class = "http_status";
      last_error = url + " returned HTTP " + std::to_string(res->status);
      spdlog::warn("{} (attempt {}/{})", last_error, attempt + 1, policy.max_retries + 1);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw ProviderError("http_status", url + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProviderError("bad_response", url + " returned invalid JSON: " + e.what());
    }
  }
  throw ProviderError(last_class, last_error + " after " + std::to_string(policy.max_retries + 1) + " attempts");
}

}  // namespace detail

}  // namespace eqr
