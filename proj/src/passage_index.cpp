#include "eqr/passage_index.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

#include "eqr/embedding_cache.hpp"
#include "eqr/error.hpp"
#include "eqr/jsonl.hpp"

namespace eqr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr char kMagic[] = "EQRINDEX1\n";
}

PassageIndex::PassageIndex(Fingerprint fingerprint) : fingerprint_(std::move(fingerprint)) {
  if (fingerprint_.dim == 0) throw Error("index dim must be positive");
}

void PassageIndex::reserve(std::size_t entries) {
  refs_.reserve(entries);
  values_.reserve(entries * dim());
}

void PassageIndex::add(std::string item_id, std::string passage_id, std::span<const double> unit_vector) {
  if (unit_vector.size() != dim())
    throw Error("index add: vector dim " + std::to_string(unit_vector.size()) + " != " + std::to_string(dim()));
  if (items_.empty() || items_.back().item_id != item_id) {
    if (!item_ids_.insert(item_id).second)
      throw Error("index add: passages of item " + item_id + " are not contiguous");
    items_.push_back({item_id, refs_.size(), refs_.size()});
  }
  ++items_.back().end;
  refs_.push_back({std::move(item_id), std::move(passage_id)});
  values_.insert(values_.end(), unit_vector.begin(), unit_vector.end());
}

void PassageIndex::check_fingerprint(const Fingerprint& expected) const {
  if (fingerprint_ != expected)
    throw FingerprintMismatch("index was built with " + fingerprint_.to_string() + " but the provider is " +
                              expected.to_string());
}

void PassageIndex::save(const fs::path& path) const {
  json header{{"fingerprint", fingerprint_}, {"entries", json::array()}};
  for (const auto& r : refs_) header["entries"].push_back({r.item_id, r.passage_id});
  std::string blob = kMagic;
  blob += header.dump();
  blob.push_back('\n');
  blob.append(reinterpret_cast<const char*>(values_.data()), values_.size() * sizeof(double));
  jsonl::write_file_atomic(path, blob);
}

PassageIndex PassageIndex::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open index " + path.string());
  std::string magic(sizeof(kMagic) - 1, '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kMagic) throw DataError(path.string() + " is not a passage index");
  std::string header_line;
  std::getline(in, header_line);

  PassageIndex index;
  std::vector<std::pair<std::string, std::string>> entries;
  try {
    auto header = json::parse(header_line);
    index = PassageIndex(header.at("fingerprint").get<Fingerprint>());
    entries = header.at("entries").get<decltype(entries)>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad index header: " + e.what());
  }

  index.reserve(entries.size());
  Vector row(index.dim());
  const auto bytes = static_cast<std::streamsize>(row.size() * sizeof(double));
  for (auto& [item, passage] : entries) {
    in.read(reinterpret_cast<char*>(row.data()), bytes);
    if (in.gcount() != bytes) throw DataError(path.string() + ": truncated index");
    index.add(std::move(item), std::move(passage), row);
  }
  return index;
}

PassageIndex build_index(const std::vector<Item>& corpus, EmbeddingProvider& provider, EmbeddingCache* cache,
                         BuildStats* stats) {
  if (cache && cache->fingerprint() != provider.fingerprint())
    throw FingerprintMismatch("cache " + cache->dir().string() + " belongs to " + cache->fingerprint().to_string() +
                              ", provider is " + provider.fingerprint().to_string());

  struct Slot {
    const Item* item;
    const Passage* passage;
  };
  std::vector<Slot> slots;
  for (const auto& item : corpus)
    for (const auto& p : item.passages) slots.push_back({&item, &p});

  std::vector<Vector> vectors(slots.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (cache) {
      if (auto hit = cache->get(slots[i].passage->text)) {
        vectors[i] = std::move(*hit);
        continue;
      }
    }
    missing.push_back(i);
  }

  BuildStats local{slots.size(), slots.size() - missing.size(), 0};
  const auto& cfg = provider.config();
  const std::size_t chunk = cfg.batch_size * cfg.max_in_flight;
  for (std::size_t start = 0; start < missing.size(); start += chunk) {
    const std::size_t stop = std::min(missing.size(), start + chunk);
    std::vector<std::string> texts;
    for (std::size_t k = start; k < stop; ++k) texts.push_back(slots[missing[k]].passage->text);

    std::vector<Vector> embedded;
    try {
      embedded = provider.embed_batch(texts);
    } catch (const ProviderError& e) {
      throw ProviderError(e.error_class(), std::string(e.what()) + " (index build stopped after " +
                                               std::to_string(local.embedded) + " of " +
                                               std::to_string(missing.size()) + " uncached passages)");
    }
    for (std::size_t k = start; k < stop; ++k) {
      auto& v = vectors[missing[k]];
      v = std::move(embedded[k - start]);
      if (cache) cache->put(slots[missing[k]].passage->text, v);
    }
    local.embedded += stop - start;
    if (missing.size() > chunk)
      spdlog::info("embedded {}/{} passages", local.embedded, missing.size());
  }

  PassageIndex index(provider.fingerprint());
  index.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i)
    index.add(slots[i].item->item_id, slots[i].passage->passage_id, vectors[i]);
  if (stats) *stats = local;
  return index;
}

}  // namespace eqr
