#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace recycle {

enum class SourceTag { kRaw, kRewritten, kExternal };

std::string_view to_string(SourceTag tag) noexcept;
SourceTag source_tag_from_string(std::string_view name);

struct Document {
  std::string id;
  std::string text;
  std::optional<std::string> url;
  SourceTag source_tag = SourceTag::kRaw;
  std::uint64_t token_count = 0;
  std::map<std::string, std::string> metadata;

  bool operator==(const Document&) const = default;
};

// Stage, config hash, and tool version embedded in emitted artifacts.
struct Provenance {
  std::string stage;
  std::string config_hash;
  std::string tool_version;

  bool operator==(const Provenance&) const = default;
};

std::string_view tool_version() noexcept;

// Shard paths are stored relative to the manifest's directory so an
// artifact tree can be moved or compared byte-for-byte.
struct CorpusManifest {
  std::string corpus_name;
  std::vector<std::string> shard_paths;
  std::uint64_t document_count = 0;
  std::uint64_t total_tokens = 0;
  std::string tokenizer_id;
  std::optional<Provenance> provenance;

  // Directory the shard paths are relative to. Not serialized.
  std::filesystem::path root;

  std::filesystem::path shard_path(std::size_t i) const { return root / shard_paths.at(i); }
};

nlohmann::json to_json(const Document& doc);
// Throws kMalformedRecord when `text` is missing or a field has the wrong type.
Document document_from_json(const nlohmann::json& record, std::string_view id_field = "id");

nlohmann::json to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root);

nlohmann::json to_json(const Provenance& p);
Provenance provenance_from_json(const nlohmann::json& j);

}  // namespace recycle
