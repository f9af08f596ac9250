#include "recycle/document.hpp"

#include "recycle/error.hpp"

namespace recycle {

using nlohmann::json;

std::string_view tool_version() noexcept { return "0.3.0"; }

std::string_view to_string(SourceTag tag) noexcept {
  switch (tag) {
    case SourceTag::kRaw: return "raw";
    case SourceTag::kRewritten: return "rewritten";
    case SourceTag::kExternal: return "external";
  }
  return "raw";
}

SourceTag source_tag_from_string(std::string_view name) {
  if (name == "raw") return SourceTag::kRaw;
  if (name == "rewritten") return SourceTag::kRewritten;
  if (name == "external") return SourceTag::kExternal;
  throw Error(ErrorCode::kMalformedRecord, "unknown source_tag '" + std::string(name) + "'");
}

json to_json(const Document& doc) {
  json j;
  j["id"] = doc.id;
  j["text"] = doc.text;
  if (doc.url) j["url"] = *doc.url;
  j["source_tag"] = to_string(doc.source_tag);
  j["token_count"] = doc.token_count;
  if (!doc.metadata.empty()) j["metadata"] = doc.metadata;
  return j;
}

Document document_from_json(const json& record, std::string_view id_field) {
  if (!record.is_object()) throw Error(ErrorCode::kMalformedRecord, "record is not an object");
  Document doc;
  auto text = record.find("text");
  if (text == record.end() || !text->is_string()) {
    throw Error(ErrorCode::kMalformedRecord, "missing string field 'text'");
  }
  doc.text = text->get<std::string>();

  if (auto id = record.find(std::string(id_field)); id != record.end() && !id->is_null()) {
    if (id->is_string()) {
      doc.id = id->get<std::string>();
    } else if (id->is_number_integer()) {
      doc.id = id->dump();
    } else {
      throw Error(ErrorCode::kMalformedRecord, "field '" + std::string(id_field) + "' has wrong type");
    }
  }
  if (auto url = record.find("url"); url != record.end() && !url->is_null()) {
    if (!url->is_string()) throw Error(ErrorCode::kMalformedRecord, "field 'url' is not a string");
    doc.url = url->get<std::string>();
  }
  if (auto tag = record.find("source_tag"); tag != record.end() && tag->is_string()) {
    doc.source_tag = source_tag_from_string(tag->get<std::string>());
  }
  if (auto tc = record.find("token_count"); tc != record.end() && tc->is_number_unsigned()) {
    doc.token_count = tc->get<std::uint64_t>();
  }
  if (auto meta = record.find("metadata"); meta != record.end() && !meta->is_null()) {
    if (!meta->is_object()) throw Error(ErrorCode::kMalformedRecord, "field 'metadata' is not an object");
    for (const auto& [k, v] : meta->items()) {
      doc.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return doc;
}

json to_json(const Provenance& p) {
  return json{{"stage", p.stage}, {"config_hash", p.config_hash}, {"tool_version", p.tool_version}};
}

Provenance provenance_from_json(const json& j) {
  return Provenance{j.at("stage").get<std::string>(), j.at("config_hash").get<std::string>(),
                    j.at("tool_version").get<std::string>()};
}

json to_json(const CorpusManifest& m) {
  json j;
  j["corpus_name"] = m.corpus_name;
  j["shard_paths"] = m.shard_paths;
  j["document_count"] = m.document_count;
  j["total_tokens"] = m.total_tokens;
  j["tokenizer_id"] = m.tokenizer_id;
  if (m.provenance) j["provenance"] = to_json(*m.provenance);
  return j;
}

CorpusManifest manifest_from_json(const json& j, const std::filesystem::path& root) {
  try {
    CorpusManifest m;
    m.corpus_name = j.at("corpus_name").get<std::string>();
    m.shard_paths = j.at("shard_paths").get<std::vector<std::string>>();
    m.document_count = j.at("document_count").get<std::uint64_t>();
    m.total_tokens = j.at("total_tokens").get<std::uint64_t>();
    m.tokenizer_id = j.at("tokenizer_id").get<std::string>();
    if (auto p = j.find("provenance"); p != j.end()) m.provenance = provenance_from_json(*p);
    m.root = root;
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIoFailure, std::string("invalid manifest: ") + e.what());
  }
}

}  // namespace recycle
