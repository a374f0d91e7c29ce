#include "bencao/corpus/knowledge_base.h"

#include <cstdio>

#include "bencao/common/error.h"

namespace bencao::corpus {

Manifest load_manifest(const std::filesystem::path& path, const std::vector<StripPattern>& defaults) {
  json j = read_json_file(path);
  Manifest m;
  m.base_dir = path.parent_path();
  try {
    m.default_strip_patterns =
        j.contains("strip_patterns") ? strip_patterns_from_json(j.at("strip_patterns")) : defaults;
    if (j.contains("max_attachments")) m.max_attachments = j.at("max_attachments").get<std::size_t>();
    for (const auto& d : j.at("documents")) {
      ManifestEntry e;
      e.file = d.at("file").get<std::string>();
      e.title = d.at("title").get<std::string>();
      e.tags = d.value("tags", std::vector<std::string>{});
      if (d.contains("strip_patterns")) e.strip_patterns = strip_patterns_from_json(d.at("strip_patterns"));
      if (d.contains("extra_strip_patterns")) {
        e.extra_strip_patterns = strip_patterns_from_json(d.at("extra_strip_patterns"));
      }
      m.documents.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  return m;
}

std::vector<KnowledgeDoc> ingest_manifest(const Manifest& manifest) {
  std::vector<KnowledgeDoc> docs;
  for (const auto& e : manifest.documents) {
    auto patterns = e.strip_patterns.value_or(manifest.default_strip_patterns);
    patterns.insert(patterns.end(), e.extra_strip_patterns.begin(), e.extra_strip_patterns.end());
    auto raw = read_file(manifest.base_dir / e.file);
    docs.push_back(ingest_document(raw, e.title, e.tags, patterns, e.file));
  }
  return docs;
}

std::string KnowledgeBase::title_of(const std::string& doc_id) const {
  const auto* d = registry.find_doc(doc_id);
  return d ? d->title : doc_id;
}

IngestSummary write_knowledge_base(const AttachmentRegistry& registry, const LexicalIndex& index,
                                   const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "attachments", ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  for (const auto& e : registry.entries) {
    char name[32];
    std::snprintf(name, sizeof name, "%02d-", e.ordinal);
    write_file_atomic(out_dir / "attachments" / (name + e.doc_id + ".txt"), registry.doc(e.doc_id).body);
  }
  IngestSummary s;
  s.attachments = registry.entries.size();
  s.registry_path = out_dir / "registry.json";
  s.index_path = out_dir / "index.json";
  write_file_atomic(s.registry_path, to_json(registry).dump(2));
  write_file_atomic(s.index_path, index.to_json().dump());
  return s;
}

IngestSummary run_ingest(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
                         std::optional<std::size_t> max_attachments,
                         const std::vector<StripPattern>& default_patterns) {
  auto manifest = load_manifest(manifest_path, default_patterns);
  auto docs = ingest_manifest(manifest);
  auto limit = max_attachments.value_or(manifest.max_attachments.value_or(kDefaultMaxAttachments));
  auto registry = merge_documents(docs, limit);
  auto index = build_index(registry);
  auto s = write_knowledge_base(registry, index, out_dir);
  s.documents = docs.size();
  return s;
}

std::shared_ptr<const KnowledgeBase> load_knowledge_base(const std::filesystem::path& dir) {
  auto registry = registry_from_json(read_json_file(dir / "registry.json"));
  auto index_path = dir / "index.json";
  LexicalIndex index = std::filesystem::exists(index_path)
                           ? LexicalIndex::from_json(read_json_file(index_path), registry)
                           : build_index(registry);
  return std::make_shared<const KnowledgeBase>(KnowledgeBase{std::move(registry), std::move(index)});
}

}  // namespace bencao::corpus
