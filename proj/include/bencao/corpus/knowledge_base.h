#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "bencao/corpus/corpus.h"
#include "bencao/corpus/index.h"

namespace bencao::corpus {

// One source file listed in an ingest manifest.
struct ManifestEntry {
  std::string file;  // relative to the manifest directory
  std::string title;
  std::vector<CategoryTag> tags;
  std::optional<std::vector<StripPattern>> strip_patterns;  // replaces the defaults
  std::vector<StripPattern> extra_strip_patterns;          // appended to them
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<StripPattern> default_strip_patterns;
  std::optional<std::size_t> max_attachments;
  std::vector<ManifestEntry> documents;
};

// `defaults` are used when the manifest has no top-level strip_patterns.
Manifest load_manifest(const std::filesystem::path& path, const std::vector<StripPattern>& defaults = {});

std::vector<KnowledgeDoc> ingest_manifest(const Manifest& manifest);

// Registry plus index, loaded together and shared read-only.
struct KnowledgeBase {
  AttachmentRegistry registry;
  LexicalIndex index;

  std::string title_of(const std::string& doc_id) const;
};

struct IngestSummary {
  std::size_t documents = 0;
  std::size_t attachments = 0;
  std::filesystem::path registry_path;
  std::filesystem::path index_path;
};

// Writes registry.json, index.json and one attachments/NN-<id>.txt per entry.
IngestSummary write_knowledge_base(const AttachmentRegistry& registry, const LexicalIndex& index,
                                   const std::filesystem::path& out_dir);

IngestSummary run_ingest(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
                         std::optional<std::size_t> max_attachments,
                         const std::vector<StripPattern>& default_patterns = {});

std::shared_ptr<const KnowledgeBase> load_knowledge_base(const std::filesystem::path& dir);

}  // namespace bencao::corpus
