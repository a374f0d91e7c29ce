#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bencao/common/error.h"
#include "bencao/common/io.h"
#include "bencao/corpus/index.h"
#include "bencao/domain.h"
#include "bencao/net/http.h"

namespace bencao::tools {

struct TongueAnalysis {
  std::string tongue_color;
  std::string coating;
  std::string shape;
  std::string moisture;
  std::map<std::string, double> raw_scores;
  friend bool operator==(const TongueAnalysis&, const TongueAnalysis&) = default;
};

json to_json(const TongueAnalysis& t);
TongueAnalysis tongue_from_json(const json& j);

struct LedgerMappingRule {
  std::string feature;  // color | coating | shape | moisture
  std::string label;
  DiagnosticElement element = DiagnosticElement::ColdHeat;
  std::string finding;
};

// Native classifier labels -> canonical labels, plus the fixed table from
// canonical labels to ledger findings.
struct TongueLabelMap {
  std::string version;
  std::map<std::string, std::map<std::string, std::string>> labels;  // feature -> native -> canonical
  std::vector<LedgerMappingRule> ledger_mapping;

  static TongueLabelMap from_json(const json& j);
  static TongueLabelMap load(const std::string& path);

  // Unmapped native labels pass through unchanged.
  std::string canonical(const std::string& feature, const std::string& native) const;
};

// Ledger findings implied by a tongue analysis, in mapping-table order, at
// most one per element.
std::vector<Finding> tongue_findings(const TongueAnalysis& analysis, const TongueLabelMap& map);

inline constexpr std::size_t kDefaultImageCap = 5 * 1024 * 1024;

enum class ImageFormat { Jpeg, Png, Gif, Webp, Bmp };
// Identifies the payload by its magic bytes; throws ImageUndecodable.
ImageFormat sniff_image(std::string_view bytes);
std::string_view mime_type(ImageFormat f);

struct ToolEndpointConfig {
  std::string endpoint;
  std::chrono::milliseconds timeout{10000};
  int max_retries = 2;
};

struct TongueClientConfig : ToolEndpointConfig {
  std::size_t max_image_bytes = kDefaultImageCap;
};

class TongueClient {
 public:
  TongueClient(TongueClientConfig config, TongueLabelMap labels, std::shared_ptr<net::HttpTransport> transport);

  // Throws ImageUndecodable, ImageTooLarge or ToolUnavailable.
  TongueAnalysis classify(std::string_view image) const;
  // Size and format checks only, no network.
  ImageFormat validate(std::string_view image) const;

  const TongueLabelMap& labels() const { return labels_; }

 private:
  TongueClientConfig config_;
  TongueLabelMap labels_;
  std::shared_ptr<net::HttpTransport> transport_;
};

struct KnowledgeEntry {
  std::string id;
  std::string modality;   // text | image
  std::string content;    // text, or a description for assets
  std::string asset_ref;  // URL or asset id for non-text entries
  double score = 0.0;
  std::string source;     // "local:<title>" or "remote"
  friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

struct KnowledgeQueryResult {
  std::vector<KnowledgeEntry> entries;  // score non-increasing
};

json to_json(const KnowledgeQueryResult& r);

// Score-descending merge; on equal scores local entries come first, then the
// original order within each side.
std::vector<KnowledgeEntry> merge_entries(const std::vector<KnowledgeEntry>& local,
                                          const std::vector<KnowledgeEntry>& remote);

std::vector<KnowledgeEntry> local_entries(const std::vector<corpus::RetrievalHit>& hits,
                                          const std::function<std::string(const std::string&)>& title_of);

class KnowledgeDbClient {
 public:
  KnowledgeDbClient(ToolEndpointConfig config, std::shared_ptr<net::HttpTransport> transport);

  // Remote entries only; throws ToolUnavailable.
  std::vector<KnowledgeEntry> query_remote(const std::string& query, const std::string& modality,
                                           std::size_t top_k) const;

  // Remote entries merged with `local` hits. Throws InvalidArgument on an
  // empty query and ToolUnavailable when the remote fails.
  KnowledgeQueryResult query(const std::string& query, const std::string& modality,
                             const std::vector<KnowledgeEntry>& local, std::size_t top_k = 10) const;

 private:
  ToolEndpointConfig config_;
  std::shared_ptr<net::HttpTransport> transport_;
};

struct ToolSpec {
  std::string name;
  std::string description;
  json arguments;  // JSON schema
  json result;     // JSON schema

  static ToolSpec from_json(const json& j);
  static ToolSpec load(const std::string& path);
};

struct ToolInvocation {
  std::string id;
  std::string name;
  json arguments;
};

struct ToolError {
  ErrorCode code = ErrorCode::ToolUnavailable;
  std::string message;
};

struct ToolResult {
  std::string call_id;
  std::string name;
  std::optional<json> payload;
  std::optional<ToolError> error;
  bool ok() const { return payload.has_value(); }
};

json to_json(const ToolResult& r);

class ToolRegistry {
 public:
  using Handler = std::function<json(const json& arguments)>;

  void add(ToolSpec spec, Handler handler);
  bool has(const std::string& name) const { return tools_.count(name) > 0; }
  std::vector<ToolSpec> specs() const;

  // Throws UnknownTool for unregistered names; every other failure becomes
  // an error payload.
  ToolResult dispatch(const ToolInvocation& call) const;

 private:
  struct Entry {
    ToolSpec spec;
    Handler handler;
  };
  std::map<std::string, Entry> tools_;
};

// Looks up image bytes uploaded to the current session.
using ImageResolver = std::function<std::optional<std::string>(const std::string& image_ref)>;

struct ToolSuite {
  std::shared_ptr<const TongueClient> tongue;
  std::shared_ptr<const KnowledgeDbClient> kdb;
};

// Registers classify_tongue and query_knowledge_db from the schema files in
// `schema_dir`. Missing clients register handlers that report ToolUnavailable.
ToolRegistry make_registry(const std::string& schema_dir, const ToolSuite& suite, ImageResolver images,
                           std::function<std::vector<KnowledgeEntry>(const std::string&)> local_search = {});

}  // namespace bencao::tools
