#pragma once

#include <filesystem>
#include <functional>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bencao/consult/engine.h"
#include "bencao/eval/eval.h"
#include "bencao/feedback/feedback.h"
#include "bencao/service/session_store.h"

namespace bencao::service {

struct ServiceConfig {
  std::filesystem::path data_dir;
  std::filesystem::path storage_dir;
  std::string host = "127.0.0.1";
  int port = 8080;

  std::optional<gateway::ProviderConfig> provider;        // live model endpoint
  std::optional<std::filesystem::path> scripted_provider;  // recorded script instead of a live model
  std::optional<tools::TongueClientConfig> tongue;
  std::optional<tools::ToolEndpointConfig> knowledge_db;
  std::optional<std::filesystem::path> knowledge_dir;  // output of `ingest`
  consult::ConsultConfig consult;
  json disclaimers = json::object();  // scenario -> {"en", "zh"}; overrides the policy file
  std::size_t max_image_bytes = tools::kDefaultImageCap;
  int snapshot_every = 1;
  int eval_parallel = 1;

  // Relative paths resolve against `base_dir`.
  static ServiceConfig from_json(const json& j, const std::filesystem::path& base_dir);
  static ServiceConfig load(const std::filesystem::path& path);
};

// Gateway for the configured provider: the override if given, else the
// scripted file, else the live endpoint. Null when none is configured.
// `mode` receives injected | scripted | live | offline.
std::shared_ptr<const gateway::Gateway> make_gateway(const ServiceConfig& config,
                                                     std::shared_ptr<gateway::Provider> override_provider,
                                                     std::string* mode = nullptr);

struct QuestionView {
  std::string id;
  std::string text;
  std::vector<DiagnosticElement> targets;
};

json to_json(const QuestionView& q);

struct SessionSummary {
  consult::DialogueState state;
  std::int64_t offset = 0;
  std::vector<QuestionView> pending_questions;
  std::optional<scenario::LocalizedText> disclaimer;
};

// include_transcript adds the transcript for GET /v1/sessions/{id}.
json to_json(const SessionSummary& s, bool include_transcript);

struct MessageResult {
  safety::SafeReply reply;
  std::vector<QuestionView> questions;
  scenario::RoutingDecision routing;
  SessionSummary summary;
};

json to_json(const MessageResult& r);

struct EvalRequest {
  std::optional<std::string> bench;       // file name under <data>/eval
  std::vector<eval::EvalItem> items;      // inline items, used when bench is unset
  std::string model_label = "configured";
  std::optional<std::string> resume;
  std::optional<int> parallel;
};

struct EvalJobStatus {
  std::string run_id;
  std::string status;  // running | complete | failed
  std::optional<eval::EvalReport> report;
  std::optional<Error> error;
};

// Optional collaborators; anything left null is built from the config.
struct ServiceOverrides {
  std::shared_ptr<const consult::EngineResources> resources;
  std::shared_ptr<gateway::Provider> provider;
  std::shared_ptr<net::HttpTransport> tool_transport;
  std::shared_ptr<Clock> clock;
  consult::FindingSource finding_source;
  std::function<std::string()> session_ids;
  bool llm_routing = true;
};

class Service {
 public:
  explicit Service(ServiceConfig config, ServiceOverrides overrides = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  SessionSummary create_session(std::optional<ScenarioId> hint = std::nullopt);
  // `image` holds raw upload bytes. Throws SessionBusy while another step
  // for the session is in flight.
  MessageResult post_message(const std::string& session_id, const std::string& text,
                             const std::optional<std::string>& image = std::nullopt);
  SessionSummary get_session(const std::string& session_id) const;
  consult::DialogueState replay(const std::string& session_id) const;

  std::string record_feedback(const std::string& session_id, int turn, feedback::Polarity polarity,
                              const std::string& body, feedback::AuthorRole role);
  std::string publish_instruction(ScenarioId scenario, const std::string& text, const std::string& changelog,
                                  const std::vector<std::string>& linked_feedback,
                                  const std::optional<std::string>& parent);
  void activate_instruction(const std::string& version_id, const std::optional<std::string>& expected_active);
  json instruction_graph() const;

  std::string start_eval(const EvalRequest& request);
  EvalJobStatus eval_status(const std::string& run_id) const;
  // Blocks until the run leaves the running state.
  EvalJobStatus wait_eval(const std::string& run_id) const;

  json health() const;

  const ServiceConfig& config() const { return config_; }
  const SessionStore& store() const { return *store_; }
  const consult::Engine& engine() const { return *engine_; }
  const feedback::FeedbackStore& feedback_store() const { return *feedback_; }
  const feedback::InstructionStore& instructions() const { return *instructions_; }

 private:
  SessionSummary summarize(const SessionRecord& r) const;
  std::filesystem::path eval_dir() const { return config_.storage_dir / "eval"; }

  ServiceConfig config_;
  std::shared_ptr<const consult::EngineResources> resources_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<const gateway::Gateway> gateway_;
  std::string gateway_mode_;
  std::shared_ptr<SessionStore> store_;
  std::shared_ptr<feedback::FeedbackStore> feedback_;
  std::shared_ptr<feedback::InstructionStore> instructions_;
  std::unique_ptr<consult::Engine> engine_;
  std::function<std::string()> session_ids_;

  mutable std::mutex eval_mu_;
  mutable std::condition_variable eval_cv_;
  std::map<std::string, EvalJobStatus> eval_jobs_;
  std::vector<std::thread> eval_threads_;
  int eval_counter_ = 0;
};

}  // namespace bencao::service
