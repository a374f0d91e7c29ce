#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "bencao/common/io.h"
#include "bencao/consult/engine.h"
#include "bencao/scenario/scenario.h"

namespace bencao::feedback {

enum class Polarity { Critical, Positive };
enum class AuthorRole { Practitioner, Reviewer };

std::string_view to_string(Polarity p);
std::string_view to_string(AuthorRole r);
Polarity polarity_from(std::string_view s);  // ValidationError on unknown names
AuthorRole author_role_from(std::string_view s);

struct FeedbackRecord {
  std::string record_id;  // fb-000001, fb-000002, ...
  std::string session_id;
  int turn = 0;
  Polarity polarity = Polarity::Critical;
  std::string body;
  AuthorRole author_role = AuthorRole::Practitioner;
  std::string created_at;
  friend bool operator==(const FeedbackRecord&, const FeedbackRecord&) = default;
};

json to_json(const FeedbackRecord& r);
FeedbackRecord feedback_from_json(const json& j);

// Transcript length of the session, or nullopt when it does not exist.
// Feedback addresses a transcript position (0-based).
using SessionLookup = std::function<std::optional<int>(const std::string& session_id)>;

// Append-only feedback records, persisted as JSON lines when a path is given.
class FeedbackStore {
 public:
  explicit FeedbackStore(std::optional<std::filesystem::path> log_path = std::nullopt,
                         std::shared_ptr<Clock> clock = nullptr);

  // Throws UnknownSession, or ValidationError for an empty body or a turn
  // outside the session.
  std::string record(const SessionLookup& sessions, const std::string& session_id, int turn, Polarity polarity,
                     const std::string& body, AuthorRole role);

  std::optional<FeedbackRecord> get(const std::string& record_id) const;
  bool exists(const std::string& record_id) const;
  std::vector<FeedbackRecord> all() const;
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  std::shared_ptr<Clock> clock_;
  mutable std::shared_mutex mu_;
  std::vector<FeedbackRecord> records_;
};

struct InstructionVersion {
  std::string version_id;  // iv-0001, iv-0002, ...
  std::optional<std::string> parent;
  ScenarioId scenario = ScenarioId::MildDiscomfort;
  std::string instruction_text;
  std::string changelog;
  std::vector<std::string> linked_feedback;
  bool active = false;
  std::string created_at;
  friend bool operator==(const InstructionVersion&, const InstructionVersion&) = default;
};

json to_json(const InstructionVersion& v);

// Versioned scenario instructions. Exactly one version per scenario is active;
// activation is a compare-and-swap on that slot. Persisted as a JSON-lines
// operation log plus an optional compacted snapshot.
class InstructionStore final : public scenario::InstructionSource {
 public:
  // Seeds one active root version per scenario from `defaults` when the
  // store is empty.
  InstructionStore(const scenario::PolicyCatalog& defaults, std::shared_ptr<const FeedbackStore> feedback,
                   std::optional<std::filesystem::path> dir = std::nullopt, std::shared_ptr<Clock> clock = nullptr);

  // New versions start inactive. Throws UnknownParent, UnknownFeedback, or
  // ValidationError (empty text, parent from another scenario).
  std::string publish(ScenarioId scenario, const std::string& text, const std::string& changelog,
                      const std::vector<std::string>& linked_feedback, const std::optional<std::string>& parent);

  // Makes `version_id` the active version of its scenario. When
  // `expected_active` is given and no longer matches, throws StaleActivation.
  void activate(const std::string& version_id, const std::optional<std::string>& expected_active = std::nullopt);

  std::optional<scenario::ActiveInstruction> active_instruction(ScenarioId scenario) const override;
  std::string active_id(ScenarioId scenario) const;
  std::optional<InstructionVersion> get(const std::string& version_id) const;
  std::vector<InstructionVersion> versions() const;
  json export_graph() const;

  // Rewrites the snapshot and empties the operation log.
  void compact();

 private:
  void apply_op(const json& op);
  void persist(const json& op);
  InstructionVersion& at(const std::string& version_id);

  std::optional<std::filesystem::path> dir_;
  std::shared_ptr<const FeedbackStore> feedback_;
  std::shared_ptr<Clock> clock_;
  mutable std::shared_mutex mu_;
  std::vector<InstructionVersion> versions_;
  std::map<ScenarioId, std::string> active_;
};

// Serves a fixed version for one scenario and defers to `base` otherwise.
class PinnedInstructions final : public scenario::InstructionSource {
 public:
  PinnedInstructions(InstructionVersion pinned, std::shared_ptr<const scenario::InstructionSource> base)
      : pinned_(std::move(pinned)), base_(std::move(base)) {}
  std::optional<scenario::ActiveInstruction> active_instruction(ScenarioId scenario) const override;

 private:
  InstructionVersion pinned_;
  std::shared_ptr<const scenario::InstructionSource> base_;
};

// The user side of a recorded session.
struct RecordedTranscript {
  std::string id;
  std::optional<ScenarioId> scenario_hint;
  std::vector<consult::TurnInput> turns;
};

// Extracts the user turns from a session event log.
RecordedTranscript transcript_from_events(const std::string& id, const std::vector<consult::SessionEvent>& events);

struct TurnDiff {
  int turn = 0;
  std::string old_reply;
  std::string new_reply;
  int old_violations = 0;  // counted on the raw model drafts
  int new_violations = 0;
  int compliance_delta = 0;  // old_violations - new_violations; positive means fewer problems
  bool changed = false;
};

struct ReplayDiff {
  std::string transcript_id;
  std::vector<TurnDiff> turns;
};

json to_json(const ReplayDiff& d);

// Re-runs every transcript under both versions with the given provider and
// reports per-turn differences. Stores are only read. MissingScript from the
// provider propagates.
std::vector<ReplayDiff> replay_regression(const std::vector<RecordedTranscript>& transcripts,
                                          const InstructionStore& store, const std::string& old_version,
                                          const std::string& new_version,
                                          std::shared_ptr<gateway::Provider> provider,
                                          const consult::EngineDeps& base);

}  // namespace bencao::feedback
