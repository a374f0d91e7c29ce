#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bencao/consult/state.h"

namespace bencao::service {

struct SessionRecord {
  std::string session_id;
  std::string created_at;
  consult::DialogueState state;
  std::int64_t offset = 0;  // seq of the last event folded into `state`
};

// Per-session append-only event logs plus snapshots:
//   <root>/sessions/<id>/events.jsonl
//   <root>/sessions/<id>/snapshot.json
//   <root>/sessions/<id>/images/...
// One writer per session at a time, enforced by leases. Write failures are
// StorageUnavailable and leave the in-memory view unchanged.
class SessionStore {
 public:
  class Lease {
   public:
    Lease() = default;
    Lease(Lease&& other) noexcept;
    Lease& operator=(Lease&& other) noexcept;
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    ~Lease();

    const std::string& session_id() const { return id_; }
    explicit operator bool() const { return flag_ != nullptr; }

   private:
    friend class SessionStore;
    Lease(std::string id, std::shared_ptr<std::atomic<bool>> flag) : id_(std::move(id)), flag_(std::move(flag)) {}
    void release();
    std::string id_;
    std::shared_ptr<std::atomic<bool>> flag_;
  };

  explicit SessionStore(std::filesystem::path root, int snapshot_every = 1);

  // Writes event 1. Throws DuplicateId or StorageUnavailable.
  SessionRecord create(consult::SessionEvent created);

  // Throws UnknownSession, or SessionBusy when another step holds the lease.
  // With a wait, retries until the deadline before giving up.
  Lease acquire(const std::string& session_id, std::chrono::milliseconds wait = std::chrono::milliseconds(0));

  // Assigns sequence numbers, folds the events into the current state and
  // appends them in one write.
  SessionRecord commit(const Lease& lease, std::vector<consult::SessionEvent> events);

  std::optional<SessionRecord> get(const std::string& session_id) const;
  bool exists(const std::string& session_id) const { return get(session_id).has_value(); }
  std::vector<consult::SessionEvent> events(const std::string& session_id) const;
  // Rebuilds the state from the log alone.
  consult::DialogueState replay(const std::string& session_id) const;
  std::vector<std::string> list() const;

  // Stores uploaded bytes and returns an image_ref usable with load_image.
  std::string save_image(const Lease& lease, std::string_view bytes, const std::string& extension);
  std::optional<std::string> load_image(const std::string& image_ref) const;

  bool writable() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path dir_of(const std::string& session_id) const;
  std::shared_ptr<std::atomic<bool>> flag_for(const std::string& session_id);
  void write_snapshot(const SessionRecord& r) const;

  std::filesystem::path root_;
  int snapshot_every_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const SessionRecord>> cache_;
  std::map<std::string, std::shared_ptr<std::atomic<bool>>> leases_;
  std::map<std::string, int> unsnapshotted_;
};

}  // namespace bencao::service
