#include "bencao/service/session_store.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <thread>

#include "bencao/common/error.h"

namespace bencao::service {

namespace fs = std::filesystem;
using consult::SessionEvent;

namespace {

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 128 && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_';
  });
}

template <typename F>
auto storage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) fail(ErrorCode::StorageUnavailable, e.what());
    throw;
  } catch (const fs::filesystem_error& e) {
    fail(ErrorCode::StorageUnavailable, e.what());
  }
}

std::vector<SessionEvent> read_events(const fs::path& log) {
  std::vector<SessionEvent> out;
  if (!fs::exists(log)) return out;
  int line_no = 0;
  for (const auto& line : read_lines(log)) {
    ++line_no;
    try {
      out.push_back(consult::event_from_json(json::parse(line)));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      fail(ErrorCode::CorruptLog, log.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- lease

SessionStore::Lease::Lease(Lease&& other) noexcept : id_(std::move(other.id_)), flag_(std::move(other.flag_)) {}

SessionStore::Lease& SessionStore::Lease::operator=(Lease&& other) noexcept {
  if (this != &other) {
    release();
    id_ = std::move(other.id_);
    flag_ = std::move(other.flag_);
  }
  return *this;
}

SessionStore::Lease::~Lease() { release(); }

void SessionStore::Lease::release() {
  if (flag_) flag_->store(false);
  flag_.reset();
}

// ---------------------------------------------------------------- store

SessionStore::SessionStore(fs::path root, int snapshot_every)
    : root_(std::move(root)), snapshot_every_(std::max(1, snapshot_every)) {}

fs::path SessionStore::dir_of(const std::string& id) const { return root_ / "sessions" / id; }

bool SessionStore::writable() const {
  std::error_code ec;
  fs::create_directories(root_ / "sessions", ec);
  if (ec) return false;
  auto probe = root_ / ".probe";
  FILE* f = std::fopen(probe.c_str(), "w");
  if (!f) return false;
  std::fclose(f);
  fs::remove(probe, ec);
  return true;
}

std::shared_ptr<std::atomic<bool>> SessionStore::flag_for(const std::string& id) {
  std::lock_guard lock(mu_);
  auto& f = leases_[id];
  if (!f) f = std::make_shared<std::atomic<bool>>(false);
  return f;
}

void SessionStore::write_snapshot(const SessionRecord& r) const {
  json snap{{"session_id", r.session_id},
            {"created_at", r.created_at},
            {"offset", r.offset},
            {"state", consult::to_json(r.state)}};
  write_file_atomic(dir_of(r.session_id) / "snapshot.json", snap.dump());
}

SessionRecord SessionStore::create(SessionEvent created) {
  if (created.kind != consult::EventKind::SessionCreated)
    fail(ErrorCode::InvalidArgument, "the first event must be SessionCreated");
  created.seq = 1;
  auto id = created.payload.at("session_id").get<std::string>();
  if (!valid_id(id)) fail(ErrorCode::InvalidArgument, "invalid session id " + id);
  auto flag = flag_for(id);
  bool expected = false;
  if (!flag->compare_exchange_strong(expected, true)) fail(ErrorCode::SessionBusy, "session " + id + " is busy");
  Lease guard(id, flag);

  SessionRecord r{id, created.at, consult::apply({}, created), 1};
  storage([&] {
    auto dir = dir_of(id);
    if (fs::exists(dir / "events.jsonl")) fail(ErrorCode::DuplicateId, "session " + id + " already exists");
    fs::create_directories(dir);
    append_lines(dir / "events.jsonl", {consult::to_json(created).dump()});
    write_snapshot(r);
  });
  std::lock_guard lock(mu_);
  cache_[id] = std::make_shared<const SessionRecord>(r);
  return r;
}

SessionStore::Lease SessionStore::acquire(const std::string& id, std::chrono::milliseconds wait) {
  if (!exists(id)) fail(ErrorCode::UnknownSession, "unknown session " + id);
  auto flag = flag_for(id);
  auto deadline = std::chrono::steady_clock::now() + wait;
  for (;;) {
    bool expected = false;
    if (flag->compare_exchange_strong(expected, true)) return Lease(id, flag);
    if (std::chrono::steady_clock::now() >= deadline)
      fail(ErrorCode::SessionBusy, "session " + id + " has a step in flight");
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

SessionRecord SessionStore::commit(const Lease& lease, std::vector<SessionEvent> events) {
  if (!lease) fail(ErrorCode::InvalidArgument, "commit without a lease");
  const auto& id = lease.session_id();
  auto current = get(id);
  if (!current) fail(ErrorCode::UnknownSession, "unknown session " + id);
  if (events.empty()) return *current;

  SessionRecord next = *current;
  std::vector<std::string> lines;
  for (auto& e : events) {
    e.seq = ++next.offset;
    next.state = consult::apply(std::move(next.state), e);
    lines.push_back(consult::to_json(e).dump());
  }
  storage([&] { append_lines(dir_of(id) / "events.jsonl", lines); });

  bool snapshot = false;
  {
    std::lock_guard lock(mu_);
    cache_[id] = std::make_shared<const SessionRecord>(next);
    snapshot = ++unsnapshotted_[id] >= snapshot_every_;
    if (snapshot) unsnapshotted_[id] = 0;
  }
  if (snapshot) {
    // The log is authoritative; a stale snapshot is rebuilt on the next load.
    try {
      write_snapshot(next);
    } catch (const std::exception& e) {
      spdlog::warn("snapshot for {} not written: {}", id, e.what());
    }
  }
  return next;
}

std::optional<SessionRecord> SessionStore::get(const std::string& id) const {
  if (!valid_id(id)) return std::nullopt;
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(id); it != cache_.end()) return *it->second;
  }
  auto dir = dir_of(id);
  if (!fs::exists(dir / "events.jsonl")) return std::nullopt;

  auto events = read_events(dir / "events.jsonl");
  if (events.empty()) fail(ErrorCode::CorruptLog, "session " + id + " has an empty event log");
  SessionRecord r;
  r.session_id = id;
  bool fresh = false;
  if (fs::exists(dir / "snapshot.json")) {
    auto snap = read_json_file(dir / "snapshot.json");
    r.created_at = snap.value("created_at", "");
    r.offset = snap.at("offset").get<std::int64_t>();
    r.state = consult::state_from_json(snap.at("state"));
    fresh = !events.empty() && r.offset == events.back().seq;
  }
  if (!fresh) {
    r.state = consult::replay(events);
    r.offset = events.back().seq;
    r.created_at = events.front().at;
  }
  std::lock_guard lock(mu_);
  auto [it, inserted] = cache_.emplace(id, std::make_shared<const SessionRecord>(r));
  return *it->second;
}

std::vector<SessionEvent> SessionStore::events(const std::string& id) const {
  if (!get(id)) fail(ErrorCode::UnknownSession, "unknown session " + id);
  return read_events(dir_of(id) / "events.jsonl");
}

consult::DialogueState SessionStore::replay(const std::string& id) const { return consult::replay(events(id)); }

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root_ / "sessions", ec))
    if (entry.is_directory() && fs::exists(entry.path() / "events.jsonl")) out.push_back(entry.path().filename());
  std::sort(out.begin(), out.end());
  return out;
}

std::string SessionStore::save_image(const Lease& lease, std::string_view bytes, const std::string& extension) {
  if (!lease) fail(ErrorCode::InvalidArgument, "image upload without a lease");
  const auto& id = lease.session_id();
  return storage([&] {
    auto dir = dir_of(id) / "images";
    fs::create_directories(dir);
    std::size_t n = 1;
    for (const auto& e : fs::directory_iterator(dir)) (void)e, ++n;
    char name[32];
    std::snprintf(name, sizeof name, "img-%04zu.%s", n, extension.c_str());
    write_file_atomic(dir / name, bytes);
    return id + "/" + name;
  });
}

std::optional<std::string> SessionStore::load_image(const std::string& image_ref) const {
  auto slash = image_ref.find('/');
  if (slash == std::string::npos) return std::nullopt;
  auto id = image_ref.substr(0, slash);
  auto name = image_ref.substr(slash + 1);
  if (!valid_id(id) || name.empty() || name.find('/') != std::string::npos || name.find("..") != std::string::npos)
    return std::nullopt;
  auto path = dir_of(id) / "images" / name;
  if (!fs::exists(path)) return std::nullopt;
  return read_file(path);
}

}  // namespace bencao::service
