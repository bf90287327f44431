#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "webforge/archive.hpp"
#include "webforge/evaluate.hpp"

namespace webforge {

enum class TaskKind { images, webpages, scale, scale_prompt };
enum class Variant { client, server };

std::string_view to_string(TaskKind kind) noexcept;
std::string_view to_string(Variant variant) noexcept;
std::optional<TaskKind> parse_task_kind(std::string_view name) noexcept;

/// A study "type" as it appears in URLs: "images", "images_client", ...
struct TaskType {
  TaskKind kind = TaskKind::images;
  Variant variant = Variant::server;

  static std::optional<TaskType> parse(std::string_view type) noexcept;
  std::string label() const;
  auto operator<=>(const TaskType&) const = default;
};

struct StudyTask {
  std::string task_id;
  TaskKind kind = TaskKind::images;
  Variant variant = Variant::server;
  std::string prompt_text;
  std::string original_ref;
  std::optional<std::string> generated_ref;  // comparison kinds only
  std::vector<ImageTag> tags;

  TaskType type() const { return {kind, variant}; }
  bool operator==(const StudyTask&) const = default;
};

/// Throws Error{SchemaViolation} when generated_ref presence does not match the kind.
void validate(const StudyTask& task);

/// {"tasks": [{"task_id", "kind", "variant", "prompt_text", "original_ref",
///             "generated_ref"?, "tags"?}]}
std::vector<StudyTask> parse_tasks(const nlohmann::json& doc);
nlohmann::json task_json(const StudyTask& task);

nlohmann::json record_json(const ScoreRecord& record);
/// Throws Error{SchemaViolation}.
ScoreRecord parse_record(const nlohmann::json& doc);

struct StudyConfig {
  std::size_t quota = 10;
  std::uint64_t seed = 0;
  std::string secret = "webforge";
  std::chrono::seconds lease_ttl{600};
  std::filesystem::path data_dir;  // empty: in-memory only
  std::size_t snapshot_every = 100;
  std::function<std::chrono::steady_clock::time_point()> clock;  // defaults to steady_clock::now
};

struct Assignment {
  std::optional<StudyTask> task;         // nullopt: exhausted
  std::optional<std::string> completion_code;  // set when exhausted
};

struct SubmitOutcome {
  std::uint64_t sequence = 0;
  bool over_quota = false;
};

struct StudyResults {
  TaskType type;
  std::vector<ScoreSummary> summaries;  // tasks with at least one valid score
  std::vector<std::pair<double, double>> cdf;
  std::map<ImageTag, ScoreSummary> boxplots;
  std::map<std::string, std::size_t> participant_counts;
  std::map<std::string, std::string> completion_codes;  // participant -> code
  std::vector<std::string> over_quota_tasks;
};

nlohmann::json results_json(const StudyResults& results);

/// Task assignment and score storage. Thread-safe; every mutation goes
/// through one mutex and is appended to `data_dir/scores.jsonl` before it is
/// acknowledged.
class Study {
 public:
  Study(std::vector<StudyTask> tasks, StudyConfig config = {});

  /// Least-scored task (submitted plus leased) this participant has not
  /// scored and that is below quota; ties broken by the seeded generator.
  /// Throws Error{UnknownStudy} when no task of this type exists.
  Assignment next_task(TaskType type, const std::string& participant_id);

  /// Throws Error{UnknownTask}, Error{FormMismatch} or Error{DuplicateSubmission}.
  SubmitOutcome submit(ScoreRecord record);

  StudyResults results(TaskType type) const;

  std::string completion_code(const std::string& participant_id) const;
  const StudyTask* task(std::string_view task_id) const;
  std::size_t response_count(std::string_view task_id) const;
  std::vector<ScoreRecord> records() const;
  const std::vector<StudyTask>& tasks() const noexcept { return tasks_; }
  /// Bearer token required on mutating HTTP endpoints.
  const std::string& secret() const noexcept { return config_.secret; }

 private:
  using Clock = std::chrono::steady_clock;
  Clock::time_point now() const;
  void expire_leases(Clock::time_point now);
  void persist(const ScoreRecord& record, std::uint64_t sequence);
  void write_snapshot();
  void recover();

  std::vector<StudyTask> tasks_;
  std::map<std::string, std::size_t, std::less<>> index_;
  StudyConfig config_;

  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::vector<ScoreRecord> records_;
  std::set<std::pair<std::string, std::string>> scored_;  // (task, participant)
  std::vector<std::size_t> counts_;
  // (task index, participant) -> expiry
  std::map<std::pair<std::size_t, std::string>, Clock::time_point> leases_;
  std::vector<std::size_t> lease_counts_;
  std::set<std::string> over_quota_;
  std::ofstream log_;
};

struct StudyServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;
  std::filesystem::path media_root;  // GET /media/<ref> serves files below this
};

/// HTTP front end:
///   GET  /tasks/next?type=<kind>[_client]&pid=<id>
///   POST /scores        (Authorization: Bearer <secret>)
///   GET  /results?type=<kind>[_client]
///   GET  /media/<ref>
class StudyServer {
 public:
  /// Throws Error{PortInUse}.
  StudyServer(Study& study, StudyServerOptions options);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  int port() const noexcept;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace webforge
