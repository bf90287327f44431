#include "webforge/study.hpp"

#include <algorithm>
#include <limits>

#include "webforge/digest.hpp"
#include "webforge/error.hpp"

namespace webforge {

using nlohmann::json;

std::string_view to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::images: return "images";
    case TaskKind::webpages: return "webpages";
    case TaskKind::scale: return "scale";
    case TaskKind::scale_prompt: return "scale_prompt";
  }
  return "images";
}

std::string_view to_string(Variant variant) noexcept { return variant == Variant::client ? "client" : "server"; }

std::optional<TaskKind> parse_task_kind(std::string_view name) noexcept {
  for (auto k : {TaskKind::images, TaskKind::webpages, TaskKind::scale, TaskKind::scale_prompt}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<TaskType> TaskType::parse(std::string_view type) noexcept {
  Variant variant = Variant::server;
  if (type.ends_with("_client")) {
    variant = Variant::client;
    type.remove_suffix(7);
  }
  auto kind = parse_task_kind(type);
  if (!kind) return std::nullopt;
  return TaskType{*kind, variant};
}

std::string TaskType::label() const {
  return std::string(to_string(kind)) + (variant == Variant::client ? "_client" : "");
}

namespace {

bool comparison_kind(TaskKind k) { return k == TaskKind::images || k == TaskKind::webpages; }

[[noreturn]] void violation(const std::string& field, const std::string& problem) {
  throw Error(ErrorKind::SchemaViolation, field + ": " + problem);
}

std::string string_field(const json& obj, const char* key, const std::string& prefix, bool required = true) {
  if (!obj.contains(key)) {
    if (required) violation(prefix + key, "missing");
    return {};
  }
  if (!obj[key].is_string()) violation(prefix + key, "must be a string");
  return obj[key].get<std::string>();
}

}  // namespace

void validate(const StudyTask& task) {
  if (task.task_id.empty()) violation("task_id", "must be nonempty");
  if (comparison_kind(task.kind) && !task.generated_ref) {
    violation(task.task_id + ".generated_ref", "required for " + std::string(to_string(task.kind)) + " tasks");
  }
  if (!comparison_kind(task.kind) && task.generated_ref) {
    violation(task.task_id + ".generated_ref", "not allowed for " + std::string(to_string(task.kind)) + " tasks");
  }
  if (!tags_valid(task.tags)) violation(task.task_id + ".tags", "at most three, never both person and face");
}

std::vector<StudyTask> parse_tasks(const json& doc) {
  if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array()) violation("tasks", "must be an array");
  std::vector<StudyTask> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc["tasks"].size(); ++i) {
    const auto& t = doc["tasks"][i];
    const std::string prefix = "tasks[" + std::to_string(i) + "].";
    if (!t.is_object()) violation(prefix, "must be an object");
    StudyTask task;
    task.task_id = string_field(t, "task_id", prefix);
    auto kind = parse_task_kind(string_field(t, "kind", prefix));
    if (!kind) violation(prefix + "kind", "unknown kind");
    task.kind = *kind;
    const std::string variant = string_field(t, "variant", prefix, false);
    if (variant == "client") {
      task.variant = Variant::client;
    } else if (variant.empty() || variant == "server") {
      task.variant = Variant::server;
    } else {
      violation(prefix + "variant", "must be client or server");
    }
    task.prompt_text = string_field(t, "prompt_text", prefix, false);
    task.original_ref = string_field(t, "original_ref", prefix);
    if (t.contains("generated_ref") && !t["generated_ref"].is_null()) {
      task.generated_ref = string_field(t, "generated_ref", prefix);
    }
    if (t.contains("tags")) {
      if (!t["tags"].is_array()) violation(prefix + "tags", "must be an array");
      for (const auto& tag : t["tags"]) {
        auto parsed = tag.is_string() ? parse_image_tag(tag.get<std::string>()) : std::nullopt;
        if (!parsed) violation(prefix + "tags", "unknown tag");
        task.tags.push_back(*parsed);
      }
    }
    if (!ids.insert(task.task_id).second) violation(prefix + "task_id", "duplicate id " + task.task_id);
    validate(task);
    out.push_back(std::move(task));
  }
  return out;
}

json task_json(const StudyTask& task) {
  json tags = json::array();
  for (auto t : task.tags) tags.push_back(to_string(t));
  return {{"task_id", task.task_id},
          {"kind", to_string(task.kind)},
          {"variant", to_string(task.variant)},
          {"prompt_text", task.prompt_text},
          {"original_ref", task.original_ref},
          {"generated_ref", task.generated_ref ? json(*task.generated_ref) : json(nullptr)},
          {"tags", tags}};
}

json record_json(const ScoreRecord& r) {
  return {{"task_id", r.task_id},
          {"participant_id", r.participant_id},
          {"response", {{"kind", to_string(r.response.kind)}, {"value", r.response.value}}},
          {"submitted_at", format_utc(r.submitted_at)}};
}

ScoreRecord parse_record(const json& doc) {
  if (!doc.is_object()) violation("$", "record must be an object");
  ScoreRecord r;
  r.task_id = string_field(doc, "task_id", "");
  r.participant_id = string_field(doc, "participant_id", "");
  if (r.participant_id.empty()) violation("participant_id", "must be nonempty");
  if (!doc.contains("response") || !doc["response"].is_object()) violation("response", "must be an object");
  const auto& resp = doc["response"];
  auto kind = parse_response_kind(string_field(resp, "kind", "response."));
  if (!kind) violation("response.kind", "must be quality, relevance or cannot_judge");
  r.response.kind = *kind;
  if (resp.contains("value") && !resp["value"].is_null()) {
    if (!resp["value"].is_number_integer()) violation("response.value", "must be an integer");
    r.response.value = resp["value"].get<int>();
  }
  if (doc.contains("submitted_at") && !doc["submitted_at"].is_null()) {
    auto t = doc["submitted_at"].is_string() ? parse_utc(doc["submitted_at"].get<std::string>()) : std::nullopt;
    if (!t) violation("submitted_at", "must be an ISO-8601 UTC timestamp");
    r.submitted_at = *t;
  }
  return r;
}

json results_json(const StudyResults& r) {
  json summaries = json::array();
  for (const auto& s : r.summaries) {
    summaries.push_back({{"item_id", s.item_id}, {"n", s.n}, {"median", s.median}, {"q1", s.q1},
                         {"q3", s.q3}, {"min", s.min}, {"max", s.max}});
  }
  json cdf = json::array();
  for (const auto& [v, f] : r.cdf) cdf.push_back({v, f});
  json boxplots = json::object();
  for (const auto& [tag, s] : r.boxplots) {
    boxplots[std::string(to_string(tag))] = {{"n", s.n}, {"median", s.median}, {"q1", s.q1},
                                             {"q3", s.q3}, {"min", s.min}, {"max", s.max}};
  }
  return {{"type", r.type.label()},
          {"summaries", summaries},
          {"cdf", cdf},
          {"boxplots", boxplots},
          {"participant_counts", r.participant_counts},
          {"completion_codes", r.completion_codes},
          {"over_quota_tasks", r.over_quota_tasks}};
}

Study::Study(std::vector<StudyTask> tasks, StudyConfig config)
    : tasks_(std::move(tasks)), config_(std::move(config)), rng_(config_.seed) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    validate(tasks_[i]);
    if (!index_.emplace(tasks_[i].task_id, i).second) {
      throw Error(ErrorKind::SchemaViolation, "duplicate task id " + tasks_[i].task_id);
    }
  }
  counts_.assign(tasks_.size(), 0);
  lease_counts_.assign(tasks_.size(), 0);
  if (!config_.data_dir.empty()) {
    std::filesystem::create_directories(config_.data_dir);
    recover();
    log_.open(config_.data_dir / "scores.jsonl", std::ios::app | std::ios::binary);
    if (!log_) throw Error(ErrorKind::Io, "cannot open score log in " + config_.data_dir.string());
  }
}

Study::Clock::time_point Study::now() const { return config_.clock ? config_.clock() : Clock::now(); }

void Study::expire_leases(Clock::time_point t) {
  for (auto it = leases_.begin(); it != leases_.end();) {
    if (it->second <= t) {
      --lease_counts_[it->first.first];
      it = leases_.erase(it);
    } else {
      ++it;
    }
  }
}

Assignment Study::next_task(TaskType type, const std::string& participant_id) {
  std::lock_guard lock(mu_);
  const auto t = now();
  expire_leases(t);

  std::vector<std::size_t> of_type;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (tasks_[i].type() == type) of_type.push_back(i);
  }
  if (of_type.empty()) throw Error(ErrorKind::UnknownStudy, "no tasks of type " + type.label());

  // A participant asking again before submitting keeps the task it holds.
  for (std::size_t i : of_type) {
    auto it = leases_.find({i, participant_id});
    if (it != leases_.end()) {
      it->second = t + config_.lease_ttl;
      return {tasks_[i], std::nullopt};
    }
  }

  std::vector<std::size_t> best;
  std::size_t best_load = std::numeric_limits<std::size_t>::max();
  for (std::size_t i : of_type) {
    if (scored_.contains({tasks_[i].task_id, participant_id})) continue;
    const std::size_t load = counts_[i] + lease_counts_[i];
    if (load >= config_.quota) continue;
    if (load < best_load) {
      best_load = load;
      best.clear();
    }
    if (load == best_load) best.push_back(i);
  }
  if (best.empty()) return {std::nullopt, completion_code(participant_id)};
  const std::size_t pick = best[best.size() == 1 ? 0 : rng_() % best.size()];
  leases_[{pick, participant_id}] = t + config_.lease_ttl;
  ++lease_counts_[pick];
  return {tasks_[pick], std::nullopt};
}

SubmitOutcome Study::submit(ScoreRecord record) {
  std::lock_guard lock(mu_);
  auto it = index_.find(record.task_id);
  if (it == index_.end()) throw Error(ErrorKind::UnknownTask, "unknown task " + record.task_id);
  const std::size_t i = it->second;
  const StudyTask& task = tasks_[i];

  const auto& resp = record.response;
  const bool valid_value = resp.value >= 1 && resp.value <= 5;
  const bool form_ok = comparison_kind(task.kind)
                           ? resp.kind == ResponseKind::quality && valid_value
                           : (resp.kind == ResponseKind::relevance && valid_value) ||
                                 (resp.kind == ResponseKind::cannot_judge && resp.value == 0);
  if (!form_ok) {
    throw Error(ErrorKind::FormMismatch, std::string(to_string(resp.kind)) + " " + std::to_string(resp.value) +
                                             " is not a valid response to a " + std::string(to_string(task.kind)) +
                                             " task");
  }
  if (scored_.contains({record.task_id, record.participant_id})) {
    throw Error(ErrorKind::DuplicateSubmission, record.participant_id + " already scored " + record.task_id);
  }
  if (record.submitted_at == std::chrono::sys_seconds{}) {
    record.submitted_at = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  }

  const std::uint64_t sequence = records_.size() + 1;
  persist(record, sequence);

  SubmitOutcome out;
  out.sequence = sequence;
  out.over_quota = counts_[i] >= config_.quota;
  if (out.over_quota) over_quota_.insert(task.task_id);
  if (auto lease = leases_.find({i, record.participant_id}); lease != leases_.end()) {
    --lease_counts_[i];
    leases_.erase(lease);
  }
  ++counts_[i];
  scored_.insert({record.task_id, record.participant_id});
  records_.push_back(std::move(record));
  if (log_.is_open() && config_.snapshot_every > 0 && records_.size() % config_.snapshot_every == 0) write_snapshot();
  return out;
}

void Study::persist(const ScoreRecord& record, std::uint64_t sequence) {
  if (!log_.is_open()) return;
  const json line = {{"seq", sequence}, {"record", record_json(record)}};
  log_ << line.dump() << '\n';
  log_.flush();
  if (!log_) throw Error(ErrorKind::Io, "failed to append to the score log");
}

void Study::write_snapshot() {
  json recs = json::array();
  for (const auto& r : records_) recs.push_back(record_json(r));
  const json doc = {{"sequence", records_.size()}, {"records", recs}};
  const auto tmp = config_.data_dir / "snapshot.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << doc.dump();
    if (!out) throw Error(ErrorKind::Io, "failed to write study snapshot");
  }
  std::filesystem::rename(tmp, config_.data_dir / "snapshot.json");
}

void Study::recover() {
  auto apply = [this](ScoreRecord r) {
    auto it = index_.find(r.task_id);
    if (it == index_.end()) return;  // task removed from the task file since
    if (!scored_.insert({r.task_id, r.participant_id}).second) return;
    if (counts_[it->second] >= config_.quota) over_quota_.insert(r.task_id);
    ++counts_[it->second];
    records_.push_back(std::move(r));
  };
  std::uint64_t applied = 0;
  const auto snap_path = config_.data_dir / "snapshot.json";
  if (std::filesystem::exists(snap_path)) {
    std::ifstream in(snap_path, std::ios::binary);
    const auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("records")) {
      throw Error(ErrorKind::CorruptManifest, "unreadable study snapshot " + snap_path.string());
    }
    for (const auto& r : doc["records"]) apply(parse_record(r));
    applied = doc.value("sequence", std::uint64_t{0});
  }
  std::ifstream log(config_.data_dir / "scores.jsonl", std::ios::binary);
  std::string line;
  while (std::getline(log, line)) {
    const auto doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) break;  // torn final write
    if (doc.value("seq", std::uint64_t{0}) <= applied) continue;
    apply(parse_record(doc["record"]));
  }
}

StudyResults Study::results(TaskType type) const {
  std::lock_guard lock(mu_);
  StudyResults out;
  out.type = type;
  std::map<std::string, std::vector<ScoreRecord>> by_task;
  for (const auto& r : records_) {
    const auto& task = tasks_[index_.find(r.task_id)->second];
    if (task.type() != type) continue;
    by_task[r.task_id].push_back(r);
    ++out.participant_counts[r.participant_id];
  }
  std::vector<TaggedSummary> tagged;
  for (const auto& task : tasks_) {
    if (task.type() != type) continue;
    auto it = by_task.find(task.task_id);
    if (it == by_task.end()) continue;
    try {
      auto s = summarize_scores(task.task_id, it->second);
      tagged.push_back({s, task.tags});
      out.summaries.push_back(std::move(s));
    } catch (const Error&) {
      // only cannot_judge responses so far
    }
    if (over_quota_.contains(task.task_id)) out.over_quota_tasks.push_back(task.task_id);
  }
  out.cdf = score_cdf(out.summaries);
  out.boxplots = tag_boxplots(tagged);
  for (const auto& [pid, n] : out.participant_counts) out.completion_codes[pid] = completion_code(pid);
  return out;
}

std::string Study::completion_code(const std::string& participant_id) const {
  std::string hex = sha256_hex(config_.secret + "\n" + participant_id).substr(0, 10);
  std::transform(hex.begin(), hex.end(), hex.begin(), [](unsigned char c) { return char(std::toupper(c)); });
  return hex;
}

const StudyTask* Study::task(std::string_view task_id) const {
  auto it = index_.find(task_id);
  return it == index_.end() ? nullptr : &tasks_[it->second];
}

std::size_t Study::response_count(std::string_view task_id) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(task_id);
  return it == index_.end() ? 0 : counts_[it->second];
}

std::vector<ScoreRecord> Study::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

}  // namespace webforge
