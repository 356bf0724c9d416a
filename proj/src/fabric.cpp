#include "trustbench/fabric.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "trustbench/errors.hpp"

namespace trustbench {
namespace {

std::uint64_t result_key(TaskId task_id, std::uint32_t attempt) {
  return (task_id << 32) | attempt;
}

}  // namespace

std::string_view task_status_name(TaskStatus s) {
  switch (s) {
    case TaskStatus::queued: return "queued";
    case TaskStatus::running: return "running";
    case TaskStatus::awaiting_validation: return "awaiting_validation";
    case TaskStatus::committed: return "committed";
    case TaskStatus::invalid_flagged: return "invalid_flagged";
  }
  return "unknown";
}

TaskFabric::TaskFabric(LogicalClock& clock, TxSink sink, std::uint32_t max_attempts)
    : clock_(clock), sink_(std::move(sink)), max_attempts_(max_attempts) {
  if (!sink_) throw ConfigError("task fabric needs a transaction sink");
  if (max_attempts_ < 1) throw ConfigError("max_attempts must be >= 1");
}

void TaskFabric::register_worker(SourceId worker) {
  std::lock_guard lock(mu_);
  workers_.insert(worker);
}

bool TaskFabric::worker_registered(SourceId worker) const {
  std::lock_guard lock(mu_);
  return workers_.count(worker) > 0;
}

DedupeResult TaskFabric::dedupe_check(const Policy& p) const {
  std::lock_guard lock(mu_);
  const Digest32 h = sha256(p.canonical());
  const auto it = live_payloads_.find(h);
  if (it == live_payloads_.end()) return {true, 0};
  return {false, it->second};
}

Task TaskFabric::submit_task(const Policy& p) {
  if (!p.valid()) throw ConfigError("policy out of range: " + p.canonical());
  std::lock_guard lock(mu_);
  const Digest32 h = sha256(p.canonical());
  if (const auto it = live_payloads_.find(h); it != live_payloads_.end()) {
    return task_ref(it->second);
  }
  Task t;
  t.task_id = static_cast<TaskId>(tasks_.size() + 1);
  t.policy = p;
  t.payload_hash = h;
  tasks_.push_back(t);
  queue_.push_back(t.task_id);
  live_payloads_.emplace(h, t.task_id);
  sink_(TaskSubmittedEvent{t.task_id, p, h}, {}, clock_.tick());
  return t;
}

std::optional<Task> TaskFabric::claim_task(SourceId worker) {
  std::lock_guard lock(mu_);
  if (workers_.count(worker) == 0) {
    throw ProtocolError("claim by unregistered worker " + std::to_string(worker));
  }
  for (auto it = queue_.begin(); it != queue_.end(); ++it) {
    Task& t = task_ref(*it);
    if (t.excluded && *t.excluded == worker) continue;
    t.status = TaskStatus::running;
    t.claimed_by = worker;
    t.excluded.reset();
    queue_.erase(it);
    return t;
  }
  return std::nullopt;
}

ResultRecord TaskFabric::post_result(SourceId worker, TaskId task_id, RewardVector reward,
                                     std::vector<std::uint8_t> report_bits) {
  std::lock_guard lock(mu_);
  Task& t = task_ref(task_id);
  if (t.status != TaskStatus::running) {
    throw ProtocolError("post_result on task " + std::to_string(task_id) + " in status " +
                        std::string(task_status_name(t.status)));
  }
  if (!t.claimed_by || *t.claimed_by != worker) {
    throw ProtocolError("post_result by worker " + std::to_string(worker) +
                        " not bound to task " + std::to_string(task_id));
  }
  ResultRecord rec;
  rec.task_id = task_id;
  rec.attempt = t.attempt;
  rec.reporter = worker;
  rec.reward = std::move(reward);
  rec.report_bits = std::move(report_bits);
  rec.timestamp = clock_.tick();
  result_index_.emplace(result_key(task_id, t.attempt), results_.size());
  results_.push_back(rec);
  t.status = TaskStatus::awaiting_validation;
  sink_(ResultReportedEvent{task_id, rec.attempt, worker, rec.reward.values}, {}, rec.timestamp);
  return rec;
}

void TaskFabric::commit(TaskId task_id) {
  std::lock_guard lock(mu_);
  Task& t = task_ref(task_id);
  if (t.status != TaskStatus::awaiting_validation) {
    throw ProtocolError("commit on task " + std::to_string(task_id) + " in status " +
                        std::string(task_status_name(t.status)));
  }
  t.status = TaskStatus::committed;
  t.claimed_by.reset();
}

Task TaskFabric::redispatch(TaskId task_id) {
  std::lock_guard lock(mu_);
  Task& t = task_ref(task_id);
  if (t.status != TaskStatus::awaiting_validation) {
    throw ProtocolError("redispatch on task " + std::to_string(task_id) + " in status " +
                        std::string(task_status_name(t.status)));
  }
  if (t.attempt >= max_attempts_) {
    t.status = TaskStatus::invalid_flagged;
    t.excluded.reset();
    t.claimed_by.reset();
    live_payloads_.erase(t.payload_hash);
    events_.push_back("task " + std::to_string(task_id) + " flagged invalid after " +
                      std::to_string(t.attempt + 1) + " attempts");
    sink_(InvalidFlaggedEvent{task_id, t.attempt + 1}, {}, clock_.tick());
    return t;
  }
  t.excluded = t.claimed_by;
  t.claimed_by.reset();
  t.attempt += 1;
  t.status = TaskStatus::queued;
  queue_.push_back(task_id);
  return t;
}

Task TaskFabric::task(TaskId id) const {
  std::lock_guard lock(mu_);
  return task_ref(id);
}

std::size_t TaskFabric::queue_length() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

FabricCounts TaskFabric::counts() const {
  std::lock_guard lock(mu_);
  FabricCounts c;
  c.submitted = tasks_.size();
  for (const Task& t : tasks_) {
    switch (t.status) {
      case TaskStatus::queued: ++c.queued; break;
      case TaskStatus::running: ++c.running; break;
      case TaskStatus::awaiting_validation: ++c.awaiting_validation; break;
      case TaskStatus::committed: ++c.committed; break;
      case TaskStatus::invalid_flagged: ++c.invalid_flagged; break;
    }
  }
  return c;
}

std::vector<Task> TaskFabric::snapshot_tasks() const {
  std::lock_guard lock(mu_);
  return tasks_;
}

std::vector<ResultRecord> TaskFabric::snapshot_results() const {
  std::lock_guard lock(mu_);
  return results_;
}

void TaskFabric::log_event(std::string message) {
  std::lock_guard lock(mu_);
  events_.push_back(std::move(message));
}

std::vector<std::string> TaskFabric::snapshot_events() const {
  std::lock_guard lock(mu_);
  return events_;
}

void TaskFabric::write_results_ndjson(const std::filesystem::path& file) const {
  const auto records = snapshot_results();
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + file.string());
  for (const ResultRecord& r : records) {
    nlohmann::json j{{"task_id", r.task_id},
                     {"attempt", r.attempt},
                     {"reporter", r.reporter},
                     {"reward", r.reward.values},
                     {"timestamp", r.timestamp}};
    std::string bits;
    bits.reserve(r.report_bits.size() * 2);
    static const char* hex = "0123456789abcdef";
    for (std::uint8_t b : r.report_bits) {
      bits.push_back(hex[b >> 4]);
      bits.push_back(hex[b & 0xF]);
    }
    j["report_bits"] = bits;
    out << j.dump() << '\n';
  }
}

void TaskFabric::write_task_csv(const std::filesystem::path& file) const {
  const auto tasks = snapshot_tasks();
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + file.string());
  out << "task_id,itn,irs,status,attempt\n";
  for (const Task& t : tasks) {
    std::string fields = t.policy.canonical();
    std::replace(fields.begin(), fields.end(), ';', ',');
    out << t.task_id << ',' << fields << ',' << task_status_name(t.status) << ',' << t.attempt
        << '\n';
  }
}

Task& TaskFabric::task_ref(TaskId id) {
  if (id == 0 || id > tasks_.size()) {
    throw ProtocolError("unknown task id " + std::to_string(id));
  }
  return tasks_[id - 1];
}

const Task& TaskFabric::task_ref(TaskId id) const {
  if (id == 0 || id > tasks_.size()) {
    throw ProtocolError("unknown task id " + std::to_string(id));
  }
  return tasks_[id - 1];
}

}  // namespace trustbench
