#pragma once

#include <string>
#include <vector>

#include "webforge/study.hpp"

namespace webforge::testing {

inline StudyTask comparison_task(std::string id, Variant variant = Variant::server, std::vector<ImageTag> tags = {}) {
  StudyTask t;
  t.task_id = std::move(id);
  t.kind = TaskKind::images;
  t.variant = variant;
  t.prompt_text = "prompt for " + t.task_id;
  t.original_ref = t.task_id + "/original.png";
  t.generated_ref = t.task_id + "/generated.png";
  t.tags = std::move(tags);
  return t;
}

inline StudyTask scale_task(std::string id) {
  StudyTask t;
  t.task_id = std::move(id);
  t.kind = TaskKind::scale;
  t.prompt_text = "a description";
  t.original_ref = t.task_id + "/original.png";
  return t;
}

inline std::vector<StudyTask> comparison_tasks(int n, Variant variant = Variant::server) {
  std::vector<StudyTask> out;
  for (int i = 0; i < n; ++i) out.push_back(comparison_task("t" + std::to_string(i), variant));
  return out;
}

inline ScoreRecord quality_record(std::string task, std::string pid, int v) {
  return {std::move(task), std::move(pid), {ResponseKind::quality, v}, {}};
}

}  // namespace webforge::testing
