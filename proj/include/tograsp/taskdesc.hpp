#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tograsp/rng.hpp"
#include "tograsp/taskeval.hpp"

namespace tograsp {

struct TaskAttributes {
  std::vector<std::string> actions;
  std::vector<std::string> parts;
  std::vector<std::string> affordances;

  bool operator==(const TaskAttributes&) const = default;
};

// Templates with <action>/<part>/<affordance> slots plus attribute lists and
// the attributes each task may use. Templates without <affordance> serve the
// task-agnostic mode.
struct TemplateBank {
  std::vector<std::string> templates;
  std::vector<std::string> actions;
  std::vector<std::string> parts;
  std::vector<std::string> affordances;
  std::map<TaskKind, TaskAttributes> compat;

  bool operator==(const TemplateBank&) const = default;

  // Throws MalformedTemplate (line 0 when not tied to a line).
  void validate() const;
  void save(const std::filesystem::path& path) const;
  std::string to_text() const;
};

// Bank text format: '#' comments, sections [templates], [actions], [parts],
// [affordances] with one entry per line, and [compat] lines of the form
//   <task> | actions: a, b | parts: c, d | affordances: e, f
TemplateBank parse_bank(const std::string& text);
TemplateBank load_bank(const std::filesystem::path& path);
const TemplateBank& default_bank();

struct TaskDescription {
  std::string text;
  std::string action;
  std::string part;
  std::optional<std::string> affordance;
  int template_index = 0;
};

// Substitutes the slots of one template.
std::string fill_template(const std::string& tmpl, const std::string& action,
                          const std::string& part,
                          const std::optional<std::string>& affordance);

// Uniformly picks a compatible template, then attributes. No task means the
// task-agnostic mode (templates without <affordance>, any action and part).
// Throws NoCompatibleTemplate.
TaskDescription generate(const TemplateBank& bank,
                         std::optional<TaskKind> task, Rng& rng);

}  // namespace tograsp
