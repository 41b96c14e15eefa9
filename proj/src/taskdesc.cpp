#include "tograsp/taskdesc.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "default_bank.hpp"
#include "tograsp/errors.hpp"

namespace tograsp {

namespace {

constexpr const char* kAction = "<action>";
constexpr const char* kPart = "<part>";
constexpr const char* kAffordance = "<affordance>";

int count_of(const std::string& s, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = s.find(needle); pos != std::string::npos;
       pos = s.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void malformed(int line, const std::string& what) {
  throw MalformedTemplate("template bank line " + std::to_string(line) + ": " +
                          what);
}

void check_template(const std::string& t, int line) {
  if (count_of(t, kAction) != 1) malformed(line, "needs exactly one <action>");
  if (count_of(t, kPart) != 1) malformed(line, "needs exactly one <part>");
  if (count_of(t, kAffordance) > 1) {
    malformed(line, "has more than one <affordance>");
  }
  std::string rest = t;
  for (const char* slot : {kAction, kPart, kAffordance}) {
    const auto pos = rest.find(slot);
    if (pos != std::string::npos) rest.erase(pos, std::string(slot).size());
  }
  if (rest.find('<') != std::string::npos ||
      rest.find('>') != std::string::npos) {
    malformed(line, "has an unknown slot");
  }
}

void check_subset(const std::vector<std::string>& used,
                  const std::vector<std::string>& known, const char* kind,
                  int line) {
  if (used.empty()) malformed(line, std::string("no ") + kind + " listed");
  for (const std::string& a : used) {
    if (std::find(known.begin(), known.end(), a) == known.end()) {
      malformed(line, std::string("unknown ") + kind + " '" + a + "'");
    }
  }
}

void check_unique(const std::vector<std::string>& items, const char* kind) {
  std::set<std::string> seen;
  for (const std::string& s : items) {
    if (!seen.insert(s).second) {
      malformed(0, std::string("duplicate ") + kind + " '" + s + "'");
    }
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += items[i];
  }
  return out;
}

std::string fill(std::string text, const std::string& slot,
                 const std::string& value) {
  const auto pos = text.find(slot);
  if (pos != std::string::npos) text.replace(pos, slot.size(), value);
  return text;
}

}  // namespace

void TemplateBank::validate() const {
  for (const std::string& t : templates) check_template(t, 0);
  for (const auto& [kind, list] :
       {std::pair{"action", &actions}, std::pair{"part", &parts}}) {
    if (list->empty()) malformed(0, std::string("no ") + kind + "s");
    check_unique(*list, kind);
  }
  check_unique(affordances, "affordance");
  for (const auto& [task, attrs] : compat) {
    check_subset(attrs.actions, actions, "action", 0);
    check_subset(attrs.parts, parts, "part", 0);
    check_subset(attrs.affordances, affordances, "affordance", 0);
  }
}

std::string TemplateBank::to_text() const {
  std::ostringstream os;
  os << "[templates]\n";
  for (const auto& t : templates) os << t << '\n';
  os << "\n[actions]\n";
  for (const auto& a : actions) os << a << '\n';
  os << "\n[parts]\n";
  for (const auto& p : parts) os << p << '\n';
  os << "\n[affordances]\n";
  for (const auto& a : affordances) os << a << '\n';
  os << "\n[compat]\n";
  for (const auto& [task, attrs] : compat) {
    os << to_string(task) << " | actions: " << join(attrs.actions)
       << " | parts: " << join(attrs.parts)
       << " | affordances: " << join(attrs.affordances) << '\n';
  }
  return os.str();
}

void TemplateBank::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write template bank " + path.string());
  os << to_text();
}

TemplateBank parse_bank(const std::string& text) {
  TemplateBank bank;
  std::string section;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = s.substr(1, s.size() - 2);
      if (section != "templates" && section != "actions" &&
          section != "parts" && section != "affordances" &&
          section != "compat") {
        malformed(line, "unknown section [" + section + "]");
      }
      continue;
    }
    if (section.empty()) malformed(line, "entry outside of a section");
    if (section == "templates") {
      check_template(s, line);
      bank.templates.push_back(s);
    } else if (section == "actions") {
      bank.actions.push_back(s);
    } else if (section == "parts") {
      bank.parts.push_back(s);
    } else if (section == "affordances") {
      bank.affordances.push_back(s);
    } else {
      const auto fields = split(s, '|');
      if (fields.size() != 4) {
        malformed(line, "compat line needs task | actions | parts | affordances");
      }
      TaskKind task;
      try {
        task = parse_task(fields[0]);
      } catch (const ParseError&) {
        malformed(line, "unknown task '" + fields[0] + "'");
      }
      if (bank.compat.count(task) > 0) malformed(line, "duplicate task");
      TaskAttributes attrs;
      const std::pair<const char*, std::vector<std::string>*> keys[] = {
          {"actions", &attrs.actions},
          {"parts", &attrs.parts},
          {"affordances", &attrs.affordances}};
      for (std::size_t i = 0; i < 3; ++i) {
        const auto colon = fields[i + 1].find(':');
        if (colon == std::string::npos ||
            trim(fields[i + 1].substr(0, colon)) != keys[i].first) {
          malformed(line, std::string("expected '") + keys[i].first + ":'");
        }
        *keys[i].second = split(fields[i + 1].substr(colon + 1), ',');
      }
      check_subset(attrs.actions, bank.actions, "action", line);
      check_subset(attrs.parts, bank.parts, "part", line);
      check_subset(attrs.affordances, bank.affordances, "affordance", line);
      bank.compat.emplace(task, std::move(attrs));
    }
  }
  bank.validate();
  return bank;
}

TemplateBank load_bank(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open template bank " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_bank(ss.str());
}

const TemplateBank& default_bank() {
  static const TemplateBank bank = parse_bank(detail::kDefaultBankText);
  return bank;
}

std::string fill_template(const std::string& tmpl, const std::string& action,
                          const std::string& part,
                          const std::optional<std::string>& affordance) {
  std::string text = fill(fill(tmpl, kAction, action), kPart, part);
  if (affordance) text = fill(text, kAffordance, *affordance);
  return text;
}

TaskDescription generate(const TemplateBank& bank, std::optional<TaskKind> task,
                         Rng& rng) {
  std::vector<int> candidates;
  for (std::size_t i = 0; i < bank.templates.size(); ++i) {
    const bool oriented = count_of(bank.templates[i], kAffordance) == 1;
    if (oriented == task.has_value()) candidates.push_back(static_cast<int>(i));
  }
  const TaskAttributes* attrs = nullptr;
  if (task) {
    const auto it = bank.compat.find(*task);
    if (it == bank.compat.end()) {
      throw NoCompatibleTemplate("bank has no attributes for task " +
                                 to_string(*task));
    }
    attrs = &it->second;
  }
  if (candidates.empty()) {
    throw NoCompatibleTemplate(
        task ? "bank has no task-oriented templates"
             : "bank has no task-agnostic templates");
  }
  const auto pick = [&rng](const std::vector<std::string>& v) {
    return v[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(v.size()) - 1))];
  };
  TaskDescription d;
  d.template_index =
      candidates[rng.uniform_int(0, static_cast<int>(candidates.size()) - 1)];
  d.action = pick(attrs ? attrs->actions : bank.actions);
  d.part = pick(attrs ? attrs->parts : bank.parts);
  if (attrs) d.affordance = pick(attrs->affordances);
  d.text = fill_template(bank.templates[d.template_index], d.action, d.part,
                         d.affordance);
  return d;
}

}  // namespace tograsp
