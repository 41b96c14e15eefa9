#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "tograsp/errors.hpp"
#include "tograsp/rng.hpp"
#include "tograsp/taskdesc.hpp"

using namespace tograsp;

TEST_CASE("default bank counts") {
  const TemplateBank& bank = default_bank();
  CHECK(bank.templates.size() == 22);
  CHECK(bank.actions.size() == 5);
  CHECK(bank.parts.size() == 16);
  CHECK(bank.affordances.size() == 18);
  CHECK(bank.compat.size() == all_tasks().size());
  CHECK_NOTHROW(bank.validate());
}

TEST_CASE("template filling") {
  const std::string tmpl = "please <action> the <part> so that you can <affordance>";
  CHECK(std::find(default_bank().templates.begin(), default_bank().templates.end(), tmpl) !=
        default_bank().templates.end());
  CHECK(fill_template(tmpl, "grasp", "cap", std::string("open the bottle")) ==
        "please grasp the cap so that you can open the bottle");
  CHECK(fill_template("<action> the <part>", "hold", "pen", std::nullopt) == "hold the pen");
}

TEST_CASE("generation contracts") {
  const TemplateBank& bank = default_bank();
  Rng rng(81);
  for (int i = 0; i < 500; ++i) {
    const std::optional<TaskKind> task =
        i % 6 == 5 ? std::nullopt : std::optional<TaskKind>(all_tasks()[i % 6]);
    const TaskDescription d = generate(bank, task, rng);
    CHECK(d.text.find(d.action) != std::string::npos);
    CHECK(d.text.find(d.part) != std::string::npos);
    if (task) {
      REQUIRE(d.affordance.has_value());
      CHECK(d.text.find(*d.affordance) != std::string::npos);
      const TaskAttributes& attrs = bank.compat.at(*task);
      CHECK(std::count(attrs.parts.begin(), attrs.parts.end(), d.part) == 1);
      CHECK(std::count(attrs.affordances.begin(), attrs.affordances.end(), *d.affordance) == 1);
    } else {
      CHECK_FALSE(d.affordance.has_value());
      CHECK(bank.templates[d.template_index].find("<affordance>") == std::string::npos);
      for (const auto& a : bank.affordances) CHECK(d.text.find(a) == std::string::npos);
    }
  }
  Rng a(7), b(7);
  CHECK(generate(bank, TaskKind::kCapTwist, a).text == generate(bank, TaskKind::kCapTwist, b).text);
}

TEST_CASE("generation covers every template") {
  const TemplateBank& bank = default_bank();
  Rng rng(82);
  std::set<int> seen;
  for (int i = 0; i < 10000; ++i) {
    const int mode = rng.uniform_int(0, 5);
    const std::optional<TaskKind> task =
        mode == 5 ? std::nullopt : std::optional<TaskKind>(all_tasks()[mode]);
    seen.insert(generate(bank, task, rng).template_index);
  }
  CHECK(seen.size() == bank.templates.size());
}

TEST_CASE("bank parsing, validation and round trip") {
  const TemplateBank& bank = default_bank();
  CHECK(parse_bank(bank.to_text()) == bank);
  const auto path = std::filesystem::temp_directory_path() / "tograsp_bank.txt";
  bank.save(path);
  CHECK(load_bank(path) == bank);
  std::filesystem::remove(path);

  const std::string missing_part =
      "[templates]\nplease <action> the thing\n[actions]\ngrasp\n[parts]\ncap\n";
  CHECK_THROWS_AS(parse_bank(missing_part), MalformedTemplate);
  try {
    parse_bank(missing_part);
  } catch (const MalformedTemplate& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_bank("[templates]\n<action> <action> the <part>\n[actions]\na\n[parts]\nb\n"),
                  MalformedTemplate);
  CHECK_THROWS_AS(parse_bank("[bogus]\nx\n"), MalformedTemplate);
  CHECK_THROWS_AS(load_bank("/nonexistent/bank.txt"), Error);

  const TemplateBank agnostic_only =
      parse_bank("[templates]\n<action> the <part>\n[actions]\ngrasp\n[parts]\ncap\n");
  Rng rng(83);
  CHECK(generate(agnostic_only, std::nullopt, rng).text == "grasp the cap");
  CHECK_THROWS_AS(generate(agnostic_only, TaskKind::kCapTwist, rng), NoCompatibleTemplate);
}
