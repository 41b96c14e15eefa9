#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "tograsp/dataset.hpp"
#include "tograsp/engine.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/posemath.hpp"

using namespace tograsp;

namespace {

DatasetRecord fake_record(const std::string& object, bool task_oriented, int i) {
  DatasetRecord r;
  r.object_id = object;
  if (task_oriented) r.task = TaskKind::kCapTwist;
  r.description = "hold the cap " + std::to_string(i);
  r.pose = Eigen::VectorXd::LinSpaced(15, 0.1 * i, 0.1 * i + 1.4);
  r.rule_pass = true;
  r.q1 = 0.01 * i;
  r.penetration_cm = 0.001 * i;
  r.validated = true;
  r.stage = "agnostic";
  r.iteration = i % 3;
  r.seed = 1000 + static_cast<std::uint64_t>(i);
  return r;
}

std::vector<DatasetRecord> fake_corpus(int objects, int per_mode) {
  std::vector<DatasetRecord> out;
  for (int o = 0; o < objects; ++o) {
    const std::string id = "obj" + std::to_string(100 + o);
    for (int i = 0; i < per_mode; ++i) {
      out.push_back(fake_record(id, true, i));
      out.push_back(fake_record(id, false, i));
    }
  }
  return out;
}

std::string joined(const std::vector<DatasetRecord>& records) {
  std::string s;
  for (const auto& r : records) s += to_json_line(r) + "\n";
  return s;
}

}  // namespace

TEST_CASE("record json round trip and key order") {
  DatasetRecord r = fake_record("bottle", true, 7);
  r.pose[3] = 1.0 / 3.0;
  r.split = "seen";
  const std::string line = to_json_line(r);
  CHECK(line.find("\"object\"") < line.find("\"task\""));
  CHECK(line.find("\"task\"") < line.find("\"description\""));
  CHECK(line.find("\"pose\"") < line.find("\"rule_pass\""));
  CHECK(line.find("\"validated\"") < line.find("\"stage\""));
  CHECK(line.find("\"seed\"") < line.find("\"split\""));
  const DatasetRecord back = parse_json_line(line);
  CHECK(to_json_line(back) == line);
  CHECK(back.pose == r.pose);
  CHECK(back.task == r.task);

  DatasetRecord agnostic = fake_record("bottle", false, 1);
  CHECK(to_json_line(agnostic).find("\"task\":null") != std::string::npos);
  CHECK_FALSE(parse_json_line(to_json_line(agnostic)).task_oriented());

  CHECK_THROWS_AS(parse_json_line("{not json"), ParseError);
  CHECK_THROWS_AS(parse_json_line("{\"object\":\"x\"}"), ParseError);
}

TEST_CASE("validated records must pass their rule") {
  DatasetRecord r = fake_record("bottle", true, 1);
  r.rule_pass = false;
  CHECK_THROWS_AS(r.check(), ValidationError);
  r.validated = false;
  CHECK_NOTHROW(r.check());
  r.validated = true;
  CHECK_THROWS_AS(parse_json_line(to_json_line(r)), ValidationError);
}

TEST_CASE("dataset files") {
  const auto dir = std::filesystem::temp_directory_path() / "tograsp_ds_test";
  std::filesystem::remove_all(dir);
  const auto records = fake_corpus(2, 3);
  write_dataset(dir / "b.jsonl", records);
  write_dataset(dir / "a.jsonl", {records.front()});
  CHECK(joined(read_dataset(dir / "b.jsonl")) == joined(records));
  std::vector<std::string> ids;
  const auto tree = read_dataset_tree(dir, &ids);
  CHECK(tree.size() == records.size() + 1);
  CHECK(to_json_line(tree.front()) == to_json_line(records.front()));
  {
    std::ofstream os(dir / "c.jsonl");
    os << to_json_line(records[0]) << "\n{broken\n";
  }
  CHECK_THROWS_AS(read_dataset(dir / "c.jsonl"), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("aggregation quotas and split") {
  QuotaConfig quota;
  quota.task_oriented = 10;
  quota.agnostic = 10;
  const auto corpus = fake_corpus(80, 100);
  const auto out = aggregate_dataset(corpus, quota, 5);
  CHECK(out.size() == 80 * 20);
  std::map<std::string, int> per_object;
  std::map<std::string, std::string> split;
  for (const auto& r : out) {
    ++per_object[r.object_id];
    split[r.object_id] = r.split;
  }
  CHECK(per_object.size() == 80);
  for (const auto& [id, n] : per_object) CHECK(n == 20);
  int unseen = 0;
  for (const auto& [id, s] : split) unseen += s == "unseen";
  CHECK(unseen == 8);
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    CHECK(out[i].object_id <= out[i + 1].object_id);
  }

  CHECK(joined(aggregate_dataset(corpus, quota, 5)) == joined(out));
  CHECK(joined(aggregate_dataset(corpus, quota, 6)) != joined(out));

  auto short_corpus = fake_corpus(3, 5);
  CHECK_THROWS_AS(aggregate_dataset(short_corpus, quota, 1), QuotaUnsatisfiable);
  quota.allow_partial = true;
  CHECK(aggregate_dataset(short_corpus, quota, 1).size() == 30);

  for (auto& r : short_corpus) r.validated = false;
  CHECK(aggregate_dataset(short_corpus, quota, 1).empty());
}

TEST_CASE("split_objects") {
  std::vector<std::string> ids;
  for (int i = 0; i < 80; ++i) ids.push_back("o" + std::to_string(i));
  const auto split = split_objects(ids, 0.1, 3);
  int unseen = 0;
  for (const auto& [id, s] : split) unseen += s == "unseen";
  CHECK(unseen == 8);
  CHECK(split == split_objects(ids, 0.1, 3));
  CHECK_THROWS_AS(split_objects(ids, 1.5, 3), InvalidRange);
}

TEST_CASE("verify_dataset recomputes labels") {
  const HandModel hand(builtin_test_hand());
  const ObjectModel sphere = make_builtin_object("sphere");
  const auto poses = generate_agnostic(hand, sphere, 24, Rng(11));
  REQUIRE_FALSE(poses.empty());
  std::vector<DatasetRecord> records;
  for (const auto& p : poses) {
    records.push_back(make_record(hand, sphere, p, std::nullopt, "grasp the sphere",
                                  "agnostic", 0, 11));
  }
  const ObjectResolver resolve = [&](const std::string& id) -> const ObjectModel& {
    if (id != sphere.id) throw Error("unknown object " + id);
    return sphere;
  };
  CHECK_NOTHROW(verify_dataset(records, hand, resolve));
  for (auto& r : records) r = parse_json_line(to_json_line(r));
  CHECK_NOTHROW(verify_dataset(records, hand, resolve));
  records.back().q1 += 0.01;
  CHECK_THROWS_AS(verify_dataset(records, hand, resolve), ValidationError);
}
