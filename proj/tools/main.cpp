#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "tograsp/dataset.hpp"
#include "tograsp/engine.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/format.hpp"
#include "tograsp/parallel.hpp"
#include "tograsp/posemath.hpp"

namespace fs = std::filesystem;
using namespace tograsp;
using tograsp::cli::RunConfig;

namespace {

constexpr const char* kVersion = "0.1.0";

// Flags shared by every subcommand. Anything that changes results lives in
// the config file; flags select stages and paths, plus the few overrides the
// subcommands document.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 1;
};

struct Context {
  RunConfig cfg;
  std::unique_ptr<HandModel> hand;
  TemplateBank bank;
  std::map<std::string, ObjectModel> objects;  // by object id

  const ObjectModel& object(const std::string& ref_or_id) {
    const std::string id = ref_or_id.rfind("builtin:", 0) == 0 ? ref_or_id.substr(8) : ref_or_id;
    if (auto it = objects.find(id); it != objects.end()) return it->second;
    for (const auto& name : builtin_object_names()) {
      if (name == id) return objects.emplace(id, make_builtin_object(id)).first->second;
    }
    if (fs::exists(ref_or_id)) {
      ObjectModel obj = load_object_model(ref_or_id);
      const std::string key = obj.id;
      return objects.insert_or_assign(key, std::move(obj)).first->second;
    }
    throw ValidationError("unknown object '" + ref_or_id + "'");
  }
};

Context make_context(const Common& common, const std::function<void(RunConfig&)>& overrides) {
  Context ctx;
  ctx.cfg = common.config.empty() ? RunConfig::defaults() : RunConfig::load(common.config);
  ctx.cfg.apply_env();
  if (common.seed) ctx.cfg.seed = common.seed;
  if (overrides) overrides(ctx.cfg);
  ctx.cfg.validate();
  std::cerr << "tograsp " << kVersion << " seed " << *ctx.cfg.seed << " workers " << common.workers
            << "\nresolved config: " << ctx.cfg.to_json().dump() << '\n';
  ctx.hand = std::make_unique<HandModel>(resolve_hand_spec(ctx.cfg.paths.hand));
  ctx.bank = ctx.cfg.paths.templates.empty() ? default_bank() : load_bank(ctx.cfg.paths.templates);
  for (const auto& ref : ctx.cfg.paths.objects) {
    ObjectModel obj = resolve_object(ref);
    const std::string id = obj.id;
    ctx.objects.insert_or_assign(id, std::move(obj));
  }
  return ctx;
}

fs::path output_path(const Context& ctx, const std::string& given, const std::string& fallback) {
  return given.empty() ? fs::path(ctx.cfg.paths.output_dir) / fallback : fs::path(given);
}

std::optional<TaskKind> task_arg(const std::string& name) {
  if (name.empty() || name == "agnostic") return std::nullopt;
  return parse_task(name);
}

GraspPose pose_of(const Context& ctx, const DatasetRecord& r) { return unflatten(r.pose, ctx.hand->dof()); }

void require_input(const std::string& path) {
  if (!fs::exists(path)) throw ValidationError("input '" + path + "' does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

// ---------------------------------------------------------------- commands

int cmd_gen_agnostic(Context& ctx, const Common& common, const std::vector<std::string>& refs,
                     const std::string& out) {
  AgnosticOptions opts = ctx.cfg.agnostic;
  opts.workers = common.workers;
  std::vector<std::string> targets = refs.empty() ? ctx.cfg.paths.objects : refs;
  const Rng master(*ctx.cfg.seed);
  std::vector<DatasetRecord> records;
  std::uint64_t stream = 0;
  for (const auto& ref : targets) {
    const ObjectModel& obj = ctx.object(ref);
    Rng text_rng = master.split(stream++);
    const auto candidates = propose_agnostic(*ctx.hand, obj, ctx.cfg.agnostic_n, master.split(stream++), opts);
    int kept = 0;
    for (const auto& c : candidates) {
      if (!c.labels.stable) continue;
      records.push_back(make_record(*ctx.hand, obj, c.pose, std::nullopt,
                                    generate(ctx.bank, std::nullopt, text_rng).text, "agnostic", 0,
                                    *ctx.cfg.seed));
      ++kept;
    }
    std::cerr << obj.id << ": " << kept << " of " << candidates.size() << " candidates pass the precheck\n";
  }
  const fs::path path = output_path(ctx, out, "agnostic.jsonl");
  write_dataset(path, records);
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_filter(Context& ctx, const std::string& in, const std::string& task_name, const std::string& out) {
  const TaskKind task = parse_task(task_name);
  Rng text_rng = Rng(*ctx.cfg.seed).split(1);
  std::vector<DatasetRecord> kept;
  require_input(in);
  const auto records = read_dataset_tree(in);
  for (const auto& r : records) {
    const ObjectModel& obj = ctx.object(r.object_id);
    const std::string description = generate(ctx.bank, task, text_rng).text;
    DatasetRecord labelled;
    try {
      labelled = make_record(*ctx.hand, obj, pose_of(ctx, r), task, description, "filter", r.iteration,
                             *ctx.cfg.seed);
    } catch (const MissingSurface&) {
      continue;  // object lacks the surfaces this task's rule needs
    }
    if (labelled.validated) kept.push_back(std::move(labelled));
  }
  std::cerr << kept.size() << " of " << records.size() << " records pass " << to_string(task) << '\n';
  const fs::path path = output_path(ctx, out, to_string(task) + ".jsonl");
  write_dataset(path, kept);
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_train(Context& ctx, const std::vector<std::string>& inputs, const std::string& out) {
  TrainingSet set;
  std::map<std::string, int> object_index;
  std::map<std::string, int> text_index;
  const StubTextEmbedder embedder;
  Rng text_rng = Rng(*ctx.cfg.seed).split(2);
  for (const auto& in : inputs) {
    require_input(in);
    for (const auto& r : read_dataset_tree(in)) {
      if (!r.validated) continue;
      const ObjectModel& obj = ctx.object(r.object_id);
      auto [oit, new_object] = object_index.try_emplace(obj.id, static_cast<int>(set.object_clouds.size()));
      if (new_object) set.object_clouds.push_back(obj.points);
      const std::string text = r.description.empty() ? generate(ctx.bank, r.task, text_rng).text : r.description;
      auto [tit, new_text] = text_index.try_emplace(text, static_cast<int>(set.text_embeddings.size()));
      if (new_text) set.text_embeddings.push_back(embedder.embed(text));
      set.add(r.pose, oit->second, tit->second);
    }
  }
  if (set.size() == 0) throw ValidationError("no validated records to train on");
  ModelConfig mc = ctx.cfg.model;
  mc.state_dim = 9 + ctx.hand->dof();
  DiffusionNet net(mc, *ctx.cfg.seed);
  TrainOptions opts = ctx.cfg.train;
  opts.seed = *ctx.cfg.seed;
  opts.q_sample_mode = ctx.cfg.schedule.q_sample_mode;
  opts.scale_floor = grasp_scale_floor(ctx.hand->dof());
  Trainer trainer(net, ctx.cfg.schedule.schedule(), ctx.hand.get(), opts);
  const auto trace = trainer.fit(set);
  const fs::path path = out.empty() ? fs::path(ctx.cfg.paths.checkpoint) : fs::path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  net.save(path);
  std::string csv = "step,loss_d,loss_r,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    csv += std::to_string(i + 1) + ',' + format_double(trace[i].diffusion) + ',' +
           format_double(trace[i].reconstruction) + ',' + format_double(trace[i].total) + '\n';
  }
  write_text(fs::path(path.string() + ".loss.csv"), csv);
  std::cerr << "trained on " << set.size() << " grasps, final loss "
            << (trace.empty() ? 0.0 : trace.back().total) << '\n';
  std::cout << path.string() << '\n';
  return 0;
}

DiffusionNet load_model(const Context& ctx, const std::string& given) {
  const std::string path = given.empty() ? ctx.cfg.paths.checkpoint : given;
  if (!fs::exists(path)) throw ValidationError("checkpoint '" + path + "' does not exist");
  return DiffusionNet::load(path);
}

int cmd_sample(Context& ctx, const Common& common, const std::string& checkpoint, const std::string& object_ref,
               const std::string& task_name, std::string text, int n, const std::string& out) {
  const DiffusionNet net = load_model(ctx, checkpoint);
  const ObjectModel& obj = ctx.object(object_ref);
  const std::optional<TaskKind> task = task_arg(task_name);
  const Rng master(*ctx.cfg.seed);
  if (text.empty()) {
    Rng text_rng = master.split(1);
    text = generate(ctx.bank, task, text_rng).text;
  }
  SampleOptions opts;
  opts.workers = common.workers;
  opts.allow_untrained = true;
  const auto poses = sample(*ctx.hand, obj, text, net, ctx.cfg.schedule.schedule(),
                            n >= 0 ? n : ctx.cfg.sample_n, master.split(2), opts);
  std::vector<DatasetRecord> records;
  for (const auto& p : poses) {
    DatasetRecord r;
    try {
      r = make_record(*ctx.hand, obj, p, task, text, "sample", 0, *ctx.cfg.seed);
    } catch (const MissingSurface&) {
      r = make_record(*ctx.hand, obj, p, std::nullopt, text, "sample", 0, *ctx.cfg.seed);
    }
    records.push_back(std::move(r));
  }
  const fs::path path = output_path(ctx, out, "samples.jsonl");
  write_dataset(path, records);
  std::cerr << "sampled " << records.size() << " grasps for \"" << text << "\"\n";
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_refine(Context& ctx, const Common& common, const std::string& in, const std::string& out) {
  require_input(in);
  const auto records = read_dataset_tree(in);
  std::vector<DatasetRecord> refined(records.size());
  std::vector<const ObjectModel*> objects;
  for (const auto& r : records) objects.push_back(&ctx.object(r.object_id));
  parallel_for(records.size(), common.workers, [&](std::size_t i) {
    const DatasetRecord& r = records[i];
    const GraspPose pose = refine_pose(pose_of(ctx, r), *ctx.hand, *objects[i], ctx.cfg.refine).pose;
    refined[i] = make_record(*ctx.hand, *objects[i], pose, r.task, r.description, "refined", r.iteration, r.seed);
    refined[i].split = r.split;
  });
  const fs::path path = output_path(ctx, out, "refined.jsonl");
  write_dataset(path, refined);
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_evaluate(Context& ctx, const Common& common, const std::string& in, const std::string& checkpoint,
                 const std::vector<std::string>& tasks, int n, const std::string& out) {
  if (!checkpoint.empty() || in.empty()) {
    const DiffusionNet net = load_model(ctx, checkpoint);
    std::vector<const ObjectModel*> objects;
    std::vector<TaskKind> kinds;
    for (const auto& t : tasks) kinds.push_back(parse_task(t));
    if (kinds.empty()) kinds.push_back(TaskKind::kSprayPress);
    for (const auto& ref : ctx.cfg.paths.objects) {
      const ObjectModel& obj = ctx.object(ref);
      bool usable = true;
      for (TaskKind t : kinds) {
        try {
          rule_filter(t, ctx.hand->forward_kinematics(GraspPose::identity(ctx.hand->dof())), obj);
        } catch (const MissingSurface&) {
          usable = false;
        }
      }
      if (usable) objects.push_back(&obj);
    }
    EvalOptions opts;
    opts.n = n >= 0 ? n : ctx.cfg.sample_n;
    opts.refine = ctx.cfg.refine;
    opts.seed = *ctx.cfg.seed;
    opts.workers = common.workers;
    const EvalReport report = evaluate(*ctx.hand, net, objects, kinds, ctx.cfg.schedule.schedule(), opts, ctx.bank);
    const fs::path path = output_path(ctx, out, "report.csv");
    write_text(path, report.to_csv());
    std::cout << report.summary();
    return 0;
  }

  require_input(in);
  std::vector<std::string> ids;
  const auto records = read_dataset_tree(in, &ids);
  std::vector<std::string> rows(records.size());
  std::vector<const ObjectModel*> objects;
  for (const auto& r : records) objects.push_back(&ctx.object(r.object_id));
  parallel_for(records.size(), common.workers, [&](std::size_t i) {
    const DatasetRecord& r = records[i];
    const PoseLabels l = label_pose(*ctx.hand, *objects[i], pose_of(ctx, r), r.task);
    rows[i] = (i < ids.size() ? ids[i] : std::to_string(i)) + ',' + format_double(l.q1) + ',' +
              format_double(l.penetration_cm) + ',' + (l.collision_free ? "1" : "0") + ',' +
              (l.rule_pass ? "1" : "0") + '\n';
  });
  std::string csv = "pose-id,q1,pen_cm,collision_free,rule_pass\n";
  for (const auto& row : rows) csv += row;
  const fs::path path = output_path(ctx, out, "evaluation.csv");
  write_text(path, csv);
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_bootstrap(Context& ctx, const Common& common, const std::string& object_ref, const std::string& task_name,
                  const std::string& seeds_path, const std::string& out_dir) {
  const ObjectModel& obj = ctx.object(object_ref);
  const TaskKind task = parse_task(task_name);
  std::vector<GraspPose> seeds;
  if (!seeds_path.empty()) {
    require_input(seeds_path);
    for (const auto& r : read_dataset_tree(seeds_path)) {
      if (r.object_id == obj.id) seeds.push_back(pose_of(ctx, r));
    }
  } else {
    AgnosticOptions opts = ctx.cfg.agnostic;
    opts.workers = common.workers;
    for (const auto& c : propose_agnostic(*ctx.hand, obj, ctx.cfg.agnostic_n, Rng(*ctx.cfg.seed), opts)) {
      if (static_cast<int>(seeds.size()) >= ctx.cfg.bootstrap_seeds) break;
      if (c.labels.stable && label_pose(*ctx.hand, obj, c.pose, task).rule_pass) seeds.push_back(c.pose);
    }
  }
  BootstrapConfig cfg = ctx.cfg.bootstrap;
  cfg.model = ctx.cfg.model;
  cfg.sampler = ctx.cfg.schedule;
  cfg.refine = ctx.cfg.refine;
  cfg.seed = *ctx.cfg.seed;
  cfg.workers = common.workers;
  const BootstrapResult r = bootstrap(*ctx.hand, obj, task, seeds, cfg, ctx.bank);
  const fs::path dir = out_dir.empty() ? fs::path(ctx.cfg.paths.output_dir) : fs::path(out_dir);
  fs::create_directories(dir);
  write_dataset(dir / "bootstrap.jsonl", r.records);
  write_text(dir / "diversity.csv", r.diversity_csv());
  r.model.save(dir / "model.ckpt");
  for (const auto& it : r.iterations) {
    std::cerr << "iteration " << it.iteration << ": sampled " << it.sampled << ", passed " << it.passed
              << ", added " << it.added << ", valid " << it.count << '\n';
  }
  std::cout << (dir / "bootstrap.jsonl").string() << '\n';
  return 0;
}

int cmd_describe(Context& ctx, const std::string& task_name, int n) {
  const std::optional<TaskKind> task = task_arg(task_name);
  Rng rng(*ctx.cfg.seed);
  for (int i = 0; i < n; ++i) std::cout << generate(ctx.bank, task, rng).text << '\n';
  return 0;
}

int cmd_make_dataset(Context& ctx, const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<DatasetRecord> all;
  for (const auto& in : inputs) {
    require_input(in);
    auto part = read_dataset_tree(in);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const auto dataset = aggregate_dataset(all, ctx.cfg.quotas, *ctx.cfg.seed);
  const fs::path path = output_path(ctx, out, "dataset.jsonl");
  write_dataset(path, dataset);
  std::cerr << dataset.size() << " records from " << all.size() << '\n';
  std::cout << path.string() << '\n';
  return 0;
}

void add_common(CLI::App* app, Common& common) {
  app->add_option("-c,--config", common.config, "run configuration (JSON)");
  app->add_option("--seed", common.seed, "seed (overrides the config)");
  app->add_option("--workers", common.workers, "candidate-level worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-oriented dexterous grasp generation pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("{\"name\":\"tograsp\",\"version\":\"") + kVersion + "\"}");

  Common common;
  std::string out, in, task, object, checkpoint, text, seeds_path;
  std::vector<std::string> objects, inputs, tasks;
  int n = -1;
  int steps = -1;

  auto* gen = app.add_subcommand("gen-agnostic", "task-agnostic grasps that pass the stability precheck");
  add_common(gen, common);
  gen->add_option("--object", objects, "object refs (default: config objects)");
  gen->add_option("--n", n, "raw candidates per object (overrides agnostic.n)");
  gen->add_option("-o,--out", out, "output JSONL");

  auto* filter = app.add_subcommand("filter", "keep records passing a task rule and the precheck");
  add_common(filter, common);
  filter->add_option("-i,--in", in, "input JSONL file or directory")->required();
  filter->add_option("--task", task, "task name")->required();
  filter->add_option("-o,--out", out, "output JSONL");

  auto* train = app.add_subcommand("train", "train the conditional denoiser");
  add_common(train, common);
  train->add_option("-i,--in", inputs, "dataset files or directories")->required();
  train->add_option("--steps", steps, "optimizer steps (overrides train.steps)");
  train->add_option("-o,--out", out, "checkpoint path (default: paths.checkpoint)");

  auto* samp = app.add_subcommand("sample", "sample grasps from a checkpoint");
  add_common(samp, common);
  samp->add_option("--checkpoint", checkpoint, "model checkpoint");
  samp->add_option("--object", object, "object ref")->required();
  samp->add_option("--task", task, "task name or 'agnostic'");
  samp->add_option("--text", text, "task description (default: generated)");
  samp->add_option("--n", n, "number of samples (overrides sample.n)");
  samp->add_option("-o,--out", out, "output JSONL");

  auto* refine = app.add_subcommand("refine", "penetration refinement of stored grasps");
  add_common(refine, common);
  refine->add_option("-i,--in", in, "input JSONL file or directory")->required();
  refine->add_option("--steps", steps, "refinement steps (default 200)");
  refine->add_option("-o,--out", out, "output JSONL");

  auto* eval = app.add_subcommand("evaluate", "per-pose metrics, or a model report with --checkpoint");
  add_common(eval, common);
  eval->add_option("-i,--in", in, "poses: JSONL file or directory");
  eval->add_option("--checkpoint", checkpoint, "evaluate a model instead of stored poses");
  eval->add_option("--task", tasks, "tasks for the model report");
  eval->add_option("--n", n, "samples per object and task");
  eval->add_option("-o,--out", out, "output CSV");

  auto* boot = app.add_subcommand("bootstrap", "grow a task-oriented set from seed grasps");
  add_common(boot, common);
  boot->add_option("--object", object, "object ref")->required();
  boot->add_option("--task", task, "task name")->required();
  boot->add_option("--seeds", seeds_path, "seed grasps (default: found by gen-agnostic + filter)");
  boot->add_option("-o,--out", out, "output directory");

  auto* desc = app.add_subcommand("describe-task", "print task descriptions");
  add_common(desc, common);
  desc->add_option("--task", task, "task name or 'agnostic'")->required();
  desc->add_option("--n", n, "number of lines (default 1)");

  auto* make = app.add_subcommand("make-dataset", "aggregate validated records under the quotas");
  add_common(make, common);
  make->add_option("-i,--in", inputs, "dataset files or directories")->required();
  make->add_option("-o,--out", out, "output JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    auto overrides = [&](RunConfig& cfg) {
      if (steps >= 0 && train->parsed()) cfg.train.steps = steps;
      if (steps >= 0 && refine->parsed()) cfg.refine.steps = steps;
      if (n >= 0 && gen->parsed()) cfg.agnostic_n = n;
    };
    Context ctx = make_context(common, overrides);
    if (gen->parsed()) return cmd_gen_agnostic(ctx, common, objects, out);
    if (filter->parsed()) return cmd_filter(ctx, in, task, out);
    if (train->parsed()) return cmd_train(ctx, inputs, out);
    if (samp->parsed()) return cmd_sample(ctx, common, checkpoint, object, task, text, n, out);
    if (refine->parsed()) return cmd_refine(ctx, common, in, out);
    if (eval->parsed()) return cmd_evaluate(ctx, common, in, checkpoint, tasks, n, out);
    if (boot->parsed()) return cmd_bootstrap(ctx, common, object, task, seeds_path, out);
    if (desc->parsed()) return cmd_describe(ctx, task, n >= 0 ? n : 1);
    if (make->parsed()) return cmd_make_dataset(ctx, inputs, out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
