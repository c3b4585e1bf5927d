// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "peftbench/checkpoint.hpp"
#include "peftbench/cli.hpp"
#include "peftbench/datasets.hpp"
#include "peftbench/metrics.hpp"
#include "peftbench/trainer.hpp"

namespace peftbench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kProbeCount = 32;
constexpr std::size_t kProbeMaxLen = 16;
constexpr std::size_t kSeqHeadroom = 8;
constexpr std::uint64_t kCandidateStream = 0x63616e64;  // "cand"
constexpr std::uint64_t kProbeStream = 0x70726f62;      // "prob"

const std::vector<std::string> kMethods = {"full", "lora", "compacter"};
const std::vector<std::string> kTasks = {"summarize", "generate"};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// --------------------------------------------------------------------------
// Option bundles, filled by CLI11.

struct TrainOptions {
  std::string data;
  std::string valid;
  std::string task = "summarize";
  std::string method = "lora";
  std::size_t rank = 4;
  std::size_t phm_n = 4;
  std::size_t phm_rank = 1;
  std::size_t bottleneck = 0;
  std::string activation = "gelu";
  double lr = 5e-5;
  std::optional<std::size_t> epochs;
  std::size_t batch_size = 8;
  std::size_t patience = 5;
  std::optional<std::uint64_t> seed;
  std::size_t d_model = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_ff = 64;
  std::size_t min_count = 1;
  std::string base;
  std::string out_dir = "run";
};

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string candidates;
  std::string tasks;
  std::string task;
  std::vector<std::size_t> ks{1, 10};
  double temperature = 0.8;
  std::optional<std::uint64_t> seed;
  std::string penalty = "as-intended";
  std::uint64_t budget = minilang::kDefaultStepBudget;
  std::string out_dir = "eval";
};

struct PasskOptions {
  std::string tasks;
  std::string candidates;
  std::string checkpoint;
  std::size_t n = 10;
  std::vector<std::size_t> ks{1, 10};
  double temperature = 0.8;
  std::optional<std::uint64_t> seed;
  std::uint64_t budget = minilang::kDefaultStepBudget;
  int jobs = 0;
  std::string out;
};

struct MergeOptions {
  std::string checkpoint;
  std::string out_dir = "merged";
  double tolerance = 1e-10;
  std::optional<std::uint64_t> seed;
};

struct ParamsOptions {
  std::string checkpoint;
};

struct StatsOptions {
  std::string a;
  std::string b;
  double alpha = 0.05;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& s) {
  return s ? *s : default_seed();
}

json budget_json(const Microformer& model) {
  const ParamBudget b = model.count_params();
  return {{"method", std::string(to_string(model.method()))},
          {"trainable", b.trainable},
          {"total", b.total},
          {"ratio", b.ratio}};
}

void finish_manifest(RunManifest& m, const fs::path& path) {
  m.finished_at = utc_timestamp();
  write_json(path, m.to_json());
}

// --------------------------------------------------------------------------
// Decoding helpers shared by eval and passk.

datasets::Vocab vocab_of(const LoadedCheckpoint& ck) {
  if (!ck.extra.contains("vocab")) throw DataError("checkpoint carries no vocabulary");
  return datasets::Vocab::from_json(ck.extra["vocab"]);
}

std::string decode_text(const datasets::Vocab& vocab, const std::vector<int>& ids) {
  return datasets::render(vocab.decode(ids));
}

std::size_t room_after(const Microformer& model, const std::vector<int>& prompt,
                       const std::string& id) {
  const std::size_t limit = model.config().max_seq_len;
  if (prompt.size() >= limit) {
    throw DataError("prompt of '" + id + "' has " + std::to_string(prompt.size()) +
                    " tokens, the model holds " + std::to_string(limit));
  }
  return limit - prompt.size();
}

/// candidate 0 greedy, the rest sampled.
std::vector<std::string> greedy_then_sampled(const Microformer& model,
                                             const datasets::Vocab& vocab,
                                             const std::vector<int>& prompt, std::size_t count,
                                             double temperature, std::uint64_t seed,
                                             const std::string& id) {
  const std::size_t max_new = room_after(model, prompt, id);
  std::vector<std::string> out;
  Microformer::Decode greedy;
  out.push_back(decode_text(vocab, model.generate(prompt, max_new, greedy, 1, datasets::kEos)[0]));
  if (count > 1) {
    Microformer::Decode sample{temperature < kGreedyTemperature, temperature, seed};
    for (const auto& ids : model.generate(prompt, max_new, sample, count - 1, datasets::kEos)) {
      out.push_back(decode_text(vocab, ids));
    }
  }
  return out;
}

std::vector<std::string> sampled(const Microformer& model, const datasets::Vocab& vocab,
                                 const std::vector<int>& prompt, std::size_t count,
                                 double temperature, std::uint64_t seed, const std::string& id) {
  const std::size_t max_new = room_after(model, prompt, id);
  Microformer::Decode mode{temperature < kGreedyTemperature, temperature, seed};
  std::vector<std::string> out;
  for (const auto& ids : model.generate(prompt, max_new, mode, count, datasets::kEos)) {
    out.push_back(decode_text(vocab, ids));
  }
  return out;
}

// --------------------------------------------------------------------------
// pass@k over tasks

struct TaskPass {
  std::string task_id;
  std::size_t n = 0;
  std::size_t c = 0;
  std::map<std::size_t, double> pass_at;
  std::vector<bool> passed;
};

std::vector<TaskPass> score_tasks(const std::vector<datasets::GenTask>& tasks,
                                  const std::vector<std::vector<std::string>>& candidates,
                                  const std::vector<std::size_t>& ks, std::uint64_t budget) {
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t c = 0; c < candidates[t].size(); ++c) jobs.emplace_back(t, c);
  }
  std::vector<TaskPass> out(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    out[t].task_id = tasks[t].task_id;
    out[t].n = candidates[t].size();
    out[t].passed.assign(out[t].n, false);
    for (std::size_t k : ks) {
      if (k < 1 || k > out[t].n) {
        throw ConfigError("pass@" + std::to_string(k) + " needs 1 <= k <= n, task '" +
                          tasks[t].task_id + "' has n=" + std::to_string(out[t].n));
      }
    }
  }
  std::vector<char> verdicts(jobs.size(), 0);
  const auto count = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    const auto [t, c] = jobs[static_cast<std::size_t>(j)];
    verdicts[static_cast<std::size_t>(j)] =
        datasets::run_candidate(tasks[t], candidates[t][c], budget).passed ? 1 : 0;
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto [t, c] = jobs[j];
    out[t].passed[c] = verdicts[j] != 0;
    out[t].c += verdicts[j] != 0 ? 1 : 0;
  }
  for (auto& tp : out) {
    for (std::size_t k : ks) tp.pass_at[k] = metrics::pass_at_k(tp.n, tp.c, k);
  }
  return out;
}

metrics::PassAtK mean_pass(const std::vector<TaskPass>& per_task,
                           const std::vector<std::size_t>& ks) {
  metrics::PassAtK p;
  p.tasks = per_task.size();
  for (std::size_t k : ks) {
    double sum = 0.0;
    for (const auto& tp : per_task) sum += tp.pass_at.at(k);
    p.mean[k] = per_task.empty() ? 0.0 : sum / static_cast<double>(per_task.size());
  }
  return p;
}

json per_task_json(const std::vector<TaskPass>& per_task) {
  json arr = json::array();
  for (const auto& tp : per_task) {
    json row{{"task_id", tp.task_id}, {"n", tp.n}, {"c", tp.c}};
    for (const auto& [k, v] : tp.pass_at) row["pass_at_" + std::to_string(k)] = v;
    arr.push_back(row);
  }
  return arr;
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> ks) {
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.empty()) throw ConfigError("--k needs at least one value");
  if (ks.front() == 0) throw ConfigError("--k values must be >= 1");
  return ks;
}

// --------------------------------------------------------------------------
// train

int cmd_train(const TrainOptions& o, Context& ctx) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.started_at = utc_timestamp();
  manifest.seed = resolve_seed(o.seed);
  const std::uint64_t seed = manifest.seed;

  const auto method = *parse_peft_method(o.method);
  const auto activation = parse_activation(o.activation);
  if (!activation) throw ConfigError("--activation must be one of {gelu, linear}");
  const auto direction = datasets::parse_direction(o.task);

  const auto records = datasets::load_pairs(o.data);
  manifest.add_input(o.data);
  if (records.empty()) throw DataError(o.data + ": no training records");
  std::vector<datasets::PairRecord> valid_records;
  if (!o.valid.empty()) {
    valid_records = datasets::load_pairs(o.valid);
    manifest.add_input(o.valid);
  }

  std::optional<LoadedCheckpoint> base;
  datasets::Vocab vocab;
  if (!o.base.empty()) {
    base.emplace(load_checkpoint(o.base));
    manifest.add_input(checkpoint_stem(o.base).string() + ".json");
    manifest.add_input(checkpoint_stem(o.base).string() + ".bin");
    if (base->model.method() != PeftMethod::full) {
      throw ConfigError("--base must be a full-method checkpoint");
    }
    vocab = vocab_of(*base);
  } else {
    vocab = datasets::build_vocab(records, o.min_count);
  }

  const auto train_ex = datasets::encode_all(datasets::frame(records, direction), vocab);
  const auto valid_ex = datasets::encode_all(datasets::frame(valid_records, direction), vocab);
  std::size_t longest = 0;
  for (const auto* set : {&train_ex, &valid_ex}) {
    for (const auto& e : *set) longest = std::max(longest, e.tokens.size() + 1);
  }

  ModelConfig config;
  if (base) {
    config = base->model.config();
    if (longest > config.max_seq_len) {
      throw DataError("a training sequence has " + std::to_string(longest) +
                      " tokens, the base model holds " + std::to_string(config.max_seq_len));
    }
  } else {
    config.n_layers = o.layers;
    config.n_heads = o.heads;
    config.d_model = o.d_model;
    config.d_ff = o.d_ff;
    config.vocab_size = vocab.size();
    config.max_seq_len = longest + kSeqHeadroom;
  }
  config.peft_method = PeftMethod::full;
  config.lora_rank = o.rank;
  config.compacter_n = o.phm_n;
  config.phm_rank = o.phm_rank;
  config.bottleneck = o.bottleneck;
  config.adapter_activation = *activation;
  config.validate();

  Microformer model(config, base ? base->model.seed() : seed);
  if (base) model.set_flat_values(base->model.flat_values());
  if (method != PeftMethod::full) model.apply_peft(method, derive_seed(seed, 1));

  TrainConfig tc;
  tc.learning_rate = o.lr;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.early_stop_patience = o.patience;
  tc.seed = seed;
  tc.validate();
  const std::size_t epochs = o.epochs.value_or(default_epochs(records.size()));

  const TrainHistory history = train(model, train_ex, valid_ex, tc);

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  json extra{{"vocab", vocab.to_json()}, {"task", std::string(datasets::to_string(direction))}};
  save_checkpoint(model, dir / "checkpoint", extra);

  const json budget = budget_json(model);
  write_json(dir / "history.json", {{"history", history_to_json(history)},
                                    {"train_config", train_config_to_json(tc, epochs)},
                                    {"model_config", config_to_json(model.config())},
                                    {"param_budget", budget},
                                    {"manifest", "manifest.json"}});

  manifest.config = {{"data", o.data},
                     {"valid", o.valid},
                     {"task", o.task},
                     {"method", o.method},
                     {"rank", o.rank},
                     {"phm_n", o.phm_n},
                     {"phm_rank", o.phm_rank},
                     {"bottleneck", model.config().resolved_bottleneck()},
                     {"activation", o.activation},
                     {"lr", o.lr},
                     {"epochs", epochs},
                     {"batch_size", o.batch_size},
                     {"patience", o.patience},
                     {"d_model", config.d_model},
                     {"layers", config.n_layers},
                     {"heads", config.n_heads},
                     {"d_ff", config.d_ff},
                     {"min_count", o.min_count},
                     {"base", o.base},
                     {"out", o.out_dir}};
  manifest.outputs = {(dir / "checkpoint.json").string(), (dir / "checkpoint.bin").string(),
                      (dir / "history.json").string()};
  finish_manifest(manifest, dir / "manifest.json");

  ctx.out << "params method=" << budget["method"].get<std::string>()
          << " trainable=" << budget["trainable"] << " total=" << budget["total"]
          << " ratio=" << std::setprecision(6) << budget["ratio"].get<double>() << '\n';
  ctx.out << "loss initial=" << history.initial_train_loss
          << " final=" << history.final_train_loss << " epochs=" << history.train_loss.size()
          << (history.stopped_early ? " (early stop)" : "") << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------------
// eval

int cmd_eval(const EvalOptions& o, Context& ctx) {
  RunManifest manifest;
  manifest.command = "eval";
  manifest.started_at = utc_timestamp();
  manifest.seed = resolve_seed(o.seed);
  const std::uint64_t seed = manifest.seed;
  const auto ks = sorted_unique(o.ks);
  const std::size_t k_max = ks.back();

  if (o.checkpoint.empty() && o.candidates.empty()) {
    throw ConfigError("eval needs --checkpoint or --candidates");
  }
  std::optional<LoadedCheckpoint> ck;
  std::string task_name = o.task;
  if (!o.checkpoint.empty()) {
    ck.emplace(load_checkpoint(o.checkpoint));
    manifest.add_input(checkpoint_stem(o.checkpoint).string() + ".json");
    manifest.add_input(checkpoint_stem(o.checkpoint).string() + ".bin");
    if (task_name.empty() && ck->extra.contains("task")) {
      task_name = ck->extra["task"].get<std::string>();
    }
  }
  if (task_name.empty()) throw ConfigError("--task is required");
  const auto direction = datasets::parse_direction(task_name);

  metrics::CorpusConfig cc;
  cc.task = metrics::parse_eval_task(task_name);
  cc.ks = ks;
  cc.bleu.penalty = metrics::parse_penalty_direction(o.penalty);

  std::vector<metrics::CorpusSample> corpus;
  if (!o.candidates.empty()) {
    std::ifstream in(o.candidates);
    if (!in) throw DataError("cannot open " + o.candidates);
    corpus = metrics::read_corpus(in, o.candidates);
    manifest.add_input(o.candidates);
  } else {
    if (o.data.empty()) throw ConfigError("eval with --checkpoint needs --data");
    const auto records = datasets::load_pairs(o.data);
    manifest.add_input(o.data);
    if (records.empty()) throw DataError(o.data + ": no records to evaluate");
    const auto vocab = vocab_of(*ck);
    const auto samples = datasets::frame(records, direction);
    const std::size_t count = direction == datasets::Direction::generate ? k_max : 1;
    corpus.resize(samples.size());
    std::vector<std::string> errors(samples.size());
    const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      auto& row = corpus[static_cast<std::size_t>(i)];
      try {
        row.id = s.id;
        row.references = {
            datasets::render(datasets::tokenize(s.target, s.target_kind))};
        row.candidates = greedy_then_sampled(
            ck->model, vocab, datasets::encode_prompt(s, vocab), count, o.temperature,
            derive_seed(derive_seed(seed, kCandidateStream), static_cast<std::uint64_t>(i)), s.id);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
    for (const auto& e : errors) {
      if (!e.empty()) throw DataError(e);
    }
  }

  std::vector<metrics::SampleScore> per_sample;
  metrics::MetricReport report = metrics::evaluate_corpus(corpus, cc, &per_sample);

  json pass_detail;
  if (!o.tasks.empty()) {
    if (!ck) throw ConfigError("--tasks needs --checkpoint to generate programs");
    const auto tasks = datasets::load_tasks(o.tasks);
    manifest.add_input(o.tasks);
    const auto vocab = vocab_of(*ck);
    std::vector<std::vector<std::string>> cands(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      datasets::Sample s{tasks[t].task_id, datasets::TextKind::nl, datasets::TextKind::code,
                         tasks[t].prompt, ""};
      cands[t] = sampled(ck->model, vocab, datasets::encode_prompt(s, vocab), k_max,
                         o.temperature, derive_seed(derive_seed(seed, kCandidateStream + 1), t),
                         tasks[t].task_id);
    }
    const auto per_task = score_tasks(tasks, cands, ks, o.budget);
    report.pass = mean_pass(per_task, ks);
    pass_detail = per_task_json(per_task);
  }

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  json result = metrics::to_json(report);
  if (!pass_detail.is_null()) result["pass_per_task"] = pass_detail;
  result["manifest"] = "manifest.json";
  write_json(dir / "metrics.json", result);
  {
    std::ofstream tsv(dir / "metrics.tsv");
    tsv << metrics::to_tsv(report);
    std::ofstream scores(dir / "samples.jsonl");
    for (const auto& s : per_sample)
      scores << json{{"id", s.id}, {"score", s.score}}.dump() << '\n';
    std::ofstream cands(dir / "candidates.jsonl");
    for (const auto& c : corpus) {
      cands << json{{"id", c.id}, {"candidates", c.candidates}, {"references", c.references}}.dump()
            << '\n';
    }
  }

  std::vector<std::string> k_text;
  for (std::size_t k : ks) k_text.push_back(std::to_string(k));
  manifest.config = {{"checkpoint", o.checkpoint}, {"data", o.data},
                     {"candidates", o.candidates}, {"tasks", o.tasks},
                     {"task", task_name},          {"k", ks},
                     {"temperature", o.temperature}, {"penalty", o.penalty},
                     {"budget", o.budget},         {"out", o.out_dir}};
  for (const char* f : {"metrics.json", "metrics.tsv", "samples.jsonl", "candidates.jsonl"}) {
    manifest.outputs.push_back((dir / f).string());
  }
  finish_manifest(manifest, dir / "manifest.json");
  ctx.out << metrics::to_tsv(report);
  return kExitOk;
}

// --------------------------------------------------------------------------
// passk

std::map<std::string, std::vector<std::string>> read_task_candidates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + "invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("task_id") || !j["task_id"].is_string() ||
        !j.contains("candidates") || !j["candidates"].is_array()) {
      throw DataError(where + "expected {task_id, candidates: [source]}");
    }
    auto& list = out[j["task_id"].get<std::string>()];
    for (const auto& c : j["candidates"]) {
      if (!c.is_string()) throw DataError(where + "candidates must be strings");
      list.push_back(c.get<std::string>());
    }
  }
  return out;
}

int cmd_passk(const PasskOptions& o, Context& ctx) {
  RunManifest manifest;
  manifest.command = "passk";
  manifest.started_at = utc_timestamp();
  manifest.seed = resolve_seed(o.seed);
  const auto ks = sorted_unique(o.ks);
  if (o.jobs > 0) omp_set_num_threads(o.jobs);

  const auto tasks = datasets::load_tasks(o.tasks);
  manifest.add_input(o.tasks);
  if (tasks.empty()) throw DataError(o.tasks + ": no tasks");

  std::vector<std::vector<std::string>> cands(tasks.size());
  if (!o.candidates.empty()) {
    auto by_id = read_task_candidates(o.candidates);
    manifest.add_input(o.candidates);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      auto it = by_id.find(tasks[t].task_id);
      if (it == by_id.end()) {
        throw DataError(o.candidates + ": no candidates for task '" + tasks[t].task_id + "'");
      }
      cands[t] = std::move(it->second);
      by_id.erase(it);
    }
    if (!by_id.empty()) {
      throw DataError(o.candidates + ": candidates for unknown task '" + by_id.begin()->first +
                      "'");
    }
  } else if (!o.checkpoint.empty()) {
    const auto ck = load_checkpoint(o.checkpoint);
    manifest.add_input(checkpoint_stem(o.checkpoint).string() + ".json");
    manifest.add_input(checkpoint_stem(o.checkpoint).string() + ".bin");
    const auto vocab = vocab_of(ck);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      datasets::Sample s{tasks[t].task_id, datasets::TextKind::nl, datasets::TextKind::code,
                         tasks[t].prompt, ""};
      cands[t] = sampled(ck.model, vocab, datasets::encode_prompt(s, vocab), o.n, o.temperature,
                         derive_seed(derive_seed(manifest.seed, kCandidateStream + 1), t),
                         tasks[t].task_id);
    }
  } else {
    throw ConfigError("passk needs --candidates or --checkpoint");
  }

  const auto per_task = score_tasks(tasks, cands, ks, o.budget);
  const auto mean = mean_pass(per_task, ks);

  std::size_t width = 7;
  for (const auto& tp : per_task) width = std::max(width, tp.task_id.size());
  ctx.out << std::left << std::setw(static_cast<int>(width)) << "task_id" << "\tn\tc";
  for (std::size_t k : ks) ctx.out << "\tpass@" << k;
  ctx.out << '\n' << std::fixed << std::setprecision(6);
  for (const auto& tp : per_task) {
    ctx.out << std::setw(static_cast<int>(width)) << tp.task_id << '\t' << tp.n << '\t' << tp.c;
    for (std::size_t k : ks) ctx.out << '\t' << tp.pass_at.at(k);
    ctx.out << '\n';
  }
  ctx.out << std::setw(static_cast<int>(width)) << "mean" << "\t-\t-";
  for (std::size_t k : ks) ctx.out << '\t' << mean.mean.at(k);
  ctx.out << '\n';
  ctx.out.unsetf(std::ios::floatfield);

  if (!o.out.empty()) {
    const fs::path out(o.out);
    const fs::path manifest_path = fs::path(out).replace_extension(".manifest.json");
    json result{{"tasks", per_task_json(per_task)}, {"pass_tasks", mean.tasks}};
    for (const auto& [k, v] : mean.mean) result["pass_at_" + std::to_string(k)] = v;
    result["manifest"] = manifest_path.filename().string();
    write_json(out, result);
    manifest.config = {{"tasks", o.tasks}, {"candidates", o.candidates},
                       {"checkpoint", o.checkpoint}, {"n", o.n},
                       {"k", ks}, {"temperature", o.temperature},
                       {"budget", o.budget}, {"out", o.out}};
    manifest.outputs = {out.string()};
    finish_manifest(manifest, manifest_path);
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// merge

int cmd_merge(const MergeOptions& o, Context& ctx) {
  RunManifest manifest;
  manifest.command = "merge";
  manifest.started_at = utc_timestamp();
  manifest.seed = resolve_seed(o.seed);
  if (!(o.tolerance >= 0.0)) throw ConfigError("--tolerance must be >= 0");

  auto ck = load_checkpoint(o.checkpoint);
  manifest.add_input(checkpoint_stem(o.checkpoint).string() + ".json");
  manifest.add_input(checkpoint_stem(o.checkpoint).string() + ".bin");
  const PeftMethod method = ck.model.method();
  if (method == PeftMethod::compacter) {
    throw ConfigError(
        "merge is undefined for compacter checkpoints: the adapter applies a nonlinearity "
        "between its projections, so it cannot be folded into a single weight matrix");
  }
  if (method != PeftMethod::lora) {
    throw ConfigError("merge expects a lora checkpoint, got method " +
                      std::string(to_string(method)));
  }

  Microformer merged = ck.model.clone();
  merged.merge_lora();

  SeededRng rng(derive_seed(manifest.seed, kProbeStream));
  const std::size_t max_len = std::min(kProbeMaxLen, merged.config().max_seq_len);
  const std::size_t vocab = merged.config().vocab_size;
  double worst = 0.0;
  for (std::size_t p = 0; p < kProbeCount; ++p) {
    std::vector<int> probe(1 + rng.below(max_len));
    for (int& t : probe) t = static_cast<int>(rng.below(vocab));
    worst = std::max(worst, max_abs_diff(ck.model.forward(probe), merged.forward(probe)));
  }
  if (!(worst <= o.tolerance)) {
    std::ostringstream msg;
    msg << "merged model diverges from the adapter model: max |logit diff| " << worst
        << " exceeds " << o.tolerance;
    throw VerificationError(msg.str());
  }

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  save_checkpoint(merged, dir / "checkpoint", ck.extra);
  write_json(dir / "merge.json", {{"probes", kProbeCount},
                                  {"max_abs_logit_diff", worst},
                                  {"tolerance", o.tolerance},
                                  {"param_budget", budget_json(merged)},
                                  {"manifest", "manifest.json"}});
  manifest.config = {{"checkpoint", o.checkpoint}, {"out", o.out_dir}, {"tolerance", o.tolerance}};
  manifest.outputs = {(dir / "checkpoint.json").string(), (dir / "checkpoint.bin").string(),
                      (dir / "merge.json").string()};
  finish_manifest(manifest, dir / "manifest.json");
  ctx.out << "merged " << kProbeCount << " probes, max |logit diff| " << worst << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------------
// params, stats

int cmd_params(const ParamsOptions& o, Context& ctx) {
  const auto ck = load_checkpoint(o.checkpoint);
  ctx.out << budget_json(ck.model).dump() << '\n';
  return kExitOk;
}

std::vector<std::pair<std::string, double>> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::pair<std::string, double>> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + "invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("score") || !j["score"].is_number()) {
      throw DataError(where + "expected {id, score}");
    }
    std::string id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    if (!seen.insert(id).second) throw DataError(where + "duplicate id '" + id + "'");
    out.emplace_back(std::move(id), j["score"].get<double>());
  }
  return out;
}

int cmd_stats(const StatsOptions& o, Context& ctx) {
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
  const auto a = read_scores(o.a);
  const auto b = read_scores(o.b);
  std::map<std::string, double> b_by_id(b.begin(), b.end());
  std::set<std::string> a_ids;
  std::vector<std::string> offenders;
  std::vector<double> xs, ys;
  for (const auto& [id, score] : a) {
    a_ids.insert(id);
    auto it = b_by_id.find(id);
    if (it == b_by_id.end()) {
      offenders.push_back(id);
      continue;
    }
    xs.push_back(score);
    ys.push_back(it->second);
  }
  for (const auto& [id, score] : b) {
    if (!a_ids.count(id)) offenders.push_back(id);
  }
  if (!offenders.empty()) {
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, offenders.size()); ++i) {
      list += (i ? ", " : "") + offenders[i];
    }
    throw DataError(std::to_string(offenders.size()) + " ids appear in only one file: " + list);
  }
  const auto r = metrics::wilcoxon_signed_rank(xs, ys);
  json j = metrics::to_json(r);
  j["alpha"] = o.alpha;
  j["significant"] = !r.degenerate && r.p_value < o.alpha;
  ctx.out << j.dump() << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------------

int dispatch(int argc, const char* const* argv, Context& ctx) {
  CLI::App app{"Parameter-efficient fine-tuning benchmark for a tiny code language model",
               "peftbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "Fine-tune a model on a pairs file");
  train_cmd->add_option("--data", train_o.data, "Training pairs (JSONL)")->required();
  train_cmd->add_option("--valid", train_o.valid, "Validation pairs (JSONL)");
  train_cmd->add_option("--task", train_o.task)
      ->check(CLI::IsMember(kTasks))
      ->capture_default_str();
  train_cmd->add_option("--method", train_o.method)
      ->check(CLI::IsMember(kMethods))
      ->capture_default_str();
  train_cmd->add_option("--rank", train_o.rank, "LoRA rank")->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--phm-n", train_o.phm_n, "Kronecker bank size")
      ->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--phm-rank", train_o.phm_rank, "Rank of the PHM factors")
      ->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--bottleneck", train_o.bottleneck, "Adapter width, 0 = d_model/4")
      ->capture_default_str();
  train_cmd->add_option("--activation", train_o.activation)
      ->check(CLI::IsMember({"gelu", "linear"}))->capture_default_str();
  train_cmd->add_option("--lr", train_o.lr)->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--epochs", train_o.epochs, "Default: 50 below 5000 records, else 10");
  train_cmd->add_option("--batch-size", train_o.batch_size)->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--patience", train_o.patience)->capture_default_str();
  train_cmd->add_option("--seed", train_o.seed);
  train_cmd->add_option("--d-model", train_o.d_model)->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--layers", train_o.layers)->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--heads", train_o.heads)->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--d-ff", train_o.d_ff)->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--min-count", train_o.min_count)->capture_default_str();
  train_cmd->add_option("--base", train_o.base, "Start from a full-method checkpoint");
  train_cmd->add_option("--out", train_o.out_dir, "Output directory")->capture_default_str();

  EvalOptions eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "Generate and score against references");
  eval_cmd->add_option("--checkpoint", eval_o.checkpoint);
  eval_cmd->add_option("--data", eval_o.data, "Reference pairs (JSONL)");
  eval_cmd->add_option("--candidates", eval_o.candidates,
                       "Pre-generated {id, candidates, references} JSONL");
  eval_cmd->add_option("--tasks", eval_o.tasks, "Unit-tested tasks for pass@k");
  eval_cmd->add_option("--task", eval_o.task)->check(CLI::IsMember(kTasks));
  eval_cmd->add_option("--k", eval_o.ks)->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--temperature", eval_o.temperature)->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  eval_cmd->add_option("--seed", eval_o.seed);
  eval_cmd->add_option("--penalty", eval_o.penalty)
      ->check(CLI::IsMember({"as-intended", "as-printed"}))->capture_default_str();
  eval_cmd->add_option("--budget", eval_o.budget, "Interpreter step budget")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_o.out_dir)->capture_default_str();

  PasskOptions passk_o;
  auto* passk_cmd = app.add_subcommand("passk", "Execute candidates against unit tests");
  passk_cmd->add_option("--tasks", passk_o.tasks)->required();
  passk_cmd->add_option("--candidates", passk_o.candidates, "{task_id, candidates} JSONL");
  passk_cmd->add_option("--checkpoint", passk_o.checkpoint);
  passk_cmd->add_option("--n", passk_o.n, "Samples per task when generating")
      ->check(CLI::PositiveNumber)->capture_default_str();
  passk_cmd->add_option("--k", passk_o.ks)->delimiter(',')->capture_default_str();
  passk_cmd->add_option("--temperature", passk_o.temperature)->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  passk_cmd->add_option("--seed", passk_o.seed);
  passk_cmd->add_option("--budget", passk_o.budget)->capture_default_str();
  passk_cmd->add_option("--jobs", passk_o.jobs, "Worker threads, 0 = all processors")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  passk_cmd->add_option("--out", passk_o.out, "Result JSON path");

  MergeOptions merge_o;
  auto* merge_cmd = app.add_subcommand("merge", "Fold LoRA adapters into the base weights");
  merge_cmd->add_option("--checkpoint", merge_o.checkpoint)->required();
  merge_cmd->add_option("--out", merge_o.out_dir)->capture_default_str();
  merge_cmd->add_option("--tolerance", merge_o.tolerance)->capture_default_str();
  merge_cmd->add_option("--seed", merge_o.seed);

  ParamsOptions params_o;
  auto* params_cmd = app.add_subcommand("params", "Print trainable and total parameter counts");
  params_cmd->add_option("--checkpoint", params_o.checkpoint)->required();

  StatsOptions stats_o;
  auto* stats_cmd = app.add_subcommand("stats", "Wilcoxon signed-rank test on paired scores");
  stats_cmd->add_option("--a", stats_o.a, "{id, score} JSONL")->required();
  stats_cmd->add_option("--b", stats_o.b, "{id, score} JSONL")->required();
  stats_cmd->add_option("--alpha", stats_o.alpha)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, ctx.out, ctx.err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*train_cmd) return cmd_train(train_o, ctx);
  if (*eval_cmd) return cmd_eval(eval_o, ctx);
  if (*passk_cmd) return cmd_passk(passk_o, ctx);
  if (*merge_cmd) return cmd_merge(merge_o, ctx);
  if (*params_cmd) return cmd_params(params_o, ctx);
  return cmd_stats(stats_o, ctx);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Context ctx{out, err};
  auto report = [&](const char* kind, const std::exception& e, int code) {
    err << "peftbench: " << kind << ": " << e.what() << '\n';
    return code;
  };
  try {
    return dispatch(argc, argv, ctx);
  } catch (const ConfigError& e) {
    return report("usage error", e, kExitUsage);
  } catch (const ShapeError& e) {
    return report("usage error", e, kExitUsage);
  } catch (const SizeError& e) {
    return report("usage error", e, kExitUsage);
  } catch (const NumericAbort& e) {
    return report("numeric abort", e, kExitNumeric);
  } catch (const VerificationError& e) {
    return report("verification failed", e, kExitVerification);
  } catch (const Error& e) {
    return report("data error", e, kExitData);
  } catch (const nlohmann::json::exception& e) {
    return report("data error", e, kExitData);
  } catch (const fs::filesystem_error& e) {
    return report("data error", e, kExitData);
  } catch (const std::exception& e) {
    return report("error", e, kExitFailure);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"peftbench"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace peftbench::cli
