// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <istream>

#include "peftbench/metrics.hpp"

namespace peftbench::metrics {

std::string_view to_string(EvalTask t) {
  return t == EvalTask::summarize ? "summarize" : "generate";
}

EvalTask parse_eval_task(std::string_view s) {
  if (s == "summarize") return EvalTask::summarize;
  if (s == "generate") return EvalTask::generate;
  throw ConfigError("task must be one of {summarize, generate}, got '" + std::string(s) + "'");
}

std::vector<CorpusSample> read_corpus(std::istream& in, const std::string& source_name) {
  std::vector<CorpusSample> out;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw DataError(source_name + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail("expected a JSON object");
    CorpusSample s;
    if (!j.contains("id")) fail("missing field 'id'");
    s.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    if (!j.contains("candidates") || !j["candidates"].is_array()) {
      fail("missing array field 'candidates'");
    }
    for (const auto& c : j["candidates"]) {
      if (!c.is_string()) fail("candidates must be strings");
      s.candidates.push_back(c.get<std::string>());
    }
    if (j.contains("references") && j["references"].is_array()) {
      for (const auto& r : j["references"]) {
        if (!r.is_string()) fail("references must be strings");
        s.references.push_back(r.get<std::string>());
      }
    } else if (j.contains("reference") && j["reference"].is_string()) {
      s.references.push_back(j["reference"].get<std::string>());
    }
    if (s.references.empty()) fail("missing field 'references'");
    if (s.candidates.empty()) fail("'candidates' is empty");
    out.push_back(std::move(s));
  }
  return out;
}

MetricReport evaluate_corpus(const std::vector<CorpusSample>& samples, const CorpusConfig& config,
                             std::vector<SampleScore>* per_sample) {
  config.bleu.validate();
  config.weights.validate();
  if (samples.empty()) throw DataError("evaluation corpus has no records");
  const std::size_t k_max =
      config.ks.empty() ? 0 : *std::max_element(config.ks.begin(), config.ks.end());
  for (std::size_t k : config.ks) {
    if (k == 0) throw ConfigError("k values must be >= 1");
  }
  if (config.task == EvalTask::generate) {
    for (const auto& s : samples) {
      if (s.candidates.size() < k_max) {
        throw DataError("sample '" + s.id + "' has " + std::to_string(s.candidates.size()) +
                        " candidates, EM@" + std::to_string(k_max) + " needs " +
                        std::to_string(k_max));
      }
    }
  }

  std::vector<SampleScore> scores(samples.size());
  std::vector<std::string> errors(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const CorpusSample& s = samples[static_cast<std::size_t>(i)];
    SampleScore& out = scores[static_cast<std::size_t>(i)];
    out.id = s.id;
    try {
      const std::string& ref = s.references.front();
      const std::string& cand = s.candidates.front();
      if (config.task == EvalTask::summarize) {
        out.bleu = smoothed_bleu(tokenize_nl(cand), tokenize_nl(ref), config.bleu);
        out.score = out.bleu;
      } else {
        out.code = codebleu(cand, ref, config.weights, config.bleu);
        out.bleu = out.code->bleu;
        out.score = out.code->composite;
        for (std::size_t k : config.ks) {
          const std::vector<std::string> first(
              s.candidates.begin(), s.candidates.begin() + static_cast<std::ptrdiff_t>(k));
          out.em_at[k] = em_at_k(first, ref);
        }
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!errors[i].empty()) throw DataError("sample '" + samples[i].id + "': " + errors[i]);
  }

  MetricReport r;
  r.task = config.task;
  r.samples = samples.size();
  const double count = static_cast<double>(samples.size());
  double bleu_sum = 0.0;
  CodeBleuScore code_sum;
  for (const auto& s : scores) {
    bleu_sum += s.bleu;
    if (s.code) {
      code_sum.composite += s.code->composite;
      code_sum.bleu += s.code->bleu;
      code_sum.weighted_ngram += s.code->weighted_ngram;
      code_sum.ast += s.code->ast;
      code_sum.dataflow += s.code->dataflow;
    }
    for (const auto& [k, v] : s.em_at) r.em_at[k] += v;
  }
  r.bleu4 = bleu_sum / count;
  if (config.task == EvalTask::generate) {
    code_sum.composite /= count;
    code_sum.bleu /= count;
    code_sum.weighted_ngram /= count;
    code_sum.ast /= count;
    code_sum.dataflow /= count;
    r.codebleu = code_sum;
    for (auto& [k, v] : r.em_at) v /= count;
  }
  if (per_sample) *per_sample = std::move(scores);
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["task"] = std::string(to_string(r.task));
  j["samples"] = r.samples;
  j["bleu4"] = r.bleu4;
  if (r.codebleu) {
    j["codebleu"] = r.codebleu->composite;
    j["codebleu_components"] = {{"bleu", r.codebleu->bleu},
                                {"weighted_ngram", r.codebleu->weighted_ngram},
                                {"ast_match", r.codebleu->ast},
                                {"dataflow_match", r.codebleu->dataflow}};
  }
  for (const auto& [k, v] : r.em_at) j["em_at_" + std::to_string(k)] = v;
  if (r.pass) {
    j["pass_tasks"] = r.pass->tasks;
    for (const auto& [k, v] : r.pass->mean) j["pass_at_" + std::to_string(k)] = v;
  }
  return j;
}

std::string to_tsv(const MetricReport& r) {
  std::vector<std::pair<std::string, std::string>> rows;
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  rows.emplace_back("task", std::string(to_string(r.task)));
  rows.emplace_back("samples", std::to_string(r.samples));
  rows.emplace_back("bleu4", num(r.bleu4));
  if (r.codebleu) {
    rows.emplace_back("codebleu", num(r.codebleu->composite));
    rows.emplace_back("codebleu.bleu", num(r.codebleu->bleu));
    rows.emplace_back("codebleu.weighted_ngram", num(r.codebleu->weighted_ngram));
    rows.emplace_back("codebleu.ast_match", num(r.codebleu->ast));
    rows.emplace_back("codebleu.dataflow_match", num(r.codebleu->dataflow));
  }
  for (const auto& [k, v] : r.em_at) rows.emplace_back("em_at_" + std::to_string(k), num(v));
  if (r.pass) {
    rows.emplace_back("pass_tasks", std::to_string(r.pass->tasks));
    for (const auto& [k, v] : r.pass->mean)
      rows.emplace_back("pass_at_" + std::to_string(k), num(v));
  }
  std::size_t width = 6;
  for (const auto& row : rows) width = std::max(width, row.first.size());
  std::string out = "metric" + std::string(width - 6, ' ') + "\tvalue\n";
  for (const auto& [name, value] : rows) {
    out += name + std::string(width - name.size(), ' ') + "\t" + value + "\n";
  }
  return out;
}

}  // namespace peftbench::metrics
