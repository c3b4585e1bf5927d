// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "peftbench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "peftbench/error.hpp"

namespace peftbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr const char* kFormat = "peftbench-checkpoint";
constexpr int kFormatVersion = 1;
}  // namespace

json config_to_json(const ModelConfig& c) {
  json j = {
      {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},
      {"d_model", c.d_model},
      {"d_ff", c.d_ff},
      {"vocab_size", c.vocab_size},
      {"max_seq_len", c.max_seq_len},
      {"peft_method", std::string(to_string(c.peft_method))},
      {"lora_rank", c.lora_rank},
      {"lora_scaling", c.lora_scaling.value_or(1.0 / static_cast<double>(c.lora_rank))},
      {"compacter_n", c.compacter_n},
      {"phm_rank", c.phm_rank},
      {"bottleneck", c.resolved_bottleneck()},
      {"adapter_activation", std::string(to_string(c.adapter_activation))},
      {"init_std", c.init_std},
      {"head_init_std", c.head_init_std},
      {"adapter_init_std", c.adapter_init_std},
  };
  return j;
}

ModelConfig config_from_json(const json& j) {
  try {
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    auto method = parse_peft_method(j.at("peft_method").get<std::string>());
    if (!method) throw DataError("unknown peft_method in config");
    c.peft_method = *method;
    c.lora_rank = j.at("lora_rank").get<std::size_t>();
    c.lora_scaling = j.at("lora_scaling").get<double>();
    c.compacter_n = j.at("compacter_n").get<std::size_t>();
    c.phm_rank = j.at("phm_rank").get<std::size_t>();
    c.bottleneck = j.at("bottleneck").get<std::size_t>();
    auto act = parse_activation(j.at("adapter_activation").get<std::string>());
    if (!act) throw DataError("unknown adapter_activation in config");
    c.adapter_activation = *act;
    c.init_std = j.at("init_std").get<double>();
    c.head_init_std = j.at("head_init_std").get<double>();
    c.adapter_init_std = j.at("adapter_init_std").get<double>();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
}

fs::path checkpoint_stem(const fs::path& path) {
  if (fs::is_directory(path)) return path / "checkpoint";
  if (path.extension() == ".json" || path.extension() == ".bin") {
    fs::path stem = path;
    stem.replace_extension();
    return stem;
  }
  return path;
}

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

void write_le_doubles(std::ostream& os, std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

std::vector<double> read_le_doubles(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() % 8 != 0) {
    throw DataError(path.string() + ": size " + std::to_string(raw.size()) +
                    " is not a multiple of 8 bytes");
  }
  std::vector<double> out(raw.size() / 8);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{raw[8 * k + i]} << (8 * i);
    out[k] = std::bit_cast<double>(bits);
  }
  return out;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const Microformer& model, const fs::path& stem, const json& extra) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  json params = json::array();
  std::size_t total = 0;
  for (const Parameter* p : model.parameters()) {
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"frozen", p->frozen}});
    total += p->size();
  }
  json manifest = {{"format", kFormat},
                   {"version", kFormatVersion},
                   {"config", config_to_json(model.config())},
                   {"seed", model.seed()},
                   {"parameters", params},
                   {"total_values", total},
                   {"binary", with_ext(stem, ".bin").filename().string()},
                   {"extra", extra}};
  {
    std::ofstream out(with_ext(stem, ".json"));
    if (!out) throw DataError("cannot write " + with_ext(stem, ".json").string());
    out << manifest.dump(2) << "\n";
  }
  std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!bin) throw DataError("cannot write " + with_ext(stem, ".bin").string());
  write_le_doubles(bin, model.flat_values());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const fs::path stem = checkpoint_stem(path);
  const json manifest = read_json_file(with_ext(stem, ".json"));
  if (manifest.value("format", "") != kFormat) {
    throw DataError(with_ext(stem, ".json").string() + " is not a peftbench checkpoint");
  }
  ModelConfig cfg = config_from_json(manifest.at("config"));
  const auto seed = manifest.at("seed").get<std::uint64_t>();
  const PeftMethod method = cfg.peft_method;
  cfg.peft_method = PeftMethod::full;
  Microformer model(cfg, seed);
  if (method != PeftMethod::full) model.apply_peft(method, 0);

  const auto params = model.parameters();
  const json& declared = manifest.at("parameters");
  if (declared.size() != params.size()) {
    throw DataError("checkpoint declares " + std::to_string(declared.size()) +
                    " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& d = declared[i];
    if (d.at("name").get<std::string>() != params[i]->name ||
        d.at("rows").get<std::size_t>() != params[i]->value.rows() ||
        d.at("cols").get<std::size_t>() != params[i]->value.cols()) {
      throw DataError("checkpoint parameter " + std::to_string(i) + " (" +
                      d.at("name").get<std::string>() + ") does not match the model layout");
    }
    params[i]->frozen = d.at("frozen").get<bool>();
  }
  const std::vector<double> values = read_le_doubles(with_ext(stem, ".bin"));
  const auto expected = manifest.at("total_values").get<std::size_t>();
  if (values.size() != expected) {
    throw DataError("checkpoint binary holds " + std::to_string(values.size()) +
                    " values, manifest declares " + std::to_string(expected));
  }
  model.set_flat_values(values);
  return {std::move(model), manifest.value("extra", json::object())};
}

// ---------------------------------------------------------------------------

namespace {

std::string decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<Parameter*> adapter_params(Microformer& model) {
  std::vector<Parameter*> out;
  for (Parameter* p : model.parameters())
    if (!p->frozen) out.push_back(p);
  return out;
}

}  // namespace

json adapters_to_json(const Microformer& model) {
  if (model.method() == PeftMethod::full) {
    throw ConfigError("adapters_to_json: model carries no adapters");
  }
  const ModelConfig& c = model.config();
  json shapes = {{"n_layers", c.n_layers}, {"d_model", c.d_model}};
  if (c.peft_method == PeftMethod::lora) {
    shapes["rank"] = c.lora_rank;
  } else {
    shapes["n"] = c.compacter_n;
    shapes["phm_rank"] = c.phm_rank;
    shapes["bottleneck"] = c.resolved_bottleneck();
  }
  json params = json::array();
  for (const Parameter* p : model.parameters()) {
    if (p->frozen) continue;
    json values = json::array();
    for (double v : p->value.data()) values.push_back(decimal(v));
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"values", std::move(values)}});
  }
  return {{"method", std::string(to_string(c.peft_method))},
          {"seed", model.seed()},
          {"shapes", shapes},
          {"parameters", params}};
}

void adapters_from_json(Microformer& model, const json& doc) {
  try {
    if (doc.at("method").get<std::string>() != to_string(model.method())) {
      throw DataError("adapter document method " + doc.at("method").get<std::string>() +
                      " does not match model method " + std::string(to_string(model.method())));
    }
    auto params = adapter_params(model);
    const json& list = doc.at("parameters");
    if (list.size() != params.size()) throw DataError("adapter document parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const json& e = list[i];
      Parameter& p = *params[i];
      if (e.at("name").get<std::string>() != p.name ||
          e.at("rows").get<std::size_t>() != p.value.rows() ||
          e.at("cols").get<std::size_t>() != p.value.cols() ||
          e.at("values").size() != p.size()) {
        throw DataError("adapter parameter " + e.at("name").get<std::string>() +
                        " does not match the model");
      }
      auto dst = p.value.data();
      for (std::size_t k = 0; k < dst.size(); ++k) {
        dst[k] = std::strtod(e.at("values")[k].get<std::string>().c_str(), nullptr);
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("adapter document: ") + e.what());
  }
}

}  // namespace peftbench
