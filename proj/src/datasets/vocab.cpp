// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <map>

#include "peftbench/datasets.hpp"

namespace peftbench::datasets {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"};
  return kSpecials;
}

}  // namespace

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) : tokens_(special_tokens()) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = static_cast<int>(i);
  for (const auto& t : tokens) {
    if (ids_.count(t)) throw DataError("duplicate vocabulary token '" + t + "'");
    ids_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  for (int i : ids) {
    if (i == kUnk) {
      out.push_back(tokens_[kUnk]);
    } else if (i >= kNumSpecials) {
      out.push_back(token(i));
    }
  }
  return out;
}

nlohmann::json Vocab::to_json() const {
  return std::vector<std::string>(tokens_.begin() + kNumSpecials, tokens_.end());
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("vocabulary must be a JSON array of strings");
  std::vector<std::string> tokens;
  for (const auto& t : j) {
    if (!t.is_string()) throw DataError("vocabulary must be a JSON array of strings");
    tokens.push_back(t.get<std::string>());
  }
  return Vocab(tokens);
}

Vocab build_vocab(const std::vector<PairRecord>& records, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    for (const auto& t : tokenize(r.code, TextKind::code)) ++counts[t];
    for (const auto& t : tokenize(r.nl, TextKind::nl)) ++counts[t];
  }
  std::vector<std::string> kept;
  for (const auto& [tok, n] : counts) {
    bool special = false;
    for (const auto& s : special_tokens()) special = special || s == tok;
    if (n >= min_count && !special) kept.push_back(tok);
  }
  return Vocab(kept);
}

std::string render(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<int> encode_prompt(const Sample& sample, const Vocab& vocab) {
  std::vector<int> ids{kBos};
  for (int id : vocab.encode(tokenize(sample.input, sample.input_kind))) ids.push_back(id);
  ids.push_back(kSep);
  return ids;
}

Example encode_example(const Sample& sample, const Vocab& vocab) {
  std::vector<int> seq = encode_prompt(sample, vocab);
  const std::size_t sep = seq.size() - 1;
  for (int id : vocab.encode(tokenize(sample.target, sample.target_kind))) seq.push_back(id);
  seq.push_back(kEos);

  Example ex;
  ex.tokens.assign(seq.begin(), seq.end() - 1);
  ex.targets.assign(ex.tokens.size(), kIgnoreTarget);
  for (std::size_t p = sep; p < ex.tokens.size(); ++p) ex.targets[p] = seq[p + 1];
  return ex;
}

std::vector<Example> encode_all(const std::vector<Sample>& samples, const Vocab& vocab) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_example(s, vocab));
  return out;
}

}  // namespace peftbench::datasets
