// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cctype>
#include <charconv>

#include "peftbench/minilang.hpp"

namespace peftbench::minilang {

std::string_view to_string(TokenKind k) {
  switch (k) {
    case TokenKind::keyword: return "keyword";
    case TokenKind::identifier: return "identifier";
    case TokenKind::int_literal: return "int";
    case TokenKind::float_literal: return "float";
    case TokenKind::string_literal: return "string";
    case TokenKind::bool_literal: return "bool";
    case TokenKind::op: return "operator";
    case TokenKind::punct: return "punctuation";
  }
  return "?";
}

bool is_keyword(std::string_view word) {
  static constexpr std::array<std::string_view, 8> kKeywords = {
      "fn", "let", "if", "else", "while", "return", "true", "false"};
  for (auto k : kKeywords)
    if (k == word) return true;
  return false;
}

ParseError::ParseError(const std::string& message, Position pos)
    : Error(std::to_string(pos.line) + ":" + std::to_string(pos.col) + ": " + message),
      pos_(pos) {}

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  Position pos;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++pos.line;
        pos.col = 1;
      } else {
        ++pos.col;
      }
      ++i;
    }
  };

  while (i < src.size()) {
    const char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    const Position start = pos;

    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      std::string word(src.substr(i, j - i));
      TokenKind kind = TokenKind::identifier;
      if (word == "true" || word == "false") {
        kind = TokenKind::bool_literal;
      } else if (is_keyword(word)) {
        kind = TokenKind::keyword;
      }
      out.push_back({kind, std::move(word), start});
      advance(j - i);
      continue;
    }

    if (digit(c)) {
      std::size_t j = i;
      while (j < src.size() && digit(src[j])) ++j;
      bool is_float = false;
      if (j + 1 < src.size() && src[j] == '.' && digit(src[j + 1])) {
        is_float = true;
        ++j;
        while (j < src.size() && digit(src[j])) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && digit(src[k])) {
          is_float = true;
          while (k < src.size() && digit(src[k])) ++k;
          j = k;
        }
      }
      std::string lex(src.substr(i, j - i));
      if (!is_float) {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(lex.data(), lex.data() + lex.size(), v);
        if (ec != std::errc() || p != lex.data() + lex.size()) {
          throw ParseError("integer literal " + lex + " out of 64-bit range", start);
        }
      }
      out.push_back({is_float ? TokenKind::float_literal : TokenKind::int_literal, lex, start});
      advance(j - i);
      continue;
    }

    if (c == '"') {
      std::string text;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < src.size()) {
        const char d = src[j];
        if (d == '"') {
          closed = true;
          break;
        }
        if (d == '\n') break;
        if (d == '\\' && j + 1 < src.size()) {
          const char e = src[j + 1];
          if (e == 'n') text += '\n';
          else if (e == 't') text += '\t';
          else if (e == '"' || e == '\\') text += e;
          else throw ParseError(std::string("unknown escape \\") + e, start);
          j += 2;
          continue;
        }
        text += d;
        ++j;
      }
      if (!closed) throw ParseError("unterminated string literal", start);
      out.push_back({TokenKind::string_literal, std::move(text), start});
      advance(j + 1 - i);
      continue;
    }

    static constexpr std::array<std::string_view, 6> kTwo = {"==", "!=", "<=", ">=", "&&", "||"};
    bool matched = false;
    if (i + 1 < src.size()) {
      const std::string_view two = src.substr(i, 2);
      for (auto op : kTwo) {
        if (op == two) {
          out.push_back({TokenKind::op, std::string(two), start});
          advance(2);
          matched = true;
          break;
        }
      }
    }
    if (matched) continue;
    if (std::string_view("+-*/%<>=!").find(c) != std::string_view::npos) {
      out.push_back({TokenKind::op, std::string(1, c), start});
      advance(1);
      continue;
    }
    if (std::string_view("(){}[],;").find(c) != std::string_view::npos) {
      out.push_back({TokenKind::punct, std::string(1, c), start});
      advance(1);
      continue;
    }
    throw ParseError(std::string("illegal character '") + c + "'", start);
  }
  return out;
}

}  // namespace peftbench::minilang
