#pragma once

// Lexing and structural analysis of SQL text: token streams, skeletons,
// schema-element sets and clause decompositions. Everything here is a pure
// function of the input text.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "sqlrl/error.hpp"

namespace sqlrl {

enum class TokenKind {
  Keyword,
  ColumnRef,
  TableRef,
  StringLit,
  NumericLit,
  Operator,
  FunctionName,
  Punct,
  Star,
};

struct SqlToken {
  TokenKind kind;
  // Lowercased lexeme with quoting removed. Literals keep their original text
  // (string literals including the surrounding quotes).
  std::string text;
  // Exactly as written in the input.
  std::string raw;
  // Name bound inside the query itself (AS alias, implicit table alias, CTE
  // name or CTE column) rather than a schema object.
  bool local_name = false;

  friend bool operator==(const SqlToken&, const SqlToken&) = default;
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Reserved words recognised by the lexer: ANSI core plus the SQLite/MySQL
// extensions that show up in BIRD and Spider queries. Words that commonly
// double as column names (date, time, text, year, key, ...) are deliberately
// absent so that unquoted uses stay identifiers.
inline const std::unordered_set<std::string>& keywords() {
  static const std::unordered_set<std::string> k = {
      "select", "from", "where", "group", "by", "order", "having", "limit", "offset",
      "join", "inner", "left", "right", "outer", "full", "cross", "natural", "on", "using",
      "as", "and", "or", "not", "in", "is", "null", "like", "glob", "regexp", "between",
      "exists", "distinct", "all", "union", "intersect", "except", "case", "when", "then",
      "else", "end", "asc", "desc", "insert", "into", "values", "update", "set", "delete",
      "create", "table", "drop", "alter", "with", "recursive", "true", "false", "collate",
      "escape", "over", "partition", "nulls", "if", "interval", "unbounded", "preceding",
      "following", "integer", "int", "real", "float", "double", "numeric", "decimal",
      "varchar", "boolean", "blob", "signed", "unsigned"};
  return k;
}

// Keywords that become function names when immediately followed by "(".
inline bool keyword_can_be_function(std::string_view kw) {
  return kw == "left" || kw == "right" || kw == "if" || kw == "replace";
}

inline bool is_placeholder_body(std::string_view s) {
  return s == "col" || s == "tab" || s == "str" || s == "val";
}

inline bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
         static_cast<unsigned char>(c) >= 0x80;
}

inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' ||
         static_cast<unsigned char>(c) >= 0x80;
}

struct Lexeme {
  enum class Kind { Word, QuotedIdent, Placeholder, String, Number, Op, Punct, QualifiedStar };
  Kind kind;
  std::string text;  // normalised
  std::string raw;
};

// Reads one quoted run starting at s[i] (the opening quote). Doubled closing
// quotes are escapes. Returns the index just past the closing quote.
inline std::size_t scan_quoted(std::string_view s, std::size_t i, char close) {
  std::size_t j = i + 1;
  while (j < s.size()) {
    if (s[j] == close) {
      if (j + 1 < s.size() && s[j + 1] == close && close != ']') {
        j += 2;
        continue;
      }
      return j + 1;
    }
    ++j;
  }
  throw Error(ErrorKind::UnterminatedLiteral,
              "quote opened at offset " + std::to_string(i) + " never closes");
}

inline std::string unquote_body(std::string_view quoted, char close) {
  std::string body;
  auto inner = quoted.substr(1, quoted.size() - 2);
  for (std::size_t k = 0; k < inner.size(); ++k) {
    body.push_back(inner[k]);
    if (inner[k] == close && k + 1 < inner.size() && inner[k + 1] == close) ++k;
  }
  return body;
}

// One identifier part at s[i]: bare word, `quoted`, "quoted" or [bracketed].
// Returns false when s[i] cannot start an identifier part.
inline bool scan_ident_part(std::string_view s, std::size_t& i, std::string& norm, bool& quoted) {
  char c = s[i];
  if (c == '`' || c == '"') {
    std::size_t end = scan_quoted(s, i, c);
    norm = lower(unquote_body(s.substr(i, end - i), c));
    quoted = true;
    i = end;
    return true;
  }
  if (c == '[') {
    std::size_t end = scan_quoted(s, i, ']');
    norm = lower(s.substr(i + 1, end - i - 2));
    quoted = true;
    i = end;
    return true;
  }
  if (is_ident_start(c)) {
    std::size_t j = i;
    while (j < s.size() && is_ident_char(s[j])) ++j;
    norm = lower(s.substr(i, j - i));
    quoted = false;
    i = j;
    return true;
  }
  return false;
}

inline std::vector<Lexeme> lex(std::string_view s) {
  std::vector<Lexeme> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < n && s[i + 1] == '-') {
      while (i < n && s[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && s[i + 1] == '*') {
      auto end = s.find("*/", i + 2);
      i = end == std::string_view::npos ? n : end + 2;
      continue;
    }
    if (c == '\'') {
      std::size_t end = scan_quoted(s, i, '\'');
      std::string raw(s.substr(i, end - i));
      out.push_back({Lexeme::Kind::String, raw, raw});
      i = end;
      continue;
    }
    if (c == '[') {
      std::size_t end = scan_quoted(s, i, ']');
      std::string body = lower(s.substr(i + 1, end - i - 2));
      if (is_placeholder_body(body)) {
        out.push_back({Lexeme::Kind::Placeholder, "[" + body + "]", std::string(s.substr(i, end - i))});
        i = end;
        continue;
      }
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i;
      if (c == '0' && j + 1 < n && (s[j + 1] == 'x' || s[j + 1] == 'X')) {
        j += 2;
        while (j < n && std::isxdigit(static_cast<unsigned char>(s[j]))) ++j;
      } else {
        while (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        if (j < n && s[j] == '.') {
          ++j;
          while (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
        if (j < n && (s[j] == 'e' || s[j] == 'E')) {
          std::size_t k = j + 1;
          if (k < n && (s[k] == '+' || s[k] == '-')) ++k;
          if (k < n && std::isdigit(static_cast<unsigned char>(s[k]))) {
            j = k;
            while (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
          }
        }
      }
      std::string raw(s.substr(i, j - i));
      out.push_back({Lexeme::Kind::Number, raw, raw});
      i = j;
      continue;
    }
    if (c == '`' || c == '"' || c == '[' || is_ident_start(c)) {
      // Possibly qualified name: part(.part)* or part.*
      std::size_t start = i;
      std::string norm, part;
      bool quoted = false, any_quoted = false, star = false;
      scan_ident_part(s, i, part, quoted);
      norm = part;
      any_quoted = quoted;
      while (i + 1 < n && s[i] == '.') {
        std::size_t save = i;
        ++i;
        if (s[i] == '*') {
          ++i;
          star = true;
          break;
        }
        if (!scan_ident_part(s, i, part, quoted)) {
          i = save;
          break;
        }
        norm += "." + part;
        any_quoted = any_quoted || quoted;
      }
      std::string raw(s.substr(start, i - start));
      if (star) {
        out.push_back({Lexeme::Kind::QualifiedStar, "*", raw});
      } else {
        out.push_back({any_quoted ? Lexeme::Kind::QuotedIdent : Lexeme::Kind::Word, norm, raw});
      }
      continue;
    }
    static constexpr std::string_view two_char_ops[] = {"<=", ">=", "<>", "!=", "==", "||", "<<", ">>"};
    bool matched = false;
    if (i + 1 < n) {
      for (auto op : two_char_ops) {
        if (s.substr(i, 2) == op) {
          out.push_back({Lexeme::Kind::Op, std::string(op), std::string(op)});
          i += 2;
          matched = true;
          break;
        }
      }
    }
    if (matched) continue;
    if (std::string_view("=<>+-*/%|&~^!").find(c) != std::string_view::npos) {
      out.push_back({Lexeme::Kind::Op, std::string(1, c), std::string(1, c)});
    } else {
      out.push_back({Lexeme::Kind::Punct, std::string(1, c), std::string(1, c)});
    }
    ++i;
  }
  return out;
}

// Marks CTE names and their column lists as query-local names.
inline void mark_cte_names(std::vector<SqlToken>& toks) {
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].kind != TokenKind::Keyword || toks[i].text != "with") continue;
    std::size_t j = i + 1;
    if (j < toks.size() && toks[j].kind == TokenKind::Keyword && toks[j].text == "recursive") ++j;
    while (j < toks.size()) {
      auto& name = toks[j];
      if (name.kind == TokenKind::Keyword || name.kind == TokenKind::Punct ||
          name.kind == TokenKind::Operator)
        break;
      name.kind = TokenKind::TableRef;
      name.local_name = true;
      ++j;
      if (j < toks.size() && toks[j].text == "(") {
        int depth = 0;
        for (; j < toks.size(); ++j) {
          if (toks[j].text == "(") ++depth;
          else if (toks[j].text == ")") {
            if (--depth == 0) {
              ++j;
              break;
            }
          } else if (toks[j].kind == TokenKind::ColumnRef) {
            toks[j].local_name = true;
          }
        }
      }
      if (j >= toks.size() || toks[j].text != "as") break;
      ++j;
      if (j >= toks.size() || toks[j].text != "(") break;
      int depth = 0;
      for (; j < toks.size(); ++j) {
        if (toks[j].text == "(") ++depth;
        else if (toks[j].text == ")" && --depth == 0) {
          ++j;
          break;
        }
      }
      if (j < toks.size() && toks[j].text == ",") {
        ++j;
        continue;
      }
      break;
    }
  }
}

}  // namespace detail

/// Splits SQL text into classified tokens. Comments are dropped and quoted
/// identifiers are unwrapped. An identifier is a TableRef when it directly
/// follows FROM, JOIN, INTO or UPDATE (or a comma continuing such a list);
/// otherwise it is a ColumnRef. Any identifier followed by "(" is a function.
inline std::vector<SqlToken> tokenize(std::string_view sql) {
  auto lexemes = detail::lex(sql);
  if (lexemes.empty()) throw Error(ErrorKind::EmptyInput, "SQL text has no tokens");

  enum class FromState { None, ExpectTable, AfterTable, AfterAs, AfterAlias };
  FromState state = FromState::None;
  std::vector<FromState> paren_stack;
  bool after_column_as = false;

  std::vector<SqlToken> out;
  out.reserve(lexemes.size());
  const auto& kw = detail::keywords();

  for (std::size_t i = 0; i < lexemes.size(); ++i) {
    const auto& lx = lexemes[i];
    bool next_is_paren = i + 1 < lexemes.size() && lexemes[i + 1].kind == detail::Lexeme::Kind::Punct &&
                         lexemes[i + 1].text == "(";
    SqlToken tok{TokenKind::Punct, lx.text, lx.raw, false};
    using LK = detail::Lexeme::Kind;

    switch (lx.kind) {
      case LK::String:
        tok.kind = TokenKind::StringLit;
        break;
      case LK::Number:
        tok.kind = TokenKind::NumericLit;
        break;
      case LK::Op:
        tok.kind = TokenKind::Operator;
        if (lx.text == "*") {
          bool operand_position = out.empty() || out.back().text == "(" || out.back().text == "," ||
                                  (out.back().kind == TokenKind::Keyword &&
                                   (out.back().text == "select" || out.back().text == "distinct" ||
                                    out.back().text == "all"));
          if (operand_position) tok.kind = TokenKind::Star;
        }
        break;
      case LK::QualifiedStar:
        tok.kind = TokenKind::Star;
        break;
      case LK::Punct:
        tok.kind = TokenKind::Punct;
        break;
      case LK::Placeholder:
        if (lx.text == "[col]") tok.kind = TokenKind::ColumnRef;
        else if (lx.text == "[tab]") tok.kind = TokenKind::TableRef;
        else if (lx.text == "[str]") tok.kind = TokenKind::StringLit;
        else tok.kind = TokenKind::NumericLit;
        break;
      case LK::Word:
      case LK::QuotedIdent: {
        bool is_kw = lx.kind == LK::Word && kw.count(lx.text) > 0;
        if (is_kw && !(next_is_paren && detail::keyword_can_be_function(lx.text))) {
          tok.kind = TokenKind::Keyword;
        } else if (next_is_paren && lx.kind == LK::Word) {
          tok.kind = TokenKind::FunctionName;
        } else {
          tok.kind = TokenKind::ColumnRef;
        }
        break;
      }
    }

    // Positional table/alias classification.
    bool is_name = tok.kind == TokenKind::ColumnRef || (tok.kind == TokenKind::TableRef);
    if (tok.kind == TokenKind::Keyword) {
      const auto& t = tok.text;
      if (t == "from" || t == "join" || t == "into" || t == "update") {
        state = FromState::ExpectTable;
      } else if (t == "as") {
        if (state == FromState::AfterTable) state = FromState::AfterAs;
        else after_column_as = true;
      } else {
        state = FromState::None;
      }
    } else if (is_name) {
      switch (state) {
        case FromState::ExpectTable:
          if (tok.text != "[col]") tok.kind = TokenKind::TableRef;
          state = FromState::AfterTable;
          break;
        case FromState::AfterTable:
        case FromState::AfterAs:
          tok.local_name = true;
          state = FromState::AfterAlias;
          break;
        default:
          if (after_column_as) tok.local_name = true;
          state = FromState::None;
          break;
      }
    } else if (tok.kind == TokenKind::Punct && tok.text == "(") {
      // A parenthesised item in table position (subquery) behaves as a table.
      paren_stack.push_back(state == FromState::ExpectTable ? FromState::AfterTable : FromState::None);
      state = FromState::None;
    } else if (tok.kind == TokenKind::Punct && tok.text == ")") {
      if (!paren_stack.empty()) {
        state = paren_stack.back();
        paren_stack.pop_back();
      } else {
        state = FromState::None;
      }
    } else if (tok.kind == TokenKind::Punct && tok.text == ",") {
      if (state == FromState::AfterTable || state == FromState::AfterAlias) state = FromState::ExpectTable;
    } else if (tok.kind != TokenKind::FunctionName) {
      state = FromState::None;
    }
    if (tok.kind != TokenKind::Keyword || tok.text != "as") after_column_as = false;

    out.push_back(std::move(tok));
  }
  detail::mark_cte_names(out);
  return out;
}

struct SqlSkeleton {
  std::vector<std::string> tokens;
  std::string rendered;

  friend bool operator==(const SqlSkeleton&, const SqlSkeleton&) = default;
};

/// Joins lexemes with single spaces, except that no space follows "(", none
/// precedes ")", "," or ";", and a function name binds to its "(".
inline std::string render_lexemes(const std::vector<std::string>& lexemes,
                                  const std::vector<bool>& is_function) {
  std::string out;
  for (std::size_t i = 0; i < lexemes.size(); ++i) {
    const auto& t = lexemes[i];
    if (i > 0) {
      const auto& prev = lexemes[i - 1];
      bool glue = prev == "(" || t == ")" || t == "," || t == ";" || (t == "(" && is_function[i - 1]);
      if (!glue) out.push_back(' ');
    }
    out += t;
  }
  return out;
}

/// Structural skeleton of a query. Identifiers and literals become "[col]",
/// "[tab]", "'[str]'" and "[val]"; keywords and function names are kept in
/// lower case. With weighting on, every WHERE is repeated three times and
/// every JOIN and GROUP BY twice.
inline SqlSkeleton extract_skeleton(std::string_view sql, bool weighting) {
  auto toks = tokenize(sql);
  std::vector<std::string> lex;
  std::vector<bool> fn;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    std::string s;
    switch (t.kind) {
      case TokenKind::Keyword:
        s = t.text;
        if ((s == "group" || s == "order") && i + 1 < toks.size() &&
            toks[i + 1].kind == TokenKind::Keyword && toks[i + 1].text == "by") {
          s += " by";
          ++i;
        }
        break;
      case TokenKind::ColumnRef: s = "[col]"; break;
      case TokenKind::TableRef: s = "[tab]"; break;
      case TokenKind::StringLit: s = "'[str]'"; break;
      case TokenKind::NumericLit: s = "[val]"; break;
      case TokenKind::Star: s = "*"; break;
      default: s = t.text; break;
    }
    int copies = 1;
    if (weighting) {
      if (s == "where") copies = 3;
      else if (s == "join" || s == "group by") copies = 2;
    }
    for (int c = 0; c < copies; ++c) {
      lex.push_back(s);
      fn.push_back(t.kind == TokenKind::FunctionName);
    }
  }
  SqlSkeleton sk;
  sk.rendered = render_lexemes(lex, fn);
  sk.tokens = std::move(lex);
  return sk;
}

struct SchemaElements {
  std::set<std::string> tables;
  std::set<std::string> columns;

  bool subset_of(const SchemaElements& other) const {
    return std::includes(other.tables.begin(), other.tables.end(), tables.begin(), tables.end()) &&
           std::includes(other.columns.begin(), other.columns.end(), columns.begin(), columns.end());
  }

  friend bool operator==(const SchemaElements&, const SchemaElements&) = default;
};

namespace detail {

inline std::string last_part(const std::string& qualified) {
  auto dot = qualified.rfind('.');
  return dot == std::string::npos ? qualified : qualified.substr(dot + 1);
}

inline std::set<std::string> local_names(const std::vector<SqlToken>& toks) {
  std::set<std::string> names;
  for (const auto& t : toks)
    if (t.local_name) names.insert(t.text);
  return names;
}

}  // namespace detail

/// Tables and columns referenced by a query, with alias qualifiers stripped
/// and alias/CTE bindings dropped.
inline SchemaElements extract_schema_elements(std::string_view sql) {
  auto toks = tokenize(sql);
  auto locals = detail::local_names(toks);
  SchemaElements el;
  for (const auto& t : toks) {
    if (t.local_name || t.text.empty() || t.text.front() == '[') continue;
    if (t.kind == TokenKind::TableRef) {
      auto name = detail::last_part(t.text);
      if (!locals.count(name)) el.tables.insert(name);
    } else if (t.kind == TokenKind::ColumnRef) {
      auto name = detail::last_part(t.text);
      if (!locals.count(name) && !locals.count(t.text)) el.columns.insert(name);
    }
  }
  return el;
}

struct ClauseDecomposition {
  std::set<std::string> select_items;
  bool distinct = false;
  std::set<std::string> from_tables;
  std::set<std::string> join_conditions;
  std::set<std::string> where_predicates;
  std::set<std::string> group_by_items;
  std::set<std::string> having_predicates;
  std::set<std::string> order_by_items;
  std::optional<std::int64_t> limit_value;
  int subquery_count = 0;
  std::multiset<std::string> operators;
  std::multiset<std::string> functions;
  std::multiset<std::string> literals;
  // WHERE/HAVING atoms with comparison operators and literals masked and
  // column qualifiers removed. Used to tell condition changes from pure
  // operator or value substitutions.
  std::set<std::string> predicate_shapes;

  friend bool operator==(const ClauseDecomposition&, const ClauseDecomposition&) = default;
};

namespace detail {

inline bool is_comparison_op(const SqlToken& t) {
  if (t.kind == TokenKind::Operator)
    return t.text == "=" || t.text == "==" || t.text == "<" || t.text == ">" || t.text == "<=" ||
           t.text == ">=" || t.text == "<>" || t.text == "!=";
  return t.kind == TokenKind::Keyword && (t.text == "like" || t.text == "glob" || t.text == "regexp");
}

inline bool is_logical_keyword(const std::string& s) {
  return s == "and" || s == "or" || s == "not" || s == "like" || s == "glob" || s == "regexp" ||
         s == "in" || s == "between" || s == "is" || s == "exists";
}

class Decomposer {
 public:
  explicit Decomposer(const std::vector<SqlToken>& toks) : toks_(toks) {
    // alias -> table, for rewriting "t1.col" as "table.col"
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (!toks[i].local_name || toks[i].kind == TokenKind::TableRef) continue;
      std::size_t j = i;
      if (j > 0 && toks[j - 1].kind == TokenKind::Keyword && toks[j - 1].text == "as") --j;
      if (j > 0 && toks[j - 1].kind == TokenKind::TableRef && !toks[j - 1].local_name)
        aliases_[toks[i].text] = last_part(toks[j - 1].text);
    }
  }

  ClauseDecomposition run() {
    ClauseDecomposition d;
    for (const auto& t : toks_) {
      if (t.kind == TokenKind::Operator) d.operators.insert(t.text);
      else if (t.kind == TokenKind::Keyword && is_logical_keyword(t.text)) d.operators.insert(t.text);
      else if (t.kind == TokenKind::Keyword &&
               (t.text == "union" || t.text == "intersect" || t.text == "except"))
        d.operators.insert(t.text);
      else if (t.kind == TokenKind::FunctionName) d.functions.insert(t.text);
      else if (t.kind == TokenKind::StringLit || t.kind == TokenKind::NumericLit) d.literals.insert(t.text);
    }
    scope(0, toks_.size(), d);
    return d;
  }

 private:
  enum class Clause { None, Select, From, On, Where, GroupBy, Having, OrderBy, Limit };

  std::size_t match_paren(std::size_t open, std::size_t end) const {
    int depth = 0;
    for (std::size_t i = open; i < end; ++i) {
      if (toks_[i].text == "(" && toks_[i].kind == TokenKind::Punct) ++depth;
      else if (toks_[i].text == ")" && toks_[i].kind == TokenKind::Punct && --depth == 0) return i;
    }
    return end;
  }

  bool is_subquery_open(std::size_t i, std::size_t end) const {
    return toks_[i].kind == TokenKind::Punct && toks_[i].text == "(" && i + 1 < end &&
           toks_[i + 1].kind == TokenKind::Keyword &&
           (toks_[i + 1].text == "select" || toks_[i + 1].text == "with");
  }

  std::string token_text(const SqlToken& t, bool mask) const {
    if (t.kind == TokenKind::ColumnRef || t.kind == TokenKind::TableRef) {
      auto dot = t.text.rfind('.');
      if (mask) return last_part(t.text);
      if (dot != std::string::npos) {
        auto qual = t.text.substr(0, dot);
        auto it = aliases_.find(qual);
        if (it != aliases_.end()) return it->second + t.text.substr(dot);
      }
      return t.text;
    }
    if (mask) {
      if (t.kind == TokenKind::StringLit || t.kind == TokenKind::NumericLit) return "[lit]";
      if (is_comparison_op(t)) return "[op]";
    }
    return t.text;
  }

  std::string render(std::size_t b, std::size_t e, bool mask = false) const {
    std::vector<std::string> lex;
    std::vector<bool> fn;
    for (std::size_t i = b; i < e; ++i) {
      lex.push_back(token_text(toks_[i], mask));
      fn.push_back(toks_[i].kind == TokenKind::FunctionName);
    }
    return render_lexemes(lex, fn);
  }

  // Splits [b, e) on top-level commas.
  std::vector<std::pair<std::size_t, std::size_t>> split_commas(std::size_t b, std::size_t e) const {
    std::vector<std::pair<std::size_t, std::size_t>> parts;
    std::size_t start = b;
    for (std::size_t i = b; i < e; ++i) {
      if (toks_[i].kind == TokenKind::Punct && toks_[i].text == "(") {
        i = match_paren(i, e);
        continue;
      }
      if (toks_[i].kind == TokenKind::Punct && toks_[i].text == ",") {
        if (i > start) parts.emplace_back(start, i);
        start = i + 1;
      }
    }
    if (e > start) parts.emplace_back(start, e);
    return parts;
  }

  // Splits a boolean expression into atoms on top-level AND/OR, descending
  // into parenthesised groups that are not subqueries.
  void split_predicates(std::size_t b, std::size_t e, std::vector<std::pair<std::size_t, std::size_t>>& atoms) const {
    if (b >= e) return;
    if (toks_[b].kind == TokenKind::Punct && toks_[b].text == "(" && match_paren(b, e) == e - 1 &&
        !is_subquery_open(b, e)) {
      split_predicates(b + 1, e - 1, atoms);
      return;
    }
    std::size_t start = b;
    bool in_between = false;
    for (std::size_t i = b; i < e; ++i) {
      const auto& t = toks_[i];
      if (t.kind == TokenKind::Punct && t.text == "(") {
        i = match_paren(i, e);
        continue;
      }
      if (t.kind != TokenKind::Keyword) continue;
      if (t.text == "between") in_between = true;
      else if (t.text == "case") {
        int depth = 1;
        while (++i < e && depth > 0) {
          if (toks_[i].kind == TokenKind::Keyword && toks_[i].text == "case") ++depth;
          if (toks_[i].kind == TokenKind::Keyword && toks_[i].text == "end") --depth;
        }
        --i;
      } else if (t.text == "and" && in_between) {
        in_between = false;
      } else if (t.text == "and" || t.text == "or") {
        if (i > start) split_predicates(start, i, atoms);
        start = i + 1;
      }
    }
    if (start == b) {
      atoms.emplace_back(b, e);
    } else if (e > start) {
      split_predicates(start, e, atoms);
    }
  }

  void add_predicates(std::size_t b, std::size_t e, std::set<std::string>& bucket, ClauseDecomposition& d,
                      bool shapes) {
    std::vector<std::pair<std::size_t, std::size_t>> atoms;
    split_predicates(b, e, atoms);
    for (auto [ab, ae] : atoms) {
      bucket.insert(render(ab, ae));
      if (shapes) d.predicate_shapes.insert(render(ab, ae, true));
    }
  }

  void flush(Clause c, std::size_t b, std::size_t e, ClauseDecomposition& d) {
    if (b >= e) return;
    switch (c) {
      case Clause::Select:
        for (auto [ib, ie] : split_commas(b, e)) d.select_items.insert(render(ib, ie));
        break;
      case Clause::From:
        for (std::size_t i = b; i < e; ++i) {
          const auto& t = toks_[i];
          if (t.kind == TokenKind::TableRef && !t.local_name) d.from_tables.insert(last_part(t.text));
        }
        break;
      case Clause::On:
        add_predicates(b, e, d.join_conditions, d, false);
        break;
      case Clause::Where:
        add_predicates(b, e, d.where_predicates, d, true);
        break;
      case Clause::Having:
        add_predicates(b, e, d.having_predicates, d, true);
        break;
      case Clause::GroupBy:
        for (auto [ib, ie] : split_commas(b, e)) d.group_by_items.insert(render(ib, ie));
        break;
      case Clause::OrderBy:
        for (auto [ib, ie] : split_commas(b, e)) {
          if (ie > ib && toks_[ie - 1].kind == TokenKind::Keyword && toks_[ie - 1].text == "asc") --ie;
          d.order_by_items.insert(render(ib, ie));
        }
        break;
      case Clause::Limit: {
        // LIMIT n | LIMIT n OFFSET m | LIMIT m, n
        std::vector<std::int64_t> nums;
        bool offset_kw = false;
        for (std::size_t i = b; i < e; ++i) {
          if (toks_[i].kind == TokenKind::Keyword && toks_[i].text == "offset") offset_kw = true;
          if (toks_[i].kind == TokenKind::NumericLit && !toks_[i].text.empty() && toks_[i].text.front() != '[') {
            try {
              nums.push_back(std::stoll(toks_[i].text));
            } catch (const std::exception&) {
            }
          }
        }
        if (!nums.empty()) d.limit_value = (nums.size() >= 2 && !offset_kw) ? nums[1] : nums[0];
        break;
      }
      case Clause::None:
        break;
    }
  }

  // Decomposes tokens [b, e) of one (possibly compound) SELECT statement.
  void scope(std::size_t b, std::size_t e, ClauseDecomposition& d) {
    Clause clause = Clause::None;
    std::size_t clause_start = b;
    auto switch_to = [&](Clause next, std::size_t i, std::size_t next_start) {
      flush(clause, clause_start, i, d);
      clause = next;
      clause_start = next_start;
    };
    for (std::size_t i = b; i < e; ++i) {
      const auto& t = toks_[i];
      if (t.kind == TokenKind::Punct && t.text == "(") {
        std::size_t close = match_paren(i, e);
        if (is_subquery_open(i, e)) {
          ++d.subquery_count;
          scope(i + 1, close, d);
        } else if (clause == Clause::None) {
          // e.g. CTE bodies: scan inside for nested statements
          scope(i + 1, close, d);
        } else {
          for (std::size_t j = i + 1; j < close; ++j) {
            if (is_subquery_open(j, close)) {
              std::size_t inner = match_paren(j, close);
              ++d.subquery_count;
              scope(j + 1, inner, d);
              j = inner;
            }
          }
        }
        i = close;
        continue;
      }
      if (t.kind != TokenKind::Keyword) continue;
      const auto& k = t.text;
      bool next_by = i + 1 < e && toks_[i + 1].kind == TokenKind::Keyword && toks_[i + 1].text == "by";
      if (k == "select") {
        std::size_t start = i + 1;
        if (start < e && toks_[start].kind == TokenKind::Keyword &&
            (toks_[start].text == "distinct" || toks_[start].text == "all")) {
          if (toks_[start].text == "distinct") d.distinct = true;
          ++start;
        }
        switch_to(Clause::Select, i, start);
      } else if (k == "from") {
        switch_to(Clause::From, i, i + 1);
      } else if (k == "on" && (clause == Clause::From || clause == Clause::On)) {
        switch_to(Clause::On, i, i + 1);
      } else if (k == "join" && clause == Clause::On) {
        switch_to(Clause::From, i, i + 1);
      } else if (k == "where") {
        switch_to(Clause::Where, i, i + 1);
      } else if (k == "group" && next_by) {
        switch_to(Clause::GroupBy, i, i + 2);
        ++i;
      } else if (k == "having") {
        switch_to(Clause::Having, i, i + 1);
      } else if (k == "order" && next_by) {
        switch_to(Clause::OrderBy, i, i + 2);
        ++i;
      } else if (k == "limit") {
        switch_to(Clause::Limit, i, i + 1);
      } else if (k == "union" || k == "intersect" || k == "except") {
        switch_to(Clause::None, i, i + 1);
      } else if (clause == Clause::On && (k == "inner" || k == "left" || k == "right" || k == "cross" ||
                                          k == "natural" || k == "full" || k == "outer")) {
        switch_to(Clause::From, i, i + 1);
      }
    }
    flush(clause, clause_start, e, d);
  }

  const std::vector<SqlToken>& toks_;
  std::map<std::string, std::string> aliases_;
};

}  // namespace detail

/// Clause-level decomposition used by exact-set-match and error
/// classification. Items are lower-cased with whitespace collapsed and
/// "alias.col" rewritten to "table.col". Nested subqueries are counted and
/// their items merged into the parent buckets.
inline ClauseDecomposition decompose_clauses(std::string_view sql) {
  auto toks = tokenize(sql);
  return detail::Decomposer(toks).run();
}

}  // namespace sqlrl
