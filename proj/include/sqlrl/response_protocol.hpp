#pragma once

// Model response parsing and thinking-mode format validation.
//
//   Suppressed  user: {query}           assistant: ```sql\n...\n```
//   Fast        user: {query}/no_think  assistant: <think>\n\n</think>\n\n```sql...```
//   Slow        user: {query}/think     assistant: <think>{reasoning}</think>\n\n```sql...```

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlrl/error.hpp"

namespace sqlrl {

enum class ThinkingMode { Suppressed, Fast, Slow };

inline std::string_view to_string(ThinkingMode m) {
  switch (m) {
    case ThinkingMode::Suppressed: return "suppressed";
    case ThinkingMode::Fast: return "fast";
    case ThinkingMode::Slow: return "slow";
  }
  return "suppressed";
}

/// Accepts the mode names plus the user-side suffixes ("no_think", "think")
/// and an empty string for suppressed.
inline ThinkingMode parse_thinking_mode(std::string_view s) {
  std::string l;
  for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (l.empty() || l == "suppressed" || l == "none") return ThinkingMode::Suppressed;
  if (l == "fast" || l == "no_think" || l == "/no_think") return ThinkingMode::Fast;
  if (l == "slow" || l == "think" || l == "/think") return ThinkingMode::Slow;
  throw Error(ErrorKind::InvalidArgument, "unknown thinking mode '" + std::string(s) + "'");
}

/// Suffix appended to the user turn for a mode.
inline std::string_view user_suffix(ThinkingMode m) {
  switch (m) {
    case ThinkingMode::Fast: return "/no_think";
    case ThinkingMode::Slow: return "/think";
    default: return "";
  }
}

enum class FenceState { Absent, Closed, Unterminated };

struct ParsedResponse {
  std::string db_id;
  std::string source;
  ThinkingMode mode = ThinkingMode::Suppressed;
  std::optional<std::string> think;  // content of the first complete tag pair
  std::string sql;
  // Bookkeeping for validation.
  int think_pairs = 0;
  bool stray_think_tag = false;  // an open or close tag without a partner
  FenceState fence = FenceState::Absent;
};

enum class FormatViolation {
  MissingThinkTags,
  ForbiddenThinkTags,
  NonEmptyFastThink,
  EmptySlowThink,
  MissingSqlFence,
  MalformedFence,
};

inline std::string_view to_string(FormatViolation v) {
  switch (v) {
    case FormatViolation::MissingThinkTags: return "MissingThinkTags";
    case FormatViolation::ForbiddenThinkTags: return "ForbiddenThinkTags";
    case FormatViolation::NonEmptyFastThink: return "NonEmptyFastThink";
    case FormatViolation::EmptySlowThink: return "EmptySlowThink";
    case FormatViolation::MissingSqlFence: return "MissingSqlFence";
    case FormatViolation::MalformedFence: return "MalformedFence";
  }
  return "";
}

struct FormatVerdict {
  bool valid = true;
  std::vector<FormatViolation> violations;
};

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kFenceOpen = "```sql";
inline constexpr std::string_view kFenceClose = "```";

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool iequals_at(std::string_view s, std::size_t pos, std::string_view word) {
  if (pos + word.size() > s.size()) return false;
  for (std::size_t k = 0; k < word.size(); ++k)
    if (std::tolower(static_cast<unsigned char>(s[pos + k])) != word[k]) return false;
  return true;
}

inline std::size_t count_occurrences(std::string_view s, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string_view::npos; p = s.find(needle, p + needle.size())) ++n;
  return n;
}

}  // namespace detail

/// Splits an assistant message into think content and the first ```sql
/// fenced block. Never throws; missing parts are left empty and recorded in
/// the bookkeeping fields.
inline ParsedResponse parse_response(std::string_view raw, std::string db_id, std::string source,
                                     ThinkingMode mode) {
  ParsedResponse r;
  r.db_id = std::move(db_id);
  r.source = std::move(source);
  r.mode = mode;

  // Think tags: pair each open tag with the next close tag.
  std::size_t pos = 0;
  std::size_t sql_search_from = 0;
  while (true) {
    auto open = raw.find(kThinkOpen, pos);
    if (open == std::string_view::npos) break;
    auto close = raw.find(kThinkClose, open + kThinkOpen.size());
    if (close == std::string_view::npos) {
      r.stray_think_tag = true;
      break;
    }
    auto body = raw.substr(open + kThinkOpen.size(), close - open - kThinkOpen.size());
    if (body.find(kThinkOpen) != std::string_view::npos) r.stray_think_tag = true;
    if (r.think_pairs == 0) {
      r.think = std::string(body);
      sql_search_from = close + kThinkClose.size();
    }
    ++r.think_pairs;
    pos = close + kThinkClose.size();
  }
  if (detail::count_occurrences(raw, kThinkClose) != static_cast<std::size_t>(r.think_pairs))
    r.stray_think_tag = true;

  // The answer follows the reasoning; fall back to the whole text if the
  // fence only appears inside the think block.
  auto find_fence = [&](std::size_t from) -> std::size_t {
    for (auto p = raw.find("```", from); p != std::string_view::npos; p = raw.find("```", p + 3)) {
      auto after = p + kFenceOpen.size();
      if (detail::iequals_at(raw, p, kFenceOpen) &&
          (after == raw.size() || std::isspace(static_cast<unsigned char>(raw[after]))))
        return p;
    }
    return std::string_view::npos;
  };
  auto fence = find_fence(sql_search_from);
  if (fence == std::string_view::npos && sql_search_from != 0) fence = find_fence(0);
  if (fence != std::string_view::npos) {
    auto body_start = fence + kFenceOpen.size();
    auto close = raw.find(kFenceClose, body_start);
    if (close == std::string_view::npos) {
      r.fence = FenceState::Unterminated;
      r.sql = std::string(detail::trim(raw.substr(body_start)));
    } else {
      r.fence = FenceState::Closed;
      r.sql = std::string(detail::trim(raw.substr(body_start, close - body_start)));
    }
  }
  return r;
}

/// Checks a parsed response against its mode template. With strict set, more
/// than one think pair is flagged as MalformedFence.
inline FormatVerdict validate_format(const ParsedResponse& r, bool strict = false) {
  FormatVerdict v;
  auto add = [&](FormatViolation x) { v.violations.push_back(x); };
  const bool has_pair = r.think_pairs > 0;

  switch (r.mode) {
    case ThinkingMode::Suppressed:
      if (has_pair || r.stray_think_tag) add(FormatViolation::ForbiddenThinkTags);
      break;
    case ThinkingMode::Fast:
      if (!has_pair) add(FormatViolation::MissingThinkTags);
      else if (!detail::trim(*r.think).empty()) add(FormatViolation::NonEmptyFastThink);
      break;
    case ThinkingMode::Slow:
      if (!has_pair) add(FormatViolation::MissingThinkTags);
      else if (detail::trim(*r.think).empty()) add(FormatViolation::EmptySlowThink);
      break;
  }
  if (r.mode != ThinkingMode::Suppressed && has_pair && (r.stray_think_tag || (strict && r.think_pairs > 1)))
    add(FormatViolation::MalformedFence);

  if (r.fence == FenceState::Unterminated) add(FormatViolation::MalformedFence);
  else if (r.fence == FenceState::Absent || r.sql.empty()) add(FormatViolation::MissingSqlFence);

  v.valid = v.violations.empty();
  return v;
}

/// Writes a response in the exact template shape for its mode.
inline std::string render_response(const ParsedResponse& r) {
  std::string out;
  switch (r.mode) {
    case ThinkingMode::Suppressed:
      break;
    case ThinkingMode::Fast:
      out += "<think>\n\n</think>\n\n";
      break;
    case ThinkingMode::Slow:
      out += "<think>" + r.think.value_or("") + "</think>\n\n";
      break;
  }
  out += "```sql\n" + r.sql + "\n```";
  return out;
}

}  // namespace sqlrl
