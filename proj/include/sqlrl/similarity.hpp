#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "sqlrl/error.hpp"
#include "sqlrl/sql_analyzer.hpp"

namespace sqlrl {

inline constexpr double kDefaultAlpha = 0.7;
inline constexpr double kDefaultTau = 0.5;

struct SimilarityScore {
  double match_ratio = 0.0;
  double jaccard = 0.0;
  double combined = 0.0;
  double alpha = kDefaultAlpha;
  bool passed = false;
};

namespace detail {

struct MatchBlock {
  std::size_t a, b, size;
};

// Longest common block of a[alo, ahi) and b[blo, bhi). Ties go to the block
// starting earliest in a, then earliest in b.
inline MatchBlock longest_match(std::string_view a, std::size_t alo, std::size_t ahi, std::string_view b,
                                std::size_t blo, std::size_t bhi) {
  MatchBlock best{alo, blo, 0};
  std::vector<std::size_t> prev(bhi - blo + 1, 0), cur(bhi - blo + 1, 0);
  for (std::size_t i = alo; i < ahi; ++i) {
    for (std::size_t j = blo; j < bhi; ++j) {
      std::size_t col = j - blo + 1;
      if (a[i] == b[j]) {
        cur[col] = prev[col - 1] + 1;
        if (cur[col] > best.size) best = {i + 1 - cur[col], j + 1 - cur[col], cur[col]};
      } else {
        cur[col] = 0;
      }
    }
    std::swap(prev, cur);
  }
  return best;
}

}  // namespace detail

/// Total length of matched characters under Ratcliff-Obershelp: take the
/// longest common block, then recurse on the pieces to its left and right.
inline std::size_t gestalt_matches(std::string_view a, std::string_view b) {
  std::size_t total = 0;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> todo{{0, a.size(), 0, b.size()}};
  while (!todo.empty()) {
    auto [alo, ahi, blo, bhi] = todo.back();
    todo.pop_back();
    if (alo >= ahi || blo >= bhi) continue;
    auto m = detail::longest_match(a, alo, ahi, b, blo, bhi);
    if (m.size == 0) continue;
    total += m.size;
    todo.emplace_back(alo, m.a, blo, m.b);
    todo.emplace_back(m.a + m.size, ahi, m.b + m.size, bhi);
  }
  return total;
}

/// 2M/T over characters, no junk heuristic. Two empty strings score 1.
inline double match_ratio(std::string_view a, std::string_view b) {
  const std::size_t t = a.size() + b.size();
  if (t == 0) return 1.0;
  return 2.0 * static_cast<double>(gestalt_matches(a, b)) / static_cast<double>(t);
}

/// |a∩b| / |a∪b|, with two empty sets scoring 1.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double combine(double alpha, double ratio, double jac) { return alpha * ratio + (1.0 - alpha) * jac; }

/// Hybrid skeleton similarity. The character-level ratio runs over the
/// rendered strings, the Jaccard term over the token sets. Argument order is
/// (generated, ground truth).
inline SimilarityScore skeleton_similarity(const SqlSkeleton& gen, const SqlSkeleton& gt,
                                           double alpha = kDefaultAlpha, double tau = kDefaultTau) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0,1]");
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in [0,1]");
  SimilarityScore s;
  s.alpha = alpha;
  s.match_ratio = match_ratio(gen.rendered, gt.rendered);
  s.jaccard = jaccard(std::set<std::string>(gen.tokens.begin(), gen.tokens.end()),
                      std::set<std::string>(gt.tokens.begin(), gt.tokens.end()));
  s.combined = combine(alpha, s.match_ratio, s.jaccard);
  s.passed = s.combined >= tau;
  return s;
}

}  // namespace sqlrl
