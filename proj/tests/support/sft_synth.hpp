#pragma once

// Synthetic self-distillation input with planted runs of exact matches.
// 200 questions x 5 attempts. Half the questions carry a run of four
// consecutive matches (attempts 0-3); the other half match at attempts 0, 2
// and 4 only. With k = 3 exactly 400 of 1000 records are retained.

#include <random>
#include <string>
#include <vector>

#include "sqlrl/metrics.hpp"

namespace fixture {

inline constexpr std::size_t kSftRecords = 1000;
inline constexpr std::size_t kSftRetained = 400;

inline std::vector<sqlrl::SftCandidate> synthetic_sft(std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  std::vector<sqlrl::SftCandidate> out;
  for (int q = 0; q < 200; ++q) {
    const std::string gold = "SELECT name FROM Customers WHERE id = " + std::to_string(q) + " AND city = 'Tabuk'";
    const bool planted = q % 2 == 0;
    for (int a = 0; a < 5; ++a) {
      bool match = planted ? a < 4 : a % 2 == 0;
      std::string cand;
      if (match) {
        // keyword case and spacing vary; identifiers and literals do not
        cand = (rng() % 2 ? "select  name\nfrom Customers where id = " : "SELECT name FROM Customers WHERE id =  ") +
               std::to_string(q) + (rng() % 2 ? " and city = 'Tabuk';" : " AND city = 'Tabuk'");
      } else {
        cand = rng() % 2 ? "SELECT name FROM Customers WHERE id = " + std::to_string(q) + " AND city = 'tabuk'"
                         : "SELECT name FROM customers WHERE id = " + std::to_string(q) + " AND city = 'Tabuk'";
      }
      out.push_back({"question " + std::to_string(q), "reasoning " + std::to_string(a), cand, gold, a});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace fixture
