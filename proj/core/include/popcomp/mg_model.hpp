#pragma once

// Binary-decision Minority Game agents.
//
// A strategy maps the last m winning outcomes to a decision in {-1, +1}.
// Histories are m-bit integers: outcome +1 is bit 1, outcome -1 is bit 0,
// and the most recent outcome is the least significant bit. A strategy table
// is packed into an integer whose bit h is the decision for history h
// (1 -> +1, 0 -> -1), so memory is limited to m <= 5.

#include <compare>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace popcomp {

using History = std::uint32_t;

inline constexpr int kMaxMemory = 5;

/// -sgn(z), with z = 0 mapped to +1.
int winning_outcome(double z);

/// Number of distinct strategies, 2^(2^m).
std::uint64_t strategy_count(int memory);

struct Strategy {
  int memory = 1;
  std::uint64_t table = 0;

  /// Throws InputError if memory is out of range or table has stray bits.
  static Strategy make(int memory, std::uint64_t table);

  int decide(History history) const { return ((table >> history) & 1U) ? +1 : -1; }

  /// Strategy with every table entry negated.
  Strategy flipped() const;

  auto operator<=>(const Strategy&) const = default;
};

/// An agent type: an unordered pair of distinct strategies, stored with
/// first.table < second.table.
struct AgentType {
  Strategy first;
  Strategy second;

  /// Canonicalises the order. Throws InputError for identical tables.
  static AgentType make(int memory, std::uint64_t table_a, std::uint64_t table_b);

  int memory() const { return first.memory; }

  auto operator<=>(const AgentType&) const = default;
};

/// Score of a strategy over the window: +1 for each outcome it predicted
/// and -1 for each it missed. histories[i] is the history preceding
/// outcomes[i].
int score_strategy(const Strategy& s, std::span<const int> outcomes,
                   std::span<const History> histories);

enum class TieBreak { CanonicalFirst, Random };

/// Decision of the higher-scoring strategy on `current`. On a tie the
/// first strategy plays, unless `tie_break` is Random, in which case a coin
/// is drawn from `rng` (required in that mode).
int agent_decision(const AgentType& agent, std::span<const int> outcomes,
                   std::span<const History> histories, History current,
                   TieBreak tie_break = TieBreak::CanonicalFirst,
                   std::mt19937_64* rng = nullptr);

/// H_k: one decision per agent type.
Eigen::RowVectorXd build_decision_row(std::span<const AgentType> types,
                                      std::span<const int> outcomes,
                                      std::span<const History> histories, History current,
                                      TieBreak tie_break = TieBreak::CanonicalFirst,
                                      std::mt19937_64* rng = nullptr);

/// C(2^(2^m), 2). Throws std::overflow_error when not representable.
std::uint64_t pair_count(int memory);

/// Pair at a position of the lexicographic enumeration of (a, b), a < b.
AgentType pair_at(int memory, std::uint64_t index);

/// Inverse of pair_at.
std::uint64_t pair_index(const AgentType& agent);

/// n distinct agent types drawn uniformly without replacement from all
/// pairs, returned in canonical (lexicographic) order.
std::vector<AgentType> sample_agent_subset(int memory, std::size_t n, std::uint64_t seed);

struct AgentSubset {
  int memory = 1;
  std::vector<AgentType> types;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const AgentSubset& s);
void from_json(const nlohmann::json& j, AgentSubset& s);

/// Rolling record of winning outcomes: the current m-bit history plus the
/// last T (history, outcome) pairs used for scoring.
class OutcomeTape {
 public:
  OutcomeTape(int memory, std::size_t horizon);

  void push(int outcome);

  /// True once m + T outcomes have been seen.
  bool ready() const { return seen_ >= static_cast<std::size_t>(memory_) + horizon_; }

  int memory() const { return memory_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t seen() const { return seen_; }

  History current() const { return current_; }
  std::span<const int> outcomes() const { return outcomes_; }
  std::span<const History> histories() const { return histories_; }

  Eigen::RowVectorXd decision_row(std::span<const AgentType> types,
                                  TieBreak tie_break = TieBreak::CanonicalFirst,
                                  std::mt19937_64* rng = nullptr) const;

 private:
  int memory_;
  std::size_t horizon_;
  History mask_;
  History current_ = 0;
  std::size_t seen_ = 0;
  std::vector<int> outcomes_;
  std::vector<History> histories_;
};

}  // namespace popcomp
