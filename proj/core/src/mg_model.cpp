#include "popcomp/mg_model.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "popcomp/error.hpp"

namespace popcomp {

namespace {

__extension__ using u128 = unsigned __int128;

void check_memory(int memory) {
  if (memory < 1 || memory > kMaxMemory) {
    throw InputError("memory must be in [1, " + std::to_string(kMaxMemory) + "], got " +
                     std::to_string(memory));
  }
}

// Number of pairs whose first strategy is below `a`.
u128 pairs_before(u128 strategies, u128 a) {
  return a * (strategies - 1) - a * (a - 1) / 2;
}

}  // namespace

int winning_outcome(double z) { return z > 0.0 ? -1 : +1; }

std::uint64_t strategy_count(int memory) {
  if (memory < 1) throw InputError("memory must be positive");
  if (memory > kMaxMemory) {
    throw std::overflow_error("strategy count 2^(2^" + std::to_string(memory) +
                              ") does not fit in 64 bits");
  }
  return std::uint64_t{1} << (std::uint64_t{1} << memory);
}

Strategy Strategy::make(int memory, std::uint64_t table) {
  check_memory(memory);
  const std::uint64_t count = strategy_count(memory);
  if (table >= count) {
    throw InputError("strategy table " + std::to_string(table) + " out of range for m=" +
                     std::to_string(memory));
  }
  return Strategy{memory, table};
}

Strategy Strategy::flipped() const {
  return Strategy{memory, ~table & (strategy_count(memory) - 1)};
}

AgentType AgentType::make(int memory, std::uint64_t table_a, std::uint64_t table_b) {
  if (table_a == table_b) throw InputError("an agent type needs two distinct strategies");
  auto a = Strategy::make(memory, table_a);
  auto b = Strategy::make(memory, table_b);
  if (b < a) std::swap(a, b);
  return AgentType{a, b};
}

int score_strategy(const Strategy& s, std::span<const int> outcomes,
                   std::span<const History> histories) {
  if (outcomes.size() != histories.size()) {
    throw InputError("score window has " + std::to_string(outcomes.size()) +
                     " outcomes but " + std::to_string(histories.size()) + " histories");
  }
  int score = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    score += s.decide(histories[i]) == outcomes[i] ? 1 : -1;
  }
  return score;
}

int agent_decision(const AgentType& agent, std::span<const int> outcomes,
                   std::span<const History> histories, History current, TieBreak tie_break,
                   std::mt19937_64* rng) {
  const int a = score_strategy(agent.first, outcomes, histories);
  const int b = score_strategy(agent.second, outcomes, histories);
  if (a > b) return agent.first.decide(current);
  if (b > a) return agent.second.decide(current);
  if (tie_break == TieBreak::Random) {
    if (rng == nullptr) throw InputError("random tie-break requires a generator");
    return ((*rng)() & 1U) ? agent.second.decide(current) : agent.first.decide(current);
  }
  return agent.first.decide(current);
}

Eigen::RowVectorXd build_decision_row(std::span<const AgentType> types,
                                      std::span<const int> outcomes,
                                      std::span<const History> histories, History current,
                                      TieBreak tie_break, std::mt19937_64* rng) {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(types.size()));
  if (types.empty()) return row;
  const int memory = types.front().memory();
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i].memory() != memory || types[i].second.memory != memory) {
      throw InputError("agent types in one decision row must share a memory size");
    }
    row(static_cast<Eigen::Index>(i)) =
        agent_decision(types[i], outcomes, histories, current, tie_break, rng);
  }
  return row;
}

std::uint64_t pair_count(int memory) {
  const u128 s = strategy_count(memory);
  const u128 pairs = s * (s - 1) / 2;
  if (pairs > std::numeric_limits<std::uint64_t>::max()) {
    throw std::overflow_error("pair count overflows 64 bits");
  }
  return static_cast<std::uint64_t>(pairs);
}

AgentType pair_at(int memory, std::uint64_t index) {
  const std::uint64_t total = pair_count(memory);
  if (index >= total) throw InputError("pair index out of range");
  const u128 s = strategy_count(memory);
  // Largest a with pairs_before(a) <= index.
  u128 lo = 0;
  u128 hi = s - 2;
  while (lo < hi) {
    const u128 mid = lo + (hi - lo + 1) / 2;
    if (pairs_before(s, mid) <= index) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  const u128 b = lo + 1 + (index - pairs_before(s, lo));
  return AgentType{Strategy{memory, static_cast<std::uint64_t>(lo)},
                   Strategy{memory, static_cast<std::uint64_t>(b)}};
}

std::uint64_t pair_index(const AgentType& agent) {
  const u128 s = strategy_count(agent.memory());
  const u128 a = agent.first.table;
  const u128 b = agent.second.table;
  if (!(a < b) || b >= s) throw InputError("agent type is not canonical");
  return static_cast<std::uint64_t>(pairs_before(s, a) + (b - a - 1));
}

std::vector<AgentType> sample_agent_subset(int memory, std::size_t n, std::uint64_t seed) {
  const std::uint64_t total = pair_count(memory);
  if (n > total) {
    throw InputError("cannot draw " + std::to_string(n) + " distinct agent types from " +
                     std::to_string(total));
  }
  // Floyd's sampling: uniform n-subset of [0, total).
  std::mt19937_64 rng(seed);
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(n * 2);
  for (std::uint64_t j = total - n; j < total; ++j) {
    std::uniform_int_distribution<std::uint64_t> dist(0, j);
    const std::uint64_t t = dist(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> indices(chosen.begin(), chosen.end());
  std::sort(indices.begin(), indices.end());
  std::vector<AgentType> out;
  out.reserve(n);
  for (std::uint64_t idx : indices) out.push_back(pair_at(memory, idx));
  return out;
}

void to_json(nlohmann::json& j, const AgentSubset& s) {
  nlohmann::json types = nlohmann::json::array();
  for (const auto& t : s.types) types.push_back({t.first.table, t.second.table});
  j = nlohmann::json{{"m", s.memory}, {"types", std::move(types)}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, AgentSubset& s) {
  s.memory = j.at("m").get<int>();
  check_memory(s.memory);
  s.seed = j.value("seed", std::uint64_t{0});
  s.types.clear();
  for (const auto& pair : j.at("types")) {
    if (!pair.is_array() || pair.size() != 2) {
      throw InputError("agent type must be a [tableA, tableB] pair");
    }
    s.types.push_back(AgentType::make(s.memory, pair[0].get<std::uint64_t>(),
                                      pair[1].get<std::uint64_t>()));
  }
}

OutcomeTape::OutcomeTape(int memory, std::size_t horizon)
    : memory_((check_memory(memory), memory)),
      horizon_(horizon),
      mask_((History{1} << memory) - 1) {
  if (horizon == 0) throw InputError("scoring horizon must be positive");
  outcomes_.reserve(horizon + 1);
  histories_.reserve(horizon + 1);
}

void OutcomeTape::push(int outcome) {
  if (outcome != 1 && outcome != -1) throw InputError("outcome must be +1 or -1");
  if (seen_ >= static_cast<std::size_t>(memory_)) {
    outcomes_.push_back(outcome);
    histories_.push_back(current_);
    if (outcomes_.size() > horizon_) {
      outcomes_.erase(outcomes_.begin());
      histories_.erase(histories_.begin());
    }
  }
  current_ = ((current_ << 1) | (outcome > 0 ? 1U : 0U)) & mask_;
  ++seen_;
}

Eigen::RowVectorXd OutcomeTape::decision_row(std::span<const AgentType> types,
                                             TieBreak tie_break,
                                             std::mt19937_64* rng) const {
  if (!ready()) throw InputError("outcome tape still warming up");
  for (const auto& t : types) {
    if (t.memory() != memory_) throw InputError("agent memory differs from the tape's");
  }
  return build_decision_row(types, outcomes_, histories_, current_, tie_break, rng);
}

}  // namespace popcomp
