#include "simedu/concept_graph.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <sstream>

#include "simedu/error.hpp"

namespace simedu {

namespace {

constexpr double kWeightSlack = 1e-12;

// Returns one cycle as a closed path (first == last), or empty if acyclic.
std::vector<std::size_t> find_cycle(const ConceptGraph& graph) {
  const std::size_t n = graph.size();
  std::vector<std::vector<std::size_t>> children(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (const auto& link : graph.parents(c)) children[link.parent].push_back(c);
  }
  enum class Mark { White, Grey, Black };
  std::vector<Mark> mark(n, Mark::White);
  std::vector<std::size_t> stack;
  std::vector<std::size_t> cycle;

  auto dfs = [&](auto&& self, std::size_t node) -> bool {
    mark[node] = Mark::Grey;
    stack.push_back(node);
    for (std::size_t next : children[node]) {
      if (mark[next] == Mark::Grey) {
        auto it = std::find(stack.begin(), stack.end(), next);
        cycle.assign(it, stack.end());
        cycle.push_back(next);
        return true;
      }
      if (mark[next] == Mark::White && self(self, next)) return true;
    }
    stack.pop_back();
    mark[node] = Mark::Black;
    return false;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (mark[i] == Mark::White && dfs(dfs, i)) break;
  }
  return cycle;
}

[[noreturn]] void throw_cycle(const ConceptGraph& graph) {
  std::ostringstream msg;
  const auto cycle = find_cycle(graph);
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    if (i) msg << " -> ";
    msg << graph.id(cycle[i]);
  }
  throw Error(ErrorCode::CycleDetected, msg.str());
}

}  // namespace

ConceptGraph::ConceptGraph(std::vector<ConceptId> concepts, std::vector<Edge> edges)
    : concepts_(std::move(concepts)), edges_(std::move(edges)), parents_(concepts_.size()) {
  for (std::size_t i = 0; i < concepts_.size(); ++i) lookup_.emplace(concepts_[i], i);
  for (const auto& e : edges_) {
    auto p = lookup_.find(e.parent);
    auto c = lookup_.find(e.child);
    if (p == lookup_.end() || c == lookup_.end()) continue;
    parents_[c->second].push_back({p->second, e.weight});
  }
}

std::optional<std::size_t> ConceptGraph::find(const ConceptId& id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t ConceptGraph::index(const ConceptId& id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) throw Error(ErrorCode::UnknownConcept, "concept '" + id + "'");
  return it->second;
}

double ConceptGraph::parent_weight_sum(std::size_t child) const {
  double sum = 0.0;
  for (const auto& link : parents_.at(child)) sum += link.weight;
  return sum;
}

void validate(const ConceptGraph& graph) {
  std::set<ConceptId> seen;
  for (const auto& id : graph.concepts()) {
    if (!seen.insert(id).second) throw Error(ErrorCode::InvalidSpec, "concept '" + id + "' declared twice");
  }
  std::set<std::pair<ConceptId, ConceptId>> edges;
  for (const auto& e : graph.edges()) {
    if (!graph.find(e.parent)) throw Error(ErrorCode::UnknownConcept, "edge parent '" + e.parent + "'");
    if (!graph.find(e.child)) throw Error(ErrorCode::UnknownConcept, "edge child '" + e.child + "'");
    if (!edges.emplace(e.parent, e.child).second) {
      throw Error(ErrorCode::DuplicateEdge, e.parent + " -> " + e.child);
    }
    if (!(e.weight >= 0.0 && e.weight <= 1.0)) {
      throw Error(ErrorCode::WeightOverflow, "edge " + e.parent + " -> " + e.child + " weight outside [0,1]");
    }
  }
  for (std::size_t c = 0; c < graph.size(); ++c) {
    const double sum = graph.parent_weight_sum(c);
    if (sum > 1.0 + kWeightSlack) {
      std::ostringstream msg;
      msg << "concept '" << graph.id(c) << "' parent weights sum to " << sum << " > 1";
      throw Error(ErrorCode::WeightOverflow, msg.str());
    }
  }
  if (!find_cycle(graph).empty()) throw_cycle(graph);
}

std::vector<std::size_t> topological_indices(const ConceptGraph& graph) {
  const std::size_t n = graph.size();
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> children(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (const auto& link : graph.parents(c)) {
      ++indegree[c];
      children[link.parent].push_back(c);
    }
  }
  // Smallest declaration index first among ready nodes.
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.insert(i);
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t node = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(node);
    for (std::size_t child : children[node]) {
      if (--indegree[child] == 0) ready.insert(child);
    }
  }
  if (order.size() != n) throw_cycle(graph);
  return order;
}

std::vector<ConceptId> topological_order(const ConceptGraph& graph) {
  std::vector<ConceptId> ids;
  for (std::size_t i : topological_indices(graph)) ids.push_back(graph.id(i));
  return ids;
}

std::vector<double> combined_mastery(const ConceptGraph& graph, std::span<const std::size_t> order,
                                     std::span<const double> raw) {
  if (raw.size() != graph.size()) {
    throw Error(ErrorCode::MissingMastery, "expected one mastery per concept");
  }
  std::vector<double> out(graph.size(), 0.0);
  for (std::size_t node : order) {
    double parent_part = 0.0;
    double weight_sum = 0.0;
    for (const auto& link : graph.parents(node)) {
      parent_part += link.weight * out[link.parent];
      weight_sum += link.weight;
    }
    const double value = parent_part + (1.0 - weight_sum) * raw[node];
    assert(value >= -1e-12 && value <= 1.0 + 1e-12);
    out[node] = std::clamp(value, 0.0, 1.0);
  }
  return out;
}

std::map<ConceptId, double> combined_mastery(const ConceptGraph& graph,
                                             const std::map<ConceptId, double>& raw) {
  std::vector<double> values(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    auto it = raw.find(graph.id(i));
    if (it == raw.end()) throw Error(ErrorCode::MissingMastery, "no mastery for '" + graph.id(i) + "'");
    if (!(it->second >= 0.0 && it->second <= 1.0)) {
      throw Error(ErrorCode::OutOfRange, "mastery of '" + graph.id(i) + "' outside [0,1]");
    }
    values[i] = it->second;
  }
  const auto order = topological_indices(graph);
  const auto combined = combined_mastery(graph, order, values);
  std::map<ConceptId, double> out;
  for (std::size_t i = 0; i < graph.size(); ++i) out.emplace(graph.id(i), combined[i]);
  return out;
}

}  // namespace simedu
