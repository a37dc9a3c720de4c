#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace simedu {

using ConceptId = std::string;

struct Edge {
  ConceptId parent;
  ConceptId child;
  double weight = 0.0;
};

struct ParentLink {
  std::size_t parent = 0;
  double weight = 0.0;
};

/// Weighted concept DAG. Construction only indexes the declaration; call
/// validate() before relying on the acyclicity or weight invariants.
class ConceptGraph {
 public:
  ConceptGraph() = default;
  ConceptGraph(std::vector<ConceptId> concepts, std::vector<Edge> edges);

  const std::vector<ConceptId>& concepts() const noexcept { return concepts_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t size() const noexcept { return concepts_.size(); }

  std::optional<std::size_t> find(const ConceptId& id) const;
  /// Throws UnknownConcept.
  std::size_t index(const ConceptId& id) const;
  const ConceptId& id(std::size_t index) const { return concepts_.at(index); }

  /// Parent links of a concept; empty for concepts referenced by unknown edges.
  const std::vector<ParentLink>& parents(std::size_t child) const { return parents_.at(child); }
  double parent_weight_sum(std::size_t child) const;

 private:
  std::vector<ConceptId> concepts_;
  std::vector<Edge> edges_;
  std::map<ConceptId, std::size_t> lookup_;
  std::vector<std::vector<ParentLink>> parents_;
};

/// Throws CycleDetected, WeightOverflow, UnknownConcept or DuplicateEdge.
void validate(const ConceptGraph& graph);

/// Kahn's algorithm with declaration-order tie-breaking. Throws CycleDetected.
std::vector<std::size_t> topological_indices(const ConceptGraph& graph);
std::vector<ConceptId> topological_order(const ConceptGraph& graph);

/// C'_g = sum_p w_pg C'_p + (1 - sum_p w_pg) C_g, evaluated in topological order.
std::map<ConceptId, double> combined_mastery(const ConceptGraph& graph,
                                             const std::map<ConceptId, double>& raw);

/// Index-based variant for the simulator's hot path. `order` must be a valid
/// topological order and `raw` is indexed like graph.concepts().
std::vector<double> combined_mastery(const ConceptGraph& graph, std::span<const std::size_t> order,
                                     std::span<const double> raw);

}  // namespace simedu
