// Copyright 2026 The GridPilot Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GRIDPILOT_ROUTE_HPP_
#define GRIDPILOT_ROUTE_HPP_

#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "gridpilot/core.hpp"

namespace gridpilot {

struct TopologyError : Error {
  using Error::Error;
};
struct NoRoute : Error {
  using Error::Error;
};

using NodeId = std::uint64_t;

struct RoadNode {
  NodeId id = 0;
  double x = 0.0;
  double y = 0.0;
};

struct RoadEdge {
  NodeId from = 0;
  NodeId to = 0;
  double length = 0.0;       // meters
  double speed_limit = 1.0;  // m/s
  bool lane_change_allowed = false;
  std::uint64_t lane_id = 0;
};

enum class RouteMetric { kDistance, kTravelTime };

/// First-planning output: an ordered lane-node path with per-segment speed
/// limits. total_cost is always the travel time of the path in seconds.
struct RoutePath {
  std::vector<NodeId> nodes;
  std::vector<double> speed_limits;  // per segment
  std::vector<double> lengths;       // per segment
  double total_cost = 0.0;           // seconds
  double metric_cost = 0.0;          // cost under the requested metric
};

/// Directed lane-based road network. Immutable once loaded; all queries are
/// pure.
class RoadNetwork {
 public:
  void add_node(const RoadNode& node) { nodes_[node.id] = node; }

  void add_edge(const RoadEdge& edge) {
    const RoadNode* a = find_node(edge.from);
    const RoadNode* b = find_node(edge.to);
    if (a == nullptr) {
      throw TopologyError("edge references missing node " +
                          std::to_string(edge.from));
    }
    if (b == nullptr) {
      throw TopologyError("edge references missing node " +
                          std::to_string(edge.to));
    }
    const double straight = std::hypot(a->x - b->x, a->y - b->y);
    if (edge.length < straight - 1e-6) {
      throw FormatError("edge " + std::to_string(edge.from) + "->" +
                        std::to_string(edge.to) +
                        " is shorter than the node distance");
    }
    if (!(edge.speed_limit > 0.0)) {
      throw FormatError("edge " + std::to_string(edge.from) + "->" +
                        std::to_string(edge.to) +
                        " has a non-positive speed limit");
    }
    adjacency_[edge.from].push_back(edge);
  }

  const RoadNode* find_node(NodeId id) const {
    const auto it = nodes_.find(id);
    return it == nodes_.end() ? nullptr : &it->second;
  }

  const std::map<NodeId, RoadNode>& nodes() const { return nodes_; }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& [id, edges] : adjacency_) {
      n += edges.size();
    }
    return n;
  }

  const std::vector<RoadEdge>& edges_from(NodeId id) const {
    static const std::vector<RoadEdge> kEmpty;
    const auto it = adjacency_.find(id);
    return it == adjacency_.end() ? kEmpty : it->second;
  }

  bool empty() const { return nodes_.empty(); }

 private:
  std::map<NodeId, RoadNode> nodes_;
  std::map<NodeId, std::vector<RoadEdge>> adjacency_;
};

/// Parses the network file: a NODES section of `id x y` lines and an EDGES
/// section of `from to length speed_limit lane_change lane_id` lines, with
/// '#' comments. Dangling edge references are rejected.
inline RoadNetwork load_network(std::istream& in, const std::string& name) {
  RoadNetwork net;
  std::string line;
  int line_no = 0;
  enum class Section { kNone, kNodes, kEdges } section = Section::kNone;
  std::vector<std::pair<int, RoadEdge>> pending_edges;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream tokens(line);
    std::string first;
    if (!(tokens >> first)) {
      continue;
    }
    if (first == "NODES") {
      section = Section::kNodes;
      continue;
    }
    if (first == "EDGES") {
      section = Section::kEdges;
      continue;
    }
    auto fail = [&](const std::string& what) {
      return FormatError(name + ":" + std::to_string(line_no) + ": " + what);
    };
    if (section == Section::kNodes) {
      RoadNode node;
      std::istringstream fields(line);
      if (!(fields >> node.id >> node.x >> node.y)) {
        throw fail("expected `id x y`");
      }
      net.add_node(node);
    } else if (section == Section::kEdges) {
      RoadEdge edge;
      int lane_change = 0;
      std::istringstream fields(line);
      if (!(fields >> edge.from >> edge.to >> edge.length >>
            edge.speed_limit >> lane_change >> edge.lane_id)) {
        throw fail("expected `from to length speed_limit lane_change lane_id`");
      }
      edge.lane_change_allowed = lane_change != 0;
      pending_edges.emplace_back(line_no, edge);
    } else {
      throw fail("content before a NODES/EDGES section header");
    }
  }
  for (const auto& [edge_line, edge] : pending_edges) {
    try {
      net.add_edge(edge);
    } catch (const FormatError& e) {
      throw FormatError(name + ":" + std::to_string(edge_line) + ": " +
                        e.what());
    }
  }
  return net;
}

inline RoadNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open network file " + path);
  }
  return load_network(in, path);
}

/// Cost-minimal path under the metric; travel time divides each edge length
/// by its speed limit. Ties between equal-cost paths break toward the
/// smaller next-node id.
inline RoutePath shortest_path(const RoadNetwork& net, NodeId start,
                               NodeId goal, RouteMetric metric) {
  if (net.find_node(start) == nullptr) {
    throw NoRoute("shortest_path: unknown start node " + std::to_string(start));
  }
  if (net.find_node(goal) == nullptr) {
    throw NoRoute("shortest_path: unknown goal node " + std::to_string(goal));
  }

  const auto edge_cost = [metric](const RoadEdge& e) {
    return metric == RouteMetric::kDistance ? e.length
                                            : e.length / e.speed_limit;
  };

  std::map<NodeId, double> dist;
  std::map<NodeId, NodeId> parent;
  std::map<NodeId, const RoadEdge*> parent_edge;
  using QueueItem = std::pair<double, NodeId>;
  std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> open;
  dist[start] = 0.0;
  open.push({0.0, start});
  while (!open.empty()) {
    const auto [cost, node] = open.top();
    open.pop();
    const auto it = dist.find(node);
    if (it != dist.end() && cost > it->second) {
      continue;  // stale queue entry
    }
    if (node == goal) {
      break;
    }
    for (const RoadEdge& edge : net.edges_from(node)) {
      const double next_cost = cost + edge_cost(edge);
      const auto found = dist.find(edge.to);
      const bool improves = found == dist.end() || next_cost < found->second;
      const bool ties_lower =
          found != dist.end() && next_cost == found->second &&
          parent.count(edge.to) != 0 && node < parent[edge.to];
      if (improves || ties_lower) {
        dist[edge.to] = next_cost;
        parent[edge.to] = node;
        parent_edge[edge.to] = &edge;
        open.push({next_cost, edge.to});
      }
    }
  }

  if (dist.find(goal) == dist.end()) {
    throw NoRoute("shortest_path: goal " + std::to_string(goal) +
                  " unreachable from " + std::to_string(start));
  }

  RoutePath path;
  path.metric_cost = dist[goal];
  for (NodeId node = goal; node != start; node = parent[node]) {
    path.nodes.push_back(node);
    const RoadEdge* edge = parent_edge[node];
    path.speed_limits.push_back(edge->speed_limit);
    path.lengths.push_back(edge->length);
  }
  path.nodes.push_back(start);
  std::reverse(path.nodes.begin(), path.nodes.end());
  std::reverse(path.speed_limits.begin(), path.speed_limits.end());
  std::reverse(path.lengths.begin(), path.lengths.end());
  path.total_cost = 0.0;
  for (std::size_t i = 0; i < path.lengths.size(); ++i) {
    path.total_cost += path.lengths[i] / path.speed_limits[i];
  }
  return path;
}

/// Node minimizing the Euclidean distance to the point; ties break toward
/// the smaller id.
inline NodeId nearest_node(const RoadNetwork& net, Vec2 point) {
  if (net.empty()) {
    throw NoRoute("nearest_node: empty network");
  }
  NodeId best = 0;
  double best_dist = kInfinity;
  for (const auto& [id, node] : net.nodes()) {
    const double d = std::hypot(node.x - point.x, node.y - point.y);
    if (d < best_dist) {
      best_dist = d;
      best = id;
    }
  }
  return best;
}

}  // namespace gridpilot

#endif  // GRIDPILOT_ROUTE_HPP_
