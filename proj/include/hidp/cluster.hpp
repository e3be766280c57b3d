#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hidp/errors.hpp"

namespace hidp {

enum class ProcessorKind { CPU, GPU, NPU };

inline const char* to_string(ProcessorKind k) {
  switch (k) {
    case ProcessorKind::CPU: return "CPU";
    case ProcessorKind::GPU: return "GPU";
    case ProcessorKind::NPU: return "NPU";
  }
  return "?";
}

inline ProcessorKind processor_kind_from_string(const std::string& s) {
  if (s == "CPU") return ProcessorKind::CPU;
  if (s == "GPU") return ProcessorKind::GPU;
  if (s == "NPU") return ProcessorKind::NPU;
  throw ValidationError("unknown processor kind '" + s + "'");
}

enum class NodeStatus { Available, Busy, Offline };

struct Processor {
  int id = 0;
  ProcessorKind kind = ProcessorKind::CPU;
  double frequency = 0;        // cycles/s
  double intra_node_rate = 0;  // bytes/s between this processor and node memory
  double active_power = 0;     // W
  double idle_power = 0;       // W
};

struct EdgeNode {
  int id = 0;
  std::string name;
  std::vector<Processor> processors;
  double link_rate = 0;  // bytes/s leader<->node
  NodeStatus status = NodeStatus::Available;
};

struct Cluster {
  std::vector<EdgeNode> nodes;
  double probe_timeout = 0.05;     // s
  double net_energy_per_byte = 0;  // J/B for inter-node traffic

  const EdgeNode& node(int id) const {
    for (const auto& n : nodes)
      if (n.id == id) return n;
    throw DomainError("no node with id " + std::to_string(id));
  }
};

struct AvailabilityVector {
  std::vector<int> flags;  // one 0/1 entry per node, in node order
};

/// Computation rate lambda = f / delta [flops/s].
inline double processor_rate(const Processor& p, double delta) {
  if (delta <= 0) throw DomainError("compute intensity must be > 0");
  return p.frequency / delta;
}

/// Node computation rate Lambda = sum of processor rates.
inline double node_rate(const EdgeNode& n, double delta) {
  double sum = 0;
  for (const auto& p : n.processors) sum += processor_rate(p, delta);
  return sum;
}

/// Local computation-to-communication ratios psi = [lambda_k / mu_k].
inline std::vector<double> local_ratio(const EdgeNode& n, double delta) {
  std::vector<double> psi;
  psi.reserve(n.processors.size());
  for (const auto& p : n.processors) {
    if (p.intra_node_rate <= 0) throw DomainError("intra_node_rate must be > 0");
    psi.push_back(processor_rate(p, delta) / p.intra_node_rate);
  }
  return psi;
}

/// Global computation-to-communication ratios Psi = [Lambda_j / beta_j].
inline std::vector<double> global_ratio(const Cluster& c, double delta) {
  std::vector<double> psi;
  psi.reserve(c.nodes.size());
  for (const auto& n : c.nodes) {
    if (n.link_rate <= 0) throw DomainError("link_rate must be > 0");
    psi.push_back(node_rate(n, delta) / n.link_rate);
  }
  return psi;
}

/// Availability from probe round trips: node j is available iff it replied
/// within probe_timeout (boundary inclusive) and is not administratively
/// Offline.
inline AvailabilityVector probe_availability(const Cluster& c,
                                             const std::vector<std::optional<double>>& rtts) {
  if (rtts.size() != c.nodes.size())
    throw LengthError("rtt vector has " + std::to_string(rtts.size()) + " entries for " +
                      std::to_string(c.nodes.size()) + " nodes");
  AvailabilityVector a;
  a.flags.reserve(c.nodes.size());
  for (std::size_t j = 0; j < c.nodes.size(); ++j) {
    const bool up = c.nodes[j].status != NodeStatus::Offline && rtts[j].has_value() &&
                    *rtts[j] <= c.probe_timeout;
    a.flags.push_back(up ? 1 : 0);
  }
  return a;
}

/// Parses a cluster-spec document:
/// {probe_timeout, net_energy_per_byte,
///  nodes: [{name, link_rate, processors: [{kind, frequency, intra_node_rate,
///           active_power, idle_power}]}]}
inline Cluster load_cluster_spec(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cluster spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].empty())
    throw ParseError("cluster spec needs a non-empty 'nodes' array");

  Cluster c;
  c.net_energy_per_byte = j.value("net_energy_per_byte", 0.0);
  if (c.net_energy_per_byte < 0) throw ValidationError("net_energy_per_byte must be >= 0");

  std::set<std::string> names;
  int node_id = 0;
  for (const auto& jn : j["nodes"]) {
    EdgeNode n;
    n.id = node_id++;
    n.name = jn.value("name", "node-" + std::to_string(n.id));
    if (!names.insert(n.name).second)
      throw ValidationError("duplicate node name '" + n.name + "'");
    if (!jn.contains("link_rate")) throw ParseError("node '" + n.name + "' missing link_rate");
    n.link_rate = jn["link_rate"].get<double>();
    if (n.link_rate <= 0) throw ValidationError("link_rate must be > 0");
    if (jn.contains("status")) {
      const std::string s = jn["status"].get<std::string>();
      if (s == "Available") n.status = NodeStatus::Available;
      else if (s == "Busy") n.status = NodeStatus::Busy;
      else if (s == "Offline") n.status = NodeStatus::Offline;
      else throw ValidationError("unknown node status '" + s + "'");
    }
    if (!jn.contains("processors") || !jn["processors"].is_array() || jn["processors"].empty())
      throw ValidationError("node '" + n.name + "' needs at least one processor");
    int proc_id = 0;
    for (const auto& jp : jn["processors"]) {
      Processor p;
      p.id = proc_id++;
      if (!jp.contains("kind")) throw ParseError("processor missing 'kind'");
      p.kind = processor_kind_from_string(jp["kind"].get<std::string>());
      p.frequency = jp.value("frequency", 0.0);
      p.intra_node_rate = jp.value("intra_node_rate", 0.0);
      p.active_power = jp.value("active_power", 0.0);
      p.idle_power = jp.value("idle_power", 0.0);
      if (p.frequency <= 0) throw ValidationError("processor frequency must be > 0");
      if (p.intra_node_rate <= 0) throw ValidationError("intra_node_rate must be > 0");
      if (p.active_power < p.idle_power || p.idle_power < 0)
        throw ValidationError("need active_power >= idle_power >= 0");
      n.processors.push_back(p);
    }
    c.nodes.push_back(std::move(n));
  }

  if (j.contains("probe_timeout")) {
    c.probe_timeout = j["probe_timeout"].get<double>();
    if (c.probe_timeout <= 0) throw ValidationError("probe_timeout must be > 0");
  } else {
    // Default: 3x the mean probe round trip over the cluster (11-byte probe
    // frame both ways).
    double mean = 0;
    for (const auto& n : c.nodes) mean += 2.0 * 11.0 / n.link_rate;
    c.probe_timeout = 3.0 * mean / double(c.nodes.size());
  }
  return c;
}

inline Cluster load_cluster_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cluster spec '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_cluster_spec(ss.str());
}

}  // namespace hidp
