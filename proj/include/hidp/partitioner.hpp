#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hidp/cluster.hpp"
#include "hidp/cost_model.hpp"
#include "hidp/dnn_model.hpp"
#include "hidp/errors.hpp"

namespace hidp {

enum class PlanMode { Model, Data };

inline const char* to_string(PlanMode m) { return m == PlanMode::Model ? "Model" : "Data"; }

/// Output of one partitioning search at one tier. Exactly the member named
/// by `mode` is populated; predicted_latency is the cost-model value of that
/// plan under the context it was searched with.
struct PartitionPlan {
  PlanMode mode = PlanMode::Model;
  std::vector<BlockAssignment> model_blocks;
  DataSplit data_split;
  double predicted_latency = 0;

  /// Resources the plan touches, in plan order.
  std::vector<int> plan_targets() const {
    std::vector<int> out;
    if (mode == PlanMode::Model)
      for (const auto& b : model_blocks) out.push_back(b.target);
    else
      out = data_split.targets;
    return out;
  }
};

/// Two-tier plan: the global node-level plan plus one processor-level plan
/// per participating node. refined_latency re-evaluates the global structure
/// with every node's compute term replaced by its local plan's latency.
struct HierPlan {
  int leader = 0;
  PartitionPlan global;
  std::map<int, PartitionPlan> locals;  // node id -> processor-level plan
  double refined_latency = 0;
};

/// Global-tier rate context: available nodes ordered by descending
/// computation-to-communication ratio Psi, hub = leader.
inline RateContext global_context(const Cluster& c, const AvailabilityVector& avail, double delta,
                                  int leader) {
  if (avail.flags.size() != c.nodes.size())
    throw LengthError("availability vector does not match cluster size");
  RateContext ctx;
  ctx.hub_id = leader;
  for (std::size_t j = 0; j < c.nodes.size(); ++j) {
    if (!avail.flags[j]) continue;
    const EdgeNode& n = c.nodes[j];
    ctx.targets.push_back({n.id, node_rate(n, delta), n.link_rate});
  }
  std::stable_sort(ctx.targets.begin(), ctx.targets.end(), [](const auto& a, const auto& b) {
    return a.rate / a.link > b.rate / b.link;
  });
  return ctx;
}

/// Local-tier rate context: one node's processors ordered by descending psi,
/// hub external (node memory holds the data).
inline RateContext local_context(const EdgeNode& n, double delta) {
  RateContext ctx;
  ctx.hub_id = RateContext::kExternalHub;
  for (const auto& p : n.processors)
    ctx.targets.push_back({p.id, processor_rate(p, delta), p.intra_node_rate});
  std::stable_sort(ctx.targets.begin(), ctx.targets.end(), [](const auto& a, const auto& b) {
    return a.rate / a.link > b.rate / b.link;
  });
  return ctx;
}

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Dynamic program over cut points and an ordered subset of targets.
/// block_cost(j, a, b) prices view-local layers [a, b) on target index j;
/// transfers ride the context's star topology. Returns the reconstructed
/// blocks and the objective.
template <typename BlockCost>
std::pair<std::vector<BlockAssignment>, double> dp_blocks(const CostView& view,
                                                          const RateContext& ctx,
                                                          BlockCost&& block_cost) {
  const int n = view.layer_count();
  const int m = int(ctx.targets.size());
  if (m == 0) throw NoTargetError("no available targets");

  std::vector<std::vector<double>> d(std::size_t(n) + 1, std::vector<double>(std::size_t(m), kInf));
  struct Par {
    int c = 0;  // 0 = single block from the start
    int jp = -1;
  };
  std::vector<std::vector<Par>> par(std::size_t(n) + 1, std::vector<Par>(std::size_t(m)));

  for (int i = 1; i <= n; ++i) {
    for (int j = 0; j < m; ++j) {
      double best = ctx.from_hub_seconds(view.input_bytes, ctx.targets[std::size_t(j)].id) +
                    block_cost(j, 0, i);
      Par best_par;
      for (int c = 1; c < i; ++c) {
        const double tail = block_cost(j, c, i);
        const double cut = view.cut_bytes(view.lo() + c - 1);
        for (int jp = 0; jp < j; ++jp) {
          const double prev = d[std::size_t(c)][std::size_t(jp)];
          if (!(prev < kInf)) continue;
          const double cand = prev +
                              ctx.transfer_seconds(cut, ctx.targets[std::size_t(jp)].id,
                                                   ctx.targets[std::size_t(j)].id) +
                              tail;
          if (cand < best) {
            best = cand;
            best_par = Par{c, jp};
          }
        }
      }
      d[std::size_t(i)][std::size_t(j)] = best;
      par[std::size_t(i)][std::size_t(j)] = best_par;
    }
  }

  double best = kInf;
  int best_j = -1;
  for (int j = 0; j < m; ++j) {
    const double cand = d[std::size_t(n)][std::size_t(j)] +
                        ctx.to_hub_seconds(view.output_bytes(), ctx.targets[std::size_t(j)].id);
    if (cand < best) {
      best = cand;
      best_j = j;
    }
  }

  std::vector<BlockAssignment> blocks;
  int i = n, j = best_j;
  while (i > 0) {
    const Par p = par[std::size_t(i)][std::size_t(j)];
    blocks.push_back({view.lo() + p.c, view.lo() + i, ctx.targets[std::size_t(j)].id});
    i = p.c;
    j = p.jp;
  }
  std::reverse(blocks.begin(), blocks.end());
  return {std::move(blocks), best};
}

/// Rate-proportional data split over the sigma highest-rate targets.
inline DataSplit proportional_split(const RateContext& ctx, int sigma) {
  std::vector<CostResource> by_rate = ctx.targets;
  std::stable_sort(by_rate.begin(), by_rate.end(),
                   [](const auto& a, const auto& b) { return a.rate > b.rate; });
  DataSplit split;
  double total = 0;
  for (int p = 0; p < sigma; ++p) total += by_rate[std::size_t(p)].rate;
  for (int p = 0; p < sigma; ++p) {
    split.targets.push_back(by_rate[std::size_t(p)].id);
    split.shares.push_back(by_rate[std::size_t(p)].rate / total);
  }
  return split;
}

}  // namespace detail

/// Optimal model-mode partition: minimizes model_plan_latency over all
/// assignments of contiguous ordered blocks to an ordered subset of the
/// given targets.
inline PartitionPlan dp_model_partition(const CostView& view, const RateContext& ctx) {
  auto [blocks, latency] = detail::dp_blocks(view, ctx, [&](int j, int a, int b) {
    return view.flops(view.lo() + a, view.lo() + b) / ctx.rate(ctx.targets[std::size_t(j)].id);
  });
  PartitionPlan plan;
  plan.mode = PlanMode::Model;
  plan.model_blocks = std::move(blocks);
  plan.predicted_latency = latency;
  return plan;
}

inline PartitionPlan dp_model_partition(const DnnModel& m, const RateContext& ctx) {
  return dp_model_partition(CostView::from(Workload::full(m)), ctx);
}

/// Best data-mode partition: enumerates sigma = 1..|targets| with
/// rate-proportional shares over the sigma highest-rate targets.
inline PartitionPlan best_data_partition(const CostView& view, const RateContext& ctx) {
  if (ctx.targets.empty()) throw NoTargetError("no available targets");
  PartitionPlan plan;
  plan.mode = PlanMode::Data;
  plan.predicted_latency = detail::kInf;
  for (int sigma = 1; sigma <= int(ctx.targets.size()); ++sigma) {
    DataSplit split = detail::proportional_split(ctx, sigma);
    const double latency = data_plan_latency(split, view, ctx);
    if (latency < plan.predicted_latency) {
      plan.predicted_latency = latency;
      plan.data_split = std::move(split);
    }
  }
  return plan;
}

inline PartitionPlan best_data_partition(const DnnModel& m, const RateContext& ctx) {
  return best_data_partition(CostView::from(Workload::full(m)), ctx);
}

/// Runs both searches and keeps the faster plan; ties go to Data.
inline PartitionPlan select_mode(const CostView& view, const RateContext& ctx) {
  PartitionPlan model = dp_model_partition(view, ctx);
  PartitionPlan data = best_data_partition(view, ctx);
  if (data.predicted_latency <= model.predicted_latency) return data;
  return model;
}

inline PartitionPlan select_mode(const DnnModel& m, const RateContext& ctx) {
  return select_mode(CostView::from(Workload::full(m)), ctx);
}

/// Exhaustive oracle for the same search spaces. Guarded against blow-up.
inline PartitionPlan brute_force_partition(const CostView& view, const RateContext& ctx,
                                           PlanMode mode) {
  const int n = view.layer_count();
  const int m = int(ctx.targets.size());
  if (n > 12 || m > 4)
    throw SizeError("brute force limited to 12 layers / 4 targets, got " + std::to_string(n) +
                    "/" + std::to_string(m));
  if (m == 0) throw NoTargetError("no available targets");

  PartitionPlan best;
  best.mode = mode;
  best.predicted_latency = detail::kInf;

  if (mode == PlanMode::Data) {
    for (int sigma = 1; sigma <= m; ++sigma) {
      DataSplit split = detail::proportional_split(ctx, sigma);
      const double latency = data_plan_latency(split, view, ctx);
      if (latency < best.predicted_latency) {
        best.predicted_latency = latency;
        best.data_split = std::move(split);
      }
    }
    return best;
  }

  // Model mode: every block count B, every increasing choice of B targets,
  // every placement of B-1 cuts.
  std::vector<int> targets_idx, cuts;
  auto eval = [&]() {
    std::vector<BlockAssignment> blocks;
    int lo = view.lo();
    for (std::size_t b = 0; b < targets_idx.size(); ++b) {
      const int hi = b + 1 < targets_idx.size() ? cuts[b] : view.hi();
      blocks.push_back({lo, hi, ctx.targets[std::size_t(targets_idx[b])].id});
      lo = hi;
    }
    const double latency = model_plan_latency(blocks, view, ctx);
    if (latency < best.predicted_latency) {
      best.predicted_latency = latency;
      best.model_blocks = std::move(blocks);
    }
  };
  auto enum_cuts = [&](auto&& self, int pos, int prev) -> void {
    if (pos == int(targets_idx.size()) - 1) {
      eval();
      return;
    }
    for (int c = prev + 1; c <= view.hi() - (int(targets_idx.size()) - 1 - pos); ++c) {
      cuts[std::size_t(pos)] = c;
      self(self, pos + 1, c);
    }
  };
  auto enum_targets = [&](auto&& self, int next, int want) -> void {
    if (want == 0) {
      cuts.assign(targets_idx.size(), 0);
      enum_cuts(enum_cuts, 0, view.lo());
      return;
    }
    for (int j = next; j <= m - want; ++j) {
      targets_idx.push_back(j);
      self(self, j + 1, want - 1);
      targets_idx.pop_back();
    }
  };
  for (int b = 1; b <= std::min(n, m); ++b) enum_targets(enum_targets, 0, b);
  return best;
}

inline PartitionPlan brute_force_partition(const DnnModel& m, const RateContext& ctx,
                                           PlanMode mode) {
  return brute_force_partition(CostView::from(Workload::full(m)), ctx, mode);
}

/// Processor-level plan that runs the whole workload on one processor.
inline PartitionPlan single_processor_plan(const CostView& view, const RateContext& local_ctx,
                                           int proc_id) {
  PartitionPlan plan;
  plan.mode = PlanMode::Model;
  plan.model_blocks = {{view.lo(), view.hi(), proc_id}};
  plan.predicted_latency = model_plan_latency(plan.model_blocks, view, local_ctx);
  return plan;
}

/// Highest-rate target id in a context (ties to the lowest id).
inline int fastest_target(const RateContext& ctx) {
  if (ctx.targets.empty()) throw NoTargetError("no available targets");
  int best = ctx.targets.front().id;
  double best_rate = ctx.targets.front().rate;
  for (const auto& t : ctx.targets)
    if (t.rate > best_rate || (t.rate == best_rate && t.id < best)) {
      best = t.id;
      best_rate = t.rate;
    }
  return best;
}

namespace detail {

/// Workload a node receives under a global plan: a layer block (model mode)
/// or a spatial share of the whole chain (data mode).
inline Workload node_workload(const DnnModel& m, const PartitionPlan& global, int node) {
  if (global.mode == PlanMode::Model) {
    for (const auto& b : global.model_blocks)
      if (b.target == node) return Workload{&m, b.lo, b.hi, 1.0};
  } else {
    for (int p = 0; p < global.data_split.sigma(); ++p)
      if (global.data_split.targets[std::size_t(p)] == node)
        return Workload::full(m, global.data_split.shares[std::size_t(p)]);
  }
  throw DomainError("node " + std::to_string(node) + " is not part of the global plan");
}

/// Global latency with each node's compute term replaced by its local plan's
/// latency. Term order mirrors the simulator's event accumulation.
inline double refined_eval(const PartitionPlan& global, const std::map<int, PartitionPlan>& locals,
                           const CostView& view, const RateContext& gctx) {
  if (global.mode == PlanMode::Model) {
    const auto& blocks = global.model_blocks;
    double t = gctx.from_hub_seconds(view.input_bytes, blocks.front().target);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      t += locals.at(blocks[i].target).predicted_latency;
      if (i + 1 < blocks.size())
        t += gctx.transfer_seconds(view.cut_bytes(blocks[i].hi - 1), blocks[i].target,
                                   blocks[i + 1].target);
    }
    t += gctx.to_hub_seconds(view.output_bytes(), blocks.back().target);
    return t;
  }
  const DataSplit& split = global.data_split;
  const double halo = view.halo_per_boundary();
  double worst = 0;
  for (int p = 0; p < split.sigma(); ++p) {
    const int node = split.targets[std::size_t(p)];
    const double share = split.shares[std::size_t(p)];
    const double pb = gctx.per_byte(node);
    double t = share * view.input_bytes * pb;
    t += double(adjacent_boundaries(p, split.sigma())) * halo * pb;
    t += locals.at(node).predicted_latency;
    t += share * view.output_bytes() * pb;
    worst = std::max(worst, t);
  }
  return worst;
}

/// Cheap bound on a node's locally-refined cost for one block: the better of
/// the best single-processor run and the best rate-proportional local data
/// split. Never below what full local select_mode achieves.
struct LocalCostTable {
  std::vector<CostResource> procs;  // sorted by rate desc
  RateContext ctx;                  // full local context (psi-ordered)

  explicit LocalCostTable(const EdgeNode& n, double delta) : ctx(local_context(n, delta)) {
    procs = ctx.targets;
    std::stable_sort(procs.begin(), procs.end(),
                     [](const auto& a, const auto& b) { return a.rate > b.rate; });
  }

  double block_cost(const CostView& view, int a, int b) const {
    const double flops = view.flops(a, b);
    const double in_b = a == view.lo() ? view.input_bytes : view.cut_bytes(a - 1);
    const double out_b = view.cut_bytes(b - 1);
    const double halo = view.halo_per_boundary(a, b);

    double best = kInf;
    for (const auto& p : procs)
      best = std::min(best, (in_b + out_b) / p.link + flops / p.rate);

    double rate_sum = 0;
    for (int sigma = 1; sigma <= int(procs.size()); ++sigma) {
      rate_sum += procs[std::size_t(sigma) - 1].rate;
      double worst = 0;
      for (int q = 0; q < sigma; ++q) {
        const auto& p = procs[std::size_t(q)];
        const double share = p.rate / rate_sum;
        double t = share * (in_b + out_b) / p.link;
        t += double(adjacent_boundaries(q, sigma)) * halo / p.link;
        t += share * flops / p.rate;
        worst = std::max(worst, t);
      }
      best = std::min(best, worst);
    }
    return best;
  }
};

}  // namespace detail

/// Evaluates a hierarchical plan's end-to-end latency from its parts.
inline double refined_hier_latency(const HierPlan& h, const DnnModel& m,
                                   const RateContext& gctx) {
  return detail::refined_eval(h.global, h.locals, CostView::from(Workload::full(m)), gctx);
}

/// Two-tier search. Global candidates: the model-mode DP (scored with a
/// local-cost bound per block), every rate-proportional data split, and
/// single-node plans for the leader and each available node. Every candidate
/// is refined by running select_mode over each participating node's
/// processors on its sub-workload; the plan with the lowest refined latency
/// wins, ties toward Data.
inline HierPlan hierarchical_partition(const DnnModel& m, const Cluster& c,
                                       const AvailabilityVector& avail, int leader) {
  const double delta = m.compute_intensity();
  if (leader < 0 || std::size_t(leader) >= c.nodes.size() || !avail.flags[std::size_t(leader)])
    throw NoTargetError("leader node is not available");
  const RateContext gctx = global_context(c, avail, delta, leader);
  if (gctx.targets.empty()) throw NoTargetError("no available nodes");

  const CostView view = CostView::from(Workload::full(m));

  std::map<int, detail::LocalCostTable> tables;
  for (const auto& t : gctx.targets) tables.emplace(t.id, detail::LocalCostTable(c.node(t.id), delta));

  auto refine = [&](const PartitionPlan& global) {
    HierPlan h;
    h.leader = leader;
    h.global = global;
    for (int node : global.plan_targets()) {
      const Workload w = detail::node_workload(m, global, node);
      h.locals.emplace(node, select_mode(CostView::from(w), tables.at(node).ctx));
    }
    h.refined_latency = detail::refined_eval(h.global, h.locals, view, gctx);
    return h;
  };

  std::optional<HierPlan> best;
  auto consider = [&](HierPlan&& cand) {
    if (!best || cand.refined_latency < best->refined_latency) best = std::move(cand);
  };

  // Data candidates first so the final tie goes to Data.
  for (int sigma = 1; sigma <= int(gctx.targets.size()); ++sigma) {
    PartitionPlan global;
    global.mode = PlanMode::Data;
    global.data_split = detail::proportional_split(gctx, sigma);
    global.predicted_latency = data_plan_latency(global.data_split, view, gctx);
    consider(refine(global));
  }
  for (const auto& t : gctx.targets) {
    PartitionPlan global;
    global.mode = PlanMode::Data;
    global.data_split = DataSplit{{1.0}, {t.id}};
    global.predicted_latency = data_plan_latency(global.data_split, view, gctx);
    consider(refine(global));
  }

  auto [blocks, scored] = detail::dp_blocks(view, gctx, [&](int j, int a, int b) {
    return tables.at(gctx.targets[std::size_t(j)].id)
        .block_cost(view, view.lo() + a, view.lo() + b);
  });
  (void)scored;
  PartitionPlan model_global;
  model_global.mode = PlanMode::Model;
  model_global.model_blocks = std::move(blocks);
  model_global.predicted_latency = model_plan_latency(model_global.model_blocks, view, gctx);
  consider(refine(model_global));

  return *best;
}

}  // namespace hidp
