#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hidp/cluster.hpp"
#include "hidp/dnn_model.hpp"
#include "hidp/errors.hpp"

namespace hidp {

/// A contiguous slice of a model, optionally scaled by a spatial share
/// (data-partitioned workloads carry share < 1). Flop and byte costs scale
/// linearly with the share; halo bytes per split boundary do not.
struct Workload {
  const DnnModel* model = nullptr;
  int lo = 0;
  int hi = 0;
  double share = 1.0;

  static Workload full(const DnnModel& m, double share = 1.0) {
    return Workload{&m, 0, m.layer_count(), share};
  }
  Workload slice(int new_lo, int new_hi) const { return Workload{model, new_lo, new_hi, share}; }
  Workload scaled(double s) const { return Workload{model, lo, hi, share * s}; }
  int layer_count() const { return hi - lo; }
};

/// Share-scaled cost table for a workload: everything the latency formulas
/// need, independent of how the workload was produced. `base` maps local
/// layer index 0 back to the model's layer numbering.
struct CostView {
  int base = 0;
  double input_bytes = 0;
  std::vector<double> prefix_flops;     // n+1 entries
  std::vector<double> boundary_bytes;   // after local layer i; [n-1] is the output
  std::vector<double> prefix_halo;      // n+1 entries, unscaled by share

  static CostView from(const Workload& w) {
    CostView v;
    const int n = w.layer_count();
    if (n <= 0) throw RangeError("empty workload");
    v.base = w.lo;
    const std::uint64_t in_b =
        w.lo == 0 ? w.model->input_bytes() : w.model->boundary_bytes(w.lo - 1);
    v.input_bytes = w.share * double(in_b);
    v.prefix_flops.assign(std::size_t(n) + 1, 0.0);
    v.prefix_halo.assign(std::size_t(n) + 1, 0.0);
    v.boundary_bytes.assign(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) {
      v.prefix_flops[std::size_t(i) + 1] =
          v.prefix_flops[std::size_t(i)] + w.share * double(w.model->flops(w.lo + i));
      v.boundary_bytes[std::size_t(i)] = w.share * double(w.model->boundary_bytes(w.lo + i));
      const Layer& l = w.model->layers()[std::size_t(w.lo + i)];
      double halo = 0;
      if (l.spatial() && l.kernel > 1)
        halo = double(l.kernel - 1) * double(w.model->in_shape(w.lo + i).width) *
               double(l.in_channels) * double(w.model->in_shape(w.lo + i).elem_bytes);
      v.prefix_halo[std::size_t(i) + 1] = v.prefix_halo[std::size_t(i)] + halo;
    }
    return v;
  }

  /// Direct construction for tests and hand-built instances.
  static CostView synthetic(double input_bytes, std::vector<double> layer_flops,
                            std::vector<double> boundary, std::vector<double> halo_per_layer) {
    CostView v;
    const std::size_t n = layer_flops.size();
    if (n == 0 || boundary.size() != n || halo_per_layer.size() != n)
      throw RangeError("synthetic cost view arrays must share one non-zero length");
    v.input_bytes = input_bytes;
    v.boundary_bytes = std::move(boundary);
    v.prefix_flops.assign(n + 1, 0.0);
    v.prefix_halo.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      v.prefix_flops[i + 1] = v.prefix_flops[i] + layer_flops[i];
      v.prefix_halo[i + 1] = v.prefix_halo[i] + halo_per_layer[i];
    }
    return v;
  }

  int layer_count() const { return int(boundary_bytes.size()); }
  int lo() const { return base; }
  int hi() const { return base + layer_count(); }

  /// Flops over model-layer range [a, b).
  double flops(int a, int b) const {
    check(a, b);
    return prefix_flops[std::size_t(b - base)] - prefix_flops[std::size_t(a - base)];
  }
  double total_flops() const { return prefix_flops.back(); }
  /// Bytes crossing the cut after model layer i (lo() <= i < hi()-1).
  double cut_bytes(int i) const { return boundary_bytes.at(std::size_t(i - base)); }
  double output_bytes() const { return boundary_bytes.back(); }
  double halo_per_boundary(int a, int b) const {
    check(a, b);
    return prefix_halo[std::size_t(b - base)] - prefix_halo[std::size_t(a - base)];
  }
  double halo_per_boundary() const { return prefix_halo.back(); }

private:
  void check(int a, int b) const {
    if (a < base || b > hi() || a >= b)
      throw RangeError("bad layer range [" + std::to_string(a) + "," + std::to_string(b) + ")");
  }
};

/// One schedulable resource as the cost model sees it: a node (rate = Lambda,
/// link = beta) at the global tier or a processor (rate = lambda, link = mu)
/// at the local tier.
struct CostResource {
  int id = 0;
  double rate = 0;  // flops/s
  double link = 0;  // bytes/s
};

/// Ordered resource set plus the star-topology hub. hub_id is the resource
/// co-located with the data origin: the leader node at the global tier. At
/// the local tier the origin is node memory, which is no processor, so
/// hub_id stays kExternalHub and every processor pays its own link on both
/// ends of a transfer.
struct RateContext {
  static constexpr int kExternalHub = -1;

  std::vector<CostResource> targets;
  int hub_id = kExternalHub;

  const CostResource* find(int id) const {
    for (const auto& t : targets)
      if (t.id == id) return &t;
    return nullptr;
  }
  const CostResource& at(int id) const {
    const CostResource* t = find(id);
    if (!t) throw AvailabilityError("resource " + std::to_string(id) + " is not available");
    return *t;
  }
  double rate(int id) const {
    const CostResource& t = at(id);
    if (t.rate <= 0) throw DomainError("resource rate must be > 0");
    return t.rate;
  }
  /// Seconds per byte between this resource and the hub.
  double per_byte(int id) const {
    const CostResource& t = at(id);
    if (t.id == hub_id) return 0.0;
    if (t.link <= 0) throw DomainError("resource link must be > 0");
    return 1.0 / t.link;
  }

  /// Transfer seconds for `bytes` between two endpoints, star-routed through
  /// the hub: each non-hub endpoint pays its own link; self-transfers are
  /// free. kExternalHub stands for the data origin itself.
  double transfer_seconds(double bytes, int from, int to) const {
    if (from == to) return 0.0;
    double s = 0.0;
    if (from != kExternalHub) s += bytes * per_byte(from);
    if (to != kExternalHub) s += bytes * per_byte(to);
    return s;
  }
  /// Transfer from the data origin (leader node or node memory) to `to`.
  double from_hub_seconds(double bytes, int to) const {
    return transfer_seconds(bytes, hub_id, to);
  }
  double to_hub_seconds(double bytes, int from) const {
    return transfer_seconds(bytes, from, hub_id);
  }
};

/// A contiguous layer block [lo, hi) assigned to one resource.
struct BlockAssignment {
  int lo = 0;
  int hi = 0;
  int target = 0;
};

/// A spatial split into sigma parallel submodels.
struct DataSplit {
  std::vector<double> shares;  // > 0, sum to 1
  std::vector<int> targets;    // resource ids, one per share
  int sigma() const { return int(shares.size()); }
};

namespace detail {

inline void check_block_plan(const std::vector<BlockAssignment>& plan, int lo, int hi) {
  if (plan.empty()) throw CoverageError("empty block plan");
  if (plan.front().lo != lo)
    throw CoverageError("plan does not start at layer " + std::to_string(lo));
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].lo >= plan[i].hi) throw CoverageError("empty block in plan");
    if (i + 1 < plan.size() && plan[i].hi != plan[i + 1].lo)
      throw CoverageError("blocks must be contiguous and ordered");
  }
  if (plan.back().hi != hi)
    throw CoverageError("plan does not cover through layer " + std::to_string(hi));
}

inline void check_data_split(const DataSplit& split, const RateContext& ctx) {
  if (split.shares.empty()) throw CoverageError("empty data split");
  if (split.shares.size() != split.targets.size())
    throw CoverageError("shares/targets length mismatch");
  if (split.shares.size() > ctx.targets.size())
    throw DomainError("sigma " + std::to_string(split.shares.size()) + " exceeds " +
                      std::to_string(ctx.targets.size()) + " available targets");
  double sum = 0;
  for (double s : split.shares) {
    if (s <= 0) throw CoverageError("shares must be positive");
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw CoverageError("shares must sum to 1");
}

/// Number of interior split boundaries partition p touches when sigma
/// stripes are laid out in order.
inline int adjacent_boundaries(int p, int sigma) {
  if (sigma <= 1) return 0;
  return (p == 0 || p == sigma - 1) ? 1 : 2;
}

}  // namespace detail

/// Theta_omega: serial latency of a model-partitioned plan. Input moves from
/// the hub to the first block, each cut tensor moves between consecutive
/// blocks, and the last block returns its result to the hub.
inline double model_plan_latency(const std::vector<BlockAssignment>& plan, const CostView& view,
                                 const RateContext& ctx) {
  detail::check_block_plan(plan, view.lo(), view.hi());
  double t = ctx.from_hub_seconds(view.input_bytes, plan.front().target);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const BlockAssignment& b = plan[i];
    t += view.flops(b.lo, b.hi) / ctx.rate(b.target);
    if (i + 1 < plan.size())
      t += ctx.transfer_seconds(view.cut_bytes(b.hi - 1), b.target, plan[i + 1].target);
  }
  t += ctx.to_hub_seconds(view.output_bytes(), plan.back().target);
  return t;
}

inline double model_plan_latency(const std::vector<BlockAssignment>& plan, const DnnModel& m,
                                 const RateContext& ctx) {
  return model_plan_latency(plan, CostView::from(Workload::full(m)), ctx);
}

/// Theta_sigma: parallel latency of a data-partitioned plan. Every partition
/// pays its input share, its halo exchanges (once per adjacent interior
/// boundary, over its own link), its compute share, and its output share;
/// the total is the slowest partition. Hub-local partitions pay no network
/// transfer.
inline double data_plan_latency(const DataSplit& split, const CostView& view,
                                const RateContext& ctx) {
  detail::check_data_split(split, ctx);
  const int sigma = split.sigma();
  const double flops = view.total_flops();
  const double halo = view.halo_per_boundary();
  double worst = 0;
  for (int p = 0; p < sigma; ++p) {
    const double share = split.shares[std::size_t(p)];
    const int target = split.targets[std::size_t(p)];
    const double pb = ctx.per_byte(target);
    double t = share * view.input_bytes * pb;
    t += double(detail::adjacent_boundaries(p, sigma)) * halo * pb;
    t += share * flops / ctx.rate(target);
    t += share * view.output_bytes() * pb;
    worst = std::max(worst, t);
  }
  return worst;
}

inline double data_plan_latency(const DataSplit& split, const DnnModel& m,
                                const RateContext& ctx) {
  return data_plan_latency(split, CostView::from(Workload::full(m)), ctx);
}

/// Power parameters for energy accounting.
struct PowerModel {
  struct Entry {
    double active = 0;
    double idle = 0;
  };
  std::vector<std::vector<Entry>> processors;  // [node][processor]
  double net_energy_per_byte = 0;

  static PowerModel from_cluster(const Cluster& c) {
    PowerModel pm;
    pm.net_energy_per_byte = c.net_energy_per_byte;
    pm.processors.reserve(c.nodes.size());
    for (const auto& n : c.nodes) {
      std::vector<Entry> row;
      row.reserve(n.processors.size());
      for (const auto& p : n.processors) row.push_back({p.active_power, p.idle_power});
      pm.processors.push_back(std::move(row));
    }
    return pm;
  }
};

/// Busy time accumulated by one processor over a run.
struct ProcessorUsage {
  int node = 0;
  int proc = 0;
  double busy_seconds = 0;
};

/// Executed-schedule energy: active power over busy time, idle power over
/// the rest of the horizon, plus per-byte network energy.
inline double schedule_energy(const std::vector<ProcessorUsage>& usage, double horizon,
                              double inter_node_bytes, const PowerModel& pm) {
  if (horizon < 0) throw DomainError("horizon must be >= 0");
  std::vector<std::vector<double>> busy(pm.processors.size());
  for (std::size_t n = 0; n < pm.processors.size(); ++n)
    busy[n].assign(pm.processors[n].size(), 0.0);
  for (const auto& u : usage) {
    if (u.busy_seconds < 0) throw DomainError("negative busy interval");
    if (u.node < 0 || std::size_t(u.node) >= busy.size() || u.proc < 0 ||
        std::size_t(u.proc) >= busy[std::size_t(u.node)].size())
      throw DomainError("usage entry names an unknown processor");
    busy[std::size_t(u.node)][std::size_t(u.proc)] += u.busy_seconds;
  }
  double joules = inter_node_bytes * pm.net_energy_per_byte;
  for (std::size_t n = 0; n < pm.processors.size(); ++n)
    for (std::size_t k = 0; k < pm.processors[n].size(); ++k) {
      const double b = busy[n][k];
      if (b > horizon + 1e-9) throw DomainError("busy time exceeds horizon");
      const auto& e = pm.processors[n][k];
      joules += e.active * b + e.idle * (horizon - b);
    }
  return joules;
}

}  // namespace hidp
