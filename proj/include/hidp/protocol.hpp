#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hidp/errors.hpp"
#include "hidp/partitioner.hpp"

namespace hidp {

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

enum class MsgType : std::uint8_t {
  StatusProbe = 1,
  StatusAck = 2,
  GlobalAssign = 3,
  IntermediateData = 4,
  PartialResult = 5,
  FinalResult = 6,
};

/// Work assignment for one global unit (a model block or a data share).
struct AssignPayload {
  std::uint8_t mode = 0;  // 0 = model block, 1 = data share
  std::uint16_t unit = 0;
  std::uint16_t unit_count = 0;
  std::uint16_t layer_lo = 0;
  std::uint16_t layer_hi = 0;
  std::uint32_t row_lo = 0;
  std::uint32_t row_hi = 0;
  std::uint16_t next_node = 0xFFFF;  // model mode: downstream node, 0xFFFF = none
  double share = 1.0;
  std::uint64_t input_bytes = 0;
  std::uint64_t boundary_bytes = 0;

  bool operator==(const AssignPayload& o) const {
    return mode == o.mode && unit == o.unit && unit_count == o.unit_count &&
           layer_lo == o.layer_lo && layer_hi == o.layer_hi && row_lo == o.row_lo &&
           row_hi == o.row_hi && next_node == o.next_node &&
           std::bit_cast<std::uint64_t>(share) == std::bit_cast<std::uint64_t>(o.share) &&
           input_bytes == o.input_bytes && boundary_bytes == o.boundary_bytes;
  }
};

struct IntermediatePayload {
  std::uint16_t boundary_id = 0;
  std::uint64_t byte_count = 0;
  bool operator==(const IntermediatePayload&) const = default;
};

struct ResultPayload {
  std::uint16_t unit = 0;
  std::uint16_t unit_count = 0;
  std::uint32_t row_lo = 0;
  std::uint32_t row_hi = 0;
  std::uint64_t byte_count = 0;
  double compute_seconds = 0;

  bool operator==(const ResultPayload& o) const {
    return unit == o.unit && unit_count == o.unit_count && row_lo == o.row_lo &&
           row_hi == o.row_hi && byte_count == o.byte_count &&
           std::bit_cast<std::uint64_t>(compute_seconds) ==
               std::bit_cast<std::uint64_t>(o.compute_seconds);
  }
};

struct FinalPayload {
  std::uint64_t byte_count = 0;
  double total_seconds = 0;

  bool operator==(const FinalPayload& o) const {
    return byte_count == o.byte_count &&
           std::bit_cast<std::uint64_t>(total_seconds) ==
               std::bit_cast<std::uint64_t>(o.total_seconds);
  }
};

struct Message {
  MsgType type = MsgType::StatusProbe;
  std::uint32_t request_id = 0;
  std::uint16_t sender = 0;
  std::variant<std::monostate, AssignPayload, IntermediatePayload, ResultPayload, FinalPayload>
      payload;

  bool operator==(const Message&) const = default;
};

namespace wire {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(std::uint8_t(v >> 8));
  b.push_back(std::uint8_t(v));
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(std::uint8_t(v >> s));
}
inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) b.push_back(std::uint8_t(v >> s));
}
inline void put_f64(std::vector<std::uint8_t>& b, double v) {
  put_u64(b, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
  const std::uint8_t* p;
  std::size_t left;
  std::uint8_t u8() {
    if (left < 1) throw FrameError("payload truncated");
    --left;
    return *p++;
  }
  std::uint16_t u16() { return std::uint16_t(u8()) << 8 | u8(); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | u8();
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | u8();
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

inline std::size_t payload_size(MsgType t) {
  switch (t) {
    case MsgType::StatusProbe:
    case MsgType::StatusAck: return 0;
    case MsgType::GlobalAssign: return 43;
    case MsgType::IntermediateData: return 10;
    case MsgType::PartialResult: return 28;
    case MsgType::FinalResult: return 16;
  }
  throw FrameError("unknown message type");
}

}  // namespace wire

/// Frame layout: type(1) | request_id(4) | sender(2) | payload_len(4) |
/// payload, all fields big-endian, payload fixed-size per type.
inline std::vector<std::uint8_t> encode_message(const Message& m) {
  std::vector<std::uint8_t> b;
  b.reserve(11 + 43);
  b.push_back(std::uint8_t(m.type));
  wire::put_u32(b, m.request_id);
  wire::put_u16(b, m.sender);
  wire::put_u32(b, std::uint32_t(wire::payload_size(m.type)));
  switch (m.type) {
    case MsgType::StatusProbe:
    case MsgType::StatusAck: break;
    case MsgType::GlobalAssign: {
      const auto& p = std::get<AssignPayload>(m.payload);
      b.push_back(p.mode);
      wire::put_u16(b, p.unit);
      wire::put_u16(b, p.unit_count);
      wire::put_u16(b, p.layer_lo);
      wire::put_u16(b, p.layer_hi);
      wire::put_u32(b, p.row_lo);
      wire::put_u32(b, p.row_hi);
      wire::put_u16(b, p.next_node);
      wire::put_f64(b, p.share);
      wire::put_u64(b, p.input_bytes);
      wire::put_u64(b, p.boundary_bytes);
      break;
    }
    case MsgType::IntermediateData: {
      const auto& p = std::get<IntermediatePayload>(m.payload);
      wire::put_u16(b, p.boundary_id);
      wire::put_u64(b, p.byte_count);
      break;
    }
    case MsgType::PartialResult: {
      const auto& p = std::get<ResultPayload>(m.payload);
      wire::put_u16(b, p.unit);
      wire::put_u16(b, p.unit_count);
      wire::put_u32(b, p.row_lo);
      wire::put_u32(b, p.row_hi);
      wire::put_u64(b, p.byte_count);
      wire::put_f64(b, p.compute_seconds);
      break;
    }
    case MsgType::FinalResult: {
      const auto& p = std::get<FinalPayload>(m.payload);
      wire::put_u64(b, p.byte_count);
      wire::put_f64(b, p.total_seconds);
      break;
    }
  }
  return b;
}

inline Message decode_message(const std::vector<std::uint8_t>& b) {
  if (b.size() < 11) throw FrameError("frame shorter than header");
  const std::uint8_t raw_type = b[0];
  if (raw_type < 1 || raw_type > 6) throw FrameError("unknown type " + std::to_string(raw_type));
  Message m;
  m.type = MsgType(raw_type);
  wire::Reader r{b.data() + 1, b.size() - 1};
  m.request_id = r.u32();
  m.sender = r.u16();
  const std::uint32_t len = r.u32();
  if (len != wire::payload_size(m.type))
    throw FrameError("payload length " + std::to_string(len) + " invalid for type " +
                     std::to_string(raw_type));
  if (b.size() != 11 + std::size_t(len)) throw FrameError("frame length mismatch");
  switch (m.type) {
    case MsgType::StatusProbe:
    case MsgType::StatusAck: m.payload = std::monostate{}; break;
    case MsgType::GlobalAssign: {
      AssignPayload p;
      p.mode = r.u8();
      if (p.mode > 1) throw FrameError("assign mode must be 0 or 1");
      p.unit = r.u16();
      p.unit_count = r.u16();
      p.layer_lo = r.u16();
      p.layer_hi = r.u16();
      p.row_lo = r.u32();
      p.row_hi = r.u32();
      p.next_node = r.u16();
      p.share = r.f64();
      p.input_bytes = r.u64();
      p.boundary_bytes = r.u64();
      m.payload = p;
      break;
    }
    case MsgType::IntermediateData: {
      IntermediatePayload p;
      p.boundary_id = r.u16();
      p.byte_count = r.u64();
      m.payload = p;
      break;
    }
    case MsgType::PartialResult: {
      ResultPayload p;
      p.unit = r.u16();
      p.unit_count = r.u16();
      p.row_lo = r.u32();
      p.row_hi = r.u32();
      p.byte_count = r.u64();
      p.compute_seconds = r.f64();
      m.payload = p;
      break;
    }
    case MsgType::FinalResult: {
      FinalPayload p;
      p.byte_count = r.u64();
      p.total_seconds = r.f64();
      m.payload = p;
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Result merging
// ---------------------------------------------------------------------------

struct FinalResult {
  std::uint64_t byte_count = 0;
  std::uint32_t row_lo = 0;
  std::uint32_t row_hi = 0;
};

/// Merges gathered partial results. Model mode keeps the pipeline tail's
/// result; data mode concatenates the partition row ranges, which must tile
/// the output exactly once.
inline FinalResult merge_results(PlanMode mode, const std::vector<ResultPayload>& partials) {
  if (partials.empty()) throw IncompleteError("no partial results");
  if (mode == PlanMode::Model) {
    const std::uint16_t want = std::uint16_t(partials.front().unit_count - 1);
    const ResultPayload* last = nullptr;
    std::set<std::uint16_t> seen;
    for (const auto& p : partials) {
      if (!seen.insert(p.unit).second)
        throw OverlapError("duplicate partial for block " + std::to_string(p.unit));
      if (p.unit == want) last = &p;
    }
    if (!last) throw IncompleteError("last block's partial missing");
    return FinalResult{last->byte_count, last->row_lo, last->row_hi};
  }
  std::vector<ResultPayload> sorted = partials;
  std::sort(sorted.begin(), sorted.end(),
            [](const ResultPayload& a, const ResultPayload& b) { return a.row_lo < b.row_lo; });
  const std::size_t sigma = sorted.front().unit_count;
  std::set<std::uint16_t> units;
  for (const auto& p : sorted)
    if (!units.insert(p.unit).second)
      throw OverlapError("duplicate partial for partition " + std::to_string(p.unit));
  if (sorted.size() < sigma) throw IncompleteError("missing data partitions");
  FinalResult out;
  out.row_lo = sorted.front().row_lo;
  std::uint32_t next = sorted.front().row_lo;
  for (const auto& p : sorted) {
    if (p.row_lo < next) throw OverlapError("partition ranges overlap");
    if (p.row_lo > next) throw IncompleteError("gap in partition ranges");
    if (p.row_hi <= p.row_lo) throw IncompleteError("empty partition range");
    next = p.row_hi;
    out.byte_count += p.byte_count;
  }
  out.row_hi = next;
  return out;
}

// ---------------------------------------------------------------------------
// Leader / follower state machines
// ---------------------------------------------------------------------------

enum class LeaderPhase { Analyze, Explore, GlobalOffload, LocalMap, Execute };
enum class FollowerPhase { Analyze, LocalMap, Execute };

inline const char* to_string(LeaderPhase p) {
  switch (p) {
    case LeaderPhase::Analyze: return "Analyze";
    case LeaderPhase::Explore: return "Explore";
    case LeaderPhase::GlobalOffload: return "GlobalOffload";
    case LeaderPhase::LocalMap: return "LocalMap";
    case LeaderPhase::Execute: return "Execute";
  }
  return "?";
}

enum class LeaderEvent {
  InferenceRequest,
  ProbeReplies,
  PlanReady,
  BlockDone,
  PartialResultMsg,
  AllGathered,
};

enum class FollowerEvent { GlobalAssignMsg, LocalPlanReady, ComputeDone };

/// Side effects requested by a step function; the caller performs them.
struct FsmAction {
  enum Kind {
    SendProbe,     // leader -> node
    ComputePlan,   // run the hierarchical partitioner
    SendAssign,    // leader -> node, one global unit
    ComputeLocal,  // submit local compute tasks for own unit(s)
    SubmitMerge,   // merge gathered partials
    SendFinal,     // report the final result
    SendPartial,   // follower -> leader
  };
  Kind kind;
  int node = -1;
  int unit = -1;
};

struct LeaderEventData {
  LeaderEvent kind;
  std::uint32_t request_id = 0;
  std::vector<int> probe_nodes;                   // InferenceRequest
  std::vector<std::pair<int, int>> assignments;   // PlanReady: remote (node, unit)
  int done_unit = -1;                             // BlockDone: unit, or -1 for the merge task
  int from_node = -1;                             // PartialResultMsg
  ResultPayload partial;                          // PartialResultMsg
};

struct LeaderState {
  LeaderPhase phase = LeaderPhase::Analyze;
  std::optional<std::uint32_t> pending_request;
  std::set<std::pair<int, int>> outstanding;  // (node, unit) assigned remotely
  std::map<int, ResultPayload> gathered;      // unit -> partial
  bool merging = false;
};

inline std::pair<LeaderState, std::vector<FsmAction>> leader_step(LeaderState s,
                                                                  const LeaderEventData& ev) {
  std::vector<FsmAction> actions;
  auto bad = [&]() -> ProtocolError {
    return ProtocolError(std::string("event not valid in leader phase ") + to_string(s.phase));
  };
  switch (s.phase) {
    case LeaderPhase::Analyze:
      if (ev.kind != LeaderEvent::InferenceRequest) throw bad();
      s.pending_request = ev.request_id;
      s.outstanding.clear();
      s.gathered.clear();
      s.merging = false;
      for (int node : ev.probe_nodes) actions.push_back({FsmAction::SendProbe, node, -1});
      s.phase = LeaderPhase::Explore;
      return {std::move(s), std::move(actions)};

    case LeaderPhase::Explore:
      if (ev.kind != LeaderEvent::ProbeReplies) throw bad();
      actions.push_back({FsmAction::ComputePlan, -1, -1});
      s.phase = LeaderPhase::GlobalOffload;
      return {std::move(s), std::move(actions)};

    case LeaderPhase::GlobalOffload:
      if (ev.kind == LeaderEvent::PlanReady && !s.merging) {
        for (const auto& [node, unit] : ev.assignments) {
          s.outstanding.insert({node, unit});
          actions.push_back({FsmAction::SendAssign, node, unit});
        }
        s.phase = LeaderPhase::LocalMap;
        return {std::move(s), std::move(actions)};
      }
      if (ev.kind == LeaderEvent::BlockDone && s.merging && ev.done_unit < 0) {
        actions.push_back({FsmAction::SendFinal, -1, -1});
        s.phase = LeaderPhase::Analyze;
        s.pending_request.reset();
        s.outstanding.clear();
        s.gathered.clear();
        s.merging = false;
        return {std::move(s), std::move(actions)};
      }
      throw bad();

    case LeaderPhase::LocalMap:
      if (ev.kind == LeaderEvent::PlanReady) {
        actions.push_back({FsmAction::ComputeLocal, -1, -1});
        s.phase = LeaderPhase::Execute;
        return {std::move(s), std::move(actions)};
      }
      if (ev.kind == LeaderEvent::PartialResultMsg) {
        s.gathered[ev.partial.unit] = ev.partial;
        s.outstanding.erase({ev.from_node, int(ev.partial.unit)});
        return {std::move(s), std::move(actions)};
      }
      throw bad();

    case LeaderPhase::Execute:
      if (ev.kind == LeaderEvent::BlockDone && ev.done_unit >= 0)
        return {std::move(s), std::move(actions)};
      if (ev.kind == LeaderEvent::PartialResultMsg) {
        s.gathered[ev.partial.unit] = ev.partial;
        s.outstanding.erase({ev.from_node, int(ev.partial.unit)});
        return {std::move(s), std::move(actions)};
      }
      if (ev.kind == LeaderEvent::AllGathered) {
        actions.push_back({FsmAction::SubmitMerge, -1, -1});
        s.phase = LeaderPhase::GlobalOffload;
        s.merging = true;
        return {std::move(s), std::move(actions)};
      }
      throw bad();
  }
  throw bad();
}

struct FollowerEventData {
  FollowerEvent kind;
  std::uint32_t request_id = 0;
  int unit = -1;  // GlobalAssignMsg
};

struct FollowerState {
  FollowerPhase phase = FollowerPhase::Analyze;
  std::optional<std::pair<std::uint32_t, int>> current;  // (request, unit)
};

inline std::pair<FollowerState, std::vector<FsmAction>> follower_step(
    FollowerState s, const FollowerEventData& ev) {
  std::vector<FsmAction> actions;
  if (ev.kind == FollowerEvent::GlobalAssignMsg) {
    if (s.current.has_value())
      throw BusyError("assignment while a block is outstanding");
    if (s.phase != FollowerPhase::Analyze)
      throw ProtocolError("assignment outside the Analyze phase");
    s.current = {ev.request_id, ev.unit};
    actions.push_back({FsmAction::ComputePlan, -1, ev.unit});
    s.phase = FollowerPhase::LocalMap;
    return {std::move(s), std::move(actions)};
  }
  switch (s.phase) {
    case FollowerPhase::Analyze:
      throw ProtocolError("event not valid in follower phase Analyze");
    case FollowerPhase::LocalMap:
      if (ev.kind != FollowerEvent::LocalPlanReady)
        throw ProtocolError("event not valid in follower phase LocalMap");
      actions.push_back({FsmAction::ComputeLocal, -1, s.current->second});
      s.phase = FollowerPhase::Execute;
      return {std::move(s), std::move(actions)};
    case FollowerPhase::Execute:
      if (ev.kind != FollowerEvent::ComputeDone)
        throw ProtocolError("event not valid in follower phase Execute");
      actions.push_back({FsmAction::SendPartial, -1, s.current->second});
      s.current.reset();
      s.phase = FollowerPhase::Analyze;
      return {std::move(s), std::move(actions)};
  }
  throw ProtocolError("unreachable follower phase");
}

}  // namespace hidp
