#include "bftstack/stack.hpp"

namespace bftstack {

NodeStack::NodeStack(NodeId self, FaultBudget global_budget, const KeyDirectory& keys, Simulator& sim,
                     StackConfig cfg, TraceLog* trace)
    : self_(self), sim_(sim), cfg_(cfg), trace_(trace) {
  comm_ = std::make_unique<CommLayer>(self, global_budget, keys, sim, cfg_.comm, metrics_);
  membership_ = std::make_unique<MembershipLayer>(self, global_budget, *comm_, sim, cfg_.membership, trace);
  consensus_ = std::make_unique<ConsensusService>(self, keys, sim, *comm_, cfg_.consensus, cache_,
                                                  registry_, metrics_, trace);
  comm_->deliver_up = [this](MsgKind k, NodeId from, const Bytes& body, bool rrb) {
    route_up(k, from, body, rrb);
  };
  comm_->neighbor_hint = [this]() {
    return cfg_.membership_enabled ? membership_->neighbor_ids() : std::vector<NodeId>{};
  };
}

void NodeStack::on_start() {
  comm_->start();
  consensus_->start();
  if (cfg_.membership_enabled) membership_->start();
}

void NodeStack::on_deliver(const EnvelopePtr& env) {
  if (crashed_) return;
  comm_->on_radio(env);
}

void NodeStack::on_timer(std::uint32_t tag, TimerId) {
  if (tag == kCrashTimer) {
    crashed_ = true;
    return;
  }
  if (crashed_) return;
  if (tag == CommLayer::kTimerTag) comm_->on_timer_tick();
  else if (tag == ConsensusService::kTimerTag) consensus_->on_tick();
  else if (tag >= 0x20 && tag < 0x30) membership_->on_timer(tag);
}

void NodeStack::schedule_crash(SimTime at) {
  SimTime delay = at - sim_.now();
  sim_.set_timer(self_, delay > 0 ? delay : 1, false, kCrashTimer);
}

void NodeStack::route_up(MsgKind kind, NodeId from, const Bytes& body, bool via_rrb) {
  if (crashed_) return;
  if (via_rrb && from != self_ && trace_) {
    trace_->emit({sim_.now(), self_, TraceKind::RrbDeliver, "", from, static_cast<std::int64_t>(kind), {}});
  }
  switch (kind) {
    case MsgKind::Heartbeat:
    case MsgKind::GetNeighbors:
    case MsgKind::SetNeighbors:
    case MsgKind::KnownSet:
      if (cfg_.membership_enabled) membership_->on_message(kind, from, body);
      break;
    case MsgKind::BinMsg:
    case MsgKind::MvMsg:
    case MsgKind::VecRow:
    case MsgKind::Decision:
    case MsgKind::ResultQuery:
    case MsgKind::ResultReply:
      consensus_->on_message(kind, from, body, via_rrb);
      break;
    default:
      break;
  }
  if (deliver_hook) deliver_hook(kind, from, body, via_rrb);
}

}  // namespace bftstack
