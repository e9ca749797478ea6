#include "oei/verifier.hpp"

#include <fmt/format.h>

namespace oei::verifier {

using bundle::TermKind;

std::string_view failure_name(Failure f) {
  switch (f) {
  case Failure::None: return "NONE";
  case Failure::Signature: return "SIGNATURE";
  case Failure::NonceMismatch: return "NONCE_MISMATCH";
  case Failure::OperationMismatch: return "OPERATION_MISMATCH";
  case Failure::SegmentChain: return "SEGMENT_CHAIN";
  case Failure::CfiTarget: return "CFI_TARGET";
  case Failure::Structure: return "STRUCTURE";
  case Failure::HashMismatch: return "HASH_MISMATCH";
  case Failure::InterruptMismatch: return "INTERRUPT_MISMATCH";
  case Failure::CviViolation: return "CVI_VIOLATION";
  }
  return "?";
}

namespace {

WalkResult fail(WalkResult r, Failure f, std::string detail) {
  r.status = f;
  r.detail = std::move(detail);
  return r;
}

bool contains(const std::vector<CodeAddr>& v, CodeAddr a) { return std::find(v.begin(), v.end(), a) != v.end(); }

} // namespace

WalkResult abstract_execute(const bundle::CfgBundle& cfg, CodeAddr entry, CodeAddr exit,
                            const measure::Trace& trace, const Digest& claimed_h, const WalkLimits& limits) {
  WalkResult r;
  std::vector<CodeAddr> stack;
  std::size_t bit = 0, addr = 0;
  Digest h = kZeroDigest;
  const auto start = cfg.locate(entry);
  if (!start)
    return fail(std::move(r), Failure::Structure, fmt::format("entry {:#x} is not in the CFG", entry));
  int b = start->first;
  std::size_t pos = static_cast<std::size_t>(start->second);

  const auto goto_block = [&](CodeAddr a) -> bool {
    const auto* blk = cfg.block_at(a);
    if (!blk)
      return false;
    b = cfg.locate(a)->first;
    pos = 0;
    return true;
  };

  for (;;) {
    if (++r.steps > limits.max_steps)
      return fail(std::move(r), Failure::Structure, "walk step budget exhausted");
    const auto& blk = cfg.blocks[b];
    const CodeAddr here = blk.addrs[pos];
    r.path.push_back(here);
    if (exit && here == exit && stack.empty())
      break;
    if (pos + 1 < blk.addrs.size()) {
      ++pos;
      continue;
    }
    switch (blk.term) {
    case TermKind::CondBranch: {
      if (bit >= trace.bin.size())
        return fail(std::move(r), Failure::Structure, fmt::format("S_bin exhausted at branch {:#x}", here));
      const bool taken = trace.bin.get(bit++);
      r.bits_consumed = bit;
      if (!goto_block(taken ? blk.taken : blk.not_taken))
        return fail(std::move(r), Failure::Structure, fmt::format("CFG edge at {:#x} does not lead to a block", here));
      break;
    }
    case TermKind::DirectJump:
      if (!goto_block(blk.next))
        return fail(std::move(r), Failure::Structure, fmt::format("CFG edge at {:#x} does not lead to a block", here));
      break;
    case TermKind::IndirectJump:
    case TermKind::IndirectCall: {
      if (addr >= trace.addr.size())
        return fail(std::move(r), Failure::Structure,
                    fmt::format("S_addr exhausted at indirect transfer {:#x}", here));
      const auto dest = trace.addr[addr++];
      r.addrs_consumed = addr;
      if (!contains(blk.targets, dest))
        return fail(std::move(r), Failure::CfiTarget,
                    fmt::format("indirect transfer at {:#x} to {:#x} is outside its target set", here, dest));
      if (blk.term == TermKind::IndirectCall) {
        if (stack.size() >= limits.max_stack)
          return fail(std::move(r), Failure::Structure, "simulated stack limit exceeded");
        stack.push_back(blk.next);
      }
      if (!goto_block(dest))
        return fail(std::move(r), Failure::CfiTarget, fmt::format("{:#x} is not a block start", dest));
      break;
    }
    case TermKind::DirectCall:
      if (stack.size() >= limits.max_stack)
        return fail(std::move(r), Failure::Structure, "simulated stack limit exceeded");
      stack.push_back(blk.next);
      if (!goto_block(blk.callee))
        return fail(std::move(r), Failure::Structure, fmt::format("CFG edge at {:#x} does not lead to a block", here));
      break;
    case TermKind::Return: {
      if (stack.empty()) {
        if (!exit)
          goto done;
        return fail(std::move(r), Failure::Structure,
                    fmt::format("return at {:#x} with an empty simulated stack", here));
      }
      const auto ret = stack.back();
      stack.pop_back();
      h = hash_update(h, ret);
      if (!goto_block(ret))
        return fail(std::move(r), Failure::Structure, fmt::format("CFG edge at {:#x} does not lead to a block", here));
      break;
    }
    case TermKind::Halt:
      return fail(std::move(r), Failure::Structure, fmt::format("halt at {:#x} before the operation exit", here));
    }
  }
done:
  r.h = h;
  if (bit < trace.bin.size() || addr < trace.addr.size())
    return fail(std::move(r), Failure::Structure,
                fmt::format("{} branch bits and {} addresses left over at the exit", trace.bin.size() - bit,
                            trace.addr.size() - addr));
  if (h != claimed_h)
    return fail(std::move(r), Failure::HashMismatch, "recomputed return hash differs from the reported hash");
  return r;
}

WalkResult abstract_execute(const bundle::CfgBundle& cfg, int op_id, const measure::Trace& trace,
                            const Digest& claimed_h, const WalkLimits& limits) {
  const auto it = cfg.operations.find(op_id);
  if (it == cfg.operations.end()) {
    WalkResult r;
    r.status = Failure::OperationMismatch;
    r.detail = fmt::format("operation {} is not in the CFG bundle", op_id);
    return r;
  }
  return abstract_execute(cfg, it->second.begin, it->second.end, trace, claimed_h, limits);
}

// ---------------------------------------------------------------- verify

Report verify(const std::vector<Bytes>& segments, const bundle::CfgBundle& cfg, std::uint32_t op_id,
              const Nonce& expected_nonce, const PublicKey& device_key, const WalkLimits& limits) {
  Report rep;
  rep.op_id = op_id;
  rep.segments = segments.size();
  const auto failed = [&](Failure f, std::string detail) {
    rep.pass = false;
    rep.failure = f;
    rep.detail = std::move(detail);
    return rep;
  };

  if (segments.empty())
    return failed(Failure::OperationMismatch, "no evidence for the requested operation");
  for (std::size_t i = 0; i < segments.size(); ++i)
    if (!measure::check_signature(segments[i], device_key))
      return failed(Failure::Signature, fmt::format("segment {} has an invalid signature", i));

  std::vector<measure::Blob> blobs;
  for (const auto& s : segments)
    blobs.push_back(measure::decode(s));

  for (const auto& b : blobs)
    if (b.nonce != expected_nonce)
      return failed(Failure::NonceMismatch, "evidence nonce does not match the challenge");
  for (const auto& b : blobs)
    if (b.op_id != op_id)
      return failed(Failure::OperationMismatch,
                    fmt::format("evidence reports operation {} but operation {} was requested", b.op_id, op_id));

  Digest prev = kZeroDigest;
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    const auto& b = blobs[i];
    const bool last = i + 1 == blobs.size();
    if (b.segment_index != i)
      return failed(Failure::SegmentChain, fmt::format("segment {} carries index {}", i, b.segment_index));
    if (b.prev_hash != prev)
      return failed(Failure::SegmentChain, fmt::format("segment {} does not link to its predecessor", i));
    if (last == (b.kind == measure::SegmentKind::Intermediate))
      return failed(Failure::SegmentChain, fmt::format("segment {} has the wrong kind", i));
    prev = measure::segment_hash(segments[i]);
  }

  measure::Trace trace;
  std::vector<measure::InterruptEvidence> interrupts;
  for (const auto& b : blobs) {
    trace.bin.append(b.trace.bin);
    trace.addr.insert(trace.addr.end(), b.trace.addr.begin(), b.trace.addr.end());
    interrupts.insert(interrupts.end(), b.interrupts.begin(), b.interrupts.end());
  }
  const auto& final_blob = blobs.back();
  rep.bits_total = trace.bin.size();
  rep.addrs_total = trace.addr.size();

  auto walk = abstract_execute(cfg, static_cast<int>(op_id), trace, final_blob.h, limits);
  rep.path = std::move(walk.path);
  rep.bits_consumed = walk.bits_consumed;
  rep.addrs_consumed = walk.addrs_consumed;
  rep.steps = walk.steps;
  if (walk.status != Failure::None)
    return failed(walk.status, walk.detail);
  if (final_blob.kind == measure::SegmentKind::Aborted)
    return failed(Failure::Structure, "the operation did not run to its exit");

  for (std::size_t i = 0; i < interrupts.size(); ++i) {
    const auto& ev = interrupts[i];
    const auto it = cfg.interrupts.find(ev.irq);
    if (it == cfg.interrupts.end() || it->second != ev.handler)
      return failed(Failure::InterruptMismatch,
                    fmt::format("interrupt {} ran handler {:#x}, which is not its vector entry", ev.irq, ev.handler));
    const auto sub = abstract_execute(cfg, ev.handler, 0, ev.trace, ev.h, limits);
    rep.steps += sub.steps;
    if (sub.status != Failure::None)
      return failed(sub.status, fmt::format("interrupt {} handler: {}", ev.irq, sub.detail));
  }

  if (final_blob.f) {
    rep.context = final_blob.c;
    return failed(Failure::CviViolation, fmt::format("{} critical-variable check(s) failed", final_blob.c.size()));
  }
  rep.pass = true;
  return rep;
}

std::string Report::text() const {
  std::string s = fmt::format("operation {}: {}\n", op_id, pass ? "PASS" : fmt::format("FAIL {}", failure_name(failure)));
  if (!detail.empty())
    s += fmt::format("  {}\n", detail);
  s += fmt::format("  segments: {}  steps: {}\n", segments, steps);
  s += fmt::format("  S_bin: {}/{} bits  S_addr: {}/{} entries\n", bits_consumed, bits_total, addrs_consumed,
                   addrs_total);
  for (const auto& c : context)
    s += fmt::format("  context: var {:#x} ret {:#x}\n", c.var_id, c.ret_addr);
  s += fmt::format("  path ({} instructions):", path.size());
  for (std::size_t i = 0; i < path.size(); ++i)
    s += fmt::format("{}{:#x}", i % 8 ? " " : "\n    ", path[i]);
  s += '\n';
  return s;
}

nlohmann::json Report::json() const {
  nlohmann::json j;
  j["op_id"] = op_id;
  j["verdict"] = pass ? "pass" : "fail";
  j["failure"] = failure_name(failure);
  j["detail"] = detail;
  j["segments"] = segments;
  j["steps"] = steps;
  j["bits"] = {{"consumed", bits_consumed}, {"total", bits_total}};
  j["addrs"] = {{"consumed", addrs_consumed}, {"total", addrs_total}};
  auto ctx = nlohmann::json::array();
  for (const auto& c : context)
    ctx.push_back({{"var", bundle::hex(c.var_id)}, {"ret", bundle::hex(c.ret_addr)}});
  j["context"] = std::move(ctx);
  auto p = nlohmann::json::array();
  for (auto a : path)
    p.push_back(bundle::hex(a));
  j["path"] = std::move(p);
  return j;
}

// ---------------------------------------------------------------- oracle

namespace {

class Enumerator {
public:
  Enumerator(const bundle::CfgBundle& cfg, const bundle::Operation& op, const EnumerationLimits& lim)
      : cfg_(cfg), op_(op), lim_(lim) {}

  std::vector<Proof> run() {
    State s;
    const auto w = cfg_.locate(op_.begin);
    s.block = w->first;
    s.pos = static_cast<std::size_t>(w->second);
    s.visits[s.block] = 1;
    explore(std::move(s));
    return std::move(out_);
  }

private:
  struct Activation {
    CodeAddr cont = 0;
    std::map<int, int> visits;
  };
  struct State {
    int block = 0;
    std::size_t pos = 0;
    std::map<int, int> visits;
    std::vector<Activation> stack;
    Proof proof;
  };

  bool enter(State& s, CodeAddr a) const {
    const auto w = cfg_.locate(a);
    if (!w || w->second != 0)
      return false;
    s.block = w->first;
    s.pos = 0;
    return ++s.visits[s.block] <= lim_.loop_bound + 1;
  }

  bool call(State& s, CodeAddr cont, CodeAddr dest) const {
    if (s.stack.size() >= lim_.depth_bound)
      return false;
    s.stack.push_back({cont, std::move(s.visits)});
    s.visits.clear();
    return enter(s, dest);
  }

  void explore(State s) {
    for (;;) {
      const auto& blk = cfg_.blocks[s.block];
      const CodeAddr here = blk.addrs[s.pos];
      s.proof.path.push_back(here);
      if (++steps_ > lim_.max_steps)
        throw BoundExceeded(fmt::format("enumeration explored more than {} instructions", lim_.max_steps));
      if (here == op_.end && s.stack.empty()) {
        if (out_.size() >= lim_.max_proofs)
          throw BoundExceeded(fmt::format("more than {} legal paths", lim_.max_proofs));
        out_.push_back(std::move(s.proof));
        return;
      }
      if (s.pos + 1 < blk.addrs.size()) {
        ++s.pos;
        continue;
      }
      switch (blk.term) {
      case TermKind::CondBranch:
        for (bool bit : {true, false}) {
          State t = s;
          t.proof.trace.bin.push(bit);
          if (enter(t, bit ? blk.taken : blk.not_taken))
            explore(std::move(t));
        }
        return;
      case TermKind::DirectJump:
        if (!enter(s, blk.next))
          return;
        break;
      case TermKind::DirectCall:
        if (!call(s, blk.next, blk.callee))
          return;
        break;
      case TermKind::IndirectJump:
      case TermKind::IndirectCall:
        for (auto dest : blk.targets) {
          State t = s;
          t.proof.trace.addr.push_back(dest);
          const bool ok = blk.term == TermKind::IndirectCall ? call(t, blk.next, dest) : enter(t, dest);
          if (ok)
            explore(std::move(t));
        }
        return;
      case TermKind::Return: {
        if (s.stack.empty())
          return;
        auto act = std::move(s.stack.back());
        s.stack.pop_back();
        s.visits = std::move(act.visits);
        s.proof.h = hash_update(s.proof.h, act.cont);
        if (!enter(s, act.cont))
          return;
        break;
      }
      case TermKind::Halt:
        return;
      }
    }
  }

  const bundle::CfgBundle& cfg_;
  const bundle::Operation& op_;
  const EnumerationLimits& lim_;
  std::vector<Proof> out_;
  std::uint64_t steps_ = 0;
};

} // namespace

std::vector<Proof> enumerate_legal_proofs(const bundle::CfgBundle& cfg, int op_id, const EnumerationLimits& limits) {
  const auto it = cfg.operations.find(op_id);
  if (it == cfg.operations.end())
    throw std::invalid_argument(fmt::format("operation {} is not in the CFG bundle", op_id));
  return Enumerator(cfg, it->second, limits).run();
}

} // namespace oei::verifier
