#include "oei/prover.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>

namespace oei::prover {

using ir::Opcode;
using ir::Operand;
using ir::VarKind;
using ir::VarRef;
using instrument::DataTag;

std::string_view fault_action_name(FaultSpec::Action a) {
  switch (a) {
  case FaultSpec::Action::OverwriteReturn: return "overwrite_return";
  case FaultSpec::Action::OverwriteVar: return "overwrite_var";
  case FaultSpec::Action::OverwriteIndirectTarget: return "overwrite_indirect_target";
  }
  return "?";
}

namespace {

struct MachineFault {
  std::string message;
};

struct Frame {
  int function = -1;
  std::uint64_t base = 0;
  CodeAddr call_site = 0; // 0 for the entry frame and interrupt frames
  bool interrupt = false;
  CodeAddr resume = 0;    // interrupt frames: where the interrupted code continues
};

std::int64_t binop(ir::BinaryOp op, std::int64_t a, std::int64_t b) {
  const auto ua = static_cast<std::uint64_t>(a), ub = static_cast<std::uint64_t>(b);
  switch (op) {
  case ir::BinaryOp::Add: return static_cast<std::int64_t>(ua + ub);
  case ir::BinaryOp::Sub: return static_cast<std::int64_t>(ua - ub);
  case ir::BinaryOp::Mul: return static_cast<std::int64_t>(ua * ub);
  case ir::BinaryOp::Div:
    if (b == 0)
      return 0;
    if (b == -1)
      return static_cast<std::int64_t>(0 - ua);
    return a / b;
  case ir::BinaryOp::Rem:
    if (b == 0 || b == -1)
      return 0;
    return a % b;
  case ir::BinaryOp::And: return a & b;
  case ir::BinaryOp::Or: return a | b;
  case ir::BinaryOp::Xor: return a ^ b;
  case ir::BinaryOp::Shl: return static_cast<std::int64_t>(ua << (ub & 63));
  case ir::BinaryOp::Shr: return a >> (ub & 63);
  case ir::BinaryOp::Eq: return a == b;
  case ir::BinaryOp::Ne: return a != b;
  case ir::BinaryOp::Lt: return a < b;
  case ir::BinaryOp::Le: return a <= b;
  case ir::BinaryOp::Gt: return a > b;
  case ir::BinaryOp::Ge: return a >= b;
  }
  return 0;
}

class Machine {
public:
  Machine(const instrument::InstrumentedProgram& ip, const RunOptions& opt) : ip_(ip), p_(ip.program), opt_(opt) {
    layout();
    schedule_ = opt.interrupts;
    std::stable_sort(schedule_.begin(), schedule_.end(),
                     [](const auto& a, const auto& b) { return a.at_step < b.at_step; });
  }

  RunResult run() {
    try {
      load_globals();
      push_frame(p_.entry, 0, 0, false, 0, {});
      pc_ = p_.functions[p_.entry].entry();
      while (!stopped_) {
        if (r_.steps >= opt_.max_steps)
          throw MachineFault{fmt::format("step limit of {} exceeded", opt_.max_steps)};
        deliver_interrupt();
        apply_faults();
        step();
      }
    } catch (const MachineFault& f) {
      r_.error = f.message;
    }
    if (session_open())
      close_session(measure::SegmentKind::Aborted);
    r_.cvi = std::move(cvi_);
    return std::move(r_);
  }

private:
  // ------------------------------------------------------------ memory

  void layout() {
    std::uint64_t next = kDataBase;
    for (const auto& g : p_.globals) {
      global_addr_.push_back(next);
      next += static_cast<std::uint64_t>(g.length);
    }
    globals_.assign(next - kDataBase, 0);
    for (const auto& fn : p_.functions) {
      std::vector<std::uint64_t> off;
      std::uint64_t o = 0;
      for (int s = 0; s < fn.slot_count(); ++s) {
        off.push_back(o);
        o += static_cast<std::uint64_t>(fn.slot(s).length);
      }
      slot_off_.push_back(std::move(off));
      frame_words_.push_back(o + 1);
    }
    stack_.assign(kStackWords, 0);
  }

  std::int64_t& cell(std::uint64_t a) {
    if (a >= kDataBase && a - kDataBase < globals_.size())
      return globals_[a - kDataBase];
    if (a >= kStackBase && a - kStackBase < stack_.size())
      return stack_[a - kStackBase];
    throw MachineFault{fmt::format("memory access at {:#x} is outside the address space", a)};
  }
  std::int64_t load(std::uint64_t a) { return cell(a); }
  void store(std::uint64_t a, std::int64_t v) { cell(a) = v; }

  void load_globals() {
    for (std::size_t g = 0; g < p_.globals.size(); ++g) {
      const auto& d = p_.globals[g];
      for (std::size_t k = 0; k < d.init.size(); ++k) {
        const auto& in = d.init[k];
        std::int64_t v = in.value;
        if (in.kind == ir::Initializer::Kind::FunctionAddr)
          v = static_cast<std::int64_t>(p_.functions[in.function].entry());
        else if (in.kind == ir::Initializer::Kind::VarAddr)
          v = static_cast<std::int64_t>(global_addr_[in.var.slot] + in.value);
        store(global_addr_[g] + k, v);
        if (in.kind == ir::Initializer::Kind::VarAddr && d.kind == VarKind::Pointer)
          cvi_.register_pointer(global_addr_[g], object_of(in.var));
      }
    }
    for (auto v : ip_.load_defines) {
      const auto base = global_addr_[v.slot];
      for (std::int64_t k = 0; k < p_.globals[v.slot].length; ++k)
        cvi_.define(base + k, load(base + k));
    }
  }

  const Frame& top() const { return frames_.back(); }

  std::uint64_t var_addr(VarRef v) const {
    if (v.is_global())
      return global_addr_[v.slot];
    return top().base + slot_off_[v.scope][v.slot];
  }

  std::uint64_t ret_slot(const Frame& f) const { return f.base + frame_words_[f.function] - 1; }

  measure::Range object_of(VarRef v) const {
    const auto a = var_addr(v);
    return {a, a + static_cast<std::uint64_t>(p_.decl(v).length)};
  }

  // The variable (global or live frame slot) whose storage holds address a.
  std::optional<measure::Range> find_object(std::uint64_t a) const {
    for (std::size_t g = 0; g < p_.globals.size(); ++g) {
      const auto b = global_addr_[g], e = b + static_cast<std::uint64_t>(p_.globals[g].length);
      if (a >= b && a < e)
        return measure::Range{b, e};
    }
    for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
      const auto& fn = p_.functions[it->function];
      for (int s = 0; s < fn.slot_count(); ++s) {
        const auto b = it->base + slot_off_[it->function][s], e = b + static_cast<std::uint64_t>(fn.slot(s).length);
        if (a >= b && a < e)
          return measure::Range{b, e};
      }
    }
    return std::nullopt;
  }

  std::int64_t value(const Operand& o) {
    switch (o.kind) {
    case Operand::Kind::Const: return o.value;
    case Operand::Kind::Var: return load(var_addr(o.var));
    case Operand::Kind::FunctionAddr: return static_cast<std::int64_t>(p_.functions[o.target].entry());
    case Operand::Kind::LabelAddr:
      return static_cast<std::int64_t>(p_.functions[loc_.function].blocks[o.target].start());
    case Operand::Kind::None: return 0;
    }
    return 0;
  }

  std::uint64_t mem_addr(const ir::MemRef& m) {
    const auto idx = static_cast<std::uint64_t>(value(m.index));
    if (p_.decl(m.base).kind == VarKind::Pointer)
      return static_cast<std::uint64_t>(load(var_addr(m.base))) + idx;
    return var_addr(m.base) + idx;
  }

  // ------------------------------------------------------------ frames

  void push_frame(int fn, CodeAddr call_site, std::int64_t ret, bool interrupt, CodeAddr resume,
                  const std::vector<std::int64_t>& args) {
    const auto base = frames_.empty() ? kStackBase : top().base + frame_words_[top().function];
    if (base + frame_words_[fn] > kStackBase + stack_.size())
      throw MachineFault{"stack overflow"};
    frames_.push_back({fn, base, call_site, interrupt, resume});
    std::fill_n(stack_.begin() + static_cast<std::ptrdiff_t>(base - kStackBase), frame_words_[fn], 0);
    const auto& f = p_.functions[fn];
    for (std::size_t a = 0; a < args.size() && a < f.params.size(); ++a)
      store(base + slot_off_[fn][a], args[a]);
    store(ret_slot(top()), ret);
    for (const auto& t : ip_.entry_tags[fn]) {
      const auto r = object_of(t.var);
      for (auto id = r.begin; id < r.end; ++id)
        cvi_.define(id, load(id));
      if (t.critical_pointer)
        refresh_pointee(t.var, nullptr);
    }
  }

  // ------------------------------------------------------------ CVI tags

  std::uint64_t current_ret() { return static_cast<std::uint64_t>(load(ret_slot(top()))); }

  // Word ids a tag covers at this moment; empty when the access misses the tracked object.
  std::vector<std::uint64_t> tag_ids(const DataTag& t, const ir::Instruction& ins) {
    switch (t.access) {
    case analysis::Access::Direct: {
      const auto r = object_of(t.var);
      std::vector<std::uint64_t> ids;
      for (auto id = r.begin; id < r.end; ++id)
        ids.push_back(id);
      return ids;
    }
    case analysis::Access::Element: {
      const auto r = object_of(t.var);
      const auto a = r.begin + static_cast<std::uint64_t>(value(ins.mem.index));
      if (a >= r.begin && a < r.end)
        return {a};
      return {};
    }
    case analysis::Access::ViaPointer: {
      const auto pid = var_addr(t.var);
      if (!cvi_.pointee(pid))
        return {};
      const auto a = static_cast<std::uint64_t>(load(pid)) + static_cast<std::uint64_t>(value(ins.mem.index));
      const auto r = cvi_.bounds_adjust(pid, a, 1);
      if (r.empty())
        return {};
      return {r.begin};
    }
    }
    return {};
  }

  void fire_uses(const ir::Instruction& ins, const instrument::InstructionTags& tags) {
    for (const auto& t : tags.uses)
      for (auto id : tag_ids(t, ins))
        cvi_.use(id, load(id), current_ret());
  }

  void refresh_pointee(VarRef ptr, const ir::Instruction* ins) {
    const auto pid = var_addr(ptr);
    std::optional<measure::Range> r;
    if (ins && (ins->op == Opcode::AddressOf ||
                (ins->op == Opcode::GetElement && p_.decl(ins->mem.base).kind != VarKind::Pointer))) {
      r = object_of(ins->mem.base);
    } else if (ins && ins->op == Opcode::GetElement) {
      r = cvi_.pointee(var_addr(ins->mem.base));
    } else if (ins && (ins->op == Opcode::Assign || ins->op == Opcode::BinOp)) {
      for (const auto* o : {&ins->lhs, &ins->rhs})
        if (!r && o->is_var() && p_.decl(o->var).kind == VarKind::Pointer)
          r = cvi_.pointee(var_addr(o->var));
    }
    if (!r)
      r = find_object(static_cast<std::uint64_t>(load(pid)));
    if (r)
      cvi_.register_pointer(pid, *r);
    else
      cvi_.unregister_pointer(pid);
  }

  // ------------------------------------------------------------ control

  bool recording(const instrument::InstructionTags& tags) const {
    return session_open() && tags.control && tags.control->ops.count(session_->op_id());
  }

  void record_branch(const instrument::InstructionTags& tags, bool taken) {
    if (recording(tags))
      session_->record_branch(taken);
  }

  void record_indirect(const instrument::InstructionTags& tags, std::uint64_t dest) {
    if (!recording(tags))
      return;
    session_->record_indirect(dest);
    if (!session_->in_interrupt())
      r_.indirect_log.push_back(dest);
  }

  void jump_to_block(int block) { pc_ = p_.functions[loc_.function].blocks[block].start(); }

  void jump_to(std::uint64_t dest, const char* what) {
    if (!p_.is_code_address(dest))
      throw MachineFault{fmt::format("{} to non-code address {:#x}", what, dest)};
    pc_ = dest;
  }

  bool in_handler() const { return handler_frame_ >= 0; }
  bool session_open() const { return session_ && !r_.session_completed && !session_aborted_; }

  void deliver_interrupt() {
    if (in_handler() || next_irq_ >= schedule_.size() || schedule_[next_irq_].at_step > r_.steps)
      return;
    const auto ev = schedule_[next_irq_++];
    std::optional<int> h = ev.handler;
    if (!h) {
      const auto it = p_.interrupt_vector.find(static_cast<int>(ev.irq));
      if (it == p_.interrupt_vector.end())
        return;
      h = it->second;
    }
    push_frame(*h, 0, 0, true, pc_, {});
    handler_frame_ = static_cast<int>(frames_.size()) - 1;
    pc_ = p_.functions[*h].entry();
    if (session_open()) {
      session_->begin_interrupt(ev.irq, pc_);
      child_open_ = true;
    }
  }

  void apply_faults() {
    const auto n = ++occurrences_[pc_];
    for (const auto& f : opt_.faults) {
      if (f.trigger != pc_ || f.occurrence != n)
        continue;
      switch (f.action) {
      case FaultSpec::Action::OverwriteReturn:
        store(ret_slot(top()), f.value);
        break;
      case FaultSpec::Action::OverwriteVar: {
        const auto v = p_.resolve_var(f.var);
        if (!v)
          throw MachineFault{fmt::format("fault names unknown variable '{}'", f.var)};
        store(frame_addr(*v) + static_cast<std::uint64_t>(f.index), f.value);
        break;
      }
      case FaultSpec::Action::OverwriteIndirectTarget: {
        const auto* ins = p_.instruction_at(f.site);
        if (!ins || !ins->lhs.is_var())
          throw MachineFault{fmt::format("fault site {:#x} is not an indirect transfer", f.site)};
        store(frame_addr(ins->lhs.var), f.value);
        break;
      }
      }
    }
  }

  // Address of a variable in the innermost live frame of its function.
  std::uint64_t frame_addr(VarRef v) const {
    if (v.is_global())
      return global_addr_[v.slot];
    for (auto it = frames_.rbegin(); it != frames_.rend(); ++it)
      if (it->function == v.scope)
        return it->base + slot_off_[v.scope][v.slot];
    throw MachineFault{fmt::format("no live frame of '{}'", p_.functions[v.scope].name)};
  }

  void close_session(measure::SegmentKind kind) {
    r_.segments = session_->finalize(cvi_, kind);
    if (kind == measure::SegmentKind::Final)
      r_.session_completed = true;
    else
      session_aborted_ = true;
  }

  void pop_frame() {
    const bool was_interrupt = top().interrupt;
    frames_.pop_back();
    if (was_interrupt) {
      handler_frame_ = -1;
      if (child_open_) {
        session_->end_interrupt();
        child_open_ = false;
      }
    }
    if (session_open() && frames_.size() < session_depth_)
      close_session(measure::SegmentKind::Aborted);
  }

  // ------------------------------------------------------------ execution

  void step() {
    const auto loc = p_.locate(pc_);
    loc_ = *loc;
    const auto& ins = p_.instruction(loc_);
    const auto& tags = ip_.at(pc_);
    ++r_.steps;
    if (session_open() && !in_handler())
      r_.path.push_back(pc_);

    // define ids are fixed before the instruction writes anything
    std::vector<std::pair<const DataTag*, std::vector<std::uint64_t>>> defs;
    fire_uses(ins, tags);
    for (const auto& t : tags.defines)
      defs.push_back({&t, tag_ids(t, ins)});

    const CodeAddr here = pc_;
    pc_ = here + ir::kCodeStride;
    execute(ins, tags);

    for (const auto& [t, ids] : defs) {
      for (auto id : ids)
        cvi_.define(id, load(id));
      if (t->critical_pointer && t->access == analysis::Access::Direct)
        refresh_pointee(t->var, &ins);
    }
  }

  void execute(const ir::Instruction& ins, const instrument::InstructionTags& tags) {
    switch (ins.op) {
    case Opcode::Assign:
      store(var_addr(ins.dest), value(ins.lhs));
      break;
    case Opcode::BinOp:
      store(var_addr(ins.dest), binop(ins.binop, value(ins.lhs), value(ins.rhs)));
      break;
    case Opcode::Load:
      store(var_addr(ins.dest), load(mem_addr(ins.mem)));
      break;
    case Opcode::Store: {
      const auto v = value(ins.lhs);
      store(mem_addr(ins.mem), v);
      break;
    }
    case Opcode::AddressOf:
      store(var_addr(ins.dest), static_cast<std::int64_t>(var_addr(ins.mem.base)));
      break;
    case Opcode::GetElement:
      store(var_addr(ins.dest), static_cast<std::int64_t>(mem_addr(ins.mem)));
      break;
    case Opcode::Input:
      store(var_addr(ins.dest), input_pos_ < opt_.inputs.size() ? opt_.inputs[input_pos_++] : 0);
      break;
    case Opcode::Output:
      r_.outputs.push_back(value(ins.lhs));
      break;
    case Opcode::AttestBegin:
      if (!session_ && !in_handler()) {
        session_.emplace(static_cast<std::uint32_t>(ins.op_id), opt_.nonce, opt_.key, opt_.session);
        session_depth_ = frames_.size();
        r_.attested_op = static_cast<std::uint32_t>(ins.op_id);
        r_.path.push_back(ins.addr);
      }
      break;
    case Opcode::AttestEnd:
      if (session_open() && !in_handler() &&
          session_->op_id() == static_cast<std::uint32_t>(ins.op_id) && frames_.size() == session_depth_)
        close_session(measure::SegmentKind::Final);
      break;
    case Opcode::CondBranch: {
      const bool taken = binop(ins.binop, value(ins.lhs), value(ins.rhs)) != 0;
      record_branch(tags, taken);
      jump_to_block(taken ? ins.target : ins.alt_target);
      break;
    }
    case Opcode::DirectJump:
      jump_to_block(ins.target);
      break;
    case Opcode::IndirectJump: {
      const auto dest = static_cast<std::uint64_t>(value(ins.lhs));
      record_indirect(tags, dest);
      jump_to(dest, "indirect jump");
      break;
    }
    case Opcode::DirectCall:
    case Opcode::IndirectCall: {
      std::vector<std::int64_t> args;
      for (const auto& a : ins.args)
        args.push_back(value(a));
      const auto cont = p_.functions[loc_.function].blocks[ins.target].start();
      std::uint64_t dest;
      if (ins.op == Opcode::DirectCall) {
        dest = p_.functions[ins.callee].entry();
      } else {
        dest = static_cast<std::uint64_t>(value(ins.lhs));
        record_indirect(tags, dest);
      }
      const auto callee = p_.locate(dest);
      if (!callee)
        throw MachineFault{fmt::format("indirect call to non-code address {:#x}", dest)};
      push_frame(callee->function, ins.addr, static_cast<std::int64_t>(cont), false, 0, args);
      pc_ = dest;
      break;
    }
    case Opcode::Return: {
      const auto rv = value(ins.lhs);
      const auto ret = static_cast<std::uint64_t>(load(ret_slot(top())));
      const Frame frame = top();
      if (!frame.interrupt && recording(tags)) {
        session_->record_return(ret);
        if (!session_->in_interrupt())
          r_.return_log.push_back(ret);
      }
      pop_frame();
      if (frames_.empty()) {
        stopped_ = true;
        break;
      }
      if (frame.interrupt) {
        pc_ = frame.resume;
        break;
      }
      if (frame.call_site) {
        const auto& call = *p_.instruction_at(frame.call_site);
        if (call.dest.valid()) {
          store(var_addr(call.dest), rv);
          for (const auto& t : ip_.at(frame.call_site).call_results) {
            const auto id = var_addr(t.var);
            cvi_.define(id, rv);
            if (t.critical_pointer)
              refresh_pointee(t.var, nullptr);
          }
        }
      }
      jump_to(ret, "return");
      break;
    }
    case Opcode::Halt:
      stopped_ = true;
      break;
    }
  }

  const instrument::InstrumentedProgram& ip_;
  const ir::Program& p_;
  const RunOptions& opt_;

  std::vector<std::uint64_t> global_addr_;
  std::vector<std::int64_t> globals_;
  std::vector<std::int64_t> stack_;
  std::vector<std::vector<std::uint64_t>> slot_off_;
  std::vector<std::uint64_t> frame_words_;
  std::vector<Frame> frames_;

  CodeAddr pc_ = 0;
  ir::CodeLoc loc_;
  bool stopped_ = false;
  std::size_t input_pos_ = 0;
  std::map<CodeAddr, std::uint32_t> occurrences_;
  std::vector<InterruptEvent> schedule_;
  std::size_t next_irq_ = 0;
  int handler_frame_ = -1;
  bool child_open_ = false;

  std::optional<measure::MeasurementSession> session_;
  std::size_t session_depth_ = 0;
  bool session_aborted_ = false;
  measure::CviState cvi_;
  RunResult r_;
};

} // namespace

RunResult run(const instrument::InstrumentedProgram& program, const RunOptions& options) {
  return Machine(program, options).run();
}

std::size_t evidence_size(const std::vector<Bytes>& segments) {
  std::size_t n = 0;
  for (const auto& s : segments) {
    const auto b = measure::decode(s);
    n += b.trace.byte_size();
    for (const auto& i : b.interrupts)
      n += i.trace.byte_size() + i.h.size();
  }
  return segments.empty() ? 0 : n + sizeof(Digest);
}

EvidenceSizes run_benign_pair(const instrument::InstrumentedProgram& program, const RunOptions& options) {
  EvidenceSizes e;
  RunOptions opt = options;
  opt.session.hash_returns = true;
  e.hashed_run = run(program, opt);
  opt.session.hash_returns = false;
  e.baseline_run = run(program, opt);
  e.hashed = evidence_size(e.hashed_run.segments);
  e.baseline = evidence_size(e.baseline_run.segments);
  e.returns = e.hashed_run.return_log.size();
  return e;
}

std::optional<CodeAddr> resolve_code_location(const ir::Program& program, std::string_view text) {
  std::uint64_t v = 0;
  if (text.starts_with("0x") || text.starts_with("0X")) {
    const auto* end = text.data() + text.size();
    if (std::from_chars(text.data() + 2, end, v, 16).ptr != end)
      return std::nullopt;
    return program.is_code_address(v) ? std::optional<CodeAddr>(v) : std::nullopt;
  }
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    return std::nullopt;
  const auto f = program.find_function(text.substr(0, colon));
  if (!f)
    return std::nullopt;
  auto rest = text.substr(colon + 1);
  std::size_t k = 0;
  if (const auto plus = rest.find('+'); plus != std::string_view::npos) {
    const auto num = rest.substr(plus + 1);
    if (std::from_chars(num.data(), num.data() + num.size(), k).ptr != num.data() + num.size())
      return std::nullopt;
    rest = rest.substr(0, plus);
  }
  const auto& fn = program.functions[*f];
  const auto b = fn.find_block(rest);
  if (!b || k >= fn.blocks[*b].size())
    return std::nullopt;
  return fn.blocks[*b].at(k).addr;
}

} // namespace oei::prover
