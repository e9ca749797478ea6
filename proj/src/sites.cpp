#include "oei/analysis.hpp"

#include <deque>

namespace oei::analysis {

using ir::Opcode;
using ir::Operand;
using ir::VarKind;

std::string_view control_kind_name(ControlKind k) {
  switch (k) {
  case ControlKind::CondBranch: return "cond-branch";
  case ControlKind::IndirectCall: return "indirect-call";
  case ControlKind::IndirectJump: return "indirect-jump";
  case ControlKind::Return: return "return";
  }
  return "?";
}

std::string_view data_kind_name(DataKind k) { return k == DataKind::Define ? "define" : "use"; }

std::string_view access_name(Access a) {
  switch (a) {
  case Access::Direct: return "direct";
  case Access::Element: return "element";
  case Access::ViaPointer: return "via-pointer";
  }
  return "?";
}

std::string_view role_name(Role r) {
  switch (r) {
  case Role::Operand: return "operand";
  case Role::Entry: return "entry";
  case Role::CallResult: return "call-result";
  }
  return "?";
}

namespace {

void instruction_accesses(const Program& p, const ir::Instruction& ins, std::set<DataSite>& out) {
  const auto use = [&](const Operand& o) {
    if (o.is_var())
      out.insert({ins.addr, DataKind::Use, o.var, Access::Direct, Role::Operand});
  };
  const auto define = [&](VarRef v, Role role) {
    if (v.valid())
      out.insert({ins.addr, DataKind::Define, v, Access::Direct, role});
  };
  // Load/Store/GetElement touch `mem`; the pointer itself is read as well.
  const auto memory = [&](DataKind kind) {
    use(ins.mem.index);
    const auto base = ins.mem.base;
    if (p.decl(base).kind == VarKind::Array) {
      out.insert({ins.addr, kind, base, Access::Element, Role::Operand});
    } else {
      out.insert({ins.addr, DataKind::Use, base, Access::Direct, Role::Operand});
      out.insert({ins.addr, kind, base, Access::ViaPointer, Role::Operand});
    }
  };

  switch (ins.op) {
  case Opcode::Assign:
  case Opcode::BinOp:
    use(ins.lhs);
    use(ins.rhs);
    define(ins.dest, Role::Operand);
    break;
  case Opcode::Load:
    memory(DataKind::Use);
    define(ins.dest, Role::Operand);
    break;
  case Opcode::Store:
    use(ins.lhs);
    memory(DataKind::Define);
    break;
  case Opcode::AddressOf:
    define(ins.dest, Role::Operand);
    break;
  case Opcode::GetElement:
    use(ins.mem.index);
    if (p.decl(ins.mem.base).kind == VarKind::Pointer)
      use(Operand::variable(ins.mem.base, {}));
    define(ins.dest, Role::Operand);
    break;
  case Opcode::Input:
    define(ins.dest, Role::Operand);
    break;
  case Opcode::Output:
  case Opcode::CondBranch:
  case Opcode::IndirectJump:
  case Opcode::Return:
    use(ins.lhs);
    use(ins.rhs);
    break;
  case Opcode::DirectCall:
  case Opcode::IndirectCall:
    use(ins.lhs);
    for (const auto& a : ins.args)
      use(a);
    define(ins.dest, Role::CallResult);
    break;
  default:
    break;
  }
}

} // namespace

std::vector<DataSite> memory_accesses(const Program& program) {
  std::set<DataSite> all;
  for (std::size_t f = 0; f < program.functions.size(); ++f) {
    const auto& fn = program.functions[f];
    for (int s = 0; s < fn.slot_count(); ++s)
      all.insert({fn.entry(), DataKind::Define, VarRef{static_cast<int>(f), s}, Access::Direct, Role::Entry});
    for (const auto& bb : fn.blocks)
      for (std::size_t i = 0; i < bb.size(); ++i)
        instruction_accesses(program, bb.at(i), all);
  }
  return {all.begin(), all.end()};
}

std::size_t count_address_based_sites(const Program& program) { return memory_accesses(program).size(); }

std::set<CodeAddr> operation_region(const Program& program, const OperationScope& scope, const TargetSets& targets) {
  std::set<CodeAddr> region;
  std::set<int> callees;
  std::deque<int> pending_fns;
  const auto call_targets = [&](const ir::Instruction& t) {
    if (t.op == Opcode::DirectCall) {
      if (callees.insert(t.callee).second)
        pending_fns.push_back(t.callee);
    } else if (t.op == Opcode::IndirectCall) {
      for (auto a : targets.at(t.addr)) {
        const auto loc = program.locate(a);
        if (loc && callees.insert(loc->function).second)
          pending_fns.push_back(loc->function);
      }
    }
  };

  // Intra-procedural walk from the begin marker, stopping at the end marker.
  const auto& fn = program.functions[scope.function];
  std::set<int> seen_blocks;
  std::deque<std::pair<int, int>> work{{scope.begin.block, scope.begin.index}};
  while (!work.empty()) {
    auto [b, start] = work.front();
    work.pop_front();
    const auto& bb = fn.blocks[b];
    bool stopped = false;
    for (std::size_t i = start; i < bb.size(); ++i) {
      region.insert(bb.at(i).addr);
      if (b == scope.end.block && static_cast<int>(i) == scope.end.index) {
        stopped = true;
        break;
      }
    }
    if (stopped)
      continue;
    const auto& t = bb.terminator;
    std::vector<int> next;
    switch (t.op) {
    case Opcode::CondBranch:
      next = {t.target, t.alt_target};
      break;
    case Opcode::DirectJump:
      next = {t.target};
      break;
    case Opcode::IndirectJump:
      for (auto a : targets.at(t.addr))
        if (auto loc = program.locate(a); loc && loc->function == scope.function)
          next.push_back(loc->block);
      break;
    case Opcode::DirectCall:
    case Opcode::IndirectCall:
      call_targets(t);
      next = {t.target};
      break;
    default:
      break;
    }
    for (int n : next)
      if (seen_blocks.insert(n).second)
        work.push_back({n, 0});
  }

  for (const auto& [irq, h] : program.interrupt_vector)
    if (callees.insert(h).second)
      pending_fns.push_back(h);
  while (!pending_fns.empty()) {
    const int f = pending_fns.front();
    pending_fns.pop_front();
    for (const auto& bb : program.functions[f].blocks) {
      for (std::size_t i = 0; i < bb.size(); ++i)
        region.insert(bb.at(i).addr);
      call_targets(bb.terminator);
    }
  }
  return region;
}

SiteList select_sites(const Program& program, const std::vector<OperationScope>& scopes,
                      const CriticalSet& critical, const TargetSets& targets) {
  SiteList sites;
  std::map<CodeAddr, ControlSite> control;
  for (const auto& scope : scopes) {
    for (auto addr : operation_region(program, scope, targets)) {
      const auto* ins = program.instruction_at(addr);
      std::optional<ControlKind> kind;
      switch (ins->op) {
      case Opcode::CondBranch: kind = ControlKind::CondBranch; break;
      case Opcode::IndirectCall: kind = ControlKind::IndirectCall; break;
      case Opcode::IndirectJump: kind = ControlKind::IndirectJump; break;
      case Opcode::Return: kind = ControlKind::Return; break;
      default: break;
      }
      if (!kind)
        continue;
      auto& s = control[addr];
      s.addr = addr;
      s.kind = *kind;
      s.ops.insert(scope.op_id);
    }
  }
  for (auto& [a, s] : control)
    sites.control.push_back(std::move(s));

  for (const auto& d : memory_accesses(program)) {
    const bool hit = d.access == Access::ViaPointer ? critical.is_pointer(d.var) : critical.contains(d.var);
    if (hit)
      sites.data.push_back(d);
  }
  return sites;
}

Analysis analyze(const Program& program) {
  Analysis a;
  a.pts = points_to(program);
  a.targets = compute_target_sets(program, a.pts);
  a.cfgs = build_cfg(program, a.targets);
  auto scopes = check_operation_scopes(program, a.cfgs);
  a.scopes = std::move(scopes.scopes);
  a.diagnostics = std::move(scopes.diagnostics);
  a.critical = critical_variables(program, a.pts);
  a.sites = select_sites(program, a.scopes, a.critical, a.targets);
  return a;
}

} // namespace oei::analysis
