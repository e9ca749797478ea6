#include "oei/analysis.hpp"

namespace oei::analysis {

using ir::Opcode;
using ir::Operand;
using ir::VarKind;

std::string_view provenance_name(Provenance p) {
  switch (p) {
  case Provenance::ControlDependent: return "control-dependent";
  case Provenance::Annotated: return "annotated";
  case Provenance::PointerExpansion: return "pointer-expansion";
  case Provenance::DependencyExpansion: return "dependency-expansion";
  }
  return "?";
}

std::set<VarRef> detect_control_dependent_vars(const Program& program) {
  std::set<VarRef> out;
  for (const auto& fn : program.functions)
    for (const auto& bb : fn.blocks)
      if (bb.terminator.op == Opcode::CondBranch)
        for (const auto* o : {&bb.terminator.lhs, &bb.terminator.rhs})
          if (o->is_var())
            out.insert(o->var);
  return out;
}

std::set<VarRef> annotated_vars(const Program& program) {
  std::set<VarRef> out;
  for (std::size_t g = 0; g < program.globals.size(); ++g)
    if (program.globals[g].critical)
      out.insert({ir::kGlobalScope, static_cast<int>(g)});
  for (std::size_t f = 0; f < program.functions.size(); ++f)
    for (int s = 0; s < program.functions[f].slot_count(); ++s)
      if (program.functions[f].slot(s).critical)
        out.insert({static_cast<int>(f), s});
  return out;
}

namespace {

using DepMap = std::map<VarRef, std::set<VarRef>>;

void add_operand(std::set<VarRef>& s, const Operand& o) {
  if (o.is_var())
    s.insert(o.var);
}

// Backward data dependences: for each variable, the variables whose values
// may flow into one of its definitions.
DepMap data_dependences(const Program& p, const PointsTo& pts) {
  DepMap deps;
  std::vector<std::set<VarRef>> ret_vars(p.functions.size());
  for (std::size_t f = 0; f < p.functions.size(); ++f)
    for (const auto& bb : p.functions[f].blocks)
      if (bb.terminator.op == Opcode::Return)
        add_operand(ret_vars[f], bb.terminator.lhs);

  auto bind_call = [&](const ir::Instruction& call, int callee) {
    const auto& fn = p.functions[callee];
    for (std::size_t a = 0; a < call.args.size() && a < fn.params.size(); ++a)
      add_operand(deps[{callee, static_cast<int>(a)}], call.args[a]);
    if (call.dest.valid())
      deps[call.dest].insert(ret_vars[callee].begin(), ret_vars[callee].end());
  };

  for (const auto& fn : p.functions) {
    for (const auto& bb : fn.blocks) {
      for (std::size_t i = 0; i < bb.size(); ++i) {
        const auto& ins = bb.at(i);
        const auto base = ins.mem.base;
        switch (ins.op) {
        case Opcode::Assign:
        case Opcode::BinOp:
          add_operand(deps[ins.dest], ins.lhs);
          add_operand(deps[ins.dest], ins.rhs);
          break;
        case Opcode::Load: {
          auto& d = deps[ins.dest];
          add_operand(d, ins.mem.index);
          d.insert(base);
          if (p.decl(base).kind == VarKind::Pointer)
            for (auto o : pts.var_targets(base))
              d.insert(o);
          break;
        }
        case Opcode::Store: {
          std::set<VarRef> written;
          if (p.decl(base).kind == VarKind::Array)
            written.insert(base);
          else
            written = pts.var_targets(base);
          for (auto w : written) {
            auto& d = deps[w];
            add_operand(d, ins.lhs);
            add_operand(d, ins.mem.index);
            if (p.decl(base).kind == VarKind::Pointer)
              d.insert(base);
          }
          break;
        }
        case Opcode::GetElement:
          add_operand(deps[ins.dest], ins.mem.index);
          if (p.decl(base).kind == VarKind::Pointer)
            deps[ins.dest].insert(base);
          break;
        case Opcode::DirectCall:
          bind_call(ins, ins.callee);
          break;
        case Opcode::IndirectCall:
          for (const auto& l : pts.of(ins.lhs.var))
            if (l.kind == Loc::Kind::Function)
              bind_call(ins, l.function);
          if (!std::any_of(pts.of(ins.lhs.var).begin(), pts.of(ins.lhs.var).end(),
                           [](const Loc& l) { return l.kind == Loc::Kind::Function; }))
            for (int c : pts.address_taken_functions)
              bind_call(ins, c);
          break;
        default:
          break;
        }
      }
    }
  }
  for (auto& [v, d] : deps)
    d.erase(v);
  return deps;
}

bool add_member(CriticalSet& cs, VarRef v, Provenance why) {
  if (!cs.variables.insert(v).second)
    return false;
  cs.provenance.emplace(v, why);
  return true;
}

std::vector<VarRef> pointer_vars(const Program& p) {
  std::vector<VarRef> out;
  for (std::size_t g = 0; g < p.globals.size(); ++g)
    if (p.globals[g].kind == VarKind::Pointer)
      out.push_back({ir::kGlobalScope, static_cast<int>(g)});
  for (std::size_t f = 0; f < p.functions.size(); ++f)
    for (int s = 0; s < p.functions[f].slot_count(); ++s)
      if (p.functions[f].slot(s).kind == VarKind::Pointer)
        out.push_back({static_cast<int>(f), s});
  return out;
}

} // namespace

CriticalSet expand_critical_set(const Program& program, const CriticalSet& initial, const PointsTo& pts) {
  const auto deps = data_dependences(program, pts);
  const auto pointers = pointer_vars(program);
  CriticalSet cs = initial;
  cs.iterations = 0;
  for (bool changed = true; changed;) {
    changed = false;
    ++cs.iterations;
    const auto snapshot = cs.variables;
    for (auto ptr : pointers) {
      if (cs.pointers.count(ptr))
        continue;
      const auto targets = pts.var_targets(ptr);
      if (std::any_of(targets.begin(), targets.end(), [&](VarRef t) { return snapshot.count(t) != 0; })) {
        cs.pointers.insert(ptr);
        add_member(cs, ptr, Provenance::PointerExpansion);
        changed = true;
      }
    }
    for (auto ptr : std::set<VarRef>(cs.pointers))
      for (auto t : pts.var_targets(ptr))
        changed |= add_member(cs, t, Provenance::PointerExpansion);
    for (auto v : snapshot) {
      const auto it = deps.find(v);
      if (it != deps.end())
        for (auto d : it->second)
          changed |= add_member(cs, d, Provenance::DependencyExpansion);
    }
  }
  return cs;
}

CriticalSet expand_critical_set(const Program& program, const std::set<VarRef>& initial, const PointsTo& pts) {
  CriticalSet cs;
  for (auto v : initial)
    add_member(cs, v, Provenance::Annotated);
  return expand_critical_set(program, cs, pts);
}

CriticalSet critical_variables(const Program& program, const PointsTo& pts) {
  CriticalSet cs;
  for (auto v : annotated_vars(program))
    add_member(cs, v, Provenance::Annotated);
  for (auto v : detect_control_dependent_vars(program))
    add_member(cs, v, Provenance::ControlDependent);
  return expand_critical_set(program, cs, pts);
}

} // namespace oei::analysis
