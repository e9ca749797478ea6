#include "oei/analysis.hpp"

namespace oei::analysis {

using ir::Opcode;
using ir::Operand;
using ir::VarKind;

const std::set<Loc>& PointsTo::of(VarRef v) const {
  static const std::set<Loc> kEmpty;
  const auto it = pts.find(v);
  return it == pts.end() ? kEmpty : it->second;
}

std::set<VarRef> PointsTo::var_targets(VarRef v) const {
  std::set<VarRef> out;
  for (const auto& l : of(v))
    if (l.kind == Loc::Kind::Var)
      out.insert(l.var);
  return out;
}

namespace {

class Solver {
public:
  explicit Solver(const Program& p) : p_(p) {}

  PointsTo run() {
    collect();
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& [dst, src] : copies_)
        changed |= include(dst, src);
      for (const auto& [dst, ptr] : loads_)
        for (auto o : r_.var_targets(ptr))
          changed |= include(dst, o);
      for (const auto& [ptr, src] : stores_)
        for (auto o : r_.var_targets(ptr))
          changed |= include(o, src);
      for (const auto* call : direct_calls_)
        changed |= bind_call(*call, call->callee);
      for (const auto* call : indirect_calls_)
        for (const auto& l : std::set<Loc>(r_.of(call->lhs.var)))
          if (l.kind == Loc::Kind::Function)
            changed |= bind_call(*call, l.function);
    }
    return std::move(r_);
  }

private:
  bool add(VarRef v, const Loc& l) { return r_.pts[v].insert(l).second; }

  bool include(VarRef dst, VarRef src) {
    if (dst == src)
      return false;
    bool changed = false;
    for (const auto& l : std::set<Loc>(r_.of(src)))
      changed |= add(dst, l);
    return changed;
  }

  // Flows the value of `o` into `dst`.
  void flow(VarRef dst, const Operand& o, int fn) {
    switch (o.kind) {
    case Operand::Kind::Var:
      copies_.push_back({dst, o.var});
      break;
    case Operand::Kind::FunctionAddr:
      add(dst, {Loc::Kind::Function, {}, o.target, -1});
      break;
    case Operand::Kind::LabelAddr:
      add(dst, {Loc::Kind::Label, {}, fn, o.target});
      break;
    default:
      break;
    }
  }

  void note_address_taken(const Operand& o, int fn) {
    if (o.kind == Operand::Kind::FunctionAddr)
      r_.address_taken_functions.insert(o.target);
    if (o.kind == Operand::Kind::LabelAddr)
      r_.address_taken_labels[fn].insert(o.target);
  }

  bool bind_call(const ir::Instruction& call, int callee) {
    bool changed = false;
    const auto& fn = p_.functions[callee];
    for (std::size_t a = 0; a < call.args.size() && a < fn.params.size(); ++a) {
      const VarRef param{callee, static_cast<int>(a)};
      const auto& arg = call.args[a];
      if (arg.is_var())
        changed |= include(param, arg.var);
      else if (arg.kind == Operand::Kind::FunctionAddr)
        changed |= add(param, {Loc::Kind::Function, {}, arg.target, -1});
      else if (arg.kind == Operand::Kind::LabelAddr)
        changed |= add(param, {Loc::Kind::Label, {}, caller_of(call), arg.target});
    }
    if (call.dest.valid()) {
      for (const auto& r : rets_[callee]) {
        if (r.is_var())
          changed |= include(call.dest, r.var);
        else if (r.kind == Operand::Kind::FunctionAddr)
          changed |= add(call.dest, {Loc::Kind::Function, {}, r.target, -1});
      }
    }
    return changed;
  }

  int caller_of(const ir::Instruction& call) const { return p_.locate(call.addr)->function; }

  void collect() {
    for (std::size_t g = 0; g < p_.globals.size(); ++g) {
      const VarRef v{ir::kGlobalScope, static_cast<int>(g)};
      for (const auto& in : p_.globals[g].init) {
        if (in.kind == ir::Initializer::Kind::FunctionAddr) {
          add(v, {Loc::Kind::Function, {}, in.function, -1});
          r_.address_taken_functions.insert(in.function);
        } else if (in.kind == ir::Initializer::Kind::VarAddr) {
          add(v, {Loc::Kind::Var, in.var, -1, -1});
        }
      }
    }
    rets_.resize(p_.functions.size());
    for (std::size_t f = 0; f < p_.functions.size(); ++f)
      for (const auto& bb : p_.functions[f].blocks)
        if (bb.terminator.op == Opcode::Return && bb.terminator.lhs.kind != Operand::Kind::None)
          rets_[f].push_back(bb.terminator.lhs);

    for (std::size_t f = 0; f < p_.functions.size(); ++f) {
      const int fn = static_cast<int>(f);
      for (const auto& bb : p_.functions[f].blocks) {
        for (std::size_t i = 0; i < bb.size(); ++i) {
          const auto& ins = bb.at(i);
          note_address_taken(ins.lhs, fn);
          note_address_taken(ins.rhs, fn);
          for (const auto& a : ins.args)
            note_address_taken(a, fn);
          instruction(ins, fn);
        }
      }
    }
  }

  bool is_array(VarRef v) const { return p_.decl(v).kind == VarKind::Array; }

  void instruction(const ir::Instruction& ins, int fn) {
    switch (ins.op) {
    case Opcode::Assign:
      flow(ins.dest, ins.lhs, fn);
      break;
    case Opcode::BinOp:
      flow(ins.dest, ins.lhs, fn);
      flow(ins.dest, ins.rhs, fn);
      break;
    case Opcode::Load:
      if (is_array(ins.mem.base))
        copies_.push_back({ins.dest, ins.mem.base});
      else
        loads_.push_back({ins.dest, ins.mem.base});
      break;
    case Opcode::Store:
      if (is_array(ins.mem.base)) {
        flow(ins.mem.base, ins.lhs, fn);
      } else if (ins.lhs.is_var()) {
        stores_.push_back({ins.mem.base, ins.lhs.var});
      } else if (ins.lhs.kind == Operand::Kind::FunctionAddr || ins.lhs.kind == Operand::Kind::LabelAddr) {
        // a constant code address stored through a pointer: route it through a synthetic source
        const VarRef tmp{-2 - static_cast<int>(synthetic_.size()), 0};
        synthetic_.push_back(tmp);
        flow(tmp, ins.lhs, fn);
        stores_.push_back({ins.mem.base, tmp});
      }
      break;
    case Opcode::AddressOf:
      add(ins.dest, {Loc::Kind::Var, ins.mem.base, -1, -1});
      break;
    case Opcode::GetElement:
      if (is_array(ins.mem.base))
        add(ins.dest, {Loc::Kind::Var, ins.mem.base, -1, -1});
      else
        copies_.push_back({ins.dest, ins.mem.base});
      break;
    case Opcode::DirectCall:
      direct_calls_.push_back(&ins);
      break;
    case Opcode::IndirectCall:
      indirect_calls_.push_back(&ins);
      break;
    default:
      break;
    }
  }

  const Program& p_;
  PointsTo r_;
  std::vector<std::pair<VarRef, VarRef>> copies_; // dst <- src
  std::vector<std::pair<VarRef, VarRef>> loads_;  // dst <- *ptr
  std::vector<std::pair<VarRef, VarRef>> stores_; // *ptr <- src
  std::vector<std::vector<Operand>> rets_;
  std::vector<const ir::Instruction*> indirect_calls_;
  std::vector<const ir::Instruction*> direct_calls_;
  std::vector<VarRef> synthetic_;
};

} // namespace

PointsTo points_to(const Program& program) {
  auto r = Solver(program).run();
  // drop synthetic store sources
  for (auto it = r.pts.begin(); it != r.pts.end();)
    it = it->first.scope <= -2 ? r.pts.erase(it) : std::next(it);
  return r;
}

TargetSets compute_target_sets(const Program& program, const PointsTo& pts) {
  TargetSets t;
  for (std::size_t f = 0; f < program.functions.size(); ++f) {
    const auto& fn = program.functions[f];
    for (const auto& bb : fn.blocks) {
      const auto& ins = bb.terminator;
      if (ins.op == Opcode::IndirectCall) {
        std::set<int> callees;
        if (ins.lhs.is_var())
          for (const auto& l : pts.of(ins.lhs.var))
            if (l.kind == Loc::Kind::Function)
              callees.insert(l.function);
        if (callees.empty())
          callees = pts.address_taken_functions;
        auto& dst = t.targets[ins.addr];
        for (int c : callees)
          dst.insert(program.functions[c].entry());
      } else if (ins.op == Opcode::IndirectJump) {
        std::set<int> blocks;
        if (ins.lhs.is_var())
          for (const auto& l : pts.of(ins.lhs.var))
            if (l.kind == Loc::Kind::Label && l.function == static_cast<int>(f))
              blocks.insert(l.block);
        if (blocks.empty() && pts.address_taken_labels.count(static_cast<int>(f)))
          blocks = pts.address_taken_labels.at(static_cast<int>(f));
        auto& dst = t.targets[ins.addr];
        for (int b : blocks)
          dst.insert(fn.blocks[b].start());
      }
    }
  }
  return t;
}

const std::set<CodeAddr>& TargetSets::at(CodeAddr site) const {
  static const std::set<CodeAddr> kEmpty;
  const auto it = targets.find(site);
  return it == targets.end() ? kEmpty : it->second;
}

bool TargetSets::allows(CodeAddr site, CodeAddr dest) const { return at(site).count(dest) != 0; }

} // namespace oei::analysis
