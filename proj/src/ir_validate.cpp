#include "oei/ir.hpp"

#include <fmt/format.h>

namespace oei::ir {
namespace {

class Validator {
public:
  explicit Validator(const Program& p) : p_(p) {}

  std::vector<Diagnostic> run() {
    if (p_.entry < 0 || p_.entry >= static_cast<int>(p_.functions.size())) {
      add({}, "program has no entry function");
    } else if (!p_.functions[p_.entry].params.empty()) {
      add(p_.functions[p_.entry].loc, fmt::format("entry function '{}' must not take parameters",
                                                  p_.functions[p_.entry].name));
    }
    for (const auto& g : p_.globals)
      global(g);
    for (const auto& [irq, f] : p_.interrupt_vector)
      if (!p_.functions[f].params.empty())
        add(p_.functions[f].loc, fmt::format("interrupt handler '{}' for irq {} must not take parameters",
                                             p_.functions[f].name, irq));
    for (std::size_t f = 0; f < p_.functions.size(); ++f)
      function(static_cast<int>(f));
    markers();
    return std::move(out_);
  }

private:
  void add(const SourceLoc& loc, std::string msg) { out_.push_back({loc, std::move(msg)}); }

  void decl(const VarDecl& d) {
    if (d.kind == VarKind::Array && d.length <= 0)
      add(d.loc, fmt::format("array '{}' must have a positive length", d.name));
    if (d.kind != VarKind::Array && d.length != 1)
      add(d.loc, fmt::format("'{}' is not an array but has length {}", d.name, d.length));
  }

  void global(const VarDecl& g) {
    decl(g);
    if (g.kind != VarKind::Array && g.init.size() > 1)
      add(g.loc, fmt::format("'@{}' has more than one initializer", g.name));
    if (g.kind == VarKind::Array && static_cast<std::int64_t>(g.init.size()) > g.length)
      add(g.loc, fmt::format("'@{}' has {} initializers for {} elements", g.name, g.init.size(), g.length));
    for (const auto& in : g.init) {
      if (in.kind != Initializer::Kind::VarAddr || !in.var.valid())
        continue;
      const auto& target = p_.decl(in.var);
      if (in.value < 0 || in.value >= target.length)
        add(g.loc, fmt::format("initializer '&@{}[{}]' is out of bounds", target.name, in.value));
      if (g.kind == VarKind::Scalar)
        add(g.loc, fmt::format("data address stored in non-pointer '@{}'", g.name));
    }
  }

  const VarDecl& d(VarRef v) const { return p_.decl(v); }

  void value_operand(const Instruction& i, const Operand& o, std::string_view role) {
    if (o.is_var() && d(o.var).kind == VarKind::Array)
      add(i.loc, fmt::format("array '{}' used as a value in {}", p_.var_name(o.var), role));
    if (o.kind == Operand::Kind::LabelAddr && o.target < 0)
      add(i.loc, fmt::format("unresolved label '{}'", o.name));
  }

  void function(int f) {
    const auto& fn = p_.functions[f];
    for (const auto& pd : fn.params) {
      decl(pd);
      if (pd.kind == VarKind::Array)
        add(pd.loc, fmt::format("parameter '{}' cannot be an array", pd.name));
    }
    for (const auto& l : fn.locals)
      decl(l);
    if (fn.blocks.empty())
      add(fn.loc, fmt::format("function '{}' has no basic blocks", fn.name));
    for (const auto& bb : fn.blocks) {
      for (const auto& i : bb.body) {
        if (is_terminator(i.op))
          add(i.loc, fmt::format("terminator '{}' in the middle of block '{}'", opcode_name(i.op), bb.label));
        instruction(fn, i);
      }
      if (!is_terminator(bb.terminator.op))
        add(bb.terminator.loc, fmt::format("block '{}' does not end with a terminator", bb.label));
      instruction(fn, bb.terminator);
    }
  }

  void instruction(const Function& fn, const Instruction& i) {
    if (i.dest.valid() && d(i.dest).kind == VarKind::Array)
      add(i.loc, fmt::format("cannot assign to array '{}'", p_.var_name(i.dest)));
    value_operand(i, i.lhs, opcode_name(i.op));
    value_operand(i, i.rhs, opcode_name(i.op));
    value_operand(i, i.mem.index, "an index");
    for (const auto& a : i.args)
      value_operand(i, a, "a call argument");

    switch (i.op) {
    case Opcode::Load:
    case Opcode::Store: {
      const auto& base = d(i.mem.base);
      if (base.kind == VarKind::Scalar)
        add(i.loc, fmt::format("cannot dereference non-pointer '{}'", p_.var_name(i.mem.base)));
      if (base.kind == VarKind::Array && i.mem.index.kind == Operand::Kind::None)
        add(i.loc, fmt::format("array '{}' accessed without an index", p_.var_name(i.mem.base)));
      break;
    }
    case Opcode::AddressOf:
    case Opcode::GetElement:
      if (d(i.dest).kind != VarKind::Pointer)
        add(i.loc, fmt::format("address stored in non-pointer '{}'", p_.var_name(i.dest)));
      if (i.op == Opcode::GetElement && d(i.mem.base).kind == VarKind::Scalar)
        add(i.loc, fmt::format("element of non-array '{}'", p_.var_name(i.mem.base)));
      break;
    case Opcode::DirectCall: {
      const auto& callee = p_.functions.at(i.callee);
      if (callee.params.size() != i.args.size())
        add(i.loc, fmt::format("call to '{}' passes {} arguments, expected {}", callee.name, i.args.size(),
                               callee.params.size()));
      [[fallthrough]];
    }
    case Opcode::IndirectCall:
      if (i.op == Opcode::IndirectCall && !i.lhs.is_var())
        add(i.loc, "call_indirect needs a variable operand");
      if (i.target < 0 || i.target >= static_cast<int>(fn.blocks.size()))
        add(i.loc, "call has no continuation block");
      break;
    case Opcode::IndirectJump:
      if (!i.lhs.is_var())
        add(i.loc, "jump_indirect needs a variable operand");
      break;
    case Opcode::CondBranch:
      if (!is_relational(i.binop))
        add(i.loc, "branch condition must be a comparison");
      if (i.target < 0 || i.alt_target < 0)
        add(i.loc, "branch needs two successor labels");
      break;
    case Opcode::DirectJump:
      if (i.target < 0)
        add(i.loc, "jump has no target");
      break;
    default:
      break;
    }
  }

  void markers() {
    struct Seen {
      std::vector<std::pair<int, const Instruction*>> begins, ends;
    };
    std::map<int, Seen> seen;
    for (std::size_t f = 0; f < p_.functions.size(); ++f) {
      int open = -1;
      for (const auto& bb : p_.functions[f].blocks) {
        for (const auto& i : bb.body) {
          if (i.op == Opcode::AttestBegin) {
            seen[i.op_id].begins.push_back({static_cast<int>(f), &i});
            if (open >= 0)
              add(i.loc, fmt::format("nested operation: operation {} begins inside operation {}", i.op_id, open));
            open = i.op_id;
          } else if (i.op == Opcode::AttestEnd) {
            seen[i.op_id].ends.push_back({static_cast<int>(f), &i});
            if (open >= 0 && open != i.op_id)
              add(i.loc, fmt::format("nested operation: operation {} ends inside operation {}", i.op_id, open));
            if (open == i.op_id)
              open = -1;
          }
        }
      }
    }
    for (const auto& [id, s] : seen) {
      if (s.begins.size() > 1)
        add(s.begins[1].second->loc, fmt::format("duplicate attest_begin for operation {}", id));
      if (s.ends.size() > 1)
        add(s.ends[1].second->loc, fmt::format("duplicate attest_end for operation {}", id));
      if (s.begins.empty())
        add(s.ends.front().second->loc, fmt::format("attest_end {} has no matching attest_begin", id));
      if (s.ends.empty())
        add(s.begins.front().second->loc, fmt::format("attest_begin {} has no matching attest_end", id));
      if (!s.begins.empty() && !s.ends.empty() && s.begins.front().first != s.ends.front().first)
        add(s.ends.front().second->loc,
            fmt::format("markers span functions: operation {} begins in '{}' but ends in '{}'", id,
                        p_.functions[s.begins.front().first].name, p_.functions[s.ends.front().first].name));
    }
  }

  const Program& p_;
  std::vector<Diagnostic> out_;
};

} // namespace

std::vector<Diagnostic> validate(const Program& program) { return Validator(program).run(); }

} // namespace oei::ir
