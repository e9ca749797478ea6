#include "oei/ir.hpp"

#include <fmt/format.h>

namespace oei::ir {
namespace {

class Printer {
public:
  explicit Printer(const Program& p) : p_(p) {}

  std::string run() {
    if (p_.entry >= 0)
      line("entry {}", p_.functions[p_.entry].name);
    for (const auto& g : p_.globals)
      global(g);
    for (const auto& [irq, f] : p_.interrupt_vector)
      line("interrupt {} {}", irq, p_.functions[f].name);
    for (std::size_t f = 0; f < p_.functions.size(); ++f)
      function(static_cast<int>(f));
    return std::move(out_);
  }

private:
  template <typename... Args>
  void line(fmt::format_string<Args...> f, Args&&... args) {
    out_ += fmt::format(f, std::forward<Args>(args)...);
    out_ += '\n';
  }

  static std::string suffix(const VarDecl& d) {
    std::string s;
    if (d.kind == VarKind::Pointer)
      s += ": ptr";
    if (d.critical)
      s += " critical";
    return s;
  }

  std::string initializer(const Initializer& in) const {
    switch (in.kind) {
    case Initializer::Kind::Int: return fmt::format("{}", in.value);
    case Initializer::Kind::FunctionAddr: return "&" + in.name;
    case Initializer::Kind::VarAddr:
      return in.value == 0 ? fmt::format("&@{}", in.name) : fmt::format("&@{}[{}]", in.name, in.value);
    }
    return "?";
  }

  void global(const VarDecl& g) {
    std::string inits;
    for (const auto& in : g.init)
      inits += (inits.empty() ? "" : ", ") + initializer(in);
    const std::string tail = inits.empty() ? "" : " = " + inits;
    if (g.kind == VarKind::Array)
      line("array @{}[{}]{}{}", g.name, g.length, suffix(g), tail);
    else
      line("global @{}{}{}", g.name, suffix(g), tail);
  }

  std::string operand(const Operand& o) const {
    switch (o.kind) {
    case Operand::Kind::None: return "";
    case Operand::Kind::Const: return fmt::format("{}", o.value);
    case Operand::Kind::Var: return (o.var.is_global() ? "@" : "") + p_.decl(o.var).name;
    case Operand::Kind::FunctionAddr: return "&" + p_.functions[o.target].name;
    case Operand::Kind::LabelAddr: return "&&" + p_.functions[fn_].blocks[o.target].label;
    }
    return "?";
  }

  std::string var(VarRef v) const { return operand(Operand::variable(v, {})); }

  std::string mem(const MemRef& m, bool deref_form) const {
    if (m.index.kind == Operand::Kind::None)
      return (deref_form ? "*" : "") + var(m.base);
    return fmt::format("{}[{}]", var(m.base), operand(m.index));
  }

  std::string label(int b) const { return p_.functions[fn_].blocks[b].label; }

  std::string args(const std::vector<Operand>& as) const {
    std::string s;
    for (const auto& a : as)
      s += (s.empty() ? "" : ", ") + operand(a);
    return s;
  }

  std::string instruction(const Instruction& i) const {
    const std::string dest = i.dest.valid() ? var(i.dest) + " = " : "";
    switch (i.op) {
    case Opcode::Assign: return dest + operand(i.lhs);
    case Opcode::BinOp: return fmt::format("{}{} {} {}", dest, operand(i.lhs), binop_symbol(i.binop), operand(i.rhs));
    case Opcode::Load: return dest + mem(i.mem, true);
    case Opcode::Store: return fmt::format("{} = {}", mem(i.mem, true), operand(i.lhs));
    case Opcode::AddressOf:
    case Opcode::GetElement: return dest + "&" + mem(i.mem, false);
    case Opcode::AttestBegin: return fmt::format("attest_begin {}", i.op_id);
    case Opcode::AttestEnd: return fmt::format("attest_end {}", i.op_id);
    case Opcode::Input: return dest + "input";
    case Opcode::Output: return "output " + operand(i.lhs);
    case Opcode::DirectCall:
      return fmt::format("{}call {}({}) -> {}", dest, p_.functions[i.callee].name, args(i.args), label(i.target));
    case Opcode::IndirectCall:
      return fmt::format("{}call_indirect {}({}) -> {}", dest, operand(i.lhs), args(i.args), label(i.target));
    case Opcode::DirectJump: return "jump " + label(i.target);
    case Opcode::IndirectJump: return "jump_indirect " + operand(i.lhs);
    case Opcode::CondBranch:
      return fmt::format("br {} {} {}, {}, {}", operand(i.lhs), binop_symbol(i.binop), operand(i.rhs),
                         label(i.target), label(i.alt_target));
    case Opcode::Return: return i.lhs.kind == Operand::Kind::None ? "ret" : "ret " + operand(i.lhs);
    case Opcode::Halt: return "halt";
    }
    return "?";
  }

  void function(int f) {
    fn_ = f;
    const auto& fn = p_.functions[f];
    std::string params;
    for (const auto& pd : fn.params)
      params += (params.empty() ? "" : ", ") + pd.name + suffix(pd);
    line("");
    line("func {}({}) {{", fn.name, params);
    for (const auto& l : fn.locals) {
      if (l.kind == VarKind::Array)
        line("  array {}[{}]{}", l.name, l.length, suffix(l));
      else
        line("  var {}{}", l.name, suffix(l));
    }
    for (const auto& bb : fn.blocks) {
      line("{}:", bb.label);
      for (const auto& i : bb.body)
        line("  {}", instruction(i));
      line("  {}", instruction(bb.terminator));
    }
    line("}}");
  }

  const Program& p_;
  int fn_ = -1;
  std::string out_;
};

} // namespace

std::string print_program(const Program& program) { return Printer(program).run(); }

} // namespace oei::ir
