#include "oei/ir.hpp"

#include <fmt/format.h>

namespace oei::ir {

std::string Diagnostic::str() const {
  return fmt::format("{}:{}: {}", loc.line, loc.column, message);
}

namespace {
std::string join_diagnostics(const std::vector<Diagnostic>& ds) {
  std::string out;
  for (const auto& d : ds) {
    if (!out.empty())
      out += '\n';
    out += d.str();
  }
  return out;
}
} // namespace

ParseError::ParseError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(join_diagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

Operand Operand::constant(Value v) {
  Operand o;
  o.kind = Kind::Const;
  o.value = v;
  return o;
}

Operand Operand::variable(VarRef v, std::string name) {
  Operand o;
  o.kind = Kind::Var;
  o.var = v;
  o.name = std::move(name);
  return o;
}

bool is_terminator(Opcode op) {
  switch (op) {
  case Opcode::DirectCall:
  case Opcode::IndirectCall:
  case Opcode::DirectJump:
  case Opcode::IndirectJump:
  case Opcode::CondBranch:
  case Opcode::Return:
  case Opcode::Halt:
    return true;
  default:
    return false;
  }
}

std::string_view opcode_name(Opcode op) {
  switch (op) {
  case Opcode::Assign: return "assign";
  case Opcode::BinOp: return "binop";
  case Opcode::Load: return "load";
  case Opcode::Store: return "store";
  case Opcode::AddressOf: return "address_of";
  case Opcode::GetElement: return "get_element";
  case Opcode::AttestBegin: return "attest_begin";
  case Opcode::AttestEnd: return "attest_end";
  case Opcode::Input: return "input";
  case Opcode::Output: return "output";
  case Opcode::DirectCall: return "call";
  case Opcode::IndirectCall: return "call_indirect";
  case Opcode::DirectJump: return "jump";
  case Opcode::IndirectJump: return "jump_indirect";
  case Opcode::CondBranch: return "br";
  case Opcode::Return: return "ret";
  case Opcode::Halt: return "halt";
  }
  return "?";
}

std::string_view binop_symbol(BinaryOp op) {
  switch (op) {
  case BinaryOp::Add: return "+";
  case BinaryOp::Sub: return "-";
  case BinaryOp::Mul: return "*";
  case BinaryOp::Div: return "/";
  case BinaryOp::Rem: return "%";
  case BinaryOp::And: return "&";
  case BinaryOp::Or: return "|";
  case BinaryOp::Xor: return "^";
  case BinaryOp::Shl: return "<<";
  case BinaryOp::Shr: return ">>";
  case BinaryOp::Eq: return "==";
  case BinaryOp::Ne: return "!=";
  case BinaryOp::Lt: return "<";
  case BinaryOp::Le: return "<=";
  case BinaryOp::Gt: return ">";
  case BinaryOp::Ge: return ">=";
  }
  return "?";
}

bool is_relational(BinaryOp op) {
  switch (op) {
  case BinaryOp::Eq:
  case BinaryOp::Ne:
  case BinaryOp::Lt:
  case BinaryOp::Le:
  case BinaryOp::Gt:
  case BinaryOp::Ge:
    return true;
  default:
    return false;
  }
}

const VarDecl& Function::slot(int s) const {
  const auto p = static_cast<int>(params.size());
  return s < p ? params.at(s) : locals.at(s - p);
}

std::optional<int> Function::find_slot(std::string_view n) const {
  for (int s = 0; s < slot_count(); ++s)
    if (slot(s).name == n)
      return s;
  return std::nullopt;
}

std::optional<int> Function::find_block(std::string_view label) const {
  for (std::size_t b = 0; b < blocks.size(); ++b)
    if (blocks[b].label == label)
      return static_cast<int>(b);
  return std::nullopt;
}

void Program::assign_addresses() {
  code_map.clear();
  CodeAddr next = kCodeBase;
  for (std::size_t f = 0; f < functions.size(); ++f) {
    auto& fn = functions[f];
    for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
      auto& bb = fn.blocks[b];
      for (std::size_t i = 0; i <= bb.body.size(); ++i) {
        Instruction& ins = i < bb.body.size() ? bb.body[i] : bb.terminator;
        ins.addr = next;
        next += kCodeStride;
        code_map.push_back({static_cast<int>(f), static_cast<int>(b), static_cast<int>(i)});
      }
    }
  }
}

bool Program::is_code_address(CodeAddr a) const {
  return a >= kCodeBase && (a - kCodeBase) % kCodeStride == 0 &&
         (a - kCodeBase) / kCodeStride < code_map.size();
}

std::optional<CodeLoc> Program::locate(CodeAddr a) const {
  if (!is_code_address(a))
    return std::nullopt;
  return code_map[(a - kCodeBase) / kCodeStride];
}

const Instruction& Program::instruction(const CodeLoc& loc) const {
  return functions.at(loc.function).blocks.at(loc.block).at(loc.index);
}

const Instruction* Program::instruction_at(CodeAddr a) const {
  const auto loc = locate(a);
  return loc ? &instruction(*loc) : nullptr;
}

std::optional<int> Program::find_function(std::string_view name) const {
  for (std::size_t f = 0; f < functions.size(); ++f)
    if (functions[f].name == name)
      return static_cast<int>(f);
  return std::nullopt;
}

std::optional<int> Program::find_global(std::string_view name) const {
  if (!name.empty() && name.front() == '@')
    name.remove_prefix(1);
  for (std::size_t g = 0; g < globals.size(); ++g)
    if (globals[g].name == name)
      return static_cast<int>(g);
  return std::nullopt;
}

const VarDecl& Program::decl(VarRef v) const {
  if (v.is_global())
    return globals.at(v.slot);
  return functions.at(v.scope).slot(v.slot);
}

std::string Program::var_name(VarRef v) const {
  if (!v.valid())
    return "<none>";
  if (v.is_global())
    return "@" + globals.at(v.slot).name;
  return functions.at(v.scope).name + "." + functions.at(v.scope).slot(v.slot).name;
}

std::optional<VarRef> Program::resolve_var(std::string_view q) const {
  if (!q.empty() && q.front() == '@') {
    if (auto g = find_global(q))
      return VarRef{kGlobalScope, *g};
    return std::nullopt;
  }
  const auto dot = q.find('.');
  if (dot == std::string_view::npos)
    return std::nullopt;
  const auto f = find_function(q.substr(0, dot));
  if (!f)
    return std::nullopt;
  if (auto s = functions[*f].find_slot(q.substr(dot + 1)))
    return VarRef{*f, *s};
  return std::nullopt;
}

std::vector<OperationMarkerPair> Program::markers() const {
  std::map<int, OperationMarkerPair> pairs;
  std::map<int, bool> have_begin, have_end;
  for (const auto& loc : code_map) {
    const auto& ins = instruction(loc);
    if (ins.op == Opcode::AttestBegin && !have_begin[ins.op_id]) {
      auto& p = pairs[ins.op_id];
      p.op_id = ins.op_id;
      p.function = loc.function;
      p.begin = loc;
      p.begin_addr = ins.addr;
      have_begin[ins.op_id] = true;
    } else if (ins.op == Opcode::AttestEnd && !have_end[ins.op_id]) {
      auto& p = pairs[ins.op_id];
      p.op_id = ins.op_id;
      p.end = loc;
      p.end_addr = ins.addr;
      have_end[ins.op_id] = true;
    }
  }
  std::vector<OperationMarkerPair> out;
  for (auto& [id, p] : pairs)
    if (have_begin[id] && have_end[id])
      out.push_back(p);
  return out;
}

bool Program::operator==(const Program& other) const {
  return globals == other.globals && functions == other.functions && entry == other.entry &&
         interrupt_vector == other.interrupt_vector;
}

std::string format_addr(CodeAddr a) { return fmt::format("{:#x}", a); }

} // namespace oei::ir
