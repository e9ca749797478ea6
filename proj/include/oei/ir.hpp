#pragma once

// MiniIR: the modeled-program language every other module operates on.
//
// A Program is a list of functions made of basic blocks. Every instruction,
// terminators included, owns one code address; addresses are assigned densely
// in declaration order starting at kCodeBase with stride kCodeStride, so two
// parses of the same text always produce the same layout.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oei::ir {

using Value = std::int64_t;
using CodeAddr = std::uint64_t;

inline constexpr CodeAddr kCodeBase = 0x1000;
inline constexpr CodeAddr kCodeStride = 4;
inline constexpr int kGlobalScope = -1;

struct SourceLoc {
  int line = 0;
  int column = 0;

  // Locations are diagnostic metadata and never part of program identity.
  friend bool operator==(const SourceLoc&, const SourceLoc&) { return true; }
};

struct Diagnostic {
  SourceLoc loc;
  std::string message;

  std::string str() const;
  bool operator==(const Diagnostic&) const = default;
};

class ParseError : public std::runtime_error {
public:
  explicit ParseError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

private:
  std::vector<Diagnostic> diagnostics_;
};

/// Names a declared variable: a global, or a parameter/local slot of a function.
/// Function slots number parameters first, then locals.
struct VarRef {
  int scope = kGlobalScope;
  int slot = -1;

  bool is_global() const { return scope == kGlobalScope; }
  bool valid() const { return slot >= 0; }
  auto operator<=>(const VarRef&) const = default;
};

enum class VarKind { Scalar, Array, Pointer };

struct Initializer {
  enum class Kind { Int, FunctionAddr, VarAddr };
  Kind kind = Kind::Int;
  Value value = 0;   // Int: the literal; VarAddr: element offset
  int function = -1; // FunctionAddr
  VarRef var;        // VarAddr (always a global)
  std::string name;

  bool operator==(const Initializer&) const = default;
};

struct VarDecl {
  std::string name; // globals are stored without the '@' sigil
  VarKind kind = VarKind::Scalar;
  std::int64_t length = 1; // words; > 1 only for arrays
  bool critical = false;
  std::vector<Initializer> init;
  SourceLoc loc;

  bool operator==(const VarDecl&) const = default;
};

struct Operand {
  enum class Kind { None, Const, Var, FunctionAddr, LabelAddr };
  Kind kind = Kind::None;
  Value value = 0;  // Const
  VarRef var;       // Var
  int target = -1;  // FunctionAddr: function index; LabelAddr: block index in the enclosing function
  std::string name; // source spelling of Var/FunctionAddr/LabelAddr

  bool is_var() const { return kind == Kind::Var; }
  bool operator==(const Operand&) const = default;

  static Operand constant(Value v);
  static Operand variable(VarRef v, std::string name);
};

enum class Opcode {
  // non-terminators
  Assign,
  BinOp,
  Load,
  Store,
  AddressOf,
  GetElement,
  AttestBegin,
  AttestEnd,
  Input,
  Output,
  // terminators
  DirectCall,
  IndirectCall,
  DirectJump,
  IndirectJump,
  CondBranch,
  Return,
  Halt,
};

bool is_terminator(Opcode op);
std::string_view opcode_name(Opcode op);

enum class BinaryOp { Add, Sub, Mul, Div, Rem, And, Or, Xor, Shl, Shr, Eq, Ne, Lt, Le, Gt, Ge };

std::string_view binop_symbol(BinaryOp op);
bool is_relational(BinaryOp op);

/// Memory location named by Load/Store/AddressOf/GetElement.
/// `base` is a pointer (dereference `*p`, `p[i]`) or an array/scalar object (`A[i]`, `&x`).
struct MemRef {
  VarRef base;
  Operand index; // None for `*p` and `&x`

  bool operator==(const MemRef&) const = default;
};

/// One MiniIR instruction. Field use depends on the opcode:
///   Assign        dest = lhs
///   BinOp         dest = lhs binop rhs
///   Load          dest = mem                   (`*p`, `p[i]`, `A[i]`)
///   Store         mem = lhs
///   AddressOf     dest = &mem.base             (`&A` means `&A[0]`)
///   GetElement    dest = &mem.base[mem.index]
///   AttestBegin/AttestEnd                      op_id
///   Input         dest = next input word
///   Output        lhs
///   DirectCall    [dest =] call callee(args) -> target
///   IndirectCall  [dest =] call_indirect lhs(args) -> target
///   DirectJump    jump target
///   IndirectJump  jump_indirect lhs
///   CondBranch    br lhs binop rhs, target, alt_target
///   Return        ret [lhs]
///   Halt
struct Instruction {
  Opcode op = Opcode::Halt;
  CodeAddr addr = 0;
  SourceLoc loc;
  VarRef dest;
  Operand lhs;
  Operand rhs;
  BinaryOp binop = BinaryOp::Add;
  MemRef mem;
  int op_id = 0;
  int callee = -1;
  std::vector<Operand> args;
  int target = -1;
  int alt_target = -1;

  bool writes_dest() const { return dest.valid(); }
  bool operator==(const Instruction&) const = default;
};

struct BasicBlock {
  std::string label;
  std::vector<Instruction> body;
  Instruction terminator;
  SourceLoc loc;

  CodeAddr start() const { return body.empty() ? terminator.addr : body.front().addr; }
  std::size_t size() const { return body.size() + 1; }
  const Instruction& at(std::size_t i) const { return i < body.size() ? body[i] : terminator; }
  bool operator==(const BasicBlock&) const = default;
};

struct Function {
  std::string name;
  std::vector<VarDecl> params;
  std::vector<VarDecl> locals;
  std::vector<BasicBlock> blocks;
  SourceLoc loc;

  int slot_count() const { return static_cast<int>(params.size() + locals.size()); }
  const VarDecl& slot(int s) const;
  std::optional<int> find_slot(std::string_view name) const;
  std::optional<int> find_block(std::string_view label) const;
  CodeAddr entry() const { return blocks.front().start(); }
  bool operator==(const Function&) const = default;
};

/// Where an instruction lives. `index == body.size()` designates the terminator.
struct CodeLoc {
  int function = -1;
  int block = -1;
  int index = -1;

  auto operator<=>(const CodeLoc&) const = default;
};

struct OperationMarkerPair {
  int op_id = 0;
  int function = -1;
  CodeLoc begin;
  CodeLoc end;
  CodeAddr begin_addr = 0;
  CodeAddr end_addr = 0;
};

struct Program {
  std::vector<VarDecl> globals;
  std::vector<Function> functions;
  int entry = -1;
  std::map<int, int> interrupt_vector; // irq id -> handler function index

  // Derived layout; rebuilt by assign_addresses().
  std::vector<CodeLoc> code_map;

  void assign_addresses();

  std::size_t instruction_count() const { return code_map.size(); }
  bool is_code_address(CodeAddr a) const;
  std::optional<CodeLoc> locate(CodeAddr a) const;
  const Instruction& instruction(const CodeLoc& loc) const;
  const Instruction* instruction_at(CodeAddr a) const;

  std::optional<int> find_function(std::string_view name) const;
  std::optional<int> find_global(std::string_view name) const;
  const VarDecl& decl(VarRef v) const;
  /// "@g" for globals, "fn.x" for function slots.
  std::string var_name(VarRef v) const;
  /// Parses the var_name() spelling back.
  std::optional<VarRef> resolve_var(std::string_view qualified) const;

  /// Marker pairs grouped by op id; a pair is only emitted when both ends exist.
  std::vector<OperationMarkerPair> markers() const;

  bool operator==(const Program& other) const;
};

/// Parses MiniIR text. Throws ParseError carrying every diagnostic found.
Program parse_program(std::string_view text);

/// Structural checks: entry function, terminators, array lengths, operand
/// kinds, call arity and operation-marker pairing. Empty result means valid.
std::vector<Diagnostic> validate(const Program& program);

/// Canonical text; parse_program(print_program(p)) == p.
std::string print_program(const Program& program);

std::string format_addr(CodeAddr a);

} // namespace oei::ir
