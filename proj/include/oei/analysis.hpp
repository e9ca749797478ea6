#pragma once

// Static analyses over a validated Program: per-function CFGs, dominance,
// operation scopes, Andersen points-to, the critical-variable set, indirect
// target sets and instrumentation-site selection.

#include "oei/ir.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace oei::analysis {

using ir::CodeAddr;
using ir::Program;
using ir::VarRef;

// ---------------------------------------------------------------- CFG

enum class EdgeKind { Taken, NotTaken, Jump, Return, IndirectCandidate };

std::string_view edge_kind_name(EdgeKind k);

/// Intra-procedural edge between blocks. A call's edge to its continuation
/// block has kind Return: control comes back there when the callee returns.
struct Edge {
  int from = -1;
  int to = -1;
  EdgeKind kind = EdgeKind::Jump;
  auto operator<=>(const Edge&) const = default;
};

struct CallEdge {
  int block = -1;
  int callee = -1; // function index
  bool indirect = false;
  auto operator<=>(const CallEdge&) const = default;
};

struct FunctionCfg {
  int function = -1;
  int block_count = 0;
  std::vector<Edge> edges;
  std::vector<CallEdge> calls;
  std::vector<int> exits; // blocks ending in ret or halt

  std::vector<std::vector<int>> successors() const;
  std::vector<std::vector<int>> predecessors() const;
};

struct TargetSets;
std::vector<FunctionCfg> build_cfg(const Program& program, const TargetSets& targets);

// ---------------------------------------------------------------- dominance

/// dom[n][d] is true iff d dominates n. Nodes unreachable from the root are
/// dominated by every node (the empty intersection).
struct Dominance {
  std::vector<std::vector<bool>> dom;
  bool dominates(int d, int n) const { return dom.at(n).at(d); }
};

/// Iterative dataflow over an adjacency list.
Dominance dominators(const std::vector<std::vector<int>>& succ, int root);

struct DominanceInfo {
  Dominance dom;
  Dominance post_dom; // relative to a virtual exit joined by every ret/halt block
};

DominanceInfo compute_dominance(const FunctionCfg& cfg);

// ---------------------------------------------------------------- scopes

struct OperationScope {
  int op_id = 0;
  int function = -1;
  ir::CodeLoc begin;
  ir::CodeLoc end;
  CodeAddr entry_addr = 0;
  CodeAddr exit_addr = 0;
};

struct ScopeResult {
  std::vector<OperationScope> scopes;
  std::vector<ir::Diagnostic> diagnostics;
};

ScopeResult check_operation_scopes(const Program& program, const std::vector<FunctionCfg>& cfgs);

// ---------------------------------------------------------------- points-to

/// Abstract memory object or code location an operand may hold.
struct Loc {
  enum class Kind { Var, Function, Label };
  Kind kind = Kind::Var;
  VarRef var;       // Var
  int function = -1; // Function; Label: owning function
  int block = -1;    // Label
  auto operator<=>(const Loc&) const = default;
};

struct PointsTo {
  std::map<VarRef, std::set<Loc>> pts;
  std::set<int> address_taken_functions;
  std::map<int, std::set<int>> address_taken_labels; // function -> blocks

  const std::set<Loc>& of(VarRef v) const;
  std::set<VarRef> var_targets(VarRef v) const;
};

PointsTo points_to(const Program& program);

// ---------------------------------------------------------------- critical set

enum class Provenance { ControlDependent, Annotated, PointerExpansion, DependencyExpansion };

std::string_view provenance_name(Provenance p);

struct CriticalSet {
  std::set<VarRef> variables; // includes every critical pointer
  std::set<VarRef> pointers;
  std::map<VarRef, Provenance> provenance;
  int iterations = 0;

  bool contains(VarRef v) const { return variables.count(v) != 0; }
  bool is_pointer(VarRef v) const { return pointers.count(v) != 0; }
  bool operator==(const CriticalSet& o) const { return variables == o.variables && pointers == o.pointers; }
};

std::set<VarRef> detect_control_dependent_vars(const Program& program);
std::set<VarRef> annotated_vars(const Program& program);

/// Grows `initial` to a fixpoint. A pointer whose targets meet the set
/// becomes a critical pointer; every target of a critical pointer becomes
/// critical; every variable feeding a definition of a member is added.
CriticalSet expand_critical_set(const Program& program, const CriticalSet& initial, const PointsTo& pts);
CriticalSet expand_critical_set(const Program& program, const std::set<VarRef>& initial, const PointsTo& pts);

/// detect_control_dependent_vars + annotations, expanded.
CriticalSet critical_variables(const Program& program, const PointsTo& pts);

// ---------------------------------------------------------------- target sets

struct TargetSets {
  std::map<CodeAddr, std::set<CodeAddr>> targets;

  const std::set<CodeAddr>& at(CodeAddr site) const;
  bool allows(CodeAddr site, CodeAddr dest) const;
};

TargetSets compute_target_sets(const Program& program, const PointsTo& pts);

// ---------------------------------------------------------------- sites

enum class ControlKind { CondBranch, IndirectCall, IndirectJump, Return };
enum class DataKind { Define, Use };

/// How a data access names its word.
///   Direct      the variable itself
///   Element     A[i] on an array object
///   ViaPointer  *p or p[i] through a pointer
enum class Access { Direct, Element, ViaPointer };

/// When a data tag fires.
///   Operand     while its instruction executes
///   Entry       when a frame for the function is pushed (params and zeroed locals)
///   CallResult  when the callee returns a value into the call's destination
enum class Role { Operand, Entry, CallResult };

std::string_view control_kind_name(ControlKind k);
std::string_view data_kind_name(DataKind k);
std::string_view access_name(Access a);
std::string_view role_name(Role r);

struct ControlSite {
  CodeAddr addr = 0;
  ControlKind kind = ControlKind::CondBranch;
  std::set<int> ops; // operations whose scope reaches this site
  auto operator<=>(const ControlSite&) const = default;
};

struct DataSite {
  CodeAddr addr = 0;
  DataKind kind = DataKind::Use;
  VarRef var;
  Access access = Access::Direct;
  Role role = Role::Operand;
  auto operator<=>(const DataSite&) const = default;
};

struct SiteList {
  std::vector<ControlSite> control;
  std::vector<DataSite> data;
  std::size_t size() const { return control.size() + data.size(); }
};

/// Every variable access an address-based checker would instrument: each
/// read or write of a named variable, array element or dereference.
std::vector<DataSite> memory_accesses(const Program& program);

std::size_t count_address_based_sites(const Program& program);

/// Code addresses reachable from an operation's begin marker before its end
/// marker, plus all code of transitively reachable callees and interrupt handlers.
std::set<CodeAddr> operation_region(const Program& program, const OperationScope& scope, const TargetSets& targets);

SiteList select_sites(const Program& program, const std::vector<OperationScope>& scopes,
                      const CriticalSet& critical, const TargetSets& targets);

// ---------------------------------------------------------------- all together

struct Analysis {
  TargetSets targets;
  std::vector<FunctionCfg> cfgs;
  std::vector<OperationScope> scopes;
  PointsTo pts;
  CriticalSet critical;
  SiteList sites;
  std::vector<ir::Diagnostic> diagnostics; // scope-check failures
};

Analysis analyze(const Program& program);

} // namespace oei::analysis
