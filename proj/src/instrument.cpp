#include "oei/instrument.hpp"

#include <fmt/format.h>

namespace oei::instrument {

std::size_t InstrumentedProgram::tag_count() const {
  std::size_t n = 0;
  for (const auto& t : tags)
    n += (t.control ? 1 : 0) + t.uses.size() + t.defines.size() + t.call_results.size();
  for (const auto& e : entry_tags)
    n += e.size();
  n += load_defines.size();
  return n;
}

namespace {

bool control_matches(ControlKind k, ir::Opcode op) {
  switch (k) {
  case ControlKind::CondBranch: return op == ir::Opcode::CondBranch;
  case ControlKind::IndirectCall: return op == ir::Opcode::IndirectCall;
  case ControlKind::IndirectJump: return op == ir::Opcode::IndirectJump;
  case ControlKind::Return: return op == ir::Opcode::Return;
  }
  return false;
}

} // namespace

InstrumentedProgram instrument(const ir::Program& program, const analysis::SiteList& sites,
                               const std::set<ir::VarRef>& critical_pointers) {
  InstrumentedProgram ip;
  ip.program = program;
  ip.sites = sites;
  ip.tags.resize(program.instruction_count());
  ip.entry_tags.resize(program.functions.size());

  for (const auto& s : sites.control) {
    const auto* ins = program.instruction_at(s.addr);
    if (!ins || !control_matches(s.kind, ins->op))
      throw InstrumentError(fmt::format("control site {} at {} does not match the program",
                                        analysis::control_kind_name(s.kind), ir::format_addr(s.addr)));
    auto& t = ip.tags[(s.addr - ir::kCodeBase) / ir::kCodeStride];
    if (t.control)
      throw InstrumentError(fmt::format("duplicate control site at {}", ir::format_addr(s.addr)));
    t.control = ControlTag{s.kind, s.ops};
  }

  const auto accesses = analysis::memory_accesses(program);
  const std::set<analysis::DataSite> valid(accesses.begin(), accesses.end());
  std::set<analysis::DataSite> seen;
  for (const auto& d : sites.data) {
    if (!valid.count(d))
      throw InstrumentError(fmt::format("data site {} of {} at {} does not match the program",
                                        analysis::data_kind_name(d.kind), program.var_name(d.var),
                                        ir::format_addr(d.addr)));
    if (!seen.insert(d).second)
      throw InstrumentError(fmt::format("duplicate data site at {}", ir::format_addr(d.addr)));
    if (d.var.is_global())
      ip.load_defines.insert(d.var);
    const DataTag tag{d.kind, d.var, d.access, d.role, critical_pointers.count(d.var) != 0};
    if (d.role == Role::Entry) {
      ip.entry_tags[d.var.scope].push_back(tag);
      continue;
    }
    auto& t = ip.tags[(d.addr - ir::kCodeBase) / ir::kCodeStride];
    if (d.role == Role::CallResult)
      t.call_results.push_back(tag);
    else if (d.kind == DataKind::Use)
      t.uses.push_back(tag);
    else
      t.defines.push_back(tag);
  }
  return ip;
}

InstrumentedProgram instrument(const ir::Program& program, const analysis::Analysis& a) {
  if (!a.diagnostics.empty())
    throw InstrumentError(a.diagnostics.front().str());
  return instrument(program, a.sites, a.critical.pointers);
}

} // namespace oei::instrument
