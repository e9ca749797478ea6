#pragma once

// Attaches measurement-event tags to a Program. Tags are metadata consumed by
// the interpreter; they never change what the program computes.

#include "oei/analysis.hpp"

#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

namespace oei::instrument {

using analysis::Access;
using analysis::ControlKind;
using analysis::DataKind;
using analysis::Role;

struct ControlTag {
  ControlKind kind = ControlKind::CondBranch;
  std::set<int> ops;
};

struct DataTag {
  DataKind kind = DataKind::Use;
  ir::VarRef var;
  Access access = Access::Direct;
  Role role = Role::Operand;
  bool critical_pointer = false; // `var` is a critical pointer; defines refresh its pointee bounds
};

struct InstructionTags {
  std::optional<ControlTag> control;
  std::vector<DataTag> uses;
  std::vector<DataTag> defines;
  std::vector<DataTag> call_results;

  bool empty() const { return !control && uses.empty() && defines.empty() && call_results.empty(); }
};

struct InstrumentedProgram {
  ir::Program program;
  analysis::SiteList sites;
  std::vector<InstructionTags> tags;            // indexed like Program::code_map
  std::vector<std::vector<DataTag>> entry_tags; // per function, fired when a frame is pushed
  std::set<ir::VarRef> load_defines;            // instrumented globals, defined from their initial image

  const InstructionTags& at(ir::CodeAddr a) const { return tags[(a - ir::kCodeBase) / ir::kCodeStride]; }
  std::size_t tag_count() const;
};

class InstrumentError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Throws InstrumentError when a site does not describe an instruction of `program`.
InstrumentedProgram instrument(const ir::Program& program, const analysis::SiteList& sites,
                               const std::set<ir::VarRef>& critical_pointers = {});

/// analyze() followed by instrument(); throws InstrumentError on scope diagnostics.
InstrumentedProgram instrument(const ir::Program& program, const analysis::Analysis& a);

} // namespace oei::instrument
