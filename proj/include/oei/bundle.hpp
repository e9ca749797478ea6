#pragma once

// The CFG bundle: everything the verifier needs about a program, exported
// by the analysis as a deterministic JSON document.

#include "oei/analysis.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace oei::bundle {

using ir::CodeAddr;

enum class TermKind { CondBranch, DirectJump, IndirectJump, DirectCall, IndirectCall, Return, Halt };

std::string_view term_kind_name(TermKind k);
std::optional<TermKind> parse_term_kind(std::string_view s);

struct Block {
  std::string label;
  int function = -1;
  std::vector<CodeAddr> addrs; // every instruction, terminator last
  TermKind term = TermKind::Halt;
  CodeAddr taken = 0;          // CondBranch
  CodeAddr not_taken = 0;      // CondBranch
  CodeAddr next = 0;           // DirectJump target; call continuation
  CodeAddr callee = 0;         // DirectCall: callee entry
  std::vector<CodeAddr> targets; // IndirectCall/IndirectJump: allowed destinations

  CodeAddr start() const { return addrs.front(); }
  CodeAddr terminator() const { return addrs.back(); }
  bool operator==(const Block&) const = default;
};

struct Function {
  std::string name;
  CodeAddr entry = 0;
  std::vector<int> blocks;
  bool operator==(const Function&) const = default;
};

struct Operation {
  int op_id = 0;
  int function = -1;
  CodeAddr begin = 0;
  CodeAddr end = 0;
  bool operator==(const Operation&) const = default;
};

class CfgBundle {
public:
  std::vector<Function> functions;
  std::vector<Block> blocks;
  std::map<int, Operation> operations;
  std::map<std::uint32_t, CodeAddr> interrupts; // irq -> handler entry

  /// Rebuilds the address index; call after editing the vectors.
  void index();

  /// Block containing `a` and the instruction's position inside it.
  std::optional<std::pair<int, int>> locate(CodeAddr a) const;
  /// Block starting exactly at `a`.
  const Block* block_at(CodeAddr a) const;

  bool operator==(const CfgBundle& o) const {
    return functions == o.functions && blocks == o.blocks && operations == o.operations &&
           interrupts == o.interrupts;
  }

private:
  std::map<CodeAddr, std::pair<int, int>> where_;
};

CfgBundle make_bundle(const ir::Program& program, const analysis::Analysis& a);

/// Bundle plus informational sections (sites, critical set, CFG edges).
nlohmann::json to_json(const ir::Program& program, const analysis::Analysis& a);
nlohmann::json to_json(const CfgBundle& b);
/// Throws std::runtime_error on a malformed document.
CfgBundle from_json(const nlohmann::json& j);

std::string hex(CodeAddr a);
CodeAddr parse_hex(const nlohmann::json& j);

} // namespace oei::bundle
