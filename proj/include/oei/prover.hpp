#pragma once

// Deterministic MiniIR interpreter driving the measurement engine, with
// scheduled interrupts and a fault-injection harness.
//
// Memory is a flat space of 64-bit words. Globals start at kDataBase; frames
// are pushed upward from kStackBase as [params, locals, return-address slot].

#include "oei/instrument.hpp"
#include "oei/measure.hpp"

#include <optional>
#include <string>
#include <vector>

namespace oei::prover {

using ir::CodeAddr;

inline constexpr std::uint64_t kDataBase = 0x10000000;
inline constexpr std::uint64_t kStackBase = 0x20000000;
inline constexpr std::uint64_t kStackWords = 1u << 16;

struct FaultSpec {
  enum class Action { OverwriteReturn, OverwriteVar, OverwriteIndirectTarget };

  CodeAddr trigger = 0;
  std::uint32_t occurrence = 1; // 1-based count of executions of `trigger`
  Action action = Action::OverwriteReturn;
  std::int64_t value = 0;       // new return address, variable value or indirect target
  std::string var;              // OverwriteVar: "@g" or "fn.x"
  std::int64_t index = 0;       // OverwriteVar: word offset inside the variable
  CodeAddr site = 0;            // OverwriteIndirectTarget: the indirect call/jump
};

std::string_view fault_action_name(FaultSpec::Action a);

struct InterruptEvent {
  std::uint64_t at_step = 0;   // delivered before the first instruction with step count >= at_step
  std::uint32_t irq = 0;
  std::optional<int> handler;  // function index; defaults to the vector-table entry
};

struct RunOptions {
  std::vector<std::int64_t> inputs;
  Nonce nonce{};
  const SigningKey* key = nullptr;
  std::vector<FaultSpec> faults;
  std::vector<InterruptEvent> interrupts;
  measure::SessionConfig session;
  std::uint64_t max_steps = 10'000'000;
};

struct RunResult {
  std::vector<std::int64_t> outputs;
  std::optional<std::uint32_t> attested_op;
  std::vector<Bytes> segments;              // encoded blob segments of the attested operation
  std::vector<CodeAddr> path;               // instructions executed inside the operation, handlers excluded
  std::vector<std::uint64_t> indirect_log;  // indirect destinations recorded in the session
  std::vector<std::uint64_t> return_log;    // return addresses recorded in the session
  std::uint64_t steps = 0;
  bool session_completed = false;
  std::optional<std::string> error;         // runtime fault of the modeled program
  measure::CviState cvi;
};

RunResult run(const instrument::InstrumentedProgram& program, const RunOptions& options);

struct EvidenceSizes {
  std::size_t hashed = 0;   // S_addr + S_bin + H
  std::size_t baseline = 0; // S_addr (returns appended) + S_bin + H
  std::size_t returns = 0;
  RunResult hashed_run;
  RunResult baseline_run;
};

/// Runs twice: returns hashed into H, and returns appended to S_addr.
EvidenceSizes run_benign_pair(const instrument::InstrumentedProgram& program, const RunOptions& options);

/// Size of the evidence fields of a decoded segment list.
std::size_t evidence_size(const std::vector<Bytes>& segments);

/// Resolves "0x1234" or "fn:label+k" (k-th instruction of the block) to a code address.
std::optional<CodeAddr> resolve_code_location(const ir::Program& program, std::string_view text);

} // namespace oei::prover
