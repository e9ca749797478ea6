#pragma once

// File formats around the pipeline: JSON descriptors for prover inputs,
// faults and interrupts, and the blob container file.

#include "oei/bundle.hpp"
#include "oei/prover.hpp"
#include "oei/verifier.hpp"

#include "json.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oei::io {

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// `{"inputs": [1, 2, 3]}`
std::vector<std::int64_t> parse_inputs(const nlohmann::json& j);
nlohmann::json inputs_to_json(const std::vector<std::int64_t>& inputs);

/// `{"faults": [{"trigger": "main:loop+0", "action": "overwrite_return", ...}]}`
std::vector<prover::FaultSpec> parse_faults(const ir::Program& program, const nlohmann::json& j);
prover::FaultSpec parse_fault(const ir::Program& program, const nlohmann::json& j);

/// `{"interrupts": [{"at_step": 10, "irq": 1, "handler": "isr"}]}`
std::vector<prover::InterruptEvent> parse_interrupts(const ir::Program& program, const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

/// Parse, validate, analyze, instrument and export in one step.
struct Compiled {
  ir::Program program;
  analysis::Analysis analysis;
  instrument::InstrumentedProgram instrumented;
  bundle::CfgBundle bundle;
};

class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(std::vector<ir::Diagnostic> diagnostics);
  const std::vector<ir::Diagnostic>& diagnostics() const { return diagnostics_; }

private:
  std::vector<ir::Diagnostic> diagnostics_;
};

/// Throws ValidationError on parse, validation or scope-check diagnostics.
Compiled compile(std::string_view source);
Compiled compile_file(const std::string& path);

struct Scenario {
  std::string name;
  std::uint32_t op_id = 0;
  std::vector<std::int64_t> inputs;
  std::vector<prover::FaultSpec> faults;
  std::vector<prover::InterruptEvent> interrupts;
  std::vector<verifier::Failure> expect; // any of these; empty means the run must pass
};

/// `{"scenarios": [{"name", "op", "inputs", "faults", "interrupts", "expect"}]}`
std::vector<Scenario> parse_scenarios(const ir::Program& program, const nlohmann::json& j);

struct ScenarioOutcome {
  verifier::Report report;
  bool as_expected = false;
};

/// Runs the prover with a fresh nonce and verifies against the bundle.
ScenarioOutcome run_scenario(const Compiled& c, const Scenario& s, const SigningKey& key);

std::optional<verifier::Failure> parse_failure(std::string_view name);

// Blob container: "OEIB", version u8 = 1, segment count u32 LE, then per
// segment a u32 LE length and the encoded segment.
inline constexpr std::uint8_t kContainerVersion = 1;

Bytes pack_segments(const std::vector<Bytes>& segments);
std::vector<Bytes> unpack_segments(std::span<const std::uint8_t> bytes);

void write_blob_file(const std::string& path, const std::vector<Bytes>& segments);
std::vector<Bytes> read_blob_file(const std::string& path);

} // namespace oei::io
