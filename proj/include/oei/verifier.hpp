#pragma once

// Verifier: checks signed evidence and reconstructs the executed path by
// walking the CFG bundle under the recorded traces.

#include "oei/bundle.hpp"
#include "oei/measure.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace oei::verifier {

using ir::CodeAddr;

enum class Failure {
  None,
  Signature,
  NonceMismatch,
  OperationMismatch, // evidence is not for the requested operation
  SegmentChain,
  CfiTarget,         // (1) indirect destination outside its target set
  Structure,         // (2) traces do not fit the CFG walk
  HashMismatch,      // (3) recomputed return hash differs
  InterruptMismatch,
  CviViolation,
};

std::string_view failure_name(Failure f);

struct WalkLimits {
  std::uint64_t max_steps = 50'000'000;
  std::size_t max_stack = 100'000;
};

struct WalkResult {
  Failure status = Failure::None;
  std::string detail;
  std::vector<CodeAddr> path;
  Digest h = kZeroDigest;
  std::size_t bits_consumed = 0;
  std::size_t addrs_consumed = 0;
  std::uint64_t steps = 0;
};

/// Walks from `entry` until `exit` is reached with an empty simulated stack.
/// With exit == 0 the walk models an interrupt handler and ends at the
/// handler's own return, which is not hashed.
WalkResult abstract_execute(const bundle::CfgBundle& cfg, CodeAddr entry, CodeAddr exit,
                            const measure::Trace& trace, const Digest& claimed_h, const WalkLimits& limits = {});

/// Operation-scoped walk.
WalkResult abstract_execute(const bundle::CfgBundle& cfg, int op_id, const measure::Trace& trace,
                            const Digest& claimed_h, const WalkLimits& limits = {});

struct Report {
  bool pass = false;
  Failure failure = Failure::None;
  std::string detail;
  std::uint32_t op_id = 0;
  std::vector<CodeAddr> path;
  std::size_t bits_consumed = 0, bits_total = 0;
  std::size_t addrs_consumed = 0, addrs_total = 0;
  std::uint64_t steps = 0;
  std::size_t segments = 0;
  std::vector<measure::ContextRecord> context;

  std::string text() const;
  nlohmann::json json() const;
};

/// Raises measure::DecodeError when a correctly signed segment is malformed.
Report verify(const std::vector<Bytes>& segments, const bundle::CfgBundle& cfg, std::uint32_t op_id,
              const Nonce& expected_nonce, const PublicKey& device_key, const WalkLimits& limits = {});

// ---------------------------------------------------------------- oracle

struct Proof {
  measure::Trace trace;
  Digest h = kZeroDigest;
  std::vector<CodeAddr> path;
};

struct EnumerationLimits {
  int loop_bound = 3;          // a block is entered at most loop_bound + 1 times per activation
  std::size_t depth_bound = 8; // simulated stack height
  std::size_t max_proofs = 200'000;
  std::uint64_t max_steps = 50'000'000; // instructions explored across all branches
};

class BoundExceeded : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// All legal bounded paths of an operation with the proof the prover would emit.
std::vector<Proof> enumerate_legal_proofs(const bundle::CfgBundle& cfg, int op_id,
                                          const EnumerationLimits& limits = {});

} // namespace oei::verifier
