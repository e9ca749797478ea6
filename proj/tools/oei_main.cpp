// oei: command-line driver for the attestation pipeline.

#include "oei/io.hpp"
#include "oei/protocol.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

using namespace oei;

enum Exit { kOk = 0, kUsage = 2, kValidation = 3, kVerifyFail = 4, kIo = 5 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string env_or(const std::string& flag, const char* var) {
  if (!flag.empty())
    return flag;
  if (const char* v = std::getenv(var))
    return v;
  return {};
}

SigningKey signing_key(const std::string& flag) {
  const auto path = env_or(flag, "OEI_KEY");
  if (path.empty())
    throw UsageError("a signing key is required (--key or OEI_KEY)");
  try {
    return load_signing_key(path);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(fmt::format("{}: {}", path, e.what()));
  }
}

PublicKey public_key(const std::string& flag) {
  const auto path = env_or(flag, "OEI_PUBKEY");
  if (path.empty())
    throw UsageError("a public key is required (--pubkey or OEI_PUBKEY)");
  try {
    return load_public_key(path);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(fmt::format("{}: {}", path, e.what()));
  }
}

Nonce parse_nonce(const std::string& hex) {
  Bytes b;
  try {
    b = from_hex(hex);
  } catch (const std::invalid_argument&) {
    throw UsageError(fmt::format("--nonce '{}' is not hex", hex));
  }
  if (b.size() != 16)
    throw UsageError("--nonce must be 16 bytes (32 hex digits)");
  Nonce n{};
  std::copy(b.begin(), b.end(), n.begin());
  return n;
}

bundle::CfgBundle load_bundle(const std::string& program, const std::string& cfg) {
  if (!program.empty() == !cfg.empty())
    throw UsageError("give exactly one of --program and --cfg");
  if (!program.empty())
    return io::compile_file(program).bundle;
  return bundle::from_json(io::read_json_file(cfg));
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    io::write_text_file(out, text);
}

struct RunFlags {
  std::string inputs, faults, interrupts;
  std::size_t capacity = measure::SessionConfig{}.capacity;
  bool baseline = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--inputs", inputs, "inputs descriptor JSON");
    cmd->add_option("--faults", faults, "faults descriptor JSON");
    cmd->add_option("--interrupts", interrupts, "interrupt schedule JSON");
    cmd->add_option("--capacity", capacity, "trace bytes per segment before a flush")->check(CLI::PositiveNumber);
    cmd->add_flag("--baseline", baseline, "record returns in S_addr instead of hashing them");
  }

  void apply(const ir::Program& p, prover::RunOptions& ro, measure::SessionConfig& sc) const {
    if (!inputs.empty())
      ro.inputs = io::parse_inputs(io::read_json_file(inputs));
    if (!faults.empty())
      ro.faults = io::parse_faults(p, io::read_json_file(faults));
    if (!interrupts.empty())
      ro.interrupts = io::parse_interrupts(p, io::read_json_file(interrupts));
    sc.capacity = capacity;
    sc.hash_returns = !baseline;
  }
};

int cmd_check(const std::string& path) {
  const auto c = io::compile_file(path);
  fmt::print("ok: {} functions, {} instructions, {} operations\n", c.program.functions.size(),
             c.program.instruction_count(), c.bundle.operations.size());
  return kOk;
}

int cmd_analyze(const std::string& path, const std::string& out) {
  const auto c = io::compile_file(path);
  emit(out, bundle::to_json(c.program, c.analysis).dump(2) + "\n");
  return kOk;
}

int cmd_attest(const std::string& path, const std::string& key_path, const std::string& nonce_hex,
               const RunFlags& flags, const std::string& out) {
  const auto c = io::compile_file(path);
  const auto key = signing_key(key_path);
  prover::RunOptions ro;
  flags.apply(c.program, ro, ro.session);
  ro.nonce = nonce_hex.empty() ? random_nonce() : parse_nonce(nonce_hex);
  ro.key = &key;
  const auto r = prover::run(c.instrumented, ro);
  io::write_blob_file(out, r.segments);
  nlohmann::json j;
  j["op_id"] = r.attested_op ? nlohmann::json(*r.attested_op) : nlohmann::json(nullptr);
  j["nonce"] = to_hex(ro.nonce);
  j["segments"] = r.segments.size();
  j["steps"] = r.steps;
  j["evidence_bytes"] = prover::evidence_size(r.segments);
  j["outputs"] = r.outputs;
  if (r.error)
    j["error"] = *r.error;
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_verify(const std::string& blob, const std::string& program, const std::string& cfg, std::uint32_t op,
               const std::string& nonce_hex, const std::string& pub, bool as_json, const std::string& out) {
  const auto b = load_bundle(program, cfg);
  const auto key = public_key(pub);
  const auto nonce = parse_nonce(nonce_hex);
  const auto segments = io::read_blob_file(blob);
  const auto rep = verifier::verify(segments, b, op, nonce, key);
  emit(out, as_json ? rep.json().dump(2) + "\n" : rep.text());
  return rep.pass ? kOk : kVerifyFail;
}

int cmd_serve(const std::string& path, const std::string& key_path, const std::string& listen, const RunFlags& flags) {
  auto c = io::compile_file(path);
  protocol::ServiceOptions so;
  so.max_frame = protocol::max_frame_from_env();
  prover::RunOptions ro;
  flags.apply(c.program, ro, so.session);
  so.faults = ro.faults;
  so.interrupts = ro.interrupts;
  protocol::Service svc(std::move(c.instrumented), signing_key(key_path), std::move(so));
  const auto ep = protocol::parse_endpoint(listen);
  const auto port = svc.listen(ep);
  fmt::print("listening on {}:{}\n", ep.host, port);
  std::fflush(stdout);
  svc.serve();
  return kOk;
}

int cmd_request(const std::string& endpoint, std::uint32_t op, const std::string& inputs, const std::string& program,
                const std::string& cfg, const std::string& pub, int timeout_ms, bool as_json) {
  const auto b = load_bundle(program, cfg);
  const auto key = public_key(pub);
  protocol::ClientOptions co;
  co.max_frame = protocol::max_frame_from_env();
  co.timeout = std::chrono::milliseconds(timeout_ms);
  std::vector<std::int64_t> in;
  if (!inputs.empty())
    in = io::parse_inputs(io::read_json_file(inputs));
  protocol::ReplaySet replay;
  const auto rep = protocol::request_attestation(protocol::parse_endpoint(endpoint), op, in, b, key, replay, co);
  std::cout << (as_json ? rep.json().dump(2) + "\n" : rep.text());
  return rep.pass ? kOk : kVerifyFail;
}

int cmd_attack(const std::string& path, const std::string& suite, const std::string& key_path) {
  const auto c = io::compile_file(path);
  const auto scenarios = io::parse_scenarios(c.program, io::read_json_file(suite));
  const auto key = key_path.empty() && !std::getenv("OEI_KEY") ? generate_key() : signing_key(key_path);
  std::size_t ok = 0;
  for (const auto& s : scenarios) {
    const auto o = io::run_scenario(c, s, key);
    ok += o.as_expected;
    std::string expect;
    for (auto f : s.expect)
      expect += (expect.empty() ? "" : "|") + std::string(verifier::failure_name(f));
    fmt::print("{:<6} {:<32} expected {:<28} got {}\n", o.as_expected ? "ok" : "MISSED", s.name,
               expect.empty() ? "pass" : expect,
               o.report.pass ? "pass" : std::string(verifier::failure_name(o.report.failure)));
  }
  fmt::print("{}/{} scenarios as expected\n", ok, scenarios.size());
  return ok == scenarios.size() ? kOk : kVerifyFail;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& inputs, const std::string& out) {
  std::string csv = "program,critical_vars,data_sites,address_sites,site_ratio,returns,hashed_bytes,baseline_bytes,"
                    "size_ratio\n";
  for (const auto& path : paths) {
    const auto c = io::compile_file(path);
    prover::RunOptions ro;
    auto in_path = inputs;
    if (in_path.empty()) {
      const auto dot = path.rfind('.');
      const auto guess = path.substr(0, dot) + ".inputs.json";
      if (std::FILE* f = std::fopen(guess.c_str(), "r")) {
        std::fclose(f);
        in_path = guess;
      }
    }
    if (!in_path.empty())
      ro.inputs = io::parse_inputs(io::read_json_file(in_path));
    const auto key = generate_key();
    ro.key = &key;
    const auto sizes = prover::run_benign_pair(c.instrumented, ro);
    const auto data = c.analysis.sites.data.size();
    const auto addr = analysis::count_address_based_sites(c.program);
    auto name = path.substr(path.find_last_of('/') + 1);
    csv += fmt::format("{},{},{},{},{:.4f},{},{},{},{:.4f}\n", name, c.analysis.critical.variables.size(), data, addr,
                       addr ? double(data) / double(addr) : 0.0, sizes.returns, sizes.hashed, sizes.baseline,
                       sizes.baseline ? double(sizes.hashed) / double(sizes.baseline) : 0.0);
  }
  emit(out, csv);
  return kOk;
}

int cmd_keygen(const std::string& prefix, const std::string& seed_hex) {
  SigningKey key;
  if (seed_hex.empty()) {
    key = generate_key();
  } else {
    const auto seed = from_hex(seed_hex);
    if (seed.size() != 32)
      throw UsageError("--seed must be 32 bytes (64 hex digits)");
    key = key_from_seed(seed);
  }
  save_signing_key(prefix + ".key", key);
  save_public_key(prefix + ".pub", key.pub);
  fmt::print("wrote {0}.key and {0}.pub\n", prefix);
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"oei: operation execution integrity toolkit for MiniIR programs"};
  app.require_subcommand(1);
  app.footer("Environment: OEI_KEY (signing key file), OEI_PUBKEY (public key file), OEI_MAX_FRAME (bytes).\n"
             "Exit codes: 0 ok, 2 usage, 3 validation, 4 verification failed, 5 I/O or decode error.");

  std::string program, out, key, pub, nonce, cfg, listen = "127.0.0.1:7878", endpoint, suite, seed, inputs;
  std::uint32_t op = 0;
  bool as_json = false;
  int timeout_ms = 10'000;
  std::vector<std::string> programs;
  RunFlags flags;

  auto* check = app.add_subcommand("check", "parse, validate and scope-check a program");
  check->add_option("program", program, "MiniIR file")->required();

  auto* analyze = app.add_subcommand("analyze", "emit the CFG bundle and analysis JSON");
  analyze->add_option("program", program, "MiniIR file")->required();
  analyze->add_option("-o,--out", out, "output file (default stdout)");

  auto* attest = app.add_subcommand("attest", "run the program locally and write a blob file");
  attest->add_option("program", program, "MiniIR file")->required();
  attest->add_option("-o,--out", out, "blob file")->required();
  attest->add_option("--key", key, "signing key file");
  attest->add_option("--nonce", nonce, "challenge nonce, 32 hex digits (default random)");
  flags.add(attest);

  auto* verify = app.add_subcommand("verify", "verify a blob file; exit 0 iff it passes");
  verify->add_option("blob", out, "blob file")->required();
  verify->add_option("--program", program, "MiniIR file (bundle computed on the fly)");
  verify->add_option("--cfg", cfg, "CFG bundle JSON from `analyze`");
  verify->add_option("--op", op, "operation id")->required();
  verify->add_option("--nonce", nonce, "expected nonce, 32 hex digits")->required();
  verify->add_option("--pubkey", pub, "device public key file");
  verify->add_flag("--json", as_json, "machine-readable report");
  std::string report_out;
  verify->add_option("--report", report_out, "write the report to a file");

  auto* serve = app.add_subcommand("serve", "run the prover service");
  serve->add_option("program", program, "MiniIR file")->required();
  serve->add_option("--listen", listen, "host:port (port 0 picks one)");
  serve->add_option("--key", key, "signing key file");
  flags.add(serve);

  auto* request = app.add_subcommand("request", "challenge a prover service and verify its answer");
  request->add_option("--endpoint", endpoint, "host:port")->required();
  request->add_option("--op", op, "operation id")->required();
  request->add_option("--inputs", inputs, "inputs descriptor JSON");
  request->add_option("--program", program, "MiniIR file");
  request->add_option("--cfg", cfg, "CFG bundle JSON");
  request->add_option("--pubkey", pub, "device public key file");
  request->add_option("--timeout", timeout_ms, "milliseconds")->check(CLI::PositiveNumber);
  request->add_flag("--json", as_json, "machine-readable report");

  auto* attack = app.add_subcommand("attack", "run a fault scenario suite and check the verdicts");
  attack->add_option("program", program, "MiniIR file")->required();
  attack->add_option("--suite", suite, "scenario JSON")->required();
  attack->add_option("--key", key, "signing key file (default: ephemeral)");

  auto* compare = app.add_subcommand("compare", "CSV of site counts and evidence sizes");
  compare->add_option("programs", programs, "MiniIR files")->required();
  compare->add_option("--inputs", inputs, "inputs descriptor (default: <program>.inputs.json if present)");
  compare->add_option("-o,--out", out, "output file (default stdout)");

  auto* keygen = app.add_subcommand("keygen", "create an Ed25519 device key pair");
  keygen->add_option("--out", out, "path prefix for .key and .pub")->required();
  keygen->add_option("--seed", seed, "32-byte seed in hex for a deterministic key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*check)
      return cmd_check(program);
    if (*analyze)
      return cmd_analyze(program, out);
    if (*attest)
      return cmd_attest(program, key, nonce, flags, out);
    if (*verify)
      return cmd_verify(out, program, cfg, op, nonce, pub, as_json, report_out);
    if (*serve)
      return cmd_serve(program, key, listen, flags);
    if (*request)
      return cmd_request(endpoint, op, inputs, program, cfg, pub, timeout_ms, as_json);
    if (*attack)
      return cmd_attack(program, suite, key);
    if (*compare)
      return cmd_compare(programs, inputs, out);
    if (*keygen)
      return cmd_keygen(out, seed);
  } catch (const UsageError& e) {
    fmt::print(stderr, "oei: {}\n", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "oei: {}\n", e.what());
    return kUsage;
  } catch (const io::ValidationError& e) {
    fmt::print(stderr, "{}\n", e.what());
    return kValidation;
  } catch (const instrument::InstrumentError& e) {
    fmt::print(stderr, "oei: {}\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    fmt::print(stderr, "oei: {}\n", e.what());
    return kIo;
  }
  return kUsage;
}
