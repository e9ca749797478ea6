#include "oei/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

namespace oei::io {

using nlohmann::json;

namespace {

std::int64_t integer(const json& j, std::string_view what) {
  if (j.is_number_integer())
    return j.get<std::int64_t>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    std::size_t used = 0;
    try {
      const bool hex = s.starts_with("0x") || s.starts_with("0X");
      const auto v = hex ? static_cast<std::int64_t>(std::stoull(s, &used, 16)) : std::stoll(s, &used, 10);
      if (used == s.size())
        return v;
    } catch (const std::exception&) {
    }
  }
  throw FormatError(fmt::format("{}: expected an integer or hex string", what));
}

ir::CodeAddr location(const ir::Program& program, const json& j, std::string_view what) {
  if (!j.is_string())
    throw FormatError(fmt::format("{}: expected a code location string", what));
  const auto s = j.get<std::string>();
  if (auto a = prover::resolve_code_location(program, s))
    return *a;
  throw FormatError(fmt::format("{}: '{}' is not a code location", what, s));
}

// A return address or indirect target given as a location or an integer.
std::int64_t code_value(const ir::Program& program, const json& j, std::string_view what) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s.find(':') != std::string::npos)
      return static_cast<std::int64_t>(location(program, j, what));
    if (auto f = program.find_function(s))
      return static_cast<std::int64_t>(program.functions[*f].entry());
  }
  return integer(j, what);
}

const json& member(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw FormatError(fmt::format("missing field '{}'", key));
  return j.at(key);
}

} // namespace

std::vector<std::int64_t> parse_inputs(const json& j) {
  const auto& arr = member(j, "inputs");
  if (!arr.is_array())
    throw FormatError("'inputs' must be an array");
  std::vector<std::int64_t> out;
  for (const auto& v : arr)
    out.push_back(integer(v, "inputs"));
  return out;
}

json inputs_to_json(const std::vector<std::int64_t>& inputs) { return {{"inputs", inputs}}; }

prover::FaultSpec parse_fault(const ir::Program& program, const json& j) {
  using Action = prover::FaultSpec::Action;
  prover::FaultSpec f;
  f.trigger = location(program, member(j, "trigger"), "trigger");
  if (j.contains("occurrence")) {
    const auto n = integer(j["occurrence"], "occurrence");
    if (n < 1)
      throw FormatError("occurrence must be at least 1");
    f.occurrence = static_cast<std::uint32_t>(n);
  }
  const auto action = member(j, "action").get<std::string>();
  if (action == prover::fault_action_name(Action::OverwriteReturn)) {
    f.action = Action::OverwriteReturn;
    f.value = code_value(program, member(j, "value"), "value");
  } else if (action == prover::fault_action_name(Action::OverwriteVar)) {
    f.action = Action::OverwriteVar;
    f.var = member(j, "var").get<std::string>();
    f.value = code_value(program, member(j, "value"), "value");
    if (j.contains("index"))
      f.index = integer(j["index"], "index");
  } else if (action == prover::fault_action_name(Action::OverwriteIndirectTarget)) {
    f.action = Action::OverwriteIndirectTarget;
    f.site = location(program, member(j, "site"), "site");
    f.value = code_value(program, member(j, "value"), "value");
  } else {
    throw FormatError(fmt::format("unknown fault action '{}'", action));
  }
  return f;
}

std::vector<prover::FaultSpec> parse_faults(const ir::Program& program, const json& j) {
  std::vector<prover::FaultSpec> out;
  for (const auto& f : member(j, "faults"))
    out.push_back(parse_fault(program, f));
  return out;
}

std::vector<prover::InterruptEvent> parse_interrupts(const ir::Program& program, const json& j) {
  std::vector<prover::InterruptEvent> out;
  for (const auto& e : member(j, "interrupts")) {
    prover::InterruptEvent ev;
    ev.at_step = static_cast<std::uint64_t>(integer(member(e, "at_step"), "at_step"));
    ev.irq = static_cast<std::uint32_t>(integer(member(e, "irq"), "irq"));
    if (e.contains("handler")) {
      const auto name = e["handler"].get<std::string>();
      const auto f = program.find_function(name);
      if (!f)
        throw FormatError(fmt::format("unknown handler function '{}'", name));
      ev.handler = *f;
    }
    out.push_back(ev);
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error(fmt::format("cannot write '{}'", path));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out)
    throw std::runtime_error(fmt::format("write to '{}' failed", path));
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(fmt::format("{}: {}", path, e.what()));
  }
}

ValidationError::ValidationError(std::vector<ir::Diagnostic> diagnostics)
    : std::runtime_error([&] {
        std::string s;
        for (const auto& d : diagnostics)
          s += (s.empty() ? "" : "\n") + d.str();
        return s;
      }()),
      diagnostics_(std::move(diagnostics)) {}

Compiled compile(std::string_view source) {
  Compiled c;
  try {
    c.program = ir::parse_program(source);
  } catch (const ir::ParseError& e) {
    throw ValidationError(e.diagnostics());
  }
  if (auto d = ir::validate(c.program); !d.empty())
    throw ValidationError(std::move(d));
  c.analysis = analysis::analyze(c.program);
  if (!c.analysis.diagnostics.empty())
    throw ValidationError(c.analysis.diagnostics);
  c.instrumented = instrument::instrument(c.program, c.analysis);
  c.bundle = bundle::make_bundle(c.program, c.analysis);
  return c;
}

Compiled compile_file(const std::string& path) { return compile(read_text_file(path)); }

std::optional<verifier::Failure> parse_failure(std::string_view name) {
  using verifier::Failure;
  for (auto f : {Failure::None, Failure::Signature, Failure::NonceMismatch, Failure::OperationMismatch,
                 Failure::SegmentChain, Failure::CfiTarget, Failure::Structure, Failure::HashMismatch,
                 Failure::InterruptMismatch, Failure::CviViolation})
    if (verifier::failure_name(f) == name)
      return f;
  return std::nullopt;
}

std::vector<Scenario> parse_scenarios(const ir::Program& program, const json& j) {
  std::vector<Scenario> out;
  for (const auto& js : member(j, "scenarios")) {
    Scenario s;
    s.name = member(js, "name").get<std::string>();
    s.op_id = static_cast<std::uint32_t>(integer(member(js, "op"), "op"));
    if (js.contains("inputs"))
      s.inputs = parse_inputs(js);
    if (js.contains("faults"))
      s.faults = parse_faults(program, js);
    if (js.contains("interrupts"))
      s.interrupts = parse_interrupts(program, js);
    for (const auto& e : member(js, "expect")) {
      const auto f = parse_failure(e.get<std::string>());
      if (!f)
        throw FormatError(fmt::format("scenario '{}': unknown failure class {}", s.name, e.dump()));
      s.expect.push_back(*f);
    }
    out.push_back(std::move(s));
  }
  return out;
}

ScenarioOutcome run_scenario(const Compiled& c, const Scenario& s, const SigningKey& key) {
  prover::RunOptions ro;
  ro.inputs = s.inputs;
  ro.nonce = random_nonce();
  ro.key = &key;
  ro.faults = s.faults;
  ro.interrupts = s.interrupts;
  const auto run = prover::run(c.instrumented, ro);
  ScenarioOutcome o;
  o.report = verifier::verify(run.segments, c.bundle, s.op_id, ro.nonce, key.pub);
  if (s.expect.empty())
    o.as_expected = o.report.pass;
  else
    o.as_expected = !o.report.pass && std::find(s.expect.begin(), s.expect.end(), o.report.failure) != s.expect.end();
  return o;
}

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t& pos) {
  if (b.size() - pos < 4)
    throw FormatError("truncated blob container");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

} // namespace

Bytes pack_segments(const std::vector<Bytes>& segments) {
  Bytes out{'O', 'E', 'I', 'B', kContainerVersion};
  put_u32(out, static_cast<std::uint32_t>(segments.size()));
  for (const auto& s : segments) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<Bytes> unpack_segments(std::span<const std::uint8_t> b) {
  if (b.size() < 5 || b[0] != 'O' || b[1] != 'E' || b[2] != 'I' || b[3] != 'B')
    throw FormatError("not a blob container (bad magic)");
  if (b[4] != kContainerVersion)
    throw FormatError(fmt::format("unsupported blob container version {}", b[4]));
  std::size_t pos = 5;
  const auto n = get_u32(b, pos);
  std::vector<Bytes> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto len = get_u32(b, pos);
    if (b.size() - pos < len)
      throw FormatError("truncated blob container");
    out.emplace_back(b.begin() + pos, b.begin() + pos + len);
    pos += len;
  }
  if (pos != b.size())
    throw FormatError("trailing bytes after the last segment");
  return out;
}

void write_blob_file(const std::string& path, const std::vector<Bytes>& segments) {
  const auto bytes = pack_segments(segments);
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::vector<Bytes> read_blob_file(const std::string& path) {
  const auto text = read_text_file(path);
  return unpack_segments(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace oei::io
