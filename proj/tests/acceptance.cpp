// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "oei/io.hpp"
#include "oei/verifier.hpp"

#include "random_program.hpp"
#include "test_util.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>

using namespace oei;
using verifier::Failure;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
  std::string why; // first failure
};

void fail(Outcome& o, std::string why) {
  if (o.pass)
    o.why = std::move(why);
  o.pass = false;
}

const SigningKey& key() {
  static const SigningKey k = oei::testing::test_key();
  return k;
}

struct Attested {
  prover::RunResult run;
  verifier::Report report;
};

Attested attest_verify(const io::Compiled& c, std::vector<std::int64_t> inputs, std::vector<prover::FaultSpec> faults = {},
                       std::size_t capacity = 4096) {
  prover::RunOptions ro;
  ro.inputs = std::move(inputs);
  ro.nonce = random_nonce();
  ro.key = &key();
  ro.faults = std::move(faults);
  ro.session.capacity = capacity;
  Attested a;
  a.run = prover::run(c.instrumented, ro);
  a.report = verifier::verify(a.run.segments, c.bundle, a.run.attested_op.value_or(1), ro.nonce, key().pub);
  return a;
}

// 1 ---------------------------------------------------------------------------
Outcome benign_round_trip() {
  Outcome o;
  const auto t0 = Clock::now();
  int corpus = 0, random = 0;
  for (auto name : oei::testing::kCorpus) {
    const auto c = oei::testing::compile_corpus(name);
    const auto a = attest_verify(c, oei::testing::corpus_inputs(name));
    if (!a.report.pass || a.report.path != a.run.path)
      fail(o, fmt::format("{}: {}", name, a.report.detail));
    ++corpus;
  }
  std::mt19937_64 rng(2024);
  oei::testing::GenOptions opt;
  opt.max_blocks = 12;
  opt.loop_bound = 3;
  while (random < 200) {
    const auto src = oei::testing::random_program(rng, opt);
    const auto c = io::compile(src);
    const auto a = attest_verify(c, oei::testing::random_inputs(rng));
    if (!a.run.attested_op || a.run.error) {
      fail(o, "random program did not complete its operation");
      continue;
    }
    if (!a.report.pass || a.report.path != a.run.path)
      fail(o, fmt::format("random program #{}: {}", random, a.report.detail));
    ++random;
  }
  const double s = seconds_since(t0);
  if (s >= 60)
    fail(o, fmt::format("took {:.1f} s", s));
  o.detail = fmt::format("{} corpus + {} random programs, paths equal, {:.2f} s", corpus, random, s);
  return o;
}

// 2 ---------------------------------------------------------------------------
Outcome attack_suite() {
  Outcome o;
  const std::map<std::string, std::set<Failure>> classes{
      {"fn-ptr overwrite", {Failure::CfiTarget, Failure::Structure}},
      {"return overwrite", {Failure::Structure, Failure::HashMismatch}},
      {"critical-variable corruption", {Failure::CviViolation}},
      {"unintended operation", {Failure::OperationMismatch}},
  };
  std::map<std::string, std::pair<int, int>> tally; // detected, total
  int other = 0;
  for (auto name : oei::testing::kCorpus) {
    const auto c = oei::testing::compile_corpus(name);
    const auto suite = io::parse_scenarios(
        c.program, io::read_json_file(oei::testing::corpus_path(std::string(name) + ".attacks.json")));
    for (const auto& s : suite) {
      if (s.expect.empty())
        continue;
      const std::set<Failure> expect(s.expect.begin(), s.expect.end());
      std::string cls;
      for (const auto& [k, allowed] : classes)
        if (allowed == expect)
          cls = k;
      const auto out = io::run_scenario(c, s, key());
      if (cls.empty()) {
        ++other;
        if (!out.as_expected)
          fail(o, fmt::format("{}/{}: got {}", name, s.name, verifier::failure_name(out.report.failure)));
        continue;
      }
      auto& [hit, total] = tally[cls];
      ++total;
      if (!out.report.pass && classes.at(cls).count(out.report.failure))
        ++hit;
      else
        fail(o, fmt::format("{}/{}: got {}", name, s.name, verifier::failure_name(out.report.failure)));
    }
  }
  std::string parts;
  for (const auto& [k, _] : classes) {
    const auto [hit, total] = tally[k];
    if (total == 0)
      fail(o, "no " + k + " scenario");
    parts += fmt::format("{}{} {}/{}", parts.empty() ? "" : ", ", k, hit, total);
  }
  o.detail = fmt::format("{}; {} other attacks", parts, other);
  return o;
}

// 3 ---------------------------------------------------------------------------
Outcome random_return_corruption() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::vector<std::pair<std::string, io::Compiled>> progs;
  for (auto name : oei::testing::kCorpus)
    progs.emplace_back(name, oei::testing::compile_corpus(name));
  int done = 0, attempts = 0;
  std::map<Failure, int> seen;
  while (done < 120 && attempts < 5000) {
    ++attempts;
    const auto& [name, c] = progs[rng() % progs.size()];
    const auto inputs = oei::testing::corpus_inputs(name);
    prover::RunOptions ro;
    ro.inputs = inputs;
    const auto benign = prover::run(c.instrumented, ro);
    std::map<ir::CodeAddr, std::uint32_t> rets;
    for (auto a : benign.path)
      if (c.program.instruction_at(a)->op == ir::Opcode::Return)
        ++rets[a];
    if (rets.empty())
      continue;
    auto it = rets.begin();
    std::advance(it, static_cast<long>(rng() % rets.size()));
    prover::FaultSpec f;
    f.trigger = it->first;
    f.occurrence = 1 + static_cast<std::uint32_t>(rng() % it->second);
    const auto& map = c.program.code_map;
    f.value = static_cast<std::int64_t>(c.program.instruction(map[rng() % map.size()]).addr);
    const auto a = attest_verify(c, inputs, {f});
    if (a.run.path == benign.path && a.run.outputs == benign.outputs)
      continue; // the drawn value was the legitimate return address
    ++done;
    ++seen[a.report.failure];
    if (a.report.pass || (a.report.failure != Failure::Structure && a.report.failure != Failure::HashMismatch))
      fail(o, fmt::format("{} ret {} -> {}: {}", name, ir::format_addr(f.trigger), ir::format_addr(f.value),
                          a.report.pass ? "PASS" : verifier::failure_name(a.report.failure)));
  }
  if (done < 100)
    fail(o, fmt::format("only {} corruptions generated", done));
  o.detail = fmt::format("{} corruptions: STRUCTURE {}, HASH_MISMATCH {}", done, seen[Failure::Structure],
                         seen[Failure::HashMismatch]);
  return o;
}

// 4 ---------------------------------------------------------------------------
Outcome evidence_size() {
  Outcome o;
  const auto c = oei::testing::compile_corpus("light");
  prover::RunOptions ro;
  ro.inputs = oei::testing::corpus_inputs("light");
  const auto s = prover::run_benign_pair(c.instrumented, ro);
  const double ratio = static_cast<double>(s.hashed) / static_cast<double>(s.baseline);
  if (ratio > 0.10)
    fail(o, fmt::format("light ratio {:.3f}", ratio));
  std::set<std::size_t> hashed;
  for (std::size_t n : {1, 10, 100, 1000}) {
    const auto cc = io::compile(oei::testing::call_chain_program(n));
    const auto p = prover::run_benign_pair(cc.instrumented, {});
    if (p.returns != n)
      fail(o, fmt::format("call chain {} recorded {} returns", n, p.returns));
    const auto blob = measure::decode(p.hashed_run.segments.back());
    if (blob.h.size() != 32 || blob.trace.byte_size() != 0)
      fail(o, "hashed evidence carries more than H");
    hashed.insert(p.hashed);
  }
  if (hashed.size() != 1)
    fail(o, "hashed size varies with the number of returns");
  o.detail = fmt::format("light {}/{} bytes = {:.1f}% over {} returns; call chains 1..1000 all {} bytes", s.hashed,
                         s.baseline, 100 * ratio, s.returns, *hashed.begin());
  return o;
}

// 5 ---------------------------------------------------------------------------
Outcome instrumentation_reduction() {
  Outcome o;
  std::string fewest;
  std::size_t fewest_n = SIZE_MAX;
  double fewest_ratio = 0;
  for (auto name : oei::testing::kCorpus) {
    const auto c = oei::testing::compile_corpus(name);
    const auto data = c.analysis.sites.data.size();
    const auto addr = analysis::count_address_based_sites(c.program);
    if (data >= addr)
      fail(o, fmt::format("{}: {} data sites vs {} address-based", name, data, addr));
    const auto n = c.analysis.critical.variables.size();
    if (n < fewest_n) {
      fewest_n = n;
      fewest = name;
      fewest_ratio = static_cast<double>(data) / static_cast<double>(addr);
    }
  }
  if (fewest_ratio > 0.40)
    fail(o, fmt::format("{} ratio {:.3f}", fewest, fewest_ratio));
  o.detail = fmt::format("data < address-based on all files; fewest-critical file {} ({} vars) at {:.1f}%", fewest,
                         fewest_n, 100 * fewest_ratio);
  return o;
}

// 6 ---------------------------------------------------------------------------
Outcome collisions() {
  Outcome o;
  const auto t0 = Clock::now();
  std::set<Digest> digests;
  std::size_t sequences = 0;
  std::function<void(const Digest&, int)> walk = [&](const Digest& h, int depth) {
    for (std::uint64_t k = 0; k < 16; ++k) {
      const auto next = hash_update(h, ir::kCodeBase + 4 * k);
      ++sequences;
      digests.insert(next);
      if (depth + 1 < 4)
        walk(next, depth + 1);
    }
  };
  walk(kZeroDigest, 0);
  if (sequences != 69904 || digests.size() != sequences)
    fail(o, fmt::format("{} sequences, {} distinct digests", sequences, digests.size()));

  std::size_t proofs = 0;
  verifier::EnumerationLimits lim;
  lim.loop_bound = 3;
  for (auto name : oei::testing::kCorpus) {
    const auto c = oei::testing::compile_corpus(name);
    for (const auto& [op, _] : c.bundle.operations) {
      const auto all = verifier::enumerate_legal_proofs(c.bundle, op, lim);
      std::set<std::tuple<Bytes, std::size_t, std::vector<std::uint64_t>, Digest>> keys;
      std::set<std::vector<ir::CodeAddr>> paths;
      for (const auto& p : all) {
        keys.insert({p.trace.bin.bytes(), p.trace.bin.size(), p.trace.addr, p.h});
        paths.insert(p.path);
      }
      if (paths.size() != all.size() || keys.size() != all.size())
        fail(o, fmt::format("{} op {}: {} paths, {} distinct proofs", name, op, paths.size(), keys.size()));
      proofs += all.size();
    }
  }
  const double s = seconds_since(t0);
  if (s >= 120)
    fail(o, fmt::format("took {:.1f} s", s));
  o.detail = fmt::format("{} return sequences distinct; {} enumerated proofs distinct; {:.2f} s", sequences, proofs, s);
  return o;
}

// 7 ---------------------------------------------------------------------------
// Frozen from tests/oracles/blake2s_vectors.py (CPython hashlib.blake2s).
Outcome blake2s_vectors() {
  Outcome o;
  auto seq = [](std::size_t n) {
    Bytes b(n);
    for (std::size_t i = 0; i < n; ++i)
      b[i] = static_cast<std::uint8_t>(i);
    return b;
  };
  const std::string fox = "The quick brown fox jumps over the lazy dog";
  const std::vector<std::pair<Bytes, std::string>> raw{
      {{}, "69217a3079908094e11121d042354a7c1f55b6482ca1a51e1b250dfd1ed0eef9"},
      {{'a', 'b', 'c'}, "508c5e8c327c14e2e1a72ba34eeb452f37458b209ed63a294d999b4c86675982"},
      {Bytes(fox.begin(), fox.end()), "606beeec743ccbeff6cbcdf5d5302aa855c256c29b88c8ed331ea1a6bf3c8812"},
      {seq(64), "56f34e8b96557e90c1f24b52d0c89d51086acf1b00f634cf1dde9233b8eaaa3e"},
      {seq(65), "1b53ee94aaf34e4b159d48de352c7f0661d0a40edff95a0b1639b4090e974472"},
      {Bytes(1000, 'a'), "a4691c2bf852334ece63c024234338fc6c150bdf04fa3f6e0e4c5209b326438d"},
  };
  const std::vector<std::pair<std::vector<std::uint64_t>, std::string>> chains{
      {{0x1000}, "ddceabf1157725092cf57a175613726864311919b3a83c5d02c74893114a07c0"},
      {{0}, "94bb15542026f4f607416f019dffe21bb39bbb32cc92085ab615660a6b5fbef4"},
      {{~0ull}, "858774b846746df454f0edbd2a6f0844d5701a09d1579631de545e215dc41328"},
      {{0x1000, 0x1004}, "bc2b739951025a679e9b4ba073a655f1eaa019fbf723b6e3cc6b12235cca6261"},
      {{0x1004, 0x1000}, "6dce96d8c84f7b828a2574b849b1b80dd0a5ef1365a15a6c19c9fa3d4a1d37d5"},
      {{0x1028, 0x102c, 0x1028, 0x102c, 0x1040}, "148684461e67bccf655c3cee9860793c50906436f0b317f6f723cc201645e5be"},
  };
  int ok = 0;
  for (const auto& [in, hex] : raw)
    to_hex(blake2s256(in)) == hex ? ++ok : (fail(o, "digest of " + std::to_string(in.size()) + " bytes"), 0);
  for (const auto& [rets, hex] : chains)
    to_hex(hash_returns(rets)) == hex ? ++ok : (fail(o, "return chain " + hex.substr(0, 8)), 0);
  o.detail = fmt::format("{}/{} vectors match", ok, raw.size() + chains.size());
  return o;
}

// 8 ---------------------------------------------------------------------------
Outcome codec_robustness() {
  Outcome o;
  std::mt19937_64 rng(8);
  auto u = [&](std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n)(rng); };
  for (int i = 0; i < 10000; ++i) {
    measure::Blob b;
    b.kind = static_cast<measure::SegmentKind>(u(2));
    b.op_id = static_cast<std::uint32_t>(u(~0u));
    b.segment_index = static_cast<std::uint32_t>(u(1000));
    for (auto& x : b.prev_hash)
      x = static_cast<std::uint8_t>(u(255));
    for (auto& x : b.nonce)
      x = static_cast<std::uint8_t>(u(255));
    for (auto n = u(12); n > 0; --n)
      b.trace.addr.push_back(u(~0ull));
    for (auto n = u(40); n > 0; --n)
      b.trace.bin.push(u(1));
    for (auto& x : b.h)
      x = static_cast<std::uint8_t>(u(255));
    b.f = u(1);
    if (b.f)
      for (auto n = u(4); n > 0; --n)
        b.c.push_back({u(~0ull), u(~0ull)});
    for (auto n = u(2); n > 0; --n) {
      measure::InterruptEvidence e;
      e.irq = static_cast<std::uint32_t>(u(8));
      e.handler = u(0xffff);
      for (auto m = u(10); m > 0; --m)
        e.trace.bin.push(u(1));
      b.interrupts.push_back(e);
    }
    measure::sign_blob(b, key());
    const auto enc = measure::encode(b);
    if (measure::decode(enc) != b || io::unpack_segments(io::pack_segments({enc})) != std::vector<Bytes>{enc}) {
      fail(o, "round trip mismatch");
      break;
    }
  }

  const auto c = oei::testing::compile_corpus("light");
  prover::RunOptions ro;
  ro.inputs = oei::testing::corpus_inputs("light");
  ro.nonce = random_nonce();
  ro.key = &key();
  ro.session.capacity = 64;
  const auto run = prover::run(c.instrumented, ro);
  const auto packed = io::pack_segments(run.segments);
  int sig = 0, decode = 0;
  for (int i = 0; i < 10000; ++i) {
    auto m = packed;
    switch (u(3)) {
    case 0:
      m[u(m.size() - 1)] ^= static_cast<std::uint8_t>(1 + u(254));
      break;
    case 1:
      m.resize(u(m.size() - 1));
      break;
    case 2:
      m.insert(m.begin() + static_cast<long>(u(m.size())), static_cast<std::uint8_t>(u(255)));
      break;
    default:
      for (auto k = 2 + u(6); k > 0; --k)
        m[u(m.size() - 1)] = static_cast<std::uint8_t>(u(255));
    }
    try {
      const auto segs = io::unpack_segments(m);
      const auto rep = verifier::verify(segs, c.bundle, 1, ro.nonce, key().pub);
      if (rep.failure == Failure::Signature)
        ++sig;
      else if (segs != run.segments || !rep.pass)
        fail(o, fmt::format("mutation yielded {}", verifier::failure_name(rep.failure)));
      else
        fail(o, "mutation left the container unchanged");
    } catch (const io::FormatError&) {
      ++decode;
    } catch (const measure::DecodeError&) {
      ++decode;
    }
  }
  if (sig + decode != 10000)
    fail(o, "some mutations were not rejected");

  Nonce fresh = random_nonce();
  const auto replay = verifier::verify(run.segments, c.bundle, 1, fresh, key().pub);
  if (replay.failure != Failure::NonceMismatch)
    fail(o, fmt::format("replay gave {}", verifier::failure_name(replay.failure)));
  o.detail = fmt::format("10000 round trips; 10000 mutations: {} SIGNATURE, {} decode; replay NONCE_MISMATCH", sig,
                         decode);
  return o;
}

// 9 ---------------------------------------------------------------------------
constexpr const char* kCviProgram = R"(
global @limit critical = 5
func rec(n) {
  var keep critical
  var m
  var r
entry:
  keep = n * 10
  br n > 0, deeper, base
deeper:
  m = n - 1
  r = call rec(m) -> back
back:
  br keep > @limit, high, low
high:
  ret keep
low:
  ret keep
base:
  ret 0
}
func main {
  var x
  var n
entry:
  n = input
  attest_begin 1
  x = call rec(n) -> done
done:
  br x > @limit, a, b
a:
  jump b
b:
  attest_end 1
  output x
  halt
}
)";

Outcome cvi_properties() {
  Outcome o;
  const auto c = io::compile(kCviProgram);

  const auto benign = attest_verify(c, {4});
  if (!benign.report.pass)
    fail(o, "equal use: " + benign.report.detail);
  std::set<std::uint64_t> frames;
  for (const auto& [id, v] : benign.run.cvi.values())
    if (id >= prover::kStackBase)
      frames.insert(id);
  if (frames.size() < 4)
    fail(o, "recursive locals share words");

  prover::FaultSpec g;
  g.trigger = *prover::resolve_code_location(c.program, "main:done+0");
  g.action = prover::FaultSpec::Action::OverwriteVar;
  g.var = "@limit";
  g.value = 1000;
  const auto changed = attest_verify(c, {4}, {g});
  if (changed.report.failure != Failure::CviViolation)
    fail(o, "global change gave " + std::string(verifier::failure_name(changed.report.failure)));

  prover::FaultSpec l;
  l.trigger = *prover::resolve_code_location(c.program, "rec:back+0");
  l.occurrence = 2;
  l.action = prover::FaultSpec::Action::OverwriteVar;
  l.var = "rec.keep";
  l.value = -1;
  const auto frame = attest_verify(c, {4}, {l});
  std::set<std::uint64_t> hit;
  for (const auto& rec : frame.report.context)
    hit.insert(rec.var_id);
  if (frame.report.failure != Failure::CviViolation || hit.size() != 1 || *hit.begin() < prover::kStackBase)
    fail(o, "per-frame local change not pinned to its frame");

  measure::CviState s;
  s.register_pointer(0x700, {100, 104});
  s.define_via(0x700, 102, {1, 2, 3, 4});
  const auto r = s.bounds_adjust(0x700, 102, 4);
  const bool overlap_only = r == measure::Range{102, 104} && s.value(102) == 1 && s.value(103) == 2 &&
                            !s.value(104) && !s.value(105) && s.use_via(0x700, 102, {1, 2, 77, 77}, 0) &&
                            !s.use_via(0x700, 102, {1, 9, 77, 77}, 0) && s.context().size() == 1 &&
                            s.context()[0].var_id == 103;
  if (!overlap_only)
    fail(o, "out-of-bounds access not clipped to the overlap");
  o.detail = fmt::format("equal use passes; change caught; overlap [102,104) of [102,106); {} stack words tracked",
                         frames.size());
  return o;
}

// 10 --------------------------------------------------------------------------
double log_log_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return num / den;
}

Outcome verifier_linearity() {
  Outcome o;
  std::string parts;
  const std::pair<const char*, std::string (*)(std::size_t)> families[] = {
      {"straight-line", oei::testing::straight_line_program},
      {"call chain", [](std::size_t n) { return oei::testing::call_chain_program(n / 2); }},
  };
  for (const auto& [label, make] : families) {
    std::vector<double> xs, ys;
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t n : {100, 316, 1000, 3162, 10000}) {
      const auto c = io::compile(make(n));
      const auto a = attest_verify(c, {});
      if (!a.report.pass)
        fail(o, fmt::format("{} n={}: {}", label, n, a.report.detail));
      lo = std::min(lo, a.report.path.size());
      hi = std::max(hi, a.report.path.size());
      xs.push_back(std::log(static_cast<double>(a.report.path.size())));
      ys.push_back(std::log(static_cast<double>(a.report.steps)));
    }
    const double slope = log_log_slope(xs, ys);
    if (std::abs(slope - 1.0) > 0.10)
      fail(o, fmt::format("{} log-log slope {:.3f}", label, slope));
    parts += fmt::format("{}{} {:.4f} (paths {}..{})", parts.empty() ? "" : ", ", label, slope, lo, hi);
  }
  o.detail = "log-log slope of steps vs path length: " + parts;
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"benign round trip", benign_round_trip},
      {"attack suite detection", attack_suite},
      {"random return corruption", random_return_corruption},
      {"evidence size", evidence_size},
      {"instrumentation reduction", instrumentation_reduction},
      {"hash and proof collisions", collisions},
      {"BLAKE2s golden vectors", blake2s_vectors},
      {"codec robustness", codec_robustness},
      {"CVI properties", cvi_properties},
      {"verifier linearity", verifier_linearity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      fail(o, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    fmt::print("criterion {:>2}: {} {}: {}{}\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail,
               o.pass ? "" : " [" + o.why + "]");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
