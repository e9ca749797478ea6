#include "oei/verifier.hpp"

#include "random_program.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace oei;
using verifier::Failure;

namespace {

struct Fixture {
  io::Compiled c;
  SigningKey key = oei::testing::test_key();
  Nonce nonce{};

  explicit Fixture(io::Compiled compiled) : c(std::move(compiled)) { nonce[3] = 0x42; }

  prover::RunResult run(std::vector<std::int64_t> inputs, std::vector<prover::FaultSpec> faults = {},
                        std::size_t capacity = 4096) const {
    prover::RunOptions ro;
    ro.inputs = std::move(inputs);
    ro.nonce = nonce;
    ro.key = &key;
    ro.faults = std::move(faults);
    ro.session.capacity = capacity;
    return prover::run(c.instrumented, ro);
  }

  verifier::Report verify(const std::vector<Bytes>& segs, std::uint32_t op = 1) const {
    return verifier::verify(segs, c.bundle, op, nonce, key.pub);
  }
};

Bytes resign(const Bytes& encoded, const SigningKey& key, auto&& edit) {
  auto b = measure::decode(encoded);
  edit(b);
  measure::sign_blob(b, key);
  return measure::encode(b);
}

} // namespace

TEST(Verify, BenignCorpusRunsPassAndReconstructThePath) {
  for (auto name : oei::testing::kCorpus) {
    Fixture fx(oei::testing::compile_corpus(name));
    const auto r = fx.run(oei::testing::corpus_inputs(name));
    ASSERT_TRUE(r.attested_op) << name;
    const auto rep = fx.verify(r.segments, *r.attested_op);
    EXPECT_TRUE(rep.pass) << name << ": " << rep.text();
    EXPECT_EQ(rep.path, r.path) << name;
    EXPECT_EQ(rep.bits_consumed, rep.bits_total);
    EXPECT_EQ(rep.addrs_consumed, rep.addrs_total);
  }
}

TEST(Verify, SmallCapacitySplitsIntoManySegments) {
  Fixture fx(oei::testing::compile_corpus("light"));
  const auto r = fx.run(oei::testing::corpus_inputs("light"), {}, 8);
  EXPECT_GT(r.segments.size(), 3u);
  const auto rep = fx.verify(r.segments);
  EXPECT_TRUE(rep.pass) << rep.text();
  EXPECT_EQ(rep.path, r.path);
}

TEST(Verify, CheckOrder) {
  Fixture fx(oei::testing::compile_corpus("light"));
  const auto r = fx.run(oei::testing::corpus_inputs("light"), {}, 8);
  const auto& segs = r.segments;
  ASSERT_GT(segs.size(), 2u);

  EXPECT_EQ(fx.verify({}).failure, Failure::OperationMismatch);

  auto flipped = segs;
  flipped[1][20] ^= 1;
  EXPECT_EQ(fx.verify(flipped).failure, Failure::Signature);

  const auto other = generate_key();
  EXPECT_EQ(verifier::verify(segs, fx.c.bundle, 1, fx.nonce, other.pub).failure, Failure::Signature);

  Nonce wrong = fx.nonce;
  wrong[0] ^= 1;
  EXPECT_EQ(verifier::verify(segs, fx.c.bundle, 1, wrong, fx.key.pub).failure, Failure::NonceMismatch);
  EXPECT_EQ(fx.verify(segs, 9).failure, Failure::OperationMismatch);

  auto swapped = segs;
  std::swap(swapped[0], swapped[1]);
  EXPECT_EQ(fx.verify(swapped).failure, Failure::SegmentChain);
  auto dropped = segs;
  dropped.erase(dropped.begin() + 1);
  EXPECT_EQ(fx.verify(dropped).failure, Failure::SegmentChain);
  auto truncated = segs;
  truncated.pop_back();
  EXPECT_EQ(fx.verify(truncated).failure, Failure::SegmentChain);

  auto aborted = segs;
  aborted.back() = resign(aborted.back(), fx.key, [](measure::Blob& b) { b.kind = measure::SegmentKind::Aborted; });
  EXPECT_EQ(fx.verify(aborted).failure, Failure::Structure);
}

TEST(Verify, ForgedTracesAreRejected) {
  Fixture fx(oei::testing::compile_corpus("rover"));
  const auto r = fx.run(oei::testing::corpus_inputs("rover"));
  ASSERT_EQ(r.segments.size(), 1u);

  const auto bad_h = resign(r.segments[0], fx.key, [](measure::Blob& b) { b.h[0] ^= 1; });
  EXPECT_EQ(fx.verify({bad_h}).failure, Failure::HashMismatch);

  const auto bad_target = resign(r.segments[0], fx.key, [](measure::Blob& b) {
    ASSERT_FALSE(b.trace.addr.empty());
    b.trace.addr[0] = 0x1068;
  });
  EXPECT_EQ(fx.verify({bad_target}).failure, Failure::CfiTarget);

  const auto extra_bit = resign(r.segments[0], fx.key, [](measure::Blob& b) { b.trace.bin.push(true); });
  EXPECT_EQ(fx.verify({extra_bit}).failure, Failure::Structure);

  const auto extra_addr = resign(r.segments[0], fx.key, [](measure::Blob& b) { b.trace.addr.push_back(0x104c); });
  EXPECT_EQ(fx.verify({extra_addr}).failure, Failure::Structure);

  const auto cvi = resign(r.segments[0], fx.key, [](measure::Blob& b) {
    b.f = true;
    b.c = {{0x10000000, 0}};
  });
  const auto rep = fx.verify({cvi});
  EXPECT_EQ(rep.failure, Failure::CviViolation);
  EXPECT_EQ(rep.context.size(), 1u);
}

TEST(Verify, MutatedSegmentsNeverPass) {
  Fixture fx(oei::testing::compile_corpus("syringe"));
  const auto r = fx.run(oei::testing::corpus_inputs("syringe"));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    auto segs = r.segments;
    auto& s = segs[rng() % segs.size()];
    s[rng() % s.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    EXPECT_EQ(fx.verify(segs).failure, Failure::Signature);
  }
}

TEST(Verify, RandomProgramsRoundTrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 60; ++i) {
    const auto src = oei::testing::random_program(rng);
    Fixture fx(io::compile(src));
    const auto r = fx.run(oei::testing::random_inputs(rng));
    if (!r.attested_op)
      continue;
    const auto rep = fx.verify(r.segments);
    EXPECT_TRUE(rep.pass) << src << rep.text();
    EXPECT_EQ(rep.path, r.path) << src;
  }
}

TEST(Verify, ReportFormats) {
  Fixture fx(oei::testing::compile_corpus("syringe"));
  const auto r = fx.run(oei::testing::corpus_inputs("syringe"));
  const auto rep = fx.verify(r.segments, *r.attested_op);
  const auto j = rep.json();
  EXPECT_EQ(j["verdict"], "pass");
  EXPECT_EQ(j["failure"], "NONE");
  EXPECT_EQ(j["path"].size(), r.path.size());
  EXPECT_NE(rep.text().find("PASS"), std::string::npos);
  const auto bad = fx.verify(r.segments, 9);
  EXPECT_EQ(bad.json()["verdict"], "fail");
  EXPECT_EQ(bad.json()["failure"], "OPERATION_MISMATCH");
}

TEST(AbstractExecute, HandBuiltTraces) {
  const auto c = io::compile("func f {\nentry:\n  ret\n}\nfunc main {\n  var x\nentry:\n  attest_begin 1\n"
                             "  br x < 1, a, b\na:\n  call f -> b\nb:\n  attest_end 1\n  halt\n}\n");
  measure::Trace t;
  t.bin = measure::BitTrace::from_bits({1});
  // f returns to main:b at 0x1010.
  const std::uint64_t rets[] = {0x1010};
  const auto ok = verifier::abstract_execute(c.bundle, 1, t, hash_returns(rets));
  EXPECT_EQ(ok.status, Failure::None) << ok.detail;
  EXPECT_EQ(ok.path, (std::vector<ir::CodeAddr>{0x1004, 0x1008, 0x100c, 0x1000, 0x1010}));

  const auto wrong = verifier::abstract_execute(c.bundle, 1, t, kZeroDigest);
  EXPECT_EQ(wrong.status, Failure::HashMismatch);

  measure::Trace not_taken;
  not_taken.bin = measure::BitTrace::from_bits({0});
  const auto skip = verifier::abstract_execute(c.bundle, 1, not_taken, kZeroDigest);
  EXPECT_EQ(skip.status, Failure::None);

  const auto missing = verifier::abstract_execute(c.bundle, 1, measure::Trace{}, kZeroDigest);
  EXPECT_EQ(missing.status, Failure::Structure);
}

TEST(AbstractExecute, StepsGrowLinearly) {
  std::vector<double> ratio;
  for (std::size_t n : {100, 1000, 5000}) {
    const auto c = io::compile(oei::testing::straight_line_program(n));
    const auto w = verifier::abstract_execute(c.bundle, 1, measure::Trace{}, kZeroDigest);
    ASSERT_EQ(w.status, Failure::None);
    EXPECT_EQ(w.path.size(), n + 2);
    ratio.push_back(static_cast<double>(w.steps) / static_cast<double>(w.path.size()));
  }
  EXPECT_DOUBLE_EQ(ratio.front(), ratio.back());
}

TEST(Enumerate, CorpusProofsAreDistinctAndSelfConsistent) {
  for (auto name : oei::testing::kCorpus) {
    const auto c = oei::testing::compile_corpus(name);
    for (const auto& [op, _] : c.bundle.operations) {
      const auto proofs = verifier::enumerate_legal_proofs(c.bundle, op);
      ASSERT_FALSE(proofs.empty()) << name;
      std::set<std::pair<std::vector<ir::CodeAddr>, std::string>> seen_proofs;
      std::set<std::vector<ir::CodeAddr>> seen_paths;
      for (const auto& p : proofs) {
        const auto key = to_hex(p.trace.bin.bytes()) + "/" + std::to_string(p.trace.bin.size()) + "/" +
                         to_hex(p.h) + "/" +
                         to_hex({reinterpret_cast<const std::uint8_t*>(p.trace.addr.data()), p.trace.addr.size() * 8});
        EXPECT_TRUE(seen_proofs.insert({{}, key}).second) << name;
        EXPECT_TRUE(seen_paths.insert(p.path).second) << name;
        const auto w = verifier::abstract_execute(c.bundle, op, p.trace, p.h);
        EXPECT_EQ(w.status, Failure::None) << name;
        EXPECT_EQ(w.path, p.path) << name;
      }
    }
  }
}

TEST(Enumerate, BoundsAreEnforced) {
  const auto c = oei::testing::compile_corpus("light");
  verifier::EnumerationLimits lim;
  lim.max_proofs = 5;
  EXPECT_THROW(verifier::enumerate_legal_proofs(c.bundle, 1, lim), verifier::BoundExceeded);
}
