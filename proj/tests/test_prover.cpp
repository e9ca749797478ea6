#include "oei/prover.hpp"

#include "random_program.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace oei;
using prover::FaultSpec;

namespace {

prover::RunResult run_text(std::string_view text, std::vector<std::int64_t> inputs = {},
                           std::vector<FaultSpec> faults = {}) {
  const auto c = io::compile(text);
  prover::RunOptions ro;
  ro.inputs = std::move(inputs);
  ro.faults = std::move(faults);
  return prover::run(c.instrumented, ro);
}

constexpr const char* kRecursive = R"(
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
  br keep == r, same, differ
same:
  ret keep
differ:
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
  attest_end 1
  output x
  halt
}
)";

} // namespace

TEST(Prover, ArithmeticAndMemory) {
  const auto r = run_text(R"(
global @g = 7
array @a[3] = 1, 2, 3
func main {
  var x
  var p : ptr
entry:
  x = input
  x = x / 0
  output x
  x = 7 % 0
  output x
  p = &@a[1]
  *p = 40
  x = @a[1]
  x = x + @g
  output x
  x = 0 - 9
  x = x / 2
  output x
  x = 1 << 65
  output x
  halt
}
)",
                          {5});
  EXPECT_FALSE(r.error);
  EXPECT_EQ(r.outputs, (std::vector<std::int64_t>{0, 0, 47, -4, 2}));
}

TEST(Prover, ExhaustedInputReadsZero) {
  const auto r = run_text("func main {\n  var x\nentry:\n  x = input\n  output x\n  x = input\n  output x\n"
                          "  halt\n}\n",
                          {7});
  EXPECT_FALSE(r.error);
  EXPECT_EQ(r.outputs, (std::vector<std::int64_t>{7, 0}));
}

TEST(Prover, PathFollowsOperation) {
  const auto r = run_text("func main {\n  var x\nentry:\n  x = 1\n  attest_begin 4\n  x = x + 1\n  attest_end 4\n"
                          "  halt\n}\n");
  EXPECT_EQ(r.attested_op, 4u);
  EXPECT_TRUE(r.session_completed);
  EXPECT_EQ(r.path, (std::vector<ir::CodeAddr>{0x1004, 0x1008, 0x100c}));
  EXPECT_EQ(r.segments.size(), 1u);
}

TEST(Prover, RecursiveLocalsAreTrackedPerFrame) {
  const auto r = run_text(kRecursive, {3});
  EXPECT_FALSE(r.error);
  EXPECT_EQ(r.outputs, std::vector<std::int64_t>{30});
  EXPECT_FALSE(r.cvi.flag());
  std::set<std::uint64_t> stack_words;
  for (const auto& [id, v] : r.cvi.values())
    if (id >= prover::kStackBase)
      stack_words.insert(id);
  // keep of four live frames, each at its own word.
  EXPECT_GE(stack_words.size(), 4u);
}

TEST(Prover, CorruptingTheInnermostFrameIsCaught) {
  const auto c = io::compile(kRecursive);
  const auto br = *prover::resolve_code_location(c.program, "rec:back+0");
  FaultSpec f;
  f.trigger = br;
  f.action = FaultSpec::Action::OverwriteVar;
  f.var = "rec.keep";
  f.value = 999;
  prover::RunOptions ro;
  ro.inputs = {3};
  ro.faults = {f};
  const auto r = prover::run(c.instrumented, ro);
  EXPECT_TRUE(r.cvi.flag());
  // Both later uses of the corrupted keep are reported, against the same word.
  ASSERT_EQ(r.cvi.context().size(), 2u);
  EXPECT_GE(r.cvi.context()[0].var_id, prover::kStackBase);
  EXPECT_EQ(r.cvi.context()[0].var_id, r.cvi.context()[1].var_id);
  const auto b = measure::decode(r.segments.back());
  EXPECT_TRUE(b.f);
  EXPECT_EQ(b.c, r.cvi.context());
}

TEST(Prover, ReturnOverwriteRedirectsControl) {
  const auto c = io::compile("func f {\nentry:\n  ret\n}\nfunc main {\nentry:\n  attest_begin 1\n  call f -> a\n"
                             "a:\n  output 1\n  jump b\nb:\n  output 2\n  attest_end 1\n  halt\n}\n");
  FaultSpec f;
  f.trigger = *prover::resolve_code_location(c.program, "f:entry+0");
  f.value = static_cast<std::int64_t>(*prover::resolve_code_location(c.program, "main:b+0"));
  prover::RunOptions ro;
  ro.faults = {f};
  const auto r = prover::run(c.instrumented, ro);
  EXPECT_EQ(r.outputs, std::vector<std::int64_t>{2});
  EXPECT_EQ(r.return_log, std::vector<std::uint64_t>{static_cast<std::uint64_t>(f.value)});
}

TEST(Prover, InterruptRunsHandlerOutsideThePath) {
  const auto c = oei::testing::compile_corpus("alarm");
  prover::RunOptions ro;
  ro.inputs = oei::testing::corpus_inputs("alarm");
  const auto plain = prover::run(c.instrumented, ro);
  ro.interrupts = {{14, 1, std::nullopt}};
  const auto irq = prover::run(c.instrumented, ro);
  EXPECT_FALSE(irq.error);
  const auto b = measure::decode(irq.segments.back());
  ASSERT_EQ(b.interrupts.size(), 1u);
  EXPECT_EQ(b.interrupts[0].irq, 1u);
  EXPECT_EQ(b.interrupts[0].handler, c.program.functions[*c.program.find_function("door_isr")].entry());
  EXPECT_TRUE(measure::decode(plain.segments.back()).interrupts.empty());
}

TEST(Prover, BenignPairSizes) {
  const auto c = io::compile(oei::testing::call_chain_program(50));
  const auto sizes = prover::run_benign_pair(c.instrumented, {});
  EXPECT_EQ(sizes.returns, 50u);
  EXPECT_EQ(sizes.hashed, 32u);
  EXPECT_EQ(sizes.baseline, 32u + 50 * 8);
  EXPECT_EQ(sizes.hashed_run.outputs, sizes.baseline_run.outputs);
}

TEST(Prover, ResolveCodeLocation) {
  const auto p = ir::parse_program(io::read_text_file(oei::testing::corpus_path("rover.mir")));
  EXPECT_EQ(prover::resolve_code_location(p, "drive:go+0"), 0x1048u);
  EXPECT_EQ(prover::resolve_code_location(p, "0x1048"), 0x1048u);
  EXPECT_FALSE(prover::resolve_code_location(p, "drive:go+1"));
  EXPECT_FALSE(prover::resolve_code_location(p, "0x1049"));
  EXPECT_FALSE(prover::resolve_code_location(p, "nope:entry+0"));
}

TEST(Prover, StepLimit) {
  const auto c = io::compile("func main {\nentry:\n  jump entry\n}\n");
  prover::RunOptions ro;
  ro.max_steps = 1000;
  const auto r = prover::run(c.instrumented, ro);
  ASSERT_TRUE(r.error);
  EXPECT_NE(r.error->find("step limit"), std::string::npos);
}
