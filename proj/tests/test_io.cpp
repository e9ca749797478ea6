#include "oei/io.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace oei;
using nlohmann::json;

TEST(Inputs, ParseAndSerialize) {
  EXPECT_EQ(io::parse_inputs(json::parse(R"({"inputs": [1, -2, "0x10"]})")), (std::vector<std::int64_t>{1, -2, 16}));
  EXPECT_EQ(io::inputs_to_json({3, 4}).dump(), R"({"inputs":[3,4]})");
  EXPECT_THROW(io::parse_inputs(json::parse(R"({"inputs": [1.5]})")), io::FormatError);
  EXPECT_THROW(io::parse_inputs(json::parse(R"({"values": []})")), io::FormatError);
  EXPECT_THROW(io::parse_inputs(json::parse(R"({"inputs": ["12x"]})")), io::FormatError);
}

TEST(Faults, Parse) {
  const auto p = ir::parse_program(io::read_text_file(oei::testing::corpus_path("rover.mir")));
  const auto faults = io::parse_faults(p, json::parse(R"({"faults": [
    {"trigger": "drive:go+0", "action": "overwrite_indirect_target", "site": "drive:go+0", "value": "drain"},
    {"trigger": "0x1000", "occurrence": 2, "action": "overwrite_return", "value": "drive:out+0"},
    {"trigger": "drive:turn+0", "action": "overwrite_var", "var": "@waypoints", "index": 2, "value": 9}
  ]})"));
  ASSERT_EQ(faults.size(), 3u);
  EXPECT_EQ(faults[0].site, 0x1048u);
  EXPECT_EQ(faults[0].value, 0x101c);
  EXPECT_EQ(faults[1].occurrence, 2u);
  EXPECT_EQ(faults[1].value, 0x1068);
  EXPECT_EQ(faults[2].var, "@waypoints");
  EXPECT_EQ(faults[2].index, 2);
  EXPECT_THROW(io::parse_fault(p, json::parse(R"({"trigger": "nowhere:x+0", "action": "overwrite_return",
                                                 "value": 0})")),
               io::FormatError);
  EXPECT_THROW(io::parse_fault(p, json::parse(R"({"trigger": "0x1000", "action": "explode", "value": 0})")),
               io::FormatError);
  EXPECT_THROW(io::parse_fault(p, json::parse(R"({"trigger": "0x1000", "occurrence": 0,
                                                 "action": "overwrite_return", "value": 0})")),
               io::FormatError);
}

TEST(Interrupts, Parse) {
  const auto p = ir::parse_program(io::read_text_file(oei::testing::corpus_path("alarm.mir")));
  const auto ev = io::parse_interrupts(p, json::parse(R"({"interrupts": [{"at_step": 3, "irq": 1},
                                                                        {"at_step": 9, "irq": 1, "handler": "sound"}]})"));
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_FALSE(ev[0].handler);
  EXPECT_EQ(ev[1].handler, p.find_function("sound"));
  EXPECT_THROW(io::parse_interrupts(p, json::parse(R"({"interrupts": [{"at_step": 1, "irq": 1, "handler": "zz"}]})")),
               io::FormatError);
}

TEST(Compile, ValidationErrorsCarryDiagnostics) {
  try {
    io::compile("func main {\nentry:\n  attest_begin 1\n  halt\n}\n");
    FAIL();
  } catch (const io::ValidationError& e) {
    EXPECT_TRUE(oei::testing::has_diagnostic(e.diagnostics(), "no matching attest_end"));
  }
  EXPECT_THROW(io::compile("func main {"), io::ValidationError);
}

TEST(Scenarios, CorpusAttackSuitesBehaveAsExpected) {
  const auto key = oei::testing::test_key();
  for (auto name : oei::testing::kCorpus) {
    const auto c = oei::testing::compile_corpus(name);
    const auto suite = io::parse_scenarios(
        c.program, io::read_json_file(oei::testing::corpus_path(std::string(name) + ".attacks.json")));
    ASSERT_FALSE(suite.empty()) << name;
    for (const auto& s : suite) {
      const auto o = io::run_scenario(c, s, key);
      EXPECT_TRUE(o.as_expected) << name << "/" << s.name << ": " << o.report.text();
    }
  }
}

TEST(Scenarios, UnknownFailureClassIsRejected) {
  const auto p = ir::parse_program("func main { entry: halt }");
  EXPECT_THROW(io::parse_scenarios(p, json::parse(R"({"scenarios": [{"name": "x", "op": 1, "expect": ["BOOM"]}]})")),
               io::FormatError);
  EXPECT_EQ(io::parse_failure("HASH_MISMATCH"), verifier::Failure::HashMismatch);
  EXPECT_FALSE(io::parse_failure("hash_mismatch"));
}

TEST(Container, RoundTripAndStrictness) {
  const std::vector<Bytes> segs{{1, 2, 3}, {}, Bytes(300, 7)};
  const auto packed = io::pack_segments(segs);
  EXPECT_EQ((Bytes{packed.begin(), packed.begin() + 9}), (Bytes{'O', 'E', 'I', 'B', 1, 3, 0, 0, 0}));
  EXPECT_EQ(io::unpack_segments(packed), segs);
  auto trailing = packed;
  trailing.push_back(0);
  EXPECT_THROW(io::unpack_segments(trailing), io::FormatError);
  auto magic = packed;
  magic[0] = 'X';
  EXPECT_THROW(io::unpack_segments(magic), io::FormatError);
  auto version = packed;
  version[4] = 2;
  EXPECT_THROW(io::unpack_segments(version), io::FormatError);
  for (std::size_t cut = 0; cut < packed.size(); ++cut)
    EXPECT_THROW(io::unpack_segments(std::span(packed).first(cut)), io::FormatError);
}
