#include "oei/ir.hpp"

#include "random_program.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace oei;
using namespace oei::ir;
using oei::testing::has_diagnostic;

namespace {

std::vector<Diagnostic> parse_errors(std::string_view text) {
  try {
    parse_program(text);
  } catch (const ParseError& e) {
    return e.diagnostics();
  }
  return {};
}

} // namespace

TEST(Parse, MinimalProgram) {
  const auto p = parse_program("func main { entry: halt }");
  ASSERT_EQ(p.functions.size(), 1u);
  ASSERT_EQ(p.functions[0].blocks.size(), 1u);
  EXPECT_EQ(p.instruction_count(), 1u);
  EXPECT_EQ(p.functions[0].entry(), 0x1000u);
  EXPECT_TRUE(validate(p).empty());
}

TEST(Parse, AddressesAreDenseWithStrideFour) {
  const auto p = parse_program("func f {\nentry:\n  ret\n}\nfunc main {\n  var x\nentry:\n  x = 1\n  x = call f -> b\n"
                               "b:\n  halt\n}\n");
  ASSERT_EQ(p.instruction_count(), 4u);
  for (std::size_t i = 0; i < p.instruction_count(); ++i)
    EXPECT_EQ(p.instruction(p.code_map[i]).addr, kCodeBase + 4 * i);
  EXPECT_FALSE(p.is_code_address(0x1002));
  EXPECT_FALSE(p.is_code_address(0x1010));
}

TEST(Parse, UnresolvedIndirectCallOperand) {
  const auto d = parse_errors("func main {\nentry:\n  call_indirect r0 -> next\nnext:\n  halt\n}\n");
  ASSERT_FALSE(d.empty());
  EXPECT_TRUE(has_diagnostic(d, "unresolved reference to 'r0'"));
  EXPECT_EQ(d.front().loc.line, 3);
}

TEST(Parse, SyntaxErrorsCarryLocations) {
  const auto d = parse_errors("func main {\nentry:\n  x = = 3\n  halt\n}\n");
  ASSERT_FALSE(d.empty());
  EXPECT_EQ(d.front().loc.line, 3);
}

TEST(Parse, DuplicateNames) {
  EXPECT_TRUE(has_diagnostic(parse_errors("global @a\nglobal @a\nfunc main { entry: halt }"), "duplicate name"));
  EXPECT_TRUE(
      has_diagnostic(parse_errors("func main { entry: halt }\nfunc main { entry: halt }"), "duplicate name"));
  EXPECT_TRUE(has_diagnostic(parse_errors("func main {\nentry:\n  jump entry\nentry:\n  halt\n}"), "duplicate label"));
}

TEST(Parse, UnresolvedLabelAndFunction) {
  EXPECT_TRUE(has_diagnostic(parse_errors("func main {\nentry:\n  jump nowhere\n}"), "nowhere"));
  EXPECT_TRUE(has_diagnostic(parse_errors("func main {\nentry:\n  call g -> e2\ne2:\n  halt\n}"), "'g'"));
}

TEST(Parse, SyringeCorpusFile) {
  const auto p = parse_program(io::read_text_file(oei::testing::corpus_path("syringe.mir")));
  // Counted by hand from the source: 3 + 5 + 9 + 21.
  EXPECT_EQ(p.instruction_count(), 38u);
  const auto m = p.markers();
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].op_id, 1);
  EXPECT_EQ(m[1].op_id, 2);
  EXPECT_EQ(p.functions[m[0].function].name, "main");
  EXPECT_TRUE(validate(p).empty());
}

TEST(Parse, AllCorpusFilesValidate) {
  for (auto name : oei::testing::kCorpus) {
    const auto p = parse_program(io::read_text_file(oei::testing::corpus_path(std::string(name) + ".mir")));
    EXPECT_TRUE(validate(p).empty()) << name;
  }
}

TEST(Parse, Declarations) {
  const auto p = parse_program("global @k critical = 4\nglobal @p : ptr = &@arr[1]\narray @arr[3] = 1, 2, 3\n"
                               "global @fp = &main\ninterrupt 2 isr\nfunc isr { entry: ret }\n"
                               "func main {\n  var q : ptr critical\n  array buf[2]\nentry:\n  halt\n}\n");
  ASSERT_EQ(p.globals.size(), 4u);
  EXPECT_TRUE(p.globals[0].critical);
  EXPECT_EQ(p.globals[1].kind, VarKind::Pointer);
  EXPECT_EQ(p.globals[2].kind, VarKind::Array);
  EXPECT_EQ(p.globals[2].length, 3);
  EXPECT_EQ(p.globals[3].init[0].kind, Initializer::Kind::FunctionAddr);
  EXPECT_EQ(p.interrupt_vector.at(2), 0);
  const auto& main = p.functions[1];
  EXPECT_TRUE(main.locals[0].critical);
  EXPECT_EQ(main.locals[0].kind, VarKind::Pointer);
  EXPECT_EQ(main.locals[1].length, 2);
  EXPECT_EQ(p.var_name({1, 0}), "main.q");
  EXPECT_EQ(p.resolve_var("main.buf"), (VarRef{1, 1}));
  EXPECT_EQ(p.resolve_var("@arr"), (VarRef{kGlobalScope, 2}));
}

TEST(Parse, InstructionForms) {
  const auto p = parse_program(R"(
array @a[4]
func f(x) {
entry:
  ret x
}
func main {
  var x
  var y
  var p : ptr
  var h
  var t
entry:
  x = input
  y = x * 3
  p = &@a[1]
  *p = y
  y = *p
  @a[x] = 2
  y = @a[2]
  p = &@a
  h = &f
  t = &&done
  output y
  y = call_indirect h(x) -> next
next:
  br x >= 2, done, done
done:
  halt
}
)");
  const auto& b = p.functions[1].blocks[0].body;
  EXPECT_EQ(b[0].op, Opcode::Input);
  EXPECT_EQ(b[1].op, Opcode::BinOp);
  EXPECT_EQ(b[1].binop, BinaryOp::Mul);
  EXPECT_EQ(b[2].op, Opcode::GetElement);
  EXPECT_EQ(b[3].op, Opcode::Store);
  EXPECT_EQ(b[4].op, Opcode::Load);
  EXPECT_EQ(b[5].op, Opcode::Store);
  EXPECT_EQ(b[6].op, Opcode::Load);
  EXPECT_EQ(b[7].op, Opcode::AddressOf);
  EXPECT_EQ(b[8].lhs.kind, Operand::Kind::FunctionAddr);
  EXPECT_EQ(b[9].lhs.kind, Operand::Kind::LabelAddr);
  EXPECT_EQ(b[10].op, Opcode::Output);
  EXPECT_EQ(p.functions[1].blocks[0].terminator.op, Opcode::IndirectCall);
  EXPECT_EQ(p.functions[1].blocks[1].terminator.binop, BinaryOp::Ge);
}

TEST(Validate, MarkersSpanFunctions) {
  const auto p = parse_program("func f {\nentry:\n  attest_end 1\n  ret\n}\n"
                               "func main {\nentry:\n  attest_begin 1\n  call f -> e2\ne2:\n  halt\n}\n");
  EXPECT_TRUE(has_diagnostic(validate(p), "markers span functions"));
}

TEST(Validate, NestedOperation) {
  const auto p = parse_program("func main {\nentry:\n  attest_begin 1\n  attest_begin 2\n  attest_end 2\n"
                               "  attest_end 1\n  halt\n}\n");
  EXPECT_TRUE(has_diagnostic(validate(p), "nested operation"));
}

TEST(Validate, UnpairedMarkers) {
  EXPECT_TRUE(has_diagnostic(validate(parse_program("func main {\nentry:\n  attest_begin 1\n  halt\n}\n")),
                             "no matching attest_end"));
  EXPECT_TRUE(has_diagnostic(validate(parse_program("func main {\nentry:\n  attest_end 3\n  halt\n}\n")),
                             "no matching attest_begin"));
}

TEST(Validate, StructuralErrors) {
  EXPECT_TRUE(has_diagnostic(validate(parse_program("func f(a) { e: ret }\nfunc main {\nentry:\n  call f -> n\n"
                                                    "n:\n  halt\n}\n")),
                             "passes 0 arguments"));
  EXPECT_TRUE(has_diagnostic(validate(parse_program("func main {\n  var x\nentry:\n  x = *x\n  halt\n}\n")),
                             "cannot dereference"));
  EXPECT_TRUE(has_diagnostic(validate(parse_program("entry start\nfunc start(a) { entry: halt }\n")),
                             "must not take parameters"));
}

TEST(RoundTrip, CorpusPrintParse) {
  for (auto name : oei::testing::kCorpus) {
    const auto p = parse_program(io::read_text_file(oei::testing::corpus_path(std::string(name) + ".mir")));
    const auto text = print_program(p);
    const auto q = parse_program(text);
    EXPECT_EQ(p, q) << name;
    EXPECT_EQ(text, print_program(q)) << name;
  }
}

TEST(RoundTrip, RandomPrograms) {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 100; ++i) {
    const auto src = oei::testing::random_program(rng);
    const auto p = parse_program(src);
    EXPECT_TRUE(validate(p).empty()) << src;
    EXPECT_EQ(p, parse_program(print_program(p))) << src;
  }
}

TEST(RoundTrip, AddressAssignmentIsDeterministic) {
  const auto text = io::read_text_file(oei::testing::corpus_path("rover.mir"));
  const auto a = parse_program(text), b = parse_program(text);
  EXPECT_EQ(a.code_map, b.code_map);
}

TEST(Program, LocateAndResolve) {
  const auto p = parse_program("func main {\n  var x\nentry:\n  x = 1\n  jump two\ntwo:\n  halt\n}\n");
  const auto loc = p.locate(0x1008);
  ASSERT_TRUE(loc);
  EXPECT_EQ(loc->block, 1);
  EXPECT_EQ(p.instruction_at(0x1008)->op, Opcode::Halt);
  EXPECT_EQ(p.instruction_at(0x2000), nullptr);
  EXPECT_FALSE(p.resolve_var("main.nope"));
  EXPECT_EQ(format_addr(0x1008), "0x1008");
}
