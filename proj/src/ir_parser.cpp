#include "oei/ir.hpp"

#include <fmt/format.h>

#include <cctype>
#include <charconv>
#include <map>
#include <set>

namespace oei::ir {
namespace {

enum class Tok { Ident, Global, Int, Punct, Newline, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  Value value = 0;
  SourceLoc loc;
};

// Longest match first.
constexpr std::string_view kPuncts[] = {"->", "&&", "<<", ">>", "==", "!=", "<=", ">=", "{", "}",
                                        "(",  ")",  "[",  "]",  ",",  ":",  "=",  "&",  "*", "+",
                                        "-",  "/",  "%",  "^",  "|",  "<",  ">"};

class Lexer {
public:
  Lexer(std::string_view src, std::vector<Diagnostic>& diags) : src_(src), diags_(diags) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\n' || c == ';') {
        out.push_back({Tok::Newline, std::string(1, c), 0, here()});
        advance();
      } else if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else if (c == '#' || (c == '/' && peek(1) == '/')) {
        while (pos_ < src_.size() && src_[pos_] != '\n')
          advance();
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const auto loc = here();
        out.push_back({Tok::Ident, ident(), 0, loc});
      } else if (c == '@') {
        const auto loc = here();
        advance();
        if (pos_ >= src_.size() || !(std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
          diags_.push_back({loc, "expected a name after '@'"});
          continue;
        }
        out.push_back({Tok::Global, ident(), 0, loc});
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        out.push_back(number());
      } else {
        const auto loc = here();
        bool matched = false;
        for (auto p : kPuncts) {
          if (src_.substr(pos_, p.size()) == p) {
            out.push_back({Tok::Punct, std::string(p), 0, loc});
            for (std::size_t i = 0; i < p.size(); ++i)
              advance();
            matched = true;
            break;
          }
        }
        if (!matched) {
          diags_.push_back({loc, fmt::format("unexpected character '{}'", c)});
          advance();
        }
      }
    }
    out.push_back({Tok::Newline, "\n", 0, here()});
    out.push_back({Tok::End, "", 0, here()});
    return out;
  }

private:
  SourceLoc here() const { return {line_, col_}; }
  char peek(std::size_t k) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string ident() {
    const auto start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      advance();
    return std::string(src_.substr(start, pos_ - start));
  }

  Token number() {
    const auto loc = here();
    const auto start = pos_;
    int base = 10;
    if (src_[pos_] == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
      base = 16;
      advance();
      advance();
    }
    const auto digits = pos_;
    while (pos_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[pos_])))
      advance();
    const auto text = src_.substr(start, pos_ - start);
    std::uint64_t v = 0;
    const auto* first = src_.data() + digits;
    const auto* last = src_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, v, base);
    if (ec != std::errc() || ptr != last || first == last)
      diags_.push_back({loc, fmt::format("malformed integer literal '{}'", text)});
    return {Tok::Int, std::string(text), static_cast<Value>(v), loc};
  }

  std::string_view src_;
  std::vector<Diagnostic>& diags_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

const std::set<std::string, std::less<>> kBodyKeywords = {
    "var",  "array", "attest_begin", "attest_end", "output", "call", "call_indirect",
    "jump", "jump_indirect", "br", "ret", "halt", "input"};

std::optional<BinaryOp> binop_from(std::string_view s) {
  static const std::map<std::string_view, BinaryOp> table = {
      {"+", BinaryOp::Add}, {"-", BinaryOp::Sub},  {"*", BinaryOp::Mul},  {"/", BinaryOp::Div},
      {"%", BinaryOp::Rem}, {"&", BinaryOp::And},  {"|", BinaryOp::Or},   {"^", BinaryOp::Xor},
      {"<<", BinaryOp::Shl}, {">>", BinaryOp::Shr}, {"==", BinaryOp::Eq}, {"!=", BinaryOp::Ne},
      {"<", BinaryOp::Lt},  {"<=", BinaryOp::Le}, {">", BinaryOp::Gt},   {">=", BinaryOp::Ge}};
  if (auto it = table.find(s); it != table.end())
    return it->second;
  return std::nullopt;
}

struct SyntaxError {};

class Parser {
public:
  Parser(std::vector<Token> toks, std::vector<Diagnostic>& diags) : toks_(std::move(toks)), diags_(diags) {}

  Program run() {
    parse_toplevel();
    resolve_globals();
    for (std::size_t f = 0; f < prog_.functions.size(); ++f)
      parse_body(static_cast<int>(f));
    resolve_entry();
    prog_.assign_addresses();
    return std::move(prog_);
  }

private:
  // ---- token helpers ----
  const Token& cur() const { return toks_[pos_]; }
  const Token& look(std::size_t k) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  bool at_punct(std::string_view p) const { return cur().kind == Tok::Punct && cur().text == p; }
  bool at_ident(std::string_view w) const { return cur().kind == Tok::Ident && cur().text == w; }
  bool at_end_of_stmt() const {
    return cur().kind == Tok::Newline || cur().kind == Tok::End || at_punct("}");
  }
  Token take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const SourceLoc& loc, std::string msg) {
    diags_.push_back({loc, std::move(msg)});
    throw SyntaxError{};
  }
  void error(const SourceLoc& loc, std::string msg) { diags_.push_back({loc, std::move(msg)}); }

  std::string describe(const Token& t) const {
    switch (t.kind) {
    case Tok::Newline: return "end of line";
    case Tok::End: return "end of input";
    case Tok::Global: return "'@" + t.text + "'";
    default: return "'" + t.text + "'";
    }
  }

  void expect_punct(std::string_view p) {
    if (!at_punct(p))
      fail(cur().loc, fmt::format("expected '{}' but found {}", p, describe(cur())));
    take();
  }
  Token expect_ident(std::string_view what) {
    if (cur().kind != Tok::Ident)
      fail(cur().loc, fmt::format("expected {} but found {}", what, describe(cur())));
    return take();
  }
  Value expect_int(std::string_view what) {
    bool neg = false;
    if (at_punct("-")) {
      take();
      neg = true;
    }
    if (cur().kind != Tok::Int)
      fail(cur().loc, fmt::format("expected {} but found {}", what, describe(cur())));
    const auto v = static_cast<std::uint64_t>(take().value);
    return static_cast<Value>(neg ? 0 - v : v);
  }
  void end_stmt() {
    if (!at_end_of_stmt())
      fail(cur().loc, fmt::format("unexpected {} at end of statement", describe(cur())));
    if (cur().kind == Tok::Newline)
      take();
  }
  void skip_newlines() {
    while (cur().kind == Tok::Newline)
      take();
  }
  void recover_to_line_end() {
    while (cur().kind != Tok::Newline && cur().kind != Tok::End && !at_punct("}"))
      take();
    if (cur().kind == Tok::Newline)
      take();
  }

  // ---- top level ----
  void parse_toplevel() {
    while (true) {
      skip_newlines();
      if (cur().kind == Tok::End)
        return;
      try {
        if (at_ident("global"))
          parse_global_scalar();
        else if (at_ident("array"))
          parse_global_array();
        else if (at_ident("func"))
          parse_function_header();
        else if (at_ident("entry"))
          parse_entry_directive();
        else if (at_ident("interrupt"))
          parse_interrupt_directive();
        else
          fail(cur().loc, fmt::format("expected a top-level declaration but found {}", describe(cur())));
      } catch (const SyntaxError&) {
        recover_toplevel();
      }
    }
  }

  void recover_toplevel() {
    // Skip to the next line that starts a top-level keyword, jumping over braces.
    int depth = 0;
    while (cur().kind != Tok::End) {
      if (at_punct("{"))
        ++depth;
      if (at_punct("}")) {
        --depth;
        take();
        if (depth <= 0)
          return;
        continue;
      }
      if (depth == 0 && cur().kind == Tok::Newline) {
        take();
        return;
      }
      take();
    }
  }

  void declare_global(VarDecl d) {
    if (global_names_.count(d.name))
      error(d.loc, fmt::format("duplicate name '@{}'", d.name));
    global_names_.insert(d.name);
    prog_.globals.push_back(std::move(d));
  }

  void parse_var_suffix(VarDecl& d, bool allow_ptr) {
    if (allow_ptr && at_punct(":")) {
      take();
      const auto t = expect_ident("'ptr'");
      if (t.text != "ptr")
        fail(t.loc, fmt::format("unknown variable kind '{}'", t.text));
      d.kind = VarKind::Pointer;
    }
    if (at_ident("critical")) {
      take();
      d.critical = true;
    }
  }

  Initializer parse_initializer() {
    Initializer in;
    if (at_punct("&")) {
      take();
      if (cur().kind == Tok::Global) {
        in.kind = Initializer::Kind::VarAddr;
        in.name = take().text;
        if (at_punct("[")) {
          take();
          in.value = expect_int("an element offset");
          expect_punct("]");
        }
        pending_inits_.push_back({prog_.globals.size(), 0, cur().loc});
        return in;
      }
      const auto t = expect_ident("a function name");
      in.kind = Initializer::Kind::FunctionAddr;
      in.name = t.text;
      pending_inits_.push_back({prog_.globals.size(), 0, t.loc});
      return in;
    }
    in.value = expect_int("an initializer");
    return in;
  }

  void parse_global_scalar() {
    take();
    if (cur().kind != Tok::Global)
      fail(cur().loc, fmt::format("expected a global name like '@x' but found {}", describe(cur())));
    VarDecl d;
    d.loc = cur().loc;
    d.name = take().text;
    parse_var_suffix(d, true);
    if (at_punct("=")) {
      take();
      d.init.push_back(parse_initializer());
    }
    end_stmt();
    declare_global(std::move(d));
  }

  void parse_global_array() {
    take();
    if (cur().kind != Tok::Global)
      fail(cur().loc, fmt::format("expected a global name like '@x' but found {}", describe(cur())));
    VarDecl d;
    d.loc = cur().loc;
    d.name = take().text;
    d.kind = VarKind::Array;
    expect_punct("[");
    d.length = expect_int("an array length");
    expect_punct("]");
    parse_var_suffix(d, false);
    if (at_punct("=")) {
      take();
      d.init.push_back(parse_initializer());
      while (at_punct(",")) {
        take();
        skip_newlines();
        d.init.push_back(parse_initializer());
      }
    }
    end_stmt();
    declare_global(std::move(d));
  }

  void parse_entry_directive() {
    take();
    const auto t = expect_ident("an entry function name");
    entry_name_ = t.text;
    entry_loc_ = t.loc;
    end_stmt();
  }

  void parse_interrupt_directive() {
    const auto loc = take().loc;
    const auto irq = expect_int("an interrupt id");
    const auto t = expect_ident("a handler function name");
    end_stmt();
    if (pending_irqs_.count(static_cast<int>(irq)))
      error(loc, fmt::format("duplicate interrupt id {}", irq));
    pending_irqs_[static_cast<int>(irq)] = t;
  }

  void parse_function_header() {
    take();
    const auto name = expect_ident("a function name");
    Function fn;
    fn.name = name.text;
    fn.loc = name.loc;
    if (at_punct("(")) {
      take();
      while (!at_punct(")")) {
        VarDecl p;
        const auto pn = expect_ident("a parameter name");
        p.name = pn.text;
        p.loc = pn.loc;
        parse_var_suffix(p, true);
        fn.params.push_back(std::move(p));
        if (!at_punct(","))
          break;
        take();
      }
      expect_punct(")");
    }
    skip_newlines();
    expect_punct("{");
    const auto body_start = pos_;
    int depth = 1;
    while (depth > 0) {
      if (cur().kind == Tok::End)
        fail(fn.loc, fmt::format("function '{}' is missing its closing '}}'", fn.name));
      if (at_punct("{"))
        ++depth;
      if (at_punct("}"))
        --depth;
      take();
    }
    if (function_names_.count(fn.name))
      error(fn.loc, fmt::format("duplicate name '{}'", fn.name));
    function_names_.insert(fn.name);
    bodies_.push_back({body_start, pos_ - 1});
    prog_.functions.push_back(std::move(fn));
  }

  void resolve_globals() {
    for (const auto& p : pending_inits_) {
      for (auto& in : prog_.globals[p.global].init) {
        if (in.kind == Initializer::Kind::FunctionAddr && in.function < 0) {
          if (auto f = prog_.find_function(in.name))
            in.function = *f;
          else
            error(p.loc, fmt::format("unresolved reference to function '{}'", in.name));
        } else if (in.kind == Initializer::Kind::VarAddr && !in.var.valid()) {
          if (auto g = prog_.find_global(in.name))
            in.var = {kGlobalScope, *g};
          else
            error(p.loc, fmt::format("unresolved reference to '@{}'", in.name));
        }
      }
    }
    for (const auto& [irq, tok] : pending_irqs_) {
      if (auto f = prog_.find_function(tok.text))
        prog_.interrupt_vector[irq] = *f;
      else
        error(tok.loc, fmt::format("unresolved interrupt handler '{}'", tok.text));
    }
  }

  void resolve_entry() {
    const std::string name = entry_name_.empty() ? "main" : entry_name_;
    if (auto f = prog_.find_function(name))
      prog_.entry = *f;
    else
      error(entry_name_.empty() ? SourceLoc{1, 1} : entry_loc_, fmt::format("entry function '{}' not found", name));
  }

  // ---- function bodies ----
  void parse_body(int f) {
    fn_ = f;
    auto& fn = prog_.functions[f];
    pos_ = bodies_[f].first;
    const auto end = bodies_[f].second;
    closed_.clear();
    scan_labels(pos_, end);
    for (const auto& p : fn.params)
      check_local_name(fn, p.name, p.loc);

    while (pos_ < end) {
      skip_newlines();
      if (pos_ >= end)
        break;
      try {
        if (at_ident("var") || at_ident("array")) {
          parse_local_decl(fn);
        } else if (cur().kind == Tok::Ident && look(1).kind == Tok::Punct && look(1).text == ":") {
          start_block(fn);
        } else {
          parse_instruction(fn);
        }
      } catch (const SyntaxError&) {
        recover_to_line_end();
      }
    }
    if (fn.blocks.empty())
      error(fn.loc, fmt::format("function '{}' has no basic blocks", fn.name));
    for (std::size_t b = 0; b < fn.blocks.size(); ++b)
      if (!closed_[b])
        error(fn.blocks[b].loc,
              fmt::format("block '{}' does not end with a terminator", fn.blocks[b].label));
  }

  // Labels are `name:` at the start of a statement; collected up front so
  // forward references resolve while parsing.
  void scan_labels(std::size_t begin, std::size_t end) {
    labels_.clear();
    int next = 0;
    bool stmt_start = true;
    for (std::size_t i = begin; i < end; ++i) {
      if (stmt_start && i + 1 < end && toks_[i].kind == Tok::Ident && toks_[i + 1].kind == Tok::Punct &&
          toks_[i + 1].text == ":") {
        labels_.emplace(toks_[i].text, next++);
        ++i;
        continue; // a statement may follow the label on the same line
      }
      stmt_start = toks_[i].kind == Tok::Newline;
    }
  }

  int lookup_label(const Token& t) {
    if (auto it = labels_.find(t.text); it != labels_.end())
      return it->second;
    fail(t.loc, fmt::format("unresolved reference to label '{}'", t.text));
  }

  void check_local_name(const Function& fn, const std::string& name, const SourceLoc& loc) {
    int count = 0;
    for (int s = 0; s < fn.slot_count(); ++s)
      if (fn.slot(s).name == name)
        ++count;
    if (count > 1 && !reported_dupes_.count({fn_, name})) {
      reported_dupes_.insert({fn_, name});
      error(loc, fmt::format("duplicate name '{}' in function '{}'", name, fn.name));
    }
    if (function_names_.count(name))
      error(loc, fmt::format("duplicate name '{}': shadows a function", name));
    if (kBodyKeywords.count(name))
      error(loc, fmt::format("'{}' is a reserved word", name));
  }

  void parse_local_decl(Function& fn) {
    const bool is_array = take().text == "array";
    if (!fn.blocks.empty())
      fail(cur().loc, "local declarations must precede the first block");
    VarDecl d;
    const auto n = expect_ident("a variable name");
    d.name = n.text;
    d.loc = n.loc;
    if (is_array) {
      d.kind = VarKind::Array;
      expect_punct("[");
      d.length = expect_int("an array length");
      expect_punct("]");
      parse_var_suffix(d, false);
    } else {
      parse_var_suffix(d, true);
    }
    end_stmt();
    fn.locals.push_back(std::move(d));
    check_local_name(fn, fn.locals.back().name, fn.locals.back().loc);
  }

  void start_block(Function& fn) {
    const auto t = take();
    take(); // ':'
    if (fn.find_block(t.text))
      error(t.loc, fmt::format("duplicate label '{}'", t.text));
    BasicBlock bb;
    bb.label = t.text;
    bb.loc = t.loc;
    fn.blocks.push_back(std::move(bb));
    closed_.push_back(false);
  }

  BasicBlock& current_block(Function& fn, const SourceLoc& loc) {
    if (fn.blocks.empty())
      fail(loc, "instruction outside of a basic block");
    if (closed_.back())
      fail(loc, fmt::format("instruction after the terminator of block '{}'", fn.blocks.back().label));
    return fn.blocks.back();
  }

  void emit(Function& fn, Instruction ins) {
    auto& bb = current_block(fn, ins.loc);
    if (is_terminator(ins.op)) {
      bb.terminator = std::move(ins);
      closed_.back() = true;
    } else {
      bb.body.push_back(std::move(ins));
    }
  }

  VarRef resolve_name(const Token& t) {
    if (t.kind == Tok::Global) {
      if (auto g = prog_.find_global(t.text))
        return {kGlobalScope, *g};
      fail(t.loc, fmt::format("unresolved reference to '@{}'", t.text));
    }
    if (auto s = prog_.functions[fn_].find_slot(t.text))
      return {fn_, *s};
    fail(t.loc, fmt::format("unresolved reference to '{}'", t.text));
  }

  std::string spelling(const Token& t) const { return t.kind == Tok::Global ? "@" + t.text : t.text; }

  Operand parse_operand() {
    const auto& t = cur();
    if (t.kind == Tok::Int || at_punct("-"))
      return Operand::constant(expect_int("an operand"));
    if (t.kind == Tok::Ident || t.kind == Tok::Global) {
      if (t.kind == Tok::Ident && kBodyKeywords.count(t.text))
        fail(t.loc, fmt::format("unexpected keyword '{}'", t.text));
      const auto tok = take();
      return Operand::variable(resolve_name(tok), spelling(tok));
    }
    if (at_punct("&&")) {
      take();
      const auto l = expect_ident("a label");
      Operand o;
      o.kind = Operand::Kind::LabelAddr;
      o.name = l.text;
      o.target = lookup_label(l);
      return o;
    }
    if (at_punct("&")) {
      take();
      const auto f = expect_ident("a function name");
      return function_operand(f);
    }
    fail(t.loc, fmt::format("expected an operand but found {}", describe(t)));
  }

  Operand function_operand(const Token& f) {
    Operand o;
    o.kind = Operand::Kind::FunctionAddr;
    o.name = f.text;
    if (auto idx = prog_.find_function(f.text))
      o.target = *idx;
    else
      fail(f.loc, fmt::format("unresolved reference to function '{}'", f.text));
    return o;
  }

  std::vector<Operand> parse_args() {
    std::vector<Operand> args;
    if (!at_punct("("))
      return args;
    take();
    while (!at_punct(")")) {
      args.push_back(parse_operand());
      if (!at_punct(","))
        break;
      take();
    }
    expect_punct(")");
    return args;
  }

  // `[dest =] call f(args) [-> cont]` / `call_indirect x(args) [-> cont]`
  void parse_call(Function& fn, const SourceLoc& loc, VarRef dest) {
    Instruction ins;
    ins.loc = loc;
    ins.dest = dest;
    if (take().text == "call") {
      ins.op = Opcode::DirectCall;
      const auto f = expect_ident("a function name");
      const auto op = function_operand(f);
      ins.callee = op.target;
    } else {
      ins.op = Opcode::IndirectCall;
      ins.lhs = parse_operand();
    }
    ins.args = parse_args();
    if (at_punct("->")) {
      take();
      ins.target = lookup_label(expect_ident("a continuation label"));
    } else {
      // Without `->` the call returns to the next block in declaration order.
      ins.target = static_cast<int>(fn.blocks.size());
      if (ins.target >= static_cast<int>(labels_.size()))
        fail(loc, "call without '->' continuation has no following block");
    }
    end_stmt();
    emit(fn, std::move(ins));
  }

  MemRef parse_mem_after_name(const Token& base) {
    MemRef m;
    m.base = resolve_name(base);
    if (at_punct("[")) {
      take();
      m.index = parse_operand();
      expect_punct("]");
    }
    return m;
  }

  Token expect_var_token() {
    if (cur().kind != Tok::Ident && cur().kind != Tok::Global)
      fail(cur().loc, fmt::format("expected a variable but found {}", describe(cur())));
    return take();
  }

  void parse_instruction(Function& fn) {
    const auto loc = cur().loc;
    Instruction ins;
    ins.loc = loc;

    if (at_punct("*")) {
      take();
      const auto base = expect_var_token();
      ins.op = Opcode::Store;
      ins.mem = parse_mem_after_name(base);
      expect_punct("=");
      ins.lhs = parse_operand();
      end_stmt();
      emit(fn, std::move(ins));
      return;
    }

    if (cur().kind == Tok::Ident && kBodyKeywords.count(cur().text)) {
      const auto kw = cur().text;
      if (kw == "attest_begin" || kw == "attest_end") {
        take();
        ins.op = kw == "attest_begin" ? Opcode::AttestBegin : Opcode::AttestEnd;
        ins.op_id = static_cast<int>(expect_int("an operation id"));
        end_stmt();
        emit(fn, std::move(ins));
      } else if (kw == "output") {
        take();
        ins.op = Opcode::Output;
        ins.lhs = parse_operand();
        end_stmt();
        emit(fn, std::move(ins));
      } else if (kw == "call" || kw == "call_indirect") {
        parse_call(fn, loc, VarRef{});
      } else if (kw == "jump") {
        take();
        ins.op = Opcode::DirectJump;
        ins.target = lookup_label(expect_ident("a label"));
        end_stmt();
        emit(fn, std::move(ins));
      } else if (kw == "jump_indirect") {
        take();
        ins.op = Opcode::IndirectJump;
        ins.lhs = parse_operand();
        end_stmt();
        emit(fn, std::move(ins));
      } else if (kw == "br") {
        take();
        ins.op = Opcode::CondBranch;
        ins.lhs = parse_operand();
        ins.binop = BinaryOp::Ne;
        ins.rhs = Operand::constant(0);
        if (cur().kind == Tok::Punct) {
          if (auto op = binop_from(cur().text); op && is_relational(*op)) {
            take();
            ins.binop = *op;
            ins.rhs = parse_operand();
          }
        }
        expect_punct(",");
        ins.target = lookup_label(expect_ident("a taken label"));
        expect_punct(",");
        ins.alt_target = lookup_label(expect_ident("a not-taken label"));
        end_stmt();
        emit(fn, std::move(ins));
      } else if (kw == "ret") {
        take();
        ins.op = Opcode::Return;
        if (!at_end_of_stmt())
          ins.lhs = parse_operand();
        end_stmt();
        emit(fn, std::move(ins));
      } else if (kw == "halt") {
        take();
        ins.op = Opcode::Halt;
        end_stmt();
        emit(fn, std::move(ins));
      } else {
        fail(loc, fmt::format("unexpected keyword '{}'", kw));
      }
      return;
    }

    // Statements starting with a variable: stores to elements, or assignments.
    const auto lhs_tok = expect_var_token();
    if (at_punct("[")) {
      ins.op = Opcode::Store;
      ins.mem = parse_mem_after_name(lhs_tok);
      expect_punct("=");
      ins.lhs = parse_operand();
      end_stmt();
      emit(fn, std::move(ins));
      return;
    }
    if (!at_punct("="))
      fail(cur().loc, fmt::format("expected '=' but found {}", describe(cur())));
    const auto dest = resolve_name(lhs_tok);
    take();
    ins.dest = dest;

    if (at_ident("input")) {
      take();
      ins.op = Opcode::Input;
    } else if (at_ident("call") || at_ident("call_indirect")) {
      parse_call(fn, loc, dest);
      return;
    } else if (at_punct("&&")) {
      ins.op = Opcode::Assign;
      ins.lhs = parse_operand();
    } else if (at_punct("&")) {
      take();
      const auto t = expect_var_token();
      const bool is_local = t.kind == Tok::Ident && prog_.functions[fn_].find_slot(t.text).has_value();
      if (t.kind == Tok::Ident && !is_local && prog_.find_function(t.text)) {
        ins.op = Opcode::Assign;
        ins.lhs = function_operand(t);
      } else {
        ins.mem = parse_mem_after_name(t);
        ins.op = ins.mem.index.kind == Operand::Kind::None ? Opcode::AddressOf : Opcode::GetElement;
      }
    } else if (at_punct("*")) {
      take();
      const auto base = expect_var_token();
      ins.op = Opcode::Load;
      ins.mem = parse_mem_after_name(base);
    } else if ((cur().kind == Tok::Ident || cur().kind == Tok::Global) && look(1).kind == Tok::Punct &&
               look(1).text == "[") {
      const auto base = take();
      ins.op = Opcode::Load;
      ins.mem = parse_mem_after_name(base);
    } else {
      ins.lhs = parse_operand();
      ins.op = Opcode::Assign;
      if (cur().kind == Tok::Punct) {
        if (auto op = binop_from(cur().text)) {
          take();
          ins.op = Opcode::BinOp;
          ins.binop = *op;
          ins.rhs = parse_operand();
        }
      }
    }
    end_stmt();
    emit(fn, std::move(ins));
  }

  struct PendingInit {
    std::size_t global;
    int unused;
    SourceLoc loc;
  };

  std::vector<Token> toks_;
  std::vector<Diagnostic>& diags_;
  std::size_t pos_ = 0;
  Program prog_;
  int fn_ = -1;
  std::set<std::string> global_names_;
  std::set<std::string> function_names_;
  std::set<std::pair<int, std::string>> reported_dupes_;
  std::vector<std::pair<std::size_t, std::size_t>> bodies_;
  std::vector<PendingInit> pending_inits_;
  std::map<int, Token> pending_irqs_;
  std::map<std::string, int> labels_;
  std::vector<bool> closed_;
  std::string entry_name_;
  SourceLoc entry_loc_;
};

} // namespace

Program parse_program(std::string_view text) {
  std::vector<Diagnostic> diags;
  auto toks = Lexer(text, diags).run();
  Parser parser(std::move(toks), diags);
  auto prog = parser.run();
  if (!diags.empty())
    throw ParseError(std::move(diags));
  return prog;
}

} // namespace oei::ir
