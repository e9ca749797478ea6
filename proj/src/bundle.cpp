#include "oei/bundle.hpp"

#include <fmt/format.h>

#include <stdexcept>

namespace oei::bundle {

using nlohmann::json;
using ir::Opcode;

std::string_view term_kind_name(TermKind k) {
  switch (k) {
  case TermKind::CondBranch: return "br";
  case TermKind::DirectJump: return "jump";
  case TermKind::IndirectJump: return "jump_indirect";
  case TermKind::DirectCall: return "call";
  case TermKind::IndirectCall: return "call_indirect";
  case TermKind::Return: return "ret";
  case TermKind::Halt: return "halt";
  }
  return "?";
}

std::optional<TermKind> parse_term_kind(std::string_view s) {
  for (auto k : {TermKind::CondBranch, TermKind::DirectJump, TermKind::IndirectJump, TermKind::DirectCall,
                 TermKind::IndirectCall, TermKind::Return, TermKind::Halt})
    if (term_kind_name(k) == s)
      return k;
  return std::nullopt;
}

void CfgBundle::index() {
  where_.clear();
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t i = 0; i < blocks[b].addrs.size(); ++i)
      where_[blocks[b].addrs[i]] = {static_cast<int>(b), static_cast<int>(i)};
}

std::optional<std::pair<int, int>> CfgBundle::locate(CodeAddr a) const {
  const auto it = where_.find(a);
  if (it == where_.end())
    return std::nullopt;
  return it->second;
}

const Block* CfgBundle::block_at(CodeAddr a) const {
  const auto w = locate(a);
  if (!w || w->second != 0)
    return nullptr;
  return &blocks[w->first];
}

CfgBundle make_bundle(const ir::Program& program, const analysis::Analysis& a) {
  CfgBundle b;
  for (std::size_t f = 0; f < program.functions.size(); ++f) {
    const auto& fn = program.functions[f];
    Function bf{fn.name, fn.entry(), {}};
    for (const auto& bb : fn.blocks) {
      Block blk;
      blk.label = bb.label;
      blk.function = static_cast<int>(f);
      for (std::size_t i = 0; i < bb.size(); ++i)
        blk.addrs.push_back(bb.at(i).addr);
      const auto& t = bb.terminator;
      const auto start = [&](int block) { return fn.blocks[block].start(); };
      switch (t.op) {
      case Opcode::CondBranch:
        blk.term = TermKind::CondBranch;
        blk.taken = start(t.target);
        blk.not_taken = start(t.alt_target);
        break;
      case Opcode::DirectJump:
        blk.term = TermKind::DirectJump;
        blk.next = start(t.target);
        break;
      case Opcode::IndirectJump:
        blk.term = TermKind::IndirectJump;
        break;
      case Opcode::DirectCall:
        blk.term = TermKind::DirectCall;
        blk.next = start(t.target);
        blk.callee = program.functions[t.callee].entry();
        break;
      case Opcode::IndirectCall:
        blk.term = TermKind::IndirectCall;
        blk.next = start(t.target);
        break;
      case Opcode::Return:
        blk.term = TermKind::Return;
        break;
      default:
        blk.term = TermKind::Halt;
        break;
      }
      const auto& ts = a.targets.at(t.addr);
      blk.targets.assign(ts.begin(), ts.end());
      bf.blocks.push_back(static_cast<int>(b.blocks.size()));
      b.blocks.push_back(std::move(blk));
    }
    b.functions.push_back(std::move(bf));
  }
  for (const auto& s : a.scopes)
    b.operations[s.op_id] = {s.op_id, s.function, s.entry_addr, s.exit_addr};
  for (const auto& [irq, h] : program.interrupt_vector)
    b.interrupts[static_cast<std::uint32_t>(irq)] = program.functions[h].entry();
  b.index();
  return b;
}

std::string hex(CodeAddr a) { return fmt::format("{:#x}", a); }

CodeAddr parse_hex(const json& j) {
  if (!j.is_string())
    throw std::runtime_error("expected a hex address string");
  const auto s = j.get<std::string>();
  std::size_t used = 0;
  CodeAddr v = 0;
  try {
    v = std::stoull(s, &used, 16);
  } catch (const std::exception&) {
    used = 0;
  }
  if (!s.starts_with("0x") || used != s.size())
    throw std::runtime_error("malformed hex address '" + s + "'");
  return v;
}

namespace {

json addr_list(const std::vector<CodeAddr>& v) {
  json a = json::array();
  for (auto x : v)
    a.push_back(hex(x));
  return a;
}

std::vector<CodeAddr> parse_addr_list(const json& j) {
  std::vector<CodeAddr> out;
  for (const auto& x : j)
    out.push_back(parse_hex(x));
  return out;
}

} // namespace

json to_json(const CfgBundle& b) {
  json j;
  j["format"] = "oei-cfg-bundle";
  j["version"] = 1;
  json fns = json::array();
  for (const auto& f : b.functions) {
    json blocks = json::array();
    for (int bi : f.blocks) {
      const auto& blk = b.blocks[bi];
      json jb;
      jb["label"] = blk.label;
      jb["addrs"] = addr_list(blk.addrs);
      jb["term"] = term_kind_name(blk.term);
      switch (blk.term) {
      case TermKind::CondBranch:
        jb["taken"] = hex(blk.taken);
        jb["not_taken"] = hex(blk.not_taken);
        break;
      case TermKind::DirectJump:
        jb["next"] = hex(blk.next);
        break;
      case TermKind::DirectCall:
        jb["callee"] = hex(blk.callee);
        jb["next"] = hex(blk.next);
        break;
      case TermKind::IndirectCall:
        jb["next"] = hex(blk.next);
        jb["targets"] = addr_list(blk.targets);
        break;
      case TermKind::IndirectJump:
        jb["targets"] = addr_list(blk.targets);
        break;
      default:
        break;
      }
      blocks.push_back(std::move(jb));
    }
    fns.push_back({{"name", f.name}, {"entry", hex(f.entry)}, {"blocks", std::move(blocks)}});
  }
  j["functions"] = std::move(fns);
  json ops = json::array();
  for (const auto& [id, op] : b.operations)
    ops.push_back({{"op_id", id},
                   {"function", b.functions.at(op.function).name},
                   {"begin", hex(op.begin)},
                   {"end", hex(op.end)}});
  j["operations"] = std::move(ops);
  json irqs = json::array();
  for (const auto& [irq, h] : b.interrupts)
    irqs.push_back({{"irq", irq}, {"handler", hex(h)}});
  j["interrupts"] = std::move(irqs);
  return j;
}

json to_json(const ir::Program& program, const analysis::Analysis& a) {
  auto j = to_json(make_bundle(program, a));
  json control = json::array();
  for (const auto& s : a.sites.control)
    control.push_back({{"addr", hex(s.addr)}, {"kind", analysis::control_kind_name(s.kind)}, {"ops", s.ops}});
  json data = json::array();
  for (const auto& s : a.sites.data)
    data.push_back({{"addr", hex(s.addr)},
                    {"kind", analysis::data_kind_name(s.kind)},
                    {"var", program.var_name(s.var)},
                    {"access", analysis::access_name(s.access)},
                    {"role", analysis::role_name(s.role)}});
  j["sites"] = {{"control", std::move(control)},
                {"data", std::move(data)},
                {"address_based", analysis::count_address_based_sites(program)}};
  json crit = json::array();
  for (auto v : a.critical.variables)
    crit.push_back({{"var", program.var_name(v)},
                    {"pointer", a.critical.is_pointer(v)},
                    {"provenance", analysis::provenance_name(a.critical.provenance.at(v))}});
  j["critical"] = std::move(crit);
  json edges = json::array();
  for (const auto& g : a.cfgs) {
    const auto& fn = program.functions[g.function];
    for (const auto& e : g.edges)
      edges.push_back({{"function", fn.name},
                       {"from", fn.blocks[e.from].label},
                       {"to", fn.blocks[e.to].label},
                       {"kind", edge_kind_name(e.kind)}});
  }
  j["edges"] = std::move(edges);
  return j;
}

CfgBundle from_json(const json& j) {
  try {
    if (j.at("format") != "oei-cfg-bundle" || j.at("version") != 1)
      throw std::runtime_error("not an oei-cfg-bundle version 1 document");
    CfgBundle b;
    std::map<std::string, int> fn_index;
    for (const auto& jf : j.at("functions")) {
      Function f;
      f.name = jf.at("name").get<std::string>();
      f.entry = parse_hex(jf.at("entry"));
      const int fi = static_cast<int>(b.functions.size());
      for (const auto& jb : jf.at("blocks")) {
        Block blk;
        blk.label = jb.at("label").get<std::string>();
        blk.function = fi;
        blk.addrs = parse_addr_list(jb.at("addrs"));
        if (blk.addrs.empty())
          throw std::runtime_error("block '" + blk.label + "' has no instructions");
        const auto k = parse_term_kind(jb.at("term").get<std::string>());
        if (!k)
          throw std::runtime_error("unknown terminator kind in block '" + blk.label + "'");
        blk.term = *k;
        if (jb.contains("taken"))
          blk.taken = parse_hex(jb["taken"]);
        if (jb.contains("not_taken"))
          blk.not_taken = parse_hex(jb["not_taken"]);
        if (jb.contains("next"))
          blk.next = parse_hex(jb["next"]);
        if (jb.contains("callee"))
          blk.callee = parse_hex(jb["callee"]);
        if (jb.contains("targets"))
          blk.targets = parse_addr_list(jb["targets"]);
        f.blocks.push_back(static_cast<int>(b.blocks.size()));
        b.blocks.push_back(std::move(blk));
      }
      fn_index[f.name] = fi;
      b.functions.push_back(std::move(f));
    }
    for (const auto& jo : j.at("operations")) {
      Operation op;
      op.op_id = jo.at("op_id").get<int>();
      op.function = fn_index.at(jo.at("function").get<std::string>());
      op.begin = parse_hex(jo.at("begin"));
      op.end = parse_hex(jo.at("end"));
      b.operations[op.op_id] = op;
    }
    for (const auto& ji : j.at("interrupts"))
      b.interrupts[ji.at("irq").get<std::uint32_t>()] = parse_hex(ji.at("handler"));
    b.index();
    return b;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed CFG bundle: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw std::runtime_error(std::string("malformed CFG bundle: ") + e.what());
  }
}

} // namespace oei::bundle
