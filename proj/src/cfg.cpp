#include "oei/analysis.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace oei::analysis {

std::string_view edge_kind_name(EdgeKind k) {
  switch (k) {
  case EdgeKind::Taken: return "taken";
  case EdgeKind::NotTaken: return "not_taken";
  case EdgeKind::Jump: return "jump";
  case EdgeKind::Return: return "return";
  case EdgeKind::IndirectCandidate: return "indirect";
  }
  return "?";
}

std::vector<std::vector<int>> FunctionCfg::successors() const {
  std::vector<std::vector<int>> s(block_count);
  for (const auto& e : edges)
    s[e.from].push_back(e.to);
  return s;
}

std::vector<std::vector<int>> FunctionCfg::predecessors() const {
  std::vector<std::vector<int>> p(block_count);
  for (const auto& e : edges)
    p[e.to].push_back(e.from);
  return p;
}

std::vector<FunctionCfg> build_cfg(const Program& program, const TargetSets& targets) {
  std::vector<FunctionCfg> out;
  for (std::size_t f = 0; f < program.functions.size(); ++f) {
    const auto& fn = program.functions[f];
    FunctionCfg g;
    g.function = static_cast<int>(f);
    g.block_count = static_cast<int>(fn.blocks.size());
    for (int b = 0; b < g.block_count; ++b) {
      const auto& t = fn.blocks[b].terminator;
      switch (t.op) {
      case ir::Opcode::CondBranch:
        g.edges.push_back({b, t.target, EdgeKind::Taken});
        g.edges.push_back({b, t.alt_target, EdgeKind::NotTaken});
        break;
      case ir::Opcode::DirectJump:
        g.edges.push_back({b, t.target, EdgeKind::Jump});
        break;
      case ir::Opcode::IndirectJump:
        for (auto dest : targets.at(t.addr)) {
          const auto loc = program.locate(dest);
          if (loc && loc->function == g.function && loc->index == 0)
            g.edges.push_back({b, loc->block, EdgeKind::IndirectCandidate});
        }
        break;
      case ir::Opcode::DirectCall:
        g.calls.push_back({b, t.callee, false});
        g.edges.push_back({b, t.target, EdgeKind::Return});
        break;
      case ir::Opcode::IndirectCall:
        for (auto dest : targets.at(t.addr)) {
          const auto loc = program.locate(dest);
          if (loc)
            g.calls.push_back({b, loc->function, true});
        }
        g.edges.push_back({b, t.target, EdgeKind::Return});
        break;
      case ir::Opcode::Return:
      case ir::Opcode::Halt:
        g.exits.push_back(b);
        break;
      default:
        break;
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

Dominance dominators(const std::vector<std::vector<int>>& succ, int root) {
  const int n = static_cast<int>(succ.size());
  std::vector<std::vector<int>> pred(n);
  for (int u = 0; u < n; ++u)
    for (int v : succ[u])
      pred[v].push_back(u);

  // Reverse postorder of the nodes reachable from root.
  std::vector<int> order;
  {
    std::vector<bool> seen(n);
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    seen[root] = true;
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next < succ[u].size()) {
        const int v = succ[u][next++];
        if (!seen[v]) {
          seen[v] = true;
          stack.push_back({v, 0});
        }
      } else {
        order.push_back(u);
        stack.pop_back();
      }
    }
    std::reverse(order.begin(), order.end());
  }

  Dominance d;
  d.dom.assign(n, std::vector<bool>(n, true));
  d.dom[root].assign(n, false);
  d.dom[root][root] = true;
  for (bool changed = true; changed;) {
    changed = false;
    for (int v : order) {
      if (v == root)
        continue;
      std::vector<bool> next(n, true);
      for (int p : pred[v])
        for (int i = 0; i < n; ++i)
          next[i] = next[i] && d.dom[p][i];
      next[v] = true;
      if (next != d.dom[v]) {
        d.dom[v] = std::move(next);
        changed = true;
      }
    }
  }
  return d;
}

DominanceInfo compute_dominance(const FunctionCfg& cfg) {
  DominanceInfo info;
  const auto succ = cfg.successors();
  info.dom = dominators(succ, 0);

  const int n = cfg.block_count;
  std::vector<std::vector<int>> rev(n + 1);
  for (int u = 0; u < n; ++u)
    for (int v : succ[u])
      rev[v].push_back(u);
  for (int x : cfg.exits)
    rev[n].push_back(x);
  auto pd = dominators(rev, n);
  info.post_dom.dom.resize(n);
  for (int v = 0; v < n; ++v)
    info.post_dom.dom[v].assign(pd.dom[v].begin(), pd.dom[v].begin() + n);
  return info;
}

ScopeResult check_operation_scopes(const Program& program, const std::vector<FunctionCfg>& cfgs) {
  ScopeResult r;
  std::map<int, DominanceInfo> cache;
  for (const auto& m : program.markers()) {
    if (m.begin.function != m.end.function)
      continue;
    const int f = m.begin.function;
    if (!cache.count(f))
      cache.emplace(f, compute_dominance(cfgs.at(f)));
    const auto& di = cache.at(f);
    bool dom, pdom;
    if (m.begin.block == m.end.block) {
      dom = pdom = m.begin.index < m.end.index;
    } else {
      dom = di.dom.dominates(m.begin.block, m.end.block);
      pdom = di.post_dom.dominates(m.end.block, m.begin.block);
    }
    const auto& loc = program.instruction(m.end).loc;
    if (!dom)
      r.diagnostics.push_back(
          {loc, fmt::format("operation {}: attest_begin does not dominate attest_end", m.op_id)});
    if (!pdom)
      r.diagnostics.push_back(
          {loc, fmt::format("operation {}: attest_end does not post-dominate attest_begin", m.op_id)});
    if (dom && pdom)
      r.scopes.push_back({m.op_id, f, m.begin, m.end, m.begin_addr, m.end_addr});
  }
  return r;
}

} // namespace oei::analysis
