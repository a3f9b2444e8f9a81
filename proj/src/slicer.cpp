#include "minidse/slicer.hpp"

#include <fmt/format.h>

#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace minidse::slicer {

namespace {

template <typename Get>
SlicedQuery fixpoint(ast::Expr cond, size_t n, Get vars_of) {
  SlicedQuery q;
  q.cond = cond;
  q.vars = cond->used_vars();
  bool grew = true;
  while (grew) {
    grew = false;
    for (size_t i = 0; i < n; ++i) {
      const ast::VarSet& v = vars_of(i);
      if (q.vars.intersects(v)) grew |= q.vars.unite(v);
    }
  }
  for (size_t i = 0; i < n; ++i) {
    if (q.vars.intersects(vars_of(i))) q.kept.push_back(i);
  }
  return q;
}

}  // namespace

SlicedQuery slice(ast::Expr cond, std::span<const ast::Expr> prefix) {
  return fixpoint(cond, prefix.size(), [&](size_t i) -> const ast::VarSet& { return prefix[i]->used_vars(); });
}

SlicedQuery slice(ast::Expr cond, std::span<const symex::PathConstraint> prefix) {
  return fixpoint(cond, prefix.size(),
                  [&](size_t i) -> const ast::VarSet& { return prefix[i].cond->used_vars(); });
}

SlicedQuery slice_grouped(ast::Expr cond, std::span<const ast::Expr> prefix) {
  std::unordered_map<uint32_t, uint32_t> parent;
  auto find = [&](uint32_t v) {
    auto it = parent.try_emplace(v, v).first;
    uint32_t root = it->second;
    while (parent[root] != root) root = parent[root];
    // path compression
    while (v != root) {
      uint32_t next = parent[v];
      parent[v] = root;
      v = next;
    }
    return root;
  };
  std::vector<std::vector<uint32_t>> lists(prefix.size());
  for (size_t i = 0; i < prefix.size(); ++i) {
    lists[i] = prefix[i]->used_vars().to_vector();
    for (size_t k = 1; k < lists[i].size(); ++k) parent[find(lists[i][k])] = find(lists[i][0]);
  }
  std::unordered_map<uint32_t, bool> wanted;
  for (uint32_t v : cond->used_vars().to_vector()) wanted[find(v)] = true;

  SlicedQuery q;
  q.cond = cond;
  q.vars = cond->used_vars();
  for (size_t i = 0; i < prefix.size(); ++i) {
    if (lists[i].empty() || !wanted.count(find(lists[i][0]))) continue;
    q.kept.push_back(i);
    q.vars.unite(prefix[i]->used_vars());
  }
  return q;
}

SlicedQuery keep_all(ast::Expr cond, std::span<const symex::PathConstraint> prefix) {
  SlicedQuery q;
  q.cond = cond;
  q.vars = cond->used_vars();
  q.kept.resize(prefix.size());
  std::iota(q.kept.begin(), q.kept.end(), size_t{0});
  for (const auto& c : prefix) q.vars.unite(c.cond->used_vars());
  return q;
}

std::vector<uint8_t> complete_model(const ast::Assignment& model, std::span<const uint8_t> seed) {
  std::vector<uint8_t> out(seed.begin(), seed.end());
  for (auto [idx, v] : model.entries()) {
    if (idx >= out.size()) {
      throw std::out_of_range(fmt::format("model assigns b{} but the seed has {} bytes", idx, out.size()));
    }
    out[idx] = v;
  }
  return out;
}

}  // namespace minidse::slicer
