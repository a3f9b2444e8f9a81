#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "minidse/expr.hpp"
#include "minidse/symex.hpp"

namespace minidse::slicer {

struct SlicedQuery {
  ast::Expr cond = nullptr;
  std::vector<size_t> kept;  ///< prefix indices, trace order
  ast::VarSet vars;
};

/// Keeps the prefix constraints that transitively share variables with
/// `cond` (repeat until the variable set stops growing).
SlicedQuery slice(ast::Expr cond, std::span<const ast::Expr> prefix);
SlicedQuery slice(ast::Expr cond, std::span<const symex::PathConstraint> prefix);

/// Same result computed through union-find variable groups.
SlicedQuery slice_grouped(ast::Expr cond, std::span<const ast::Expr> prefix);

/// The `--no-slicing` query: the whole prefix.
SlicedQuery keep_all(ast::Expr cond, std::span<const symex::PathConstraint> prefix);

/// Seed bytes overwritten by the model.  Throws std::out_of_range when the
/// model assigns a byte past the seed.
std::vector<uint8_t> complete_model(const ast::Assignment& model, std::span<const uint8_t> seed);

}  // namespace minidse::slicer
