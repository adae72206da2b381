#pragma once

#include "sitest/term.hpp"

namespace sitest {

Term apply(const Substitution& sub, const Term& t);
Atom apply(const Substitution& sub, const Atom& a);
Constraint apply(const Substitution& sub, const Constraint& c);
Cube apply(const Substitution& sub, const Cube& c);

/// Standard relational semantics over exact rationals; symbol equality is
/// identifier equality. Throws EvalError on unit mismatch, on ordering
/// applied to symbols, and on non-ground operands.
bool eval_constraint(const Constraint& c);

/// All substitutions sigma extending `seed` such that
/// sigma(pattern.atoms) is a subset of facts.atoms and every constraint of
/// sigma(pattern) evaluates to true. Deduplicated, lexicographic order.
std::vector<Substitution> match_ground(const Cube& pattern, const Cube& facts,
                                       const Substitution& seed = {});

/// True iff match_ground(pattern, facts, seed) is nonempty (cheaper: stops
/// at the first witness).
bool matches_ground(const Cube& pattern, const Cube& facts,
                    const Substitution& seed = {});

}  // namespace sitest
