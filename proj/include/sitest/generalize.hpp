#pragma once

#include "sitest/term.hpp"

namespace sitest {

/// Result of cube anti-unification: `general` is a least general cube with
/// apply(to_left, general) contained in the left input and
/// apply(to_right, general) contained in the right input (atom-wise).
struct Generalization {
    Cube general;
    Substitution to_left;   // fresh var -> left-side term
    Substitution to_right;  // fresh var -> right-side term
};

/// Least general generalization of two cubes. Atoms are paired per
/// predicate/arity; positions with differing terms receive fresh variables
/// (`_0`, `_1`, ... in first-occurrence order), the same pair of terms
/// mapping to the same fresh variable everywhere. The result is reduced.
///
/// A constraint of `b` survives iff its variables all map into the general
/// cube and the corresponding left-side values satisfy it; constraints are
/// never invented.
Generalization anti_unify(const Cube& a, const Cube& b);

/// Removes duplicate atoms and atoms subsumed by another atom of the cube
/// under a renaming of variables private to the removed atom. Preserves
/// match semantics (up to projection onto the surviving variables).
Cube reduce(const Cube& c);

}  // namespace sitest
