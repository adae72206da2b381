#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sitest/diagnostics.hpp"
#include "sitest/term.hpp"

namespace sitest {

using ActivityId = std::string;
using PlanId = std::string;
using PlaceId = std::string;

/// Argument role in a predicate declaration. Constants in `Object`
/// positions denote tracked objects and fall under the explanation
/// invariant; `Value` positions carry classes, brands, scenery, numbers.
enum class ArgRole { Object, Value };

struct PredicateDecl {
    std::string name;
    std::vector<ArgRole> roles;  // size = arity
    SourceSpan span;

    size_t arity() const { return roles.size(); }
};

/// Kernel cube plus dispersion: tolerance constraints (numeric dispersions
/// on kernel variables) and tolerance atoms (supplementary conditions).
struct ActivityPrototype {
    ActivityId id;
    Cube kernel;
    std::vector<Constraint> tolerance_constraints;
    std::vector<Atom> tolerance_atoms;
    SourceSpan span;
};

struct Transition {
    std::string id;
    std::set<PlaceId> pre;
    std::set<PlaceId> post;
    Cube event;  // may be empty: fires on kernel match of post places alone
    SourceSpan span;
};

struct Marking {
    std::set<PlaceId> marked;

    bool operator==(const Marking&) const = default;
    bool operator<(const Marking& o) const { return marked < o.marked; }
};

std::string to_string(const Marking& m);

/// Interpreted safe Petri net over activity prototypes: the kernel plan,
/// plus tolerance activities and declared refinement edges.
struct PlanPrototype {
    PlanId id;
    std::map<PlaceId, ActivityId> places;
    std::vector<Transition> transitions;
    Marking initial_marking;
    std::set<ActivityId> tolerance_activities;
    std::set<PlanId> refines;  // this plan is more specific than these
    SourceSpan span;
};

struct PlanLibrary {
    std::map<std::string, PredicateDecl> predicates;
    std::map<ActivityId, ActivityPrototype> activities;
    std::map<PlanId, PlanPrototype> plans;

    const ActivityPrototype* find_activity(const ActivityId& id) const;
    const PlanPrototype* find_plan(const PlanId& id) const;
    const PredicateDecl* find_predicate(const std::string& name) const;
};

/// Every invariant violation in the library: arity mismatches, dangling
/// references, unsafe or dead net structure, refines cycles. Empty iff the
/// library is well-formed.
std::vector<Diagnostic> validate(const PlanLibrary& lib);

/// Indices of transitions enabled at `m`, in declaration order.
std::vector<size_t> enabled(const PlanPrototype& p, const Marking& m);

/// Fires transition `t` at `m`; throws std::logic_error if disabled.
Marking fire(const PlanPrototype& p, const Marking& m, size_t t);

/// {m} union {fire(p,m,t) | t enabled}; staying (k=0) is always included.
std::set<Marking> reachable_one_step(const PlanPrototype& p, const Marking& m);

/// All markings reachable from the initial marking, in BFS order (the
/// initial marking first). Deterministic.
std::vector<Marking> enumerate_reachable(const PlanPrototype& p);

/// True iff `a` is strictly more specific than `b`, i.e. `b` is reachable
/// from `a` via refines edges. Throws std::out_of_range on unknown ids.
bool more_specific(const PlanLibrary& lib, const PlanId& a, const PlanId& b);

/// Plans strictly more specific than `base`.
std::set<PlanId> refinements_of(const PlanLibrary& lib, const PlanId& base);

}  // namespace sitest
