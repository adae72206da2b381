#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sitest/generalize.hpp"
#include "sitest/match.hpp"
#include "sitest/plan.hpp"
#include "sitest/scenario.hpp"
#include "sitest/trace.hpp"

namespace sitest {

using InstanceId = std::string;
using TimeIndex = long;

/// A matched tolerance item held by an instance. Items tagged with a place
/// propagate only to branches where that place stays marked; untagged items
/// (plan-level extensions) propagate to every branch.
struct HeldItem {
    std::variant<Atom, Constraint> item;  // ground
    std::optional<PlaceId> place;

    bool operator==(const HeldItem&) const = default;
    bool operator<(const HeldItem& o) const
    {
        if (!(item == o.item)) return item < o.item;
        return place < o.place;
    }
};

/// A marked, partially bound plan prototype: one hypothesis in the
/// situation. The binding is the plan-wide variable environment; only
/// bindings to constants persist across steps (numeric bindings are
/// re-established at each match).
struct PlanInstance {
    InstanceId id;
    PlanId prototype;
    Marking marking;
    Substitution binding;
    std::vector<HeldItem> held_tolerance;  // sorted, unique
    TimeIndex created_at = 0;
    TimeIndex last_matched_at = 0;

    std::set<std::string> bound_objects() const;
};

struct Situation {
    TimeIndex time = -1;
    std::vector<PlanInstance> instances;  // ordered by id
    std::set<std::string> known_objects;  // constants bound in instances
    long next_instance = 1;               // id counter, part of the replayable state
};

struct PredictedBranch {
    InstanceId instance;
    Marking marking;
    int fired = 0;                  // k in {0,1}
    std::set<PlaceId> entered;      // marking minus the prior marking
    std::vector<std::pair<PlaceId, Cube>> expected_kernels;  // under the binding
    Cube event;                     // transition event cube, if any
    std::vector<HeldItem> propagated_tolerance;
    bool unobservable = false;      // all kernels projected away
};

struct PredictedObservation {
    std::vector<PredictedBranch> branches;
};

/// Structured difference between the actual and predicted observation for
/// one instance. With a matched branch and empty supplementary/missing this
/// is the "no innovation" witness.
struct Innovation {
    std::optional<size_t> matched_branch;  // index into PredictedObservation
    Cube common;                           // anti-unification result (imperfect match)
    Cube supplementary;                    // obs atoms the branch does not explain
    std::vector<Cube> missing;             // kernel parts not matched
};

struct EstimatorConfig {
    int stale_after = 5;               // drop instances unmatched this many steps
    int max_instances_per_object = 0;  // 0 = unlimited
    int trace_verbosity = 0;           // 0 = decisions; 1 = + prediction records
};

/// One branch per element of reachable_one_step for every instance, with
/// kernels instantiated by the instance binding and matched tolerance items
/// propagated to branches where their place stays marked.
std::vector<PredictedBranch> predict(const Situation& s, const PlanLibrary& lib);

/// Restricts predicted kernels and tolerances to predicates visible under
/// the mask. Branches whose kernels become entirely invisible are retained
/// but flagged unobservable; they match vacuously and are never pruned.
PredictedObservation project(std::vector<PredictedBranch> branches,
                             const ObservabilityMask& mask);

/// Innovation per instance: the no-innovation form for the best fully
/// matched branch, otherwise the anti-unification against the branch
/// maximizing the number of common atoms.
std::map<InstanceId, Innovation> innovate(const Cube& obs, const PredictedObservation& po,
                                          const Situation& s, const PlanLibrary& lib);

/// Applies the revision case tree and the hypothesis lifecycle. `po` must
/// come from predict+project on `s`; the innovations it implies are the
/// ones innovate() reports.
Situation revise(const Situation& s, const Cube& obs, const PredictedObservation& po,
                 const ObservabilityMask& mask, const PlanLibrary& lib,
                 const EstimatorConfig& cfg, StepTrace* trace);

/// One estimation step: predict, project, innovate, revise. Deterministic
/// for fixed inputs. `obs` is the observation for time s.time + 1.
std::pair<Situation, StepTrace> step(const Situation& s, const Cube& obs,
                                     const ObservabilityMask& mask, const PlanLibrary& lib,
                                     const EstimatorConfig& cfg);

/// Object constants (per the library's argument roles) occurring in a
/// ground observation.
std::set<std::string> observed_objects(const Cube& obs, const PlanLibrary& lib);

/// Checks the explanation invariant: every object of `obs` is bound in at
/// least one instance. Returns the unexplained objects.
std::set<std::string> unexplained_objects(const Situation& s, const Cube& obs,
                                          const PlanLibrary& lib);

}  // namespace sitest
