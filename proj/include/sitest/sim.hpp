#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sitest/diagnostics.hpp"
#include "sitest/plan.hpp"
#include "sitest/scenario.hpp"

namespace sitest {

struct Vec2 {
    Rational x;
    Rational y;
    bool operator==(const Vec2&) const = default;
};

/// Piecewise-constant kinematics: a key sets position and/or velocity at a
/// time; position integrates by one velocity step per time index.
struct KinematicKey {
    long time = 0;
    std::optional<Vec2> pos;
    std::optional<Vec2> vel;
};

struct WorldObject {
    std::string name;
    std::vector<KinematicKey> keys;  // increasing time
};

struct Landmark {
    std::string name;
    Vec2 pos;
};

struct ScheduleEntry {
    long time = 0;
    Marking marking;
};

/// One plan executed by the ground truth: which prototype, the object
/// bindings for its variables, and the marking held at each time.
struct Execution {
    PlanId plan;
    Substitution binding;
    std::vector<ScheduleEntry> schedule;  // increasing time; marking persists
};

struct OcclusionSpec {
    long from = 0;
    long to = 0;  // inclusive
    std::set<std::string> predicates;
    std::set<std::string> objects;
};

struct InjectionSpec {
    long time = 0;
    std::vector<Atom> atoms;  // ground
};

struct NoiseConfig {
    std::vector<OcclusionSpec> occlusion;
    std::vector<InjectionSpec> fictitious;     // observation noise
    std::vector<InjectionSpec> interactions;   // state noise (cross-plan events)
    Rational drop_rate = 0;                    // in [0,1]
    std::optional<std::uint64_t> seed;         // mandatory when drop_rate > 0
};

struct SimParams {
    long cone_half_angle_deg = 30;  // getting-closer-to cone
    Rational close_radius = 5;      // close-to distance threshold (meters)
};

struct GroundTruthScript {
    std::string name;
    std::string library_path;  // as written in the script file
    std::vector<Execution> executions;
    std::vector<WorldObject> objects;
    std::vector<Landmark> landmarks;
    NoiseConfig noise;
    SimParams params;
};

/// Kinematic state of every scripted object at one time index.
struct WorldState {
    std::map<std::string, Vec2> pos;
    std::map<std::string, Vec2> vel;
    std::vector<Landmark> landmarks;
};

/// Derived geometric predicates at one instant: (speed o v) with |vel|
/// quantized to 0.1; (getting-closer-to a b) iff a moves and its velocity
/// lies strictly inside the cone from a toward b; (close-to a b) iff
/// distance(a,b) < radius (strict).
Cube derive_predicates(const WorldState& world, const SimParams& params);

/// Executes the script over the given (validated) library: per time index,
/// the union of the marked activities' ground kernel atoms and the derived
/// predicates, with noise applied (interactions, then occlusion and drops,
/// then fictitious atoms). Deterministic given the seed. Schedule or
/// binding problems are reported as diagnostics.
struct SimResult {
    Scenario scenario;
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return !has_errors(diagnostics); }
};
SimResult simulate(const GroundTruthScript& script, const PlanLibrary& lib,
                   std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace sitest
