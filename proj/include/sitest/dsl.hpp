#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sitest/diagnostics.hpp"
#include "sitest/plan.hpp"
#include "sitest/scenario.hpp"
#include "sitest/sim.hpp"

namespace sitest {

template <typename T>
struct ParseResult {
    T value{};
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return !has_errors(diagnostics); }
};

/// Parses a `.plan` library. On success the result passes validate();
/// validation diagnostics are folded into the result. The parser recovers
/// to declaration boundaries to report multiple errors and never throws on
/// malformed input.
ParseResult<PlanLibrary> parse_library(std::string_view text, std::string filename);

/// Parses a `.obs` scenario: `t=<n> obs (atom)...` and
/// `t=<n> visible all|(pred...)` lines. Observations must be ground and
/// times strictly increasing. When `lib` is given, atoms are checked
/// against its predicate declarations.
ParseResult<Scenario> parse_scenario(std::string_view text, std::string filename,
                                     const PlanLibrary* lib = nullptr);

/// Parses a `.script` ground-truth script (a `script { ... }` block).
ParseResult<GroundTruthScript> parse_script(std::string_view text, std::string filename);

/// Canonical textual form; parse_library(serialize(lib)) is structurally
/// equal to lib. Deterministic, LF line endings.
std::string serialize(const PlanLibrary& lib);

/// Canonical `.obs` form of a scenario.
std::string serialize(const Scenario& scenario);

/// Structural equality ignoring source spans.
bool structurally_equal(const PlanLibrary& a, const PlanLibrary& b);

}  // namespace sitest
