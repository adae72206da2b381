#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sitest/term.hpp"

namespace sitest {

/// Predicates currently visible to the observer. Projection removes atoms
/// of hidden predicates from predicted kernels and tolerances.
struct ObservabilityMask {
    bool all = true;
    std::set<std::string> visible;  // used when !all

    bool is_visible(const std::string& predicate) const
    {
        return all || visible.count(predicate) != 0;
    }
    bool operator==(const ObservabilityMask&) const = default;
};

struct ScenarioStep {
    long time = 0;
    Cube obs;  // ground
    std::optional<ObservabilityMask> mask;  // mask change effective at this step

    bool operator==(const ScenarioStep&) const = default;
};

struct Scenario {
    std::vector<ScenarioStep> steps;  // strictly increasing times

    bool operator==(const Scenario&) const = default;
};

}  // namespace sitest
