#pragma once

#include <string>
#include <vector>

#include "sitest/estimator.hpp"
#include "sitest/scenario.hpp"

namespace sitest {

/// Drives the estimator over a whole scenario: one step per time index from
/// the first to the last scenario time (missing indices are empty
/// observations), with `visible` directives switching the mask.
struct RunResult {
    Situation final_situation;
    StepTrace trace;             // concatenated step traces
    int violations = 0;          // unexplained-object violations across the run
    std::vector<std::string> report_lines;  // structured report (stability contract)
};

RunResult run_scenario(const PlanLibrary& lib, const Scenario& scenario,
                       const EstimatorConfig& cfg);

/// Human-oriented rendering of a run; not a stability contract.
std::string text_report(const RunResult& run);

}  // namespace sitest
