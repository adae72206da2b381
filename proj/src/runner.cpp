#include "sitest/runner.hpp"

#include <algorithm>
#include <sstream>

namespace sitest {

RunResult run_scenario(const PlanLibrary& lib, const Scenario& scenario,
                       const EstimatorConfig& cfg)
{
    RunResult out;
    if (scenario.steps.empty()) {
        out.report_lines.push_back("summary steps=0 instances=0 recognized=[] violations=0");
        return out;
    }

    long first = scenario.steps.front().time;
    long last = scenario.steps.back().time;

    Situation s;
    s.time = first - 1;
    ObservabilityMask mask;

    size_t next = 0;
    for (long t = first; t <= last; ++t) {
        Cube obs;
        if (next < scenario.steps.size() && scenario.steps[next].time == t) {
            if (scenario.steps[next].mask) mask = *scenario.steps[next].mask;
            obs = scenario.steps[next].obs;
            ++next;
        }
        auto [situation, trace] = step(s, obs, mask, lib, cfg);
        s = std::move(situation);

        std::string cases;
        for (const TraceRecord& r : trace.records) {
            if (r.event == "violation") ++out.violations;
            if (r.case_label) {
                if (!cases.empty()) cases += ",";
                cases += *r.case_label;
            }
            out.trace.add(r);
        }
        out.report_lines.push_back("t=" + std::to_string(t) +
                                   " instances=" + std::to_string(s.instances.size()) +
                                   " cases=[" + cases + "]");
        for (const PlanInstance& inst : s.instances) {
            std::ostringstream os;
            os << "t=" << t << " inst=" << inst.id << " plan=" << inst.prototype
               << " marking=" << to_string(inst.marking)
               << " binding=" << to_string(inst.binding)
               << " age=" << (t - inst.last_matched_at);
            out.report_lines.push_back(os.str());
        }
    }

    std::ostringstream summary;
    summary << "summary steps=" << (last - first + 1)
            << " instances=" << s.instances.size() << " recognized=[";
    bool first_inst = true;
    for (const PlanInstance& inst : s.instances) {
        const PlanPrototype* plan = lib.find_plan(inst.prototype);
        bool terminal = plan && enabled(*plan, inst.marking).empty();
        if (!first_inst) summary << ",";
        summary << inst.prototype << "@" << to_string(inst.marking)
                << (terminal ? ":terminal" : "");
        first_inst = false;
    }
    summary << "] violations=" << out.violations;
    out.report_lines.push_back(summary.str());

    out.final_situation = std::move(s);
    return out;
}

std::string text_report(const RunResult& run)
{
    std::ostringstream os;
    os << "Situation estimation run\n";
    os << "------------------------\n";
    for (const std::string& line : run.report_lines) os << line << '\n';
    os << "------------------------\n";
    os << (run.violations == 0 ? "every observed object explained\n"
                               : "UNEXPLAINED OBJECTS ENCOUNTERED\n");
    return os.str();
}

}  // namespace sitest
