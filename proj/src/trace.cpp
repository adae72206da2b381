#include "sitest/trace.hpp"

#include <sstream>

namespace sitest {

std::string to_line(const TraceRecord& r)
{
    std::ostringstream os;
    os << "t=" << r.time;
    if (!r.inst.empty()) os << " inst=" << r.inst;
    if (r.case_label) os << " case=" << *r.case_label;
    os << " event=" << r.event;
    if (!r.plan.empty()) os << " plan=" << r.plan;
    if (!r.from_plan.empty()) os << " from=" << r.from_plan;
    if (!r.marking_before.empty() || !r.marking_after.empty())
        os << " marking=" << r.marking_before << "->" << r.marking_after;
    if (!r.binding.empty()) os << " binding=" << r.binding;
    if (!r.detail.empty()) os << ' ' << r.detail;
    return os.str();
}

std::string to_text(const StepTrace& t)
{
    std::string out;
    for (const TraceRecord& r : t.records) {
        out += to_line(r);
        out += '\n';
    }
    return out;
}

}  // namespace sitest
