#pragma once

#include <optional>
#include <string>
#include <vector>

namespace sitest {

/// One revision decision. Serializes to a single line of the structured
/// trace; the line format is a stability contract for golden tests.
struct TraceRecord {
    long time = 0;
    std::string inst;
    std::optional<char> case_label;  // a..e
    std::string event;               // commit|absorb|extend|switch|spawn|retire|idle|drop|violation|predict
    std::string plan;
    std::string from_plan;           // switch source
    std::string marking_before;
    std::string marking_after;
    std::string binding;
    std::string detail;              // event-specific "key=value" tail, pre-rendered
};

struct StepTrace {
    std::vector<TraceRecord> records;

    void add(TraceRecord r) { records.push_back(std::move(r)); }
};

std::string to_line(const TraceRecord& r);
std::string to_text(const StepTrace& t);

}  // namespace sitest
