#pragma once

#include <string>
#include <vector>

namespace sitest {

struct SourceSpan {
    std::string file;
    int line = 0;    // 1-based; 0 = no location
    int column = 0;  // 1-based
    int length = 0;

    bool valid() const { return line > 0; }
    bool operator==(const SourceSpan&) const = default;
};

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string message;
    SourceSpan span;

    bool operator==(const Diagnostic&) const = default;
};

inline bool has_errors(const std::vector<Diagnostic>& ds)
{
    for (const auto& d : ds)
        if (d.severity == Severity::Error) return true;
    return false;
}

/// "file:line:col: error: message" form.
std::string format_diagnostic(const Diagnostic& d);

}  // namespace sitest
