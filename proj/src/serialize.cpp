#include <sstream>

#include "sitest/dsl.hpp"

namespace sitest {

namespace {

void write_cube_items(std::ostringstream& os, const Cube& c)
{
    bool first = true;
    for (const Atom& a : c.atoms()) {
        if (!first) os << ' ';
        os << to_string(a);
        first = false;
    }
    for (const Constraint& k : c.constraints()) {
        if (!first) os << ' ';
        os << to_string(k);
        first = false;
    }
}

void write_ident_set(std::ostringstream& os, const std::set<std::string>& ids)
{
    os << '{';
    for (const std::string& id : ids) os << ' ' << id;
    os << " }";
}

}  // namespace

std::string serialize(const PlanLibrary& lib)
{
    std::ostringstream os;
    for (const auto& [name, decl] : lib.predicates) {
        os << "predicate (" << name;
        for (ArgRole r : decl.roles) os << (r == ArgRole::Object ? " obj" : " val");
        os << ")\n";
    }
    if (!lib.predicates.empty() && !lib.activities.empty()) os << '\n';

    for (const auto& [id, act] : lib.activities) {
        os << "activity " << id << " {\n";
        os << "  kernel { ";
        write_cube_items(os, act.kernel);
        os << " }\n";
        if (!act.tolerance_atoms.empty() || !act.tolerance_constraints.empty()) {
            os << "  tolerance {\n";
            if (!act.tolerance_atoms.empty()) {
                os << "    atoms { ";
                bool first = true;
                for (const Atom& a : act.tolerance_atoms) {
                    if (!first) os << ' ';
                    os << to_string(a);
                    first = false;
                }
                os << " }\n";
            }
            if (!act.tolerance_constraints.empty()) {
                os << "    constraints { ";
                bool first = true;
                for (const Constraint& k : act.tolerance_constraints) {
                    if (!first) os << ' ';
                    os << to_string(k);
                    first = false;
                }
                os << " }\n";
            }
            os << "  }\n";
        }
        os << "}\n\n";
    }

    bool first_plan = true;
    for (const auto& [id, plan] : lib.plans) {
        if (!first_plan) os << '\n';
        first_plan = false;
        os << "plan " << id << " {\n";
        os << "  places {\n";
        for (const auto& [place, act] : plan.places)
            os << "    " << place << ": " << act << '\n';
        os << "  }\n";
        if (!plan.transitions.empty()) {
            os << "  transitions {\n";
            for (const Transition& t : plan.transitions) {
                os << "    " << t.id << ": pre ";
                write_ident_set(os, t.pre);
                os << " post ";
                write_ident_set(os, t.post);
                if (!t.event.empty()) {
                    os << " event { ";
                    write_cube_items(os, t.event);
                    os << " }";
                }
                os << '\n';
            }
            os << "  }\n";
        }
        os << "  initial ";
        write_ident_set(os, plan.initial_marking.marked);
        os << '\n';
        if (!plan.tolerance_activities.empty()) {
            os << "  tolerance-activities ";
            write_ident_set(os, plan.tolerance_activities);
            os << '\n';
        }
        if (!plan.refines.empty()) {
            os << "  refines ";
            write_ident_set(os, plan.refines);
            os << '\n';
        }
        os << "}\n";
    }
    return os.str();
}

std::string serialize(const Scenario& scenario)
{
    std::ostringstream os;
    for (const ScenarioStep& step : scenario.steps) {
        if (step.mask) {
            os << "t=" << step.time << " visible ";
            if (step.mask->all) {
                os << "all";
            } else {
                os << '(';
                bool first = true;
                for (const std::string& p : step.mask->visible) {
                    if (!first) os << ' ';
                    os << p;
                    first = false;
                }
                os << ')';
            }
            os << '\n';
        }
        os << "t=" << step.time << " obs";
        for (const Atom& a : step.obs.atoms()) os << ' ' << to_string(a);
        os << '\n';
    }
    return os.str();
}

namespace {

bool activity_equal(const ActivityPrototype& a, const ActivityPrototype& b)
{
    return a.id == b.id && a.kernel == b.kernel &&
           a.tolerance_constraints == b.tolerance_constraints &&
           a.tolerance_atoms == b.tolerance_atoms;
}

bool transition_equal(const Transition& a, const Transition& b)
{
    return a.id == b.id && a.pre == b.pre && a.post == b.post && a.event == b.event;
}

bool plan_equal(const PlanPrototype& a, const PlanPrototype& b)
{
    if (a.id != b.id || a.places != b.places ||
        a.transitions.size() != b.transitions.size() ||
        !(a.initial_marking == b.initial_marking) ||
        a.tolerance_activities != b.tolerance_activities || a.refines != b.refines)
        return false;
    for (size_t i = 0; i < a.transitions.size(); ++i)
        if (!transition_equal(a.transitions[i], b.transitions[i])) return false;
    return true;
}

}  // namespace

bool structurally_equal(const PlanLibrary& a, const PlanLibrary& b)
{
    if (a.predicates.size() != b.predicates.size()) return false;
    for (const auto& [name, decl] : a.predicates) {
        const PredicateDecl* other = b.find_predicate(name);
        if (!other || other->roles != decl.roles) return false;
    }
    if (a.activities.size() != b.activities.size()) return false;
    for (const auto& [id, act] : a.activities) {
        const ActivityPrototype* other = b.find_activity(id);
        if (!other || !activity_equal(act, *other)) return false;
    }
    if (a.plans.size() != b.plans.size()) return false;
    for (const auto& [id, plan] : a.plans) {
        const PlanPrototype* other = b.find_plan(id);
        if (!other || !plan_equal(plan, *other)) return false;
    }
    return true;
}

}  // namespace sitest
