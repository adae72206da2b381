#include "sitest/plan.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <sstream>

namespace sitest {

std::string format_diagnostic(const Diagnostic& d)
{
    std::ostringstream os;
    if (d.span.valid())
        os << d.span.file << ':' << d.span.line << ':' << d.span.column << ": ";
    os << (d.severity == Severity::Error ? "error: " : "warning: ") << d.message;
    return os.str();
}

std::string to_string(const Marking& m)
{
    std::string out = "{";
    bool first = true;
    for (const PlaceId& p : m.marked) {
        if (!first) out += ",";
        out += p;
        first = false;
    }
    return out + "}";
}

const ActivityPrototype* PlanLibrary::find_activity(const ActivityId& id) const
{
    auto it = activities.find(id);
    return it == activities.end() ? nullptr : &it->second;
}

const PlanPrototype* PlanLibrary::find_plan(const PlanId& id) const
{
    auto it = plans.find(id);
    return it == plans.end() ? nullptr : &it->second;
}

const PredicateDecl* PlanLibrary::find_predicate(const std::string& name) const
{
    auto it = predicates.find(name);
    return it == predicates.end() ? nullptr : &it->second;
}

std::vector<size_t> enabled(const PlanPrototype& p, const Marking& m)
{
    std::vector<size_t> out;
    for (size_t i = 0; i < p.transitions.size(); ++i) {
        const auto& pre = p.transitions[i].pre;
        if (std::includes(m.marked.begin(), m.marked.end(), pre.begin(), pre.end()))
            out.push_back(i);
    }
    return out;
}

Marking fire(const PlanPrototype& p, const Marking& m, size_t t)
{
    if (t >= p.transitions.size())
        throw std::logic_error("fire: no transition with index " + std::to_string(t));
    const Transition& tr = p.transitions[t];
    if (!std::includes(m.marked.begin(), m.marked.end(), tr.pre.begin(), tr.pre.end()))
        throw std::logic_error("fire: transition " + tr.id + " not enabled at " +
                               to_string(m));
    Marking out = m;
    for (const PlaceId& q : tr.pre) out.marked.erase(q);
    for (const PlaceId& q : tr.post) out.marked.insert(q);
    return out;
}

std::set<Marking> reachable_one_step(const PlanPrototype& p, const Marking& m)
{
    std::set<Marking> out;
    out.insert(m);
    for (size_t t : enabled(p, m)) out.insert(fire(p, m, t));
    return out;
}

std::vector<Marking> enumerate_reachable(const PlanPrototype& p)
{
    std::vector<Marking> order;
    std::set<Marking> seen;
    std::deque<Marking> queue;
    queue.push_back(p.initial_marking);
    seen.insert(p.initial_marking);
    while (!queue.empty()) {
        Marking m = queue.front();
        queue.pop_front();
        order.push_back(m);
        for (size_t t : enabled(p, m)) {
            Marking next = fire(p, m, t);
            if (seen.insert(next).second) queue.push_back(next);
        }
    }
    return order;
}

namespace {

void check_cube_arities(const PlanLibrary& lib, const Cube& cube,
                        const std::string& where, const SourceSpan& span,
                        std::vector<Diagnostic>& out)
{
    for (const Atom& a : cube.atoms()) {
        const PredicateDecl* d = lib.find_predicate(a.predicate);
        if (!d) {
            out.push_back({Severity::Error,
                           where + ": undeclared predicate '" + a.predicate + "'", span});
        } else if (d->arity() != a.args.size()) {
            out.push_back({Severity::Error,
                           where + ": predicate '" + a.predicate + "' declared with arity " +
                               std::to_string(d->arity()) + ", used with " +
                               std::to_string(a.args.size()),
                           span});
        }
    }
    // Constraint variables must be anchored in some atom of the cube.
    std::set<std::string> atom_vars;
    for (const Atom& a : cube.atoms())
        for (const Term& t : a.args)
            if (const auto* v = std::get_if<Variable>(&t)) atom_vars.insert(v->name);
    for (const Constraint& c : cube.constraints()) {
        auto check = [&](const Term& t) {
            if (const auto* v = std::get_if<Variable>(&t))
                if (!atom_vars.count(v->name))
                    out.push_back({Severity::Error,
                                   where + ": constraint variable ?" + v->name +
                                       " occurs in no atom of the cube",
                                   span});
        };
        check(c.left);
        if (const auto* t = std::get_if<Term>(&c.right)) check(*t);
    }
}

void check_activity(const PlanLibrary& lib, const ActivityPrototype& act,
                    std::vector<Diagnostic>& out)
{
    if (act.kernel.atoms().empty())
        out.push_back({Severity::Error, "activity '" + act.id + "': empty kernel",
                       act.span});
    check_cube_arities(lib, act.kernel, "activity '" + act.id + "' kernel", act.span, out);

    std::set<std::string> known = act.kernel.variables();
    for (const Atom& a : act.tolerance_atoms) {
        Cube c({a});
        check_cube_arities(lib, c, "activity '" + act.id + "' tolerance", act.span, out);
        for (const Term& t : a.args)
            if (const auto* v = std::get_if<Variable>(&t)) known.insert(v->name);
    }
    for (const Constraint& c : act.tolerance_constraints) {
        auto check = [&](const Term& t) {
            if (const auto* v = std::get_if<Variable>(&t))
                if (!known.count(v->name))
                    out.push_back({Severity::Error,
                                   "activity '" + act.id + "': tolerance constraint on ?" +
                                       v->name + " which occurs in no kernel or tolerance atom",
                                   act.span});
        };
        check(c.left);
        if (const auto* t = std::get_if<Term>(&c.right)) check(*t);
    }
}

void check_plan(const PlanLibrary& lib, const PlanPrototype& plan,
                std::vector<Diagnostic>& out)
{
    for (const auto& [place, act] : plan.places)
        if (!lib.find_activity(act))
            out.push_back({Severity::Error,
                           "plan '" + plan.id + "': place '" + place +
                               "' references unknown activity '" + act + "'",
                           plan.span});

    auto known_place = [&](const PlaceId& q) { return plan.places.count(q) != 0; };

    for (const Transition& t : plan.transitions) {
        for (const PlaceId& q : t.pre)
            if (!known_place(q))
                out.push_back({Severity::Error,
                               "plan '" + plan.id + "': transition '" + t.id +
                                   "' pre references unknown place '" + q + "'",
                               t.span.valid() ? t.span : plan.span});
        for (const PlaceId& q : t.post)
            if (!known_place(q))
                out.push_back({Severity::Error,
                               "plan '" + plan.id + "': transition '" + t.id +
                                   "' post references unknown place '" + q + "'",
                               t.span.valid() ? t.span : plan.span});
        check_cube_arities(lib, t.event, "plan '" + plan.id + "' transition '" + t.id + "'",
                           t.span.valid() ? t.span : plan.span, out);
    }
    for (const PlaceId& q : plan.initial_marking.marked)
        if (!known_place(q))
            out.push_back({Severity::Error,
                           "plan '" + plan.id + "': initial marking references unknown place '" +
                               q + "'",
                           plan.span});
    if (plan.initial_marking.marked.empty())
        out.push_back({Severity::Error, "plan '" + plan.id + "': empty initial marking",
                       plan.span});
    for (const ActivityId& a : plan.tolerance_activities) {
        if (!lib.find_activity(a))
            out.push_back({Severity::Error,
                           "plan '" + plan.id + "': unknown tolerance activity '" + a + "'",
                           plan.span});
        for (const auto& [place, act] : plan.places)
            if (act == a)
                out.push_back({Severity::Error,
                               "plan '" + plan.id + "': tolerance activity '" + a +
                                   "' is also the kernel activity of place '" + place + "'",
                               plan.span});
    }
    for (const PlanId& r : plan.refines)
        if (!lib.find_plan(r))
            out.push_back({Severity::Error,
                           "plan '" + plan.id + "': refines unknown plan '" + r + "'",
                           plan.span});

    // Net structure: exhaustive reachability on the safe net. A firing that
    // would put a second token on a place is a safety violation.
    bool structure_ok =
        !plan.initial_marking.marked.empty() &&
        std::all_of(plan.initial_marking.marked.begin(), plan.initial_marking.marked.end(),
                    known_place);
    for (const Transition& t : plan.transitions)
        structure_ok = structure_ok &&
                       std::all_of(t.pre.begin(), t.pre.end(), known_place) &&
                       std::all_of(t.post.begin(), t.post.end(), known_place);
    if (!structure_ok) return;  // reachability analysis needs resolved references

    // matching enumerates subsets of concurrently marked places; bound the
    // width so that stays tractable
    constexpr size_t max_width = 16;

    std::set<PlaceId> reached(plan.initial_marking.marked.begin(),
                              plan.initial_marking.marked.end());
    std::set<size_t> fired;
    std::set<Marking> seen{plan.initial_marking};
    std::deque<Marking> queue{plan.initial_marking};
    while (!queue.empty()) {
        Marking m = queue.front();
        queue.pop_front();
        if (m.marked.size() > max_width) {
            out.push_back({Severity::Error,
                           "plan '" + plan.id + "': marking " + to_string(m) + " holds " +
                               std::to_string(m.marked.size()) +
                               " concurrent places (supported maximum is " +
                               std::to_string(max_width) + ")",
                           plan.span});
            return;
        }
        for (size_t t : enabled(plan, m)) {
            const Transition& tr = plan.transitions[t];
            fired.insert(t);
            Marking next = m;
            for (const PlaceId& q : tr.pre) next.marked.erase(q);
            for (const PlaceId& q : tr.post) {
                if (next.marked.count(q))
                    out.push_back({Severity::Error,
                                   "plan '" + plan.id + "': firing transition '" + tr.id +
                                       "' from " + to_string(m) +
                                       " puts a second token on place '" + q + "'",
                                   tr.span.valid() ? tr.span : plan.span});
                next.marked.insert(q);
            }
            reached.insert(next.marked.begin(), next.marked.end());
            if (seen.insert(next).second) queue.push_back(next);
        }
    }
    for (const auto& [place, act] : plan.places)
        if (!reached.count(place))
            out.push_back({Severity::Error,
                           "plan '" + plan.id + "': place '" + place +
                               "' is unreachable from the initial marking",
                           plan.span});
    for (size_t t = 0; t < plan.transitions.size(); ++t)
        if (!fired.count(t))
            out.push_back({Severity::Error,
                           "plan '" + plan.id + "': transition '" + plan.transitions[t].id +
                               "' can never fire",
                           plan.transitions[t].span.valid() ? plan.transitions[t].span
                                                            : plan.span});
}

void check_refines_cycles(const PlanLibrary& lib, std::vector<Diagnostic>& out)
{
    enum class Mark { White, Grey, Black };
    std::map<PlanId, Mark> mark;
    for (const auto& [id, _] : lib.plans) mark[id] = Mark::White;

    std::function<bool(const PlanId&)> visit = [&](const PlanId& id) -> bool {
        mark[id] = Mark::Grey;
        auto it = lib.plans.find(id);
        if (it != lib.plans.end()) {
            for (const PlanId& next : it->second.refines) {
                if (!lib.plans.count(next)) continue;
                if (mark[next] == Mark::Grey) return true;
                if (mark[next] == Mark::White && visit(next)) return true;
            }
        }
        mark[id] = Mark::Black;
        return false;
    };
    for (const auto& [id, _] : lib.plans) {
        if (mark[id] == Mark::White && visit(id)) {
            out.push_back({Severity::Error,
                           "refines cycle through plan '" + id + "'",
                           lib.plans.at(id).span});
            return;  // one diagnostic per cycle detection pass
        }
    }
}

}  // namespace

std::vector<Diagnostic> validate(const PlanLibrary& lib)
{
    std::vector<Diagnostic> out;
    for (const auto& [id, act] : lib.activities) check_activity(lib, act, out);
    for (const auto& [id, plan] : lib.plans) check_plan(lib, plan, out);
    check_refines_cycles(lib, out);
    return out;
}

bool more_specific(const PlanLibrary& lib, const PlanId& a, const PlanId& b)
{
    if (!lib.plans.count(a)) throw std::out_of_range("unknown plan '" + a + "'");
    if (!lib.plans.count(b)) throw std::out_of_range("unknown plan '" + b + "'");
    std::set<PlanId> seen;
    std::deque<PlanId> queue{a};
    while (!queue.empty()) {
        PlanId cur = queue.front();
        queue.pop_front();
        auto it = lib.plans.find(cur);
        if (it == lib.plans.end()) continue;
        for (const PlanId& next : it->second.refines) {
            if (next == b) return true;
            if (seen.insert(next).second) queue.push_back(next);
        }
    }
    return false;
}

std::set<PlanId> refinements_of(const PlanLibrary& lib, const PlanId& base)
{
    std::set<PlanId> out;
    for (const auto& [id, _] : lib.plans)
        if (id != base && more_specific(lib, id, base)) out.insert(id);
    return out;
}

}  // namespace sitest
