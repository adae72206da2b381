#include "sitest/match.hpp"

#include <algorithm>

namespace sitest {

Term apply(const Substitution& sub, const Term& t)
{
    if (const auto* v = std::get_if<Variable>(&t)) {
        if (auto bound = sub.lookup(v->name)) return *bound;
    }
    return t;
}

Atom apply(const Substitution& sub, const Atom& a)
{
    Atom out{a.predicate, {}};
    out.args.reserve(a.args.size());
    for (const Term& t : a.args) out.args.push_back(apply(sub, t));
    return out;
}

Constraint apply(const Substitution& sub, const Constraint& c)
{
    Constraint out = c;
    out.left = apply(sub, c.left);
    if (const auto* t = std::get_if<Term>(&out.right)) out.right = apply(sub, *t);
    return out;
}

Cube apply(const Substitution& sub, const Cube& c)
{
    std::vector<Atom> atoms;
    atoms.reserve(c.atoms().size());
    for (const Atom& a : c.atoms()) atoms.push_back(apply(sub, a));
    std::vector<Constraint> constraints;
    constraints.reserve(c.constraints().size());
    for (const Constraint& k : c.constraints()) constraints.push_back(apply(sub, k));
    return Cube(std::move(atoms), std::move(constraints));
}

namespace {

const Number& as_number(const Term& t, const char* side)
{
    if (const auto* n = std::get_if<Number>(&t)) return *n;
    if (is_variable(t))
        throw EvalError(std::string("non-ground constraint operand on ") + side);
    throw EvalError(std::string("symbol used as numeric operand on ") + side);
}

void check_units(const Number& a, const Number& b)
{
    if (a.unit != b.unit)
        throw EvalError("unit mismatch: '" + a.unit + "' vs '" + b.unit + "'");
}

bool compare(const Number& l, Relation rel, const Number& r)
{
    check_units(l, r);
    switch (rel) {
        case Relation::Eq: return l.value == r.value;
        case Relation::Ne: return l.value != r.value;
        case Relation::Lt: return l.value < r.value;
        case Relation::Le: return l.value <= r.value;
        case Relation::Gt: return l.value > r.value;
        case Relation::Ge: return l.value >= r.value;
        case Relation::In: break;
    }
    throw EvalError("interval relation needs an interval right-hand side");
}

}  // namespace

bool eval_constraint(const Constraint& c)
{
    if (const auto* iv = std::get_if<Interval>(&c.right)) {
        if (c.rel != Relation::In)
            throw EvalError("interval right-hand side requires the 'in' relation");
        const Number& l = as_number(c.left, "left");
        check_units(l, iv->lo);
        check_units(l, iv->hi);
        return iv->lo.value <= l.value && l.value <= iv->hi.value;
    }
    const Term& rt = std::get<Term>(c.right);
    if (is_constant(c.left) || is_constant(rt)) {
        if (c.rel != Relation::Eq && c.rel != Relation::Ne)
            throw EvalError("ordering relation applied to symbols");
        if (is_variable(c.left) || is_variable(rt))
            throw EvalError("non-ground constraint operand");
        if (!is_constant(c.left) || !is_constant(rt))
            return c.rel == Relation::Ne;  // symbol vs number never equal
        bool eq = std::get<Constant>(c.left) == std::get<Constant>(rt);
        return c.rel == Relation::Eq ? eq : !eq;
    }
    return compare(as_number(c.left, "left"), c.rel, as_number(rt, "right"));
}

namespace {

bool unify_atom(const Atom& pattern, const Atom& fact, Substitution& sub)
{
    if (pattern.predicate != fact.predicate || pattern.args.size() != fact.args.size())
        return false;
    for (size_t i = 0; i < pattern.args.size(); ++i) {
        const Term& p = pattern.args[i];
        const Term& f = fact.args[i];
        if (const auto* v = std::get_if<Variable>(&p)) {
            if (!sub.bind_compatible(v->name, f)) return false;
        } else if (!(p == f)) {
            return false;
        }
    }
    return true;
}

struct Matcher {
    const Cube& pattern;
    const Cube& facts;
    bool first_only = false;
    std::set<Substitution> results;

    // ill-typed evaluation (symbol where a number is required, unit clash)
    // rejects the candidate; matching itself never throws
    bool constraints_hold(const Substitution& sub) const
    {
        for (const Constraint& c : pattern.constraints()) {
            bool holds = false;
            try {
                holds = eval_constraint(apply(sub, c));
            } catch (const EvalError&) {
                holds = false;
            }
            if (!holds) return false;
        }
        return true;
    }

    // Returns true to abort early (first_only satisfied).
    bool search(size_t i, const Substitution& sub)
    {
        if (i == pattern.atoms().size()) {
            if (!constraints_hold(sub)) return false;
            results.insert(sub);
            return first_only;
        }
        const Atom& next = pattern.atoms()[i];
        for (const Atom& fact : facts.atoms()) {
            Substitution extended = sub;
            if (unify_atom(next, fact, extended))
                if (search(i + 1, extended)) return true;
        }
        return false;
    }
};

}  // namespace

std::vector<Substitution> match_ground(const Cube& pattern, const Cube& facts,
                                       const Substitution& seed)
{
    Matcher m{pattern, facts, false, {}};
    m.search(0, seed);
    return {m.results.begin(), m.results.end()};
}

bool matches_ground(const Cube& pattern, const Cube& facts, const Substitution& seed)
{
    Matcher m{pattern, facts, /*first_only=*/true, {}};
    m.search(0, seed);
    return !m.results.empty();
}

}  // namespace sitest
