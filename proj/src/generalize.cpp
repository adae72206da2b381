#include "sitest/generalize.hpp"

#include <algorithm>
#include <map>

#include "sitest/match.hpp"

namespace sitest {

namespace {

std::set<std::string> atom_vars(const Atom& a)
{
    std::set<std::string> out;
    for (const Term& t : a.args)
        if (const auto* v = std::get_if<Variable>(&t)) out.insert(v->name);
    return out;
}

// Variables of `a` that occur nowhere else in the cube (other atoms or
// constraints). Only these may be renamed away by reduction.
std::set<std::string> private_vars(const Cube& c, size_t index)
{
    std::set<std::string> mine = atom_vars(c.atoms()[index]);
    if (mine.empty()) return mine;
    std::set<std::string> elsewhere;
    for (size_t j = 0; j < c.atoms().size(); ++j) {
        if (j == index) continue;
        auto vs = atom_vars(c.atoms()[j]);
        elsewhere.insert(vs.begin(), vs.end());
    }
    for (const Constraint& k : c.constraints()) {
        if (const auto* v = std::get_if<Variable>(&k.left)) elsewhere.insert(v->name);
        if (const auto* t = std::get_if<Term>(&k.right))
            if (const auto* v = std::get_if<Variable>(t)) elsewhere.insert(v->name);
    }
    std::set<std::string> out;
    for (const auto& v : mine)
        if (!elsewhere.count(v)) out.insert(v);
    return out;
}

// Tries to map atom `a` onto `b` by binding only variables in `renameable`.
bool subsumed_by(const Atom& a, const Atom& b, const std::set<std::string>& renameable)
{
    if (a.predicate != b.predicate || a.args.size() != b.args.size()) return false;
    Substitution theta;
    for (size_t i = 0; i < a.args.size(); ++i) {
        const auto* v = std::get_if<Variable>(&a.args[i]);
        if (v && renameable.count(v->name)) {
            if (!theta.bind_compatible(v->name, b.args[i])) return false;
        } else if (!(a.args[i] == b.args[i])) {
            return false;
        }
    }
    return true;
}

}  // namespace

Cube reduce(const Cube& c)
{
    Cube current = c;  // construction already deduplicates
    bool changed = true;
    while (changed) {
        changed = false;
        const auto& atoms = current.atoms();
        for (size_t i = 0; i < atoms.size() && !changed; ++i) {
            std::set<std::string> priv = private_vars(current, i);
            for (size_t j = 0; j < atoms.size(); ++j) {
                if (i == j) continue;
                if (subsumed_by(atoms[i], atoms[j], priv)) {
                    std::vector<Atom> kept;
                    kept.reserve(atoms.size() - 1);
                    for (size_t k = 0; k < atoms.size(); ++k)
                        if (k != i) kept.push_back(atoms[k]);
                    current = Cube(std::move(kept), current.constraints());
                    changed = true;
                    break;
                }
            }
        }
    }
    return current;
}

namespace {

struct TermPairLess {
    bool operator()(const std::pair<Term, Term>& a, const std::pair<Term, Term>& b) const
    {
        if (!(a.first == b.first)) return a.first < b.first;
        return a.second < b.second;
    }
};

struct FreshTable {
    std::map<std::pair<Term, Term>, std::string, TermPairLess> names;
    int counter = 0;

    std::string get(const Term& left, const Term& right)
    {
        auto key = std::make_pair(left, right);
        auto it = names.find(key);
        if (it != names.end()) return it->second;
        std::string name = "~g" + std::to_string(counter++);
        names.emplace(std::move(key), name);
        return name;
    }
};

// Renames the temporary ~g variables to the canonical _0, _1, ... form in
// first-occurrence order over the final (sorted) cube.
void canonicalize_fresh(Generalization& g)
{
    std::set<std::string> taken = g.general.variables();
    // input-side variables (the substitution ranges) are taken too; a fresh
    // name colliding with them would break substitution idempotence
    for (const auto& [name, term] : g.to_left.bindings())
        if (const auto* v = std::get_if<Variable>(&term)) taken.insert(v->name);
    for (const auto& [name, term] : g.to_right.bindings())
        if (const auto* v = std::get_if<Variable>(&term)) taken.insert(v->name);
    std::vector<std::string> order;
    for (const Atom& a : g.general.atoms())
        for (const Term& t : a.args)
            if (const auto* v = std::get_if<Variable>(&t))
                if (v->name.rfind("~g", 0) == 0 &&
                    std::find(order.begin(), order.end(), v->name) == order.end())
                    order.push_back(v->name);
    for (const Constraint& k : g.general.constraints()) {
        auto note = [&](const Term& t) {
            if (const auto* v = std::get_if<Variable>(&t))
                if (v->name.rfind("~g", 0) == 0 &&
                    std::find(order.begin(), order.end(), v->name) == order.end())
                    order.push_back(v->name);
        };
        note(k.left);
        if (const auto* t = std::get_if<Term>(&k.right)) note(*t);
    }

    Substitution rename;
    std::map<std::string, std::string> new_name;
    int counter = 0;
    for (const std::string& old : order) {
        std::string fresh;
        do {
            fresh = "_" + std::to_string(counter++);
        } while (taken.count(fresh));
        new_name[old] = fresh;
        rename.bind(old, make_var(fresh));
    }

    Substitution to_left, to_right;
    for (const auto& [old, fresh] : new_name) {
        if (auto t = g.to_left.lookup(old)) to_left.bind(fresh, *t);
        if (auto t = g.to_right.lookup(old)) to_right.bind(fresh, *t);
    }
    g.general = apply(rename, g.general);
    g.to_left = std::move(to_left);
    g.to_right = std::move(to_right);
}

}  // namespace

Generalization anti_unify(const Cube& a, const Cube& b)
{
    FreshTable fresh;
    Substitution to_left, to_right;
    std::vector<Atom> atoms;

    for (const Atom& pa : a.atoms()) {
        for (const Atom& pb : b.atoms()) {
            if (pa.predicate != pb.predicate || pa.args.size() != pb.args.size())
                continue;
            Atom gen{pa.predicate, {}};
            gen.args.reserve(pa.args.size());
            for (size_t i = 0; i < pa.args.size(); ++i) {
                if (pa.args[i] == pb.args[i]) {
                    gen.args.push_back(pa.args[i]);
                } else {
                    std::string name = fresh.get(pa.args[i], pb.args[i]);
                    if (!to_left.bound(name)) {
                        to_left.bind(name, pa.args[i]);
                        to_right.bind(name, pb.args[i]);
                    }
                    gen.args.push_back(make_var(name));
                }
            }
            atoms.push_back(std::move(gen));
        }
    }

    Generalization g{Cube(std::move(atoms)), std::move(to_left), std::move(to_right)};

    // Carry a constraint of b when its variable maps into the general cube
    // and the left-side value it generalizes is a number satisfying it.
    std::vector<Constraint> kept;
    for (const Constraint& k : b.constraints()) {
        const auto* lv = std::get_if<Variable>(&k.left);
        if (!lv) continue;
        if (const auto* t = std::get_if<Term>(&k.right))
            if (is_variable(*t)) continue;
        for (const auto& [fresh_name, right_term] : g.to_right.bindings()) {
            const auto* rv = std::get_if<Variable>(&right_term);
            if (!rv || rv->name != lv->name) continue;
            auto left_val = g.to_left.lookup(fresh_name);
            if (!left_val || !is_number(*left_val)) continue;
            Constraint grounded = k;
            grounded.left = *left_val;
            bool holds = false;
            try {
                holds = eval_constraint(grounded);
            } catch (const EvalError&) {
                holds = false;
            }
            if (holds) {
                Constraint renamed = k;
                renamed.left = make_var(fresh_name);
                kept.push_back(std::move(renamed));
            }
        }
    }
    if (!kept.empty()) {
        Cube with(g.general.atoms(), kept);
        g.general = std::move(with);
    }

    g.general = reduce(g.general);
    auto surviving = g.general.variables();
    g.to_left = g.to_left.restricted_to(surviving);
    g.to_right = g.to_right.restricted_to(surviving);
    canonicalize_fresh(g);
    return g;
}

}  // namespace sitest
