#include "sitest/term.hpp"

#include <algorithm>
#include <sstream>

namespace sitest {

Cube::Cube(std::vector<Atom> atoms, std::vector<Constraint> constraints)
    : atoms_(std::move(atoms)), constraints_(std::move(constraints))
{
    canonicalize();
}

void Cube::canonicalize()
{
    std::sort(atoms_.begin(), atoms_.end());
    atoms_.erase(std::unique(atoms_.begin(), atoms_.end()), atoms_.end());
    std::sort(constraints_.begin(), constraints_.end());
    constraints_.erase(std::unique(constraints_.begin(), constraints_.end()),
                       constraints_.end());
}

bool Cube::is_ground() const
{
    if (!constraints_.empty()) return false;
    for (const Atom& a : atoms_)
        for (const Term& t : a.args)
            if (is_variable(t)) return false;
    return true;
}

bool Cube::contains(const Atom& a) const
{
    return std::binary_search(atoms_.begin(), atoms_.end(), a);
}

void Cube::add(Atom a)
{
    auto it = std::lower_bound(atoms_.begin(), atoms_.end(), a);
    if (it == atoms_.end() || !(*it == a)) atoms_.insert(it, std::move(a));
}

void Cube::add(Constraint c)
{
    auto it = std::lower_bound(constraints_.begin(), constraints_.end(), c);
    if (it == constraints_.end() || !(*it == c)) constraints_.insert(it, std::move(c));
}

void Cube::merge(const Cube& other)
{
    for (const Atom& a : other.atoms()) add(a);
    for (const Constraint& c : other.constraints()) add(c);
}

namespace {

void collect_vars(const Term& t, std::set<std::string>& out)
{
    if (const auto* v = std::get_if<Variable>(&t)) out.insert(v->name);
}

}  // namespace

std::set<std::string> Cube::variables() const
{
    std::set<std::string> out;
    for (const Atom& a : atoms_)
        for (const Term& t : a.args) collect_vars(t, out);
    for (const Constraint& c : constraints_) {
        collect_vars(c.left, out);
        if (const auto* t = std::get_if<Term>(&c.right)) collect_vars(*t, out);
    }
    return out;
}

std::set<std::string> Cube::constant_symbols() const
{
    std::set<std::string> out;
    for (const Atom& a : atoms_)
        for (const Term& t : a.args)
            if (const auto* c = std::get_if<Constant>(&t)) out.insert(c->symbol);
    return out;
}

void Substitution::bind(const std::string& var, Term value)
{
    if (const auto* v = std::get_if<Variable>(&value)) {
        if (v->name == var) return;  // trivial binding
        if (bindings_.count(v->name))
            throw std::logic_error("substitution not idempotent: range variable ?" +
                                   v->name + " is in the domain");
    }
    auto [it, inserted] = bindings_.emplace(var, value);
    if (!inserted && !(it->second == value))
        throw std::logic_error("conflicting rebinding of ?" + var);
}

bool Substitution::bind_compatible(const std::string& var, const Term& value)
{
    auto it = bindings_.find(var);
    if (it != bindings_.end()) return it->second == value;
    bindings_.emplace(var, value);
    return true;
}

std::optional<Term> Substitution::lookup(const std::string& var) const
{
    auto it = bindings_.find(var);
    if (it == bindings_.end()) return std::nullopt;
    return it->second;
}

Substitution Substitution::restricted_to(const std::set<std::string>& vars) const
{
    Substitution out;
    for (const auto& [k, v] : bindings_)
        if (vars.count(k)) out.bindings_.emplace(k, v);
    return out;
}

Substitution Substitution::constants_only() const
{
    Substitution out;
    for (const auto& [k, v] : bindings_)
        if (is_constant(v)) out.bindings_.emplace(k, v);
    return out;
}

// --- rendering ---

using boost::multiprecision::cpp_int;

namespace {

// Minimal exact decimal form. Denominators are 2^a*5^b for every number the
// DSL can produce; anything else is rendered as num/den.
std::string render_rational(const Rational& r)
{
    cpp_int num = numerator(r);
    cpp_int den = denominator(r);
    bool neg = num < 0;
    if (neg) num = -num;

    int twos = 0, fives = 0;
    cpp_int d = den;
    while (d % 2 == 0) { d /= 2; ++twos; }
    while (d % 5 == 0) { d /= 5; ++fives; }
    if (d != 1) {
        std::ostringstream os;
        if (neg) os << '-';
        os << num << '/' << den;
        return os.str();
    }
    int k = std::max(twos, fives);
    for (int i = twos; i < k; ++i) num *= 2;
    for (int i = fives; i < k; ++i) num *= 5;
    cpp_int scale = 1;
    for (int i = 0; i < k; ++i) scale *= 10;

    std::ostringstream os;
    if (neg) os << '-';
    os << cpp_int(num / scale);
    if (k > 0) {
        std::string frac = cpp_int(num % scale).str();
        os << '.' << std::string(static_cast<size_t>(k) - frac.size(), '0') << frac;
    }
    return os.str();
}

}  // namespace

std::string to_string(const Number& n) { return render_rational(n.value) + n.unit; }

std::string to_string(const Term& t)
{
    if (const auto* v = std::get_if<Variable>(&t)) return "?" + v->name;
    if (const auto* c = std::get_if<Constant>(&t)) return c->symbol;
    return to_string(std::get<Number>(t));
}

std::string to_string(const Atom& a)
{
    std::string out = "(" + a.predicate;
    for (const Term& t : a.args) out += " " + to_string(t);
    return out + ")";
}

std::string relation_symbol(Relation r)
{
    switch (r) {
        case Relation::Eq: return "=";
        case Relation::Ne: return "!=";
        case Relation::Lt: return "<";
        case Relation::Le: return "<=";
        case Relation::Gt: return ">";
        case Relation::Ge: return ">=";
        case Relation::In: return "in";
    }
    return "?";
}

std::string to_string(const Constraint& c)
{
    std::string out = "(" + relation_symbol(c.rel) + " " + to_string(c.left);
    if (const auto* t = std::get_if<Term>(&c.right)) {
        out += " " + to_string(*t);
    } else {
        const auto& iv = std::get<Interval>(c.right);
        out += " " + to_string(iv.lo) + " " + to_string(iv.hi);
    }
    return out + ")";
}

std::string to_string(const Cube& c)
{
    std::string out = "{";
    bool first = true;
    for (const Atom& a : c.atoms()) {
        if (!first) out += " ";
        out += to_string(a);
        first = false;
    }
    for (const Constraint& k : c.constraints()) {
        if (!first) out += " ";
        out += to_string(k);
        first = false;
    }
    return out + "}";
}

std::string to_string(const Substitution& s)
{
    std::string out = "{";
    bool first = true;
    for (const auto& [k, v] : s.bindings()) {
        if (!first) out += ",";
        out += "?" + k + "=" + to_string(v);
        first = false;
    }
    return out + "}";
}

std::optional<Number> parse_number(const std::string& text)
{
    size_t i = 0;
    bool neg = false;
    if (i < text.size() && (text[i] == '-' || text[i] == '+')) {
        neg = text[i] == '-';
        ++i;
    }
    size_t int_start = i;
    cpp_int num = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        num = num * 10 + (text[i] - '0');  // no base-prefix semantics
        ++i;
    }
    if (i == int_start) return std::nullopt;
    cpp_int den = 1;
    if (i < text.size() && text[i] == '.') {
        ++i;
        size_t frac_start = i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        if (i == frac_start) return std::nullopt;
        for (size_t j = frac_start; j < i; ++j) {
            num = num * 10 + (text[j] - '0');
            den *= 10;
        }
    }
    std::string unit = text.substr(i);
    if (!unit.empty()) {
        if (!std::isalpha(static_cast<unsigned char>(unit[0]))) return std::nullopt;
        for (char ch : unit)
            if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '/' && ch != '%')
                return std::nullopt;
    }
    Rational value(num, den);
    if (neg) value = -value;
    return Number{value, unit};
}

}  // namespace sitest
