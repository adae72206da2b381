#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace sitest {

using Rational = boost::multiprecision::cpp_rational;

/// Raised on ill-typed constraint evaluation (unit mismatch, ordering on
/// symbols, non-ground operands).
class EvalError : public std::runtime_error {
public:
    explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

/// Exact number with an opaque unit tag. Units are compared for equality
/// only; there is no conversion.
struct Number {
    Rational value;
    std::string unit;  // empty = unitless

    bool operator==(const Number& o) const { return value == o.value && unit == o.unit; }
    bool operator<(const Number& o) const
    {
        if (value != o.value) return value < o.value;
        return unit < o.unit;
    }
};

struct Variable {
    std::string name;  // without the '?' sigil
    auto operator<=>(const Variable&) const = default;
};

struct Constant {
    std::string symbol;
    auto operator<=>(const Constant&) const = default;
};

// Alternative order matters: it defines the canonical term order
// (variables < constants < numbers).
using Term = std::variant<Variable, Constant, Number>;

inline bool is_variable(const Term& t) { return std::holds_alternative<Variable>(t); }
inline bool is_constant(const Term& t) { return std::holds_alternative<Constant>(t); }
inline bool is_number(const Term& t) { return std::holds_alternative<Number>(t); }

inline Term make_var(std::string name) { return Variable{std::move(name)}; }
inline Term make_const(std::string symbol) { return Constant{std::move(symbol)}; }
inline Term make_num(Rational value, std::string unit = "")
{
    return Number{std::move(value), std::move(unit)};
}

struct Atom {
    std::string predicate;
    std::vector<Term> args;

    bool operator==(const Atom&) const = default;
    bool operator<(const Atom& o) const
    {
        if (predicate != o.predicate) return predicate < o.predicate;
        return args < o.args;
    }
};

enum class Relation { Eq, Ne, Lt, Le, Gt, Ge, In };

/// Closed interval of numbers, for the `in` relation.
struct Interval {
    Number lo;
    Number hi;

    bool operator==(const Interval&) const = default;
    bool operator<(const Interval& o) const
    {
        if (!(lo == o.lo)) return lo < o.lo;
        return hi < o.hi;
    }
};

struct Constraint {
    Term left;  // Variable or Number
    Relation rel = Relation::Eq;
    std::variant<Term, Interval> right;

    bool operator==(const Constraint&) const = default;
    bool operator<(const Constraint& o) const
    {
        if (!(left == o.left)) return left < o.left;
        if (rel != o.rel) return rel < o.rel;
        return right < o.right;
    }
};

/// Conjunction of atoms plus numeric constraints, all variables
/// existentially quantified. Stored canonically: sorted, deduplicated.
class Cube {
public:
    Cube() = default;
    Cube(std::vector<Atom> atoms, std::vector<Constraint> constraints = {});

    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }

    bool empty() const { return atoms_.empty() && constraints_.empty(); }
    bool is_ground() const;
    bool contains(const Atom& a) const;

    /// Names of all variables occurring in atoms or constraints.
    std::set<std::string> variables() const;
    /// Constant symbols occurring in atom arguments.
    std::set<std::string> constant_symbols() const;

    void add(Atom a);
    void add(Constraint c);
    void merge(const Cube& other);

    bool operator==(const Cube&) const = default;
    bool operator<(const Cube& o) const
    {
        if (atoms_ != o.atoms_) return atoms_ < o.atoms_;
        return constraints_ < o.constraints_;
    }

private:
    void canonicalize();
    std::vector<Atom> atoms_;
    std::vector<Constraint> constraints_;
};

/// Finite map from variables to terms. Idempotent by construction: a
/// variable may not be bound to a term that mentions a domain variable.
class Substitution {
public:
    Substitution() = default;

    /// Binds `var`; throws std::logic_error on conflicting rebinding or an
    /// idempotence violation.
    void bind(const std::string& var, Term value);

    /// Binds, or reports false if `var` is already bound to something else.
    bool bind_compatible(const std::string& var, const Term& value);

    std::optional<Term> lookup(const std::string& var) const;
    bool bound(const std::string& var) const { return bindings_.count(var) != 0; }

    const std::map<std::string, Term>& bindings() const { return bindings_; }
    bool empty() const { return bindings_.empty(); }
    size_t size() const { return bindings_.size(); }

    /// Keeps only the given variables.
    Substitution restricted_to(const std::set<std::string>& vars) const;
    /// Keeps only bindings to constants (the persistent object bindings).
    Substitution constants_only() const;

    bool operator==(const Substitution&) const = default;
    bool operator<(const Substitution& o) const { return bindings_ < o.bindings_; }

private:
    std::map<std::string, Term> bindings_;
};

// --- rendering (the DSL's textual forms; used by traces and serializer) ---

std::string to_string(const Number& n);
std::string to_string(const Term& t);
std::string to_string(const Atom& a);
std::string to_string(const Constraint& c);
std::string to_string(const Cube& c);
std::string to_string(const Substitution& s);
std::string relation_symbol(Relation r);

/// Parses "12", "-3.5", "5km/h" style literals; nullopt on malformed input.
std::optional<Number> parse_number(const std::string& text);

}  // namespace sitest
