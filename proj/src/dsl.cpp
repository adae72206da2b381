#include "sitest/dsl.hpp"

#include <algorithm>
#include <cctype>

namespace sitest {

namespace {

enum class Tok {
    Ident,
    Var,     // ?name
    Num,
    Str,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Colon,
    Rel,     // = != < <= > >=
    DotDot,
    Error,
    End,
};

struct Token {
    Tok kind = Tok::End;
    std::string text;
    Number num;
    SourceSpan span;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)); }
bool ident_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

class Lexer {
public:
    Lexer(std::string_view text, std::string filename)
        : text_(text), file_(std::move(filename))
    {
    }

    std::vector<Token> run(std::vector<Diagnostic>& diags)
    {
        std::vector<Token> out;
        while (true) {
            skip_trivia();
            if (pos_ >= text_.size()) break;
            out.push_back(next(diags));
        }
        Token end;
        end.kind = Tok::End;
        end.span = {file_, line_, col_, 0};
        out.push_back(end);
        return out;
    }

private:
    void advance()
    {
        if (text_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_trivia()
    {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') advance();
            } else {
                break;
            }
        }
    }

    SourceSpan span_from(int line, int col, size_t start) const
    {
        return {file_, line, col, static_cast<int>(pos_ - start)};
    }

    Token next(std::vector<Diagnostic>& diags)
    {
        int line = line_, col = col_;
        size_t start = pos_;
        char c = text_[pos_];
        auto tok = [&](Tok kind, std::string text = {}) {
            Token t;
            t.kind = kind;
            t.text = std::move(text);
            t.span = span_from(line, col, start);
            return t;
        };

        if (c == '(') { advance(); return tok(Tok::LParen, "("); }
        if (c == ')') { advance(); return tok(Tok::RParen, ")"); }
        if (c == '{') { advance(); return tok(Tok::LBrace, "{"); }
        if (c == '}') { advance(); return tok(Tok::RBrace, "}"); }
        if (c == ':') { advance(); return tok(Tok::Colon, ":"); }

        if (c == '=') { advance(); return tok(Tok::Rel, "="); }
        if (c == '!' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '=') {
            advance();
            advance();
            return tok(Tok::Rel, "!=");
        }
        if (c == '<' || c == '>') {
            advance();
            std::string s(1, c);
            if (pos_ < text_.size() && text_[pos_] == '=') {
                advance();
                s += '=';
            }
            return tok(Tok::Rel, s);
        }
        if (c == '.' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '.') {
            advance();
            advance();
            return tok(Tok::DotDot, "..");
        }
        if (c == '"') {
            advance();
            std::string s;
            while (pos_ < text_.size() && text_[pos_] != '"' && text_[pos_] != '\n') {
                s += text_[pos_];
                advance();
            }
            if (pos_ < text_.size() && text_[pos_] == '"') {
                advance();
                return tok(Tok::Str, s);
            }
            Token t = tok(Tok::Error, s);
            diags.push_back({Severity::Error, "unterminated string literal", t.span});
            return t;
        }
        if (c == '?') {
            advance();
            std::string name;
            while (pos_ < text_.size() &&
                   (ident_char(text_[pos_]) || (name.empty() && text_[pos_] == '_'))) {
                name += text_[pos_];
                advance();
            }
            Token t = tok(Tok::Var, name);
            if (name.empty())
                diags.push_back({Severity::Error, "expected variable name after '?'", t.span});
            else if (name[0] == '_')
                diags.push_back({Severity::Error,
                                 "variable names starting with '_' are reserved", t.span});
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && pos_ + 1 < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
            std::string s;
            if (c == '-') {
                s += c;
                advance();
            }
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                s += text_[pos_];
                advance();
            }
            // fraction only when '.' is followed by a digit ('..' is a range)
            if (pos_ + 1 < text_.size() && text_[pos_] == '.' &&
                std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
                s += '.';
                advance();
                while (pos_ < text_.size() &&
                       std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                    s += text_[pos_];
                    advance();
                }
            }
            // optional unit suffix, e.g. km/h
            if (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) {
                while (pos_ < text_.size() &&
                       (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                        text_[pos_] == '/' || text_[pos_] == '%')) {
                    s += text_[pos_];
                    advance();
                }
            }
            Token t = tok(Tok::Num, s);
            auto parsed = parse_number(s);
            if (!parsed) {
                t.kind = Tok::Error;
                diags.push_back({Severity::Error, "malformed number '" + s + "'", t.span});
            } else {
                t.num = *parsed;
            }
            return t;
        }
        if (ident_start(c)) {
            std::string s;
            while (pos_ < text_.size() && ident_char(text_[pos_])) {
                s += text_[pos_];
                advance();
            }
            return tok(Tok::Ident, s);
        }
        advance();
        Token t = tok(Tok::Error, std::string(1, c));
        diags.push_back(
            {Severity::Error, "unexpected character '" + std::string(1, c) + "'", t.span});
        return t;
    }

    std::string_view text_;
    std::string file_;
    size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

Relation relation_from(const std::string& s)
{
    if (s == "=") return Relation::Eq;
    if (s == "!=") return Relation::Ne;
    if (s == "<") return Relation::Lt;
    if (s == "<=") return Relation::Le;
    if (s == ">") return Relation::Gt;
    if (s == ">=") return Relation::Ge;
    return Relation::In;
}

class Parser {
public:
    Parser(std::string_view text, std::string filename)
    {
        Lexer lx(text, std::move(filename));
        tokens_ = lx.run(diags_);
    }

    std::vector<Diagnostic> take_diags() { return std::move(diags_); }

    // ---- library ----

    PlanLibrary library()
    {
        PlanLibrary lib;
        building_ = &lib;
        while (!at(Tok::End)) {
            if (at_ident("predicate")) {
                predicate_decl(lib);
            } else if (at_ident("activity")) {
                activity_decl(lib);
            } else if (at_ident("plan")) {
                plan_decl(lib);
            } else {
                error_here("expected 'predicate', 'activity' or 'plan' declaration");
                recover();
            }
        }
        building_ = nullptr;
        return lib;
    }

    // ---- scenario ----

    Scenario scenario(const PlanLibrary* lib)
    {
        Scenario sc;
        bool have_last = false;
        long last_time = 0;
        while (!at(Tok::End)) {
            if (!at_ident("t")) {
                error_here("expected 't=<time>' directive");
                recover();
                continue;
            }
            SourceSpan at_span = peek().span;
            bump();
            if (!at(Tok::Rel) || peek().text != "=") {
                error_here("expected '='");
                recover();
                continue;
            }
            bump();
            long time = 0;
            if (!time_index(time)) {
                recover();
                continue;
            }
            bool decreasing = have_last && time < last_time;
            bool repeated = have_last && time == last_time;
            if (at_ident("obs")) {
                bump();
                Cube obs;
                while (at(Tok::LParen)) {
                    SourceSpan sp = peek().span;
                    auto a = atom();
                    if (!a) continue;
                    bool ground = std::none_of(a->args.begin(), a->args.end(),
                                               [](const Term& t) { return is_variable(t); });
                    if (!ground) {
                        diags_.push_back({Severity::Error,
                                          "observations must be ground: " + to_string(*a), sp});
                        continue;
                    }
                    if (lib) check_atom_decl(*lib, *a, sp);
                    obs.add(std::move(*a));
                }
                if (decreasing || (repeated && !step_for(sc, time))) {
                    diags_.push_back({Severity::Error,
                                      "time indices must be strictly increasing", at_span});
                    continue;
                }
                if (ScenarioStep* step = step_for(sc, time)) {
                    if (!step->obs.empty()) {
                        diags_.push_back({Severity::Error,
                                          "duplicate observation for t=" + std::to_string(time),
                                          at_span});
                        continue;
                    }
                    step->obs = std::move(obs);
                } else {
                    sc.steps.push_back({time, std::move(obs), std::nullopt});
                }
                have_last = true;
                last_time = time;
            } else if (at_ident("visible")) {
                bump();
                ObservabilityMask mask;
                if (at_ident("all")) {
                    bump();
                } else if (at(Tok::LParen)) {
                    bump();
                    mask.all = false;
                    while (at(Tok::Ident)) {
                        mask.visible.insert(peek().text);
                        bump();
                    }
                    expect(Tok::RParen, "')'");
                } else {
                    error_here("expected 'all' or '(predicate...)' after 'visible'");
                    recover();
                    continue;
                }
                if (decreasing) {
                    diags_.push_back({Severity::Error,
                                      "time indices must be strictly increasing", at_span});
                    continue;
                }
                if (ScenarioStep* step = step_for(sc, time))
                    step->mask = std::move(mask);
                else
                    sc.steps.push_back({time, Cube{}, std::move(mask)});
                have_last = true;
                last_time = time;
            } else {
                error_here("expected 'obs' or 'visible'");
                recover();
            }
        }
        return sc;
    }

    // ---- script ----

    GroundTruthScript script()
    {
        GroundTruthScript sc;
        if (!eat_ident("script", "'script'")) {
            recover();
            return sc;
        }
        if (at(Tok::Ident)) {
            sc.name = peek().text;
            bump();
        }
        if (!expect(Tok::LBrace, "'{'")) return sc;
        while (!at(Tok::RBrace) && !at(Tok::End)) {
            if (at_ident("library")) {
                bump();
                if (at(Tok::Str)) {
                    sc.library_path = peek().text;
                    bump();
                } else {
                    error_here("expected library path string");
                    recover();
                }
            } else if (at_ident("seed")) {
                bump();
                long s = 0;
                if (time_index(s)) sc.noise.seed = static_cast<std::uint64_t>(s);
            } else if (at_ident("cone-angle")) {
                bump();
                long a = 0;
                if (time_index(a)) sc.params.cone_half_angle_deg = a;
            } else if (at_ident("close-radius")) {
                bump();
                if (at(Tok::Num)) {
                    sc.params.close_radius = peek().num.value;
                    bump();
                } else {
                    error_here("expected number");
                }
            } else if (at_ident("execute")) {
                execution(sc);
            } else if (at_ident("world")) {
                world(sc);
            } else if (at_ident("noise")) {
                noise(sc.noise);
            } else {
                error_here("unexpected token in script block");
                recover();
            }
        }
        expect(Tok::RBrace, "'}'");
        return sc;
    }

private:
    // ---- shared helpers ----

    const Token& peek() const { return tokens_[pos_]; }
    const Token& peek2() const
    {
        return tokens_[pos_ + 1 < tokens_.size() ? pos_ + 1 : tokens_.size() - 1];
    }
    bool at(Tok k) const { return peek().kind == k; }
    bool at_ident(const char* s) const { return at(Tok::Ident) && peek().text == s; }
    void bump()
    {
        if (!at(Tok::End)) ++pos_;
    }

    bool expect(Tok k, const char* what)
    {
        if (at(k)) {
            bump();
            return true;
        }
        error_here(std::string("expected ") + what);
        return false;
    }

    bool eat_ident(const char* s, const char* what)
    {
        if (at_ident(s)) {
            bump();
            return true;
        }
        error_here(std::string("expected ") + what);
        return false;
    }

    void error_here(const std::string& msg)
    {
        diags_.push_back({Severity::Error, msg, peek().span});
    }

    /// Skips to the next plausible declaration start at brace depth zero.
    void recover()
    {
        int depth = 0;
        bump();
        while (!at(Tok::End)) {
            if (at(Tok::LBrace)) {
                ++depth;
            } else if (at(Tok::RBrace)) {
                if (depth == 0) {
                    bump();
                    return;
                }
                --depth;
            } else if (depth == 0 && at(Tok::Ident)) {
                const std::string& s = peek().text;
                if (s == "predicate" || s == "activity" || s == "plan" || s == "t" ||
                    s == "script" || s == "execute" || s == "world" || s == "noise")
                    return;
            }
            bump();
        }
    }

    static ScenarioStep* step_for(Scenario& sc, long time)
    {
        if (!sc.steps.empty() && sc.steps.back().time == time) return &sc.steps.back();
        return nullptr;
    }

    bool time_index(long& out)
    {
        if (at(Tok::Num) && peek().num.unit.empty() && denominator(peek().num.value) == 1) {
            out = static_cast<long>(numerator(peek().num.value));
            bump();
            return true;
        }
        error_here("expected integer time index");
        return false;
    }

    std::optional<Term> term()
    {
        if (at(Tok::Var)) {
            Term t = make_var(peek().text);
            bump();
            return t;
        }
        if (at(Tok::Ident)) {
            Term t = make_const(peek().text);
            bump();
            return t;
        }
        if (at(Tok::Num)) {
            Term t = peek().num;
            bump();
            return t;
        }
        error_here("expected term (variable, symbol or number)");
        return std::nullopt;
    }

    /// Parses one parenthesized atom; caller guarantees '(' is current.
    /// Inside a library, atoms of already-declared predicates get their
    /// arity checked right here, with the atom's own span.
    std::optional<Atom> atom()
    {
        SourceSpan span = peek().span;
        expect(Tok::LParen, "'('");
        if (!at(Tok::Ident)) {
            error_here("expected predicate name");
            skip_to_rparen();
            return std::nullopt;
        }
        Atom a{peek().text, {}};
        bump();
        while (!at(Tok::RParen) && !at(Tok::End)) {
            auto t = term();
            if (!t) {
                skip_to_rparen();
                return std::nullopt;
            }
            a.args.push_back(std::move(*t));
        }
        expect(Tok::RParen, "')'");
        if (building_) {
            auto it = building_->predicates.find(a.predicate);
            if (it != building_->predicates.end() && it->second.arity() != a.args.size())
                diags_.push_back({Severity::Error,
                                  "predicate '" + a.predicate + "' declared with arity " +
                                      std::to_string(it->second.arity()) + ", used with " +
                                      std::to_string(a.args.size()),
                                  span});
        }
        return a;
    }

    std::optional<Constraint> constraint()
    {
        expect(Tok::LParen, "'('");
        Constraint c;
        if (at(Tok::Rel)) {
            c.rel = relation_from(peek().text);
            bump();
        } else if (at_ident("in")) {
            c.rel = Relation::In;
            bump();
        } else {
            error_here("expected relation (= != < <= > >= in)");
            skip_to_rparen();
            return std::nullopt;
        }
        auto left = term();
        if (!left) {
            skip_to_rparen();
            return std::nullopt;
        }
        c.left = std::move(*left);
        if (c.rel == Relation::In) {
            Interval iv;
            if (!at(Tok::Num)) {
                error_here("expected interval lower bound");
                skip_to_rparen();
                return std::nullopt;
            }
            iv.lo = peek().num;
            bump();
            if (!at(Tok::Num)) {
                error_here("expected interval upper bound");
                skip_to_rparen();
                return std::nullopt;
            }
            iv.hi = peek().num;
            bump();
            c.right = iv;
        } else {
            auto right = term();
            if (!right) {
                skip_to_rparen();
                return std::nullopt;
            }
            c.right = std::move(*right);
        }
        expect(Tok::RParen, "')'");
        return c;
    }

    void skip_to_rparen()
    {
        while (!at(Tok::RParen) && !at(Tok::End)) bump();
        if (at(Tok::RParen)) bump();
    }

    /// True when the current '(' opens a constraint rather than an atom.
    bool at_constraint() const
    {
        if (!at(Tok::LParen)) return false;
        const Token& next = peek2();
        return next.kind == Tok::Rel || (next.kind == Tok::Ident && next.text == "in");
    }

    /// `{ (atom-or-constraint)... }`
    void cube_block(Cube& out, bool allow_atoms, bool allow_constraints)
    {
        if (!expect(Tok::LBrace, "'{'")) return;
        while (at(Tok::LParen)) {
            if (at_constraint()) {
                if (!allow_constraints) error_here("constraint not allowed here");
                if (auto c = constraint()) out.add(std::move(*c));
            } else {
                if (!allow_atoms) error_here("atom not allowed here");
                if (auto a = atom()) out.add(std::move(*a));
            }
        }
        expect(Tok::RBrace, "'}'");
    }

    void ident_set(std::set<std::string>& out)
    {
        if (!expect(Tok::LBrace, "'{'")) return;
        while (at(Tok::Ident)) {
            out.insert(peek().text);
            bump();
        }
        expect(Tok::RBrace, "'}'");
    }

    void check_atom_decl(const PlanLibrary& lib, const Atom& a, const SourceSpan& sp)
    {
        const PredicateDecl* d = lib.find_predicate(a.predicate);
        if (!d) {
            diags_.push_back({Severity::Error, "undeclared predicate '" + a.predicate + "'", sp});
        } else if (d->arity() != a.args.size()) {
            diags_.push_back({Severity::Error,
                              "predicate '" + a.predicate + "' declared with arity " +
                                  std::to_string(d->arity()) + ", used with " +
                                  std::to_string(a.args.size()),
                              sp});
        }
    }

    // ---- library declarations ----

    void predicate_decl(PlanLibrary& lib)
    {
        SourceSpan sp = peek().span;
        bump();
        if (!expect(Tok::LParen, "'('")) {
            recover();
            return;
        }
        if (!at(Tok::Ident)) {
            error_here("expected predicate name");
            skip_to_rparen();
            return;
        }
        PredicateDecl decl;
        decl.name = peek().text;
        decl.span = sp;
        bump();
        if (at(Tok::Num)) {
            // arity form: predicate (name 2); first argument obj, rest val
            long n = 0;
            if (time_index(n)) {
                for (long i = 0; i < n; ++i)
                    decl.roles.push_back(i == 0 ? ArgRole::Object : ArgRole::Value);
            }
        } else {
            while (at(Tok::Ident)) {
                const std::string& r = peek().text;
                if (r == "obj")
                    decl.roles.push_back(ArgRole::Object);
                else if (r == "val")
                    decl.roles.push_back(ArgRole::Value);
                else
                    error_here("expected role 'obj' or 'val'");
                bump();
            }
        }
        expect(Tok::RParen, "')'");
        if (decl.name == "in") {
            diags_.push_back({Severity::Error, "'in' is reserved for interval constraints", sp});
            return;
        }
        if (!lib.predicates.emplace(decl.name, decl).second)
            diags_.push_back(
                {Severity::Error, "duplicate predicate declaration '" + decl.name + "'", sp});
    }

    void activity_decl(PlanLibrary& lib)
    {
        SourceSpan sp = peek().span;
        bump();
        if (!at(Tok::Ident)) {
            error_here("expected activity id");
            recover();
            return;
        }
        ActivityPrototype act;
        act.id = peek().text;
        act.span = sp;
        bump();
        if (!expect(Tok::LBrace, "'{'")) {
            recover();
            return;
        }
        while (!at(Tok::RBrace) && !at(Tok::End)) {
            if (at_ident("kernel")) {
                bump();
                cube_block(act.kernel, true, true);
            } else if (at_ident("tolerance")) {
                bump();
                if (!expect(Tok::LBrace, "'{'")) break;
                while (!at(Tok::RBrace) && !at(Tok::End)) {
                    if (at_ident("atoms")) {
                        bump();
                        Cube c;
                        cube_block(c, true, false);
                        for (const Atom& a : c.atoms()) act.tolerance_atoms.push_back(a);
                    } else if (at_ident("constraints")) {
                        bump();
                        Cube c;
                        cube_block(c, false, true);
                        for (const Constraint& k : c.constraints())
                            act.tolerance_constraints.push_back(k);
                    } else {
                        error_here("expected 'atoms' or 'constraints'");
                        recover();
                        return;
                    }
                }
                expect(Tok::RBrace, "'}'");
            } else {
                error_here("expected 'kernel' or 'tolerance'");
                recover();
                return;
            }
        }
        expect(Tok::RBrace, "'}'");
        std::sort(act.tolerance_atoms.begin(), act.tolerance_atoms.end());
        act.tolerance_atoms.erase(
            std::unique(act.tolerance_atoms.begin(), act.tolerance_atoms.end()),
            act.tolerance_atoms.end());
        std::sort(act.tolerance_constraints.begin(), act.tolerance_constraints.end());
        act.tolerance_constraints.erase(
            std::unique(act.tolerance_constraints.begin(), act.tolerance_constraints.end()),
            act.tolerance_constraints.end());
        if (!lib.activities.emplace(act.id, act).second)
            diags_.push_back({Severity::Error, "duplicate activity '" + act.id + "'", sp});
    }

    void plan_decl(PlanLibrary& lib)
    {
        SourceSpan sp = peek().span;
        bump();
        if (!at(Tok::Ident)) {
            error_here("expected plan id");
            recover();
            return;
        }
        PlanPrototype plan;
        plan.id = peek().text;
        plan.span = sp;
        bump();
        if (!expect(Tok::LBrace, "'{'")) {
            recover();
            return;
        }
        while (!at(Tok::RBrace) && !at(Tok::End)) {
            if (at_ident("places")) {
                bump();
                if (!expect(Tok::LBrace, "'{'")) break;
                while (at(Tok::Ident)) {
                    std::string place = peek().text;
                    SourceSpan psp = peek().span;
                    bump();
                    if (!expect(Tok::Colon, "':'")) break;
                    if (!at(Tok::Ident)) {
                        error_here("expected activity id");
                        break;
                    }
                    if (!plan.places.emplace(place, peek().text).second)
                        diags_.push_back({Severity::Error, "duplicate place '" + place + "'", psp});
                    bump();
                }
                expect(Tok::RBrace, "'}'");
            } else if (at_ident("transitions")) {
                bump();
                if (!expect(Tok::LBrace, "'{'")) break;
                while (at(Tok::Ident)) {
                    Transition tr;
                    tr.id = peek().text;
                    tr.span = peek().span;
                    bump();
                    if (!expect(Tok::Colon, "':'")) break;
                    if (!eat_ident("pre", "'pre'")) break;
                    ident_set(tr.pre);
                    if (!eat_ident("post", "'post'")) break;
                    ident_set(tr.post);
                    if (at_ident("event")) {
                        bump();
                        cube_block(tr.event, true, true);
                    }
                    plan.transitions.push_back(std::move(tr));
                }
                expect(Tok::RBrace, "'}'");
            } else if (at_ident("initial")) {
                bump();
                ident_set(plan.initial_marking.marked);
            } else if (at_ident("tolerance-activities")) {
                bump();
                ident_set(plan.tolerance_activities);
            } else if (at_ident("refines")) {
                bump();
                ident_set(plan.refines);
            } else {
                error_here("expected 'places', 'transitions', 'initial', "
                           "'tolerance-activities' or 'refines'");
                recover();
                return;
            }
        }
        expect(Tok::RBrace, "'}'");
        if (!lib.plans.emplace(plan.id, plan).second)
            diags_.push_back({Severity::Error, "duplicate plan '" + plan.id + "'", sp});
    }

    // ---- script blocks ----

    void execution(GroundTruthScript& sc)
    {
        bump();
        Execution ex;
        if (!at(Tok::Ident)) {
            error_here("expected plan id after 'execute'");
            recover();
            return;
        }
        ex.plan = peek().text;
        bump();
        if (!expect(Tok::LBrace, "'{'")) {
            recover();
            return;
        }
        while (!at(Tok::RBrace) && !at(Tok::End)) {
            if (at_ident("bind")) {
                bump();
                if (!expect(Tok::LBrace, "'{'")) break;
                while (at(Tok::Var)) {
                    std::string var = peek().text;
                    bump();
                    if (!at(Tok::Ident)) {
                        error_here("expected constant to bind");
                        break;
                    }
                    ex.binding.bind_compatible(var, make_const(peek().text));
                    bump();
                }
                expect(Tok::RBrace, "'}'");
            } else if (at_ident("at")) {
                bump();
                if (!eat_ident("t", "'t='")) break;
                if (!at(Tok::Rel) || peek().text != "=") {
                    error_here("expected '='");
                    break;
                }
                bump();
                long t = 0;
                if (!time_index(t)) break;
                if (!eat_ident("marking", "'marking'")) break;
                ScheduleEntry entry;
                entry.time = t;
                ident_set(entry.marking.marked);
                ex.schedule.push_back(std::move(entry));
            } else {
                error_here("expected 'bind' or 'at' in execute block");
                recover();
                return;
            }
        }
        expect(Tok::RBrace, "'}'");
        sc.executions.push_back(std::move(ex));
    }

    bool vec2(Vec2& out)
    {
        if (!expect(Tok::LParen, "'('")) return false;
        if (!at(Tok::Num)) {
            error_here("expected number");
            skip_to_rparen();
            return false;
        }
        out.x = peek().num.value;
        bump();
        if (!at(Tok::Num)) {
            error_here("expected number");
            skip_to_rparen();
            return false;
        }
        out.y = peek().num.value;
        bump();
        expect(Tok::RParen, "')'");
        return true;
    }

    void world(GroundTruthScript& sc)
    {
        bump();
        if (!expect(Tok::LBrace, "'{'")) return;
        while (!at(Tok::RBrace) && !at(Tok::End)) {
            if (at_ident("object")) {
                bump();
                WorldObject obj;
                if (!at(Tok::Ident)) {
                    error_here("expected object name");
                    recover();
                    return;
                }
                obj.name = peek().text;
                bump();
                if (!expect(Tok::LBrace, "'{'")) break;
                while (at_ident("at")) {
                    bump();
                    if (!eat_ident("t", "'t='")) break;
                    if (!at(Tok::Rel) || peek().text != "=") {
                        error_here("expected '='");
                        break;
                    }
                    bump();
                    KinematicKey key;
                    if (!time_index(key.time)) break;
                    while (at_ident("pos") || at_ident("vel")) {
                        bool is_pos = peek().text == "pos";
                        bump();
                        Vec2 v;
                        if (!vec2(v)) break;
                        if (is_pos)
                            key.pos = v;
                        else
                            key.vel = v;
                    }
                    obj.keys.push_back(std::move(key));
                }
                expect(Tok::RBrace, "'}'");
                sc.objects.push_back(std::move(obj));
            } else if (at_ident("landmark")) {
                bump();
                Landmark lm;
                if (!at(Tok::Ident)) {
                    error_here("expected landmark name");
                    recover();
                    return;
                }
                lm.name = peek().text;
                bump();
                if (!vec2(lm.pos)) continue;
                sc.landmarks.push_back(std::move(lm));
            } else {
                error_here("expected 'object' or 'landmark' in world block");
                recover();
                return;
            }
        }
        expect(Tok::RBrace, "'}'");
    }

    void noise(NoiseConfig& out)
    {
        bump();
        if (!expect(Tok::LBrace, "'{'")) return;
        while (!at(Tok::RBrace) && !at(Tok::End)) {
            if (at_ident("occlude")) {
                bump();
                OcclusionSpec spec;
                if (!eat_ident("t", "'t='")) break;
                if (!at(Tok::Rel) || peek().text != "=") {
                    error_here("expected '='");
                    break;
                }
                bump();
                if (!time_index(spec.from)) break;
                if (at(Tok::DotDot)) {
                    bump();
                    if (!time_index(spec.to)) break;
                } else {
                    spec.to = spec.from;
                }
                if (at_ident("predicates")) {
                    bump();
                    ident_set(spec.predicates);
                } else if (at_ident("objects")) {
                    bump();
                    ident_set(spec.objects);
                } else {
                    error_here("expected 'predicates' or 'objects'");
                    recover();
                    return;
                }
                out.occlusion.push_back(std::move(spec));
            } else if (at_ident("inject") || at_ident("interact")) {
                bool fictitious = peek().text == "inject";
                bump();
                InjectionSpec spec;
                if (!eat_ident("t", "'t='")) break;
                if (!at(Tok::Rel) || peek().text != "=") {
                    error_here("expected '='");
                    break;
                }
                bump();
                if (!time_index(spec.time)) break;
                while (at(Tok::LParen)) {
                    SourceSpan sp = peek().span;
                    if (auto a = atom()) {
                        bool ground = std::none_of(a->args.begin(), a->args.end(),
                                                   [](const Term& t) { return is_variable(t); });
                        if (!ground)
                            diags_.push_back({Severity::Error, "injected atoms must be ground", sp});
                        else
                            spec.atoms.push_back(std::move(*a));
                    }
                }
                (fictitious ? out.fictitious : out.interactions).push_back(std::move(spec));
            } else if (at_ident("drop")) {
                bump();
                if (!eat_ident("rate", "'rate'")) break;
                if (!at(Tok::Num)) {
                    error_here("expected drop rate");
                    break;
                }
                out.drop_rate = peek().num.value;
                if (out.drop_rate < 0 || out.drop_rate > 1)
                    diags_.push_back(
                        {Severity::Error, "drop rate must be within [0,1]", peek().span});
                bump();
            } else {
                error_here("expected 'occlude', 'inject', 'interact' or 'drop'");
                recover();
                return;
            }
        }
        expect(Tok::RBrace, "'}'");
    }

    std::vector<Token> tokens_;
    size_t pos_ = 0;
    std::vector<Diagnostic> diags_;
    PlanLibrary* building_ = nullptr;  // arity context inside a library
};

}  // namespace

ParseResult<PlanLibrary> parse_library(std::string_view text, std::string filename)
{
    Parser p(text, std::move(filename));
    ParseResult<PlanLibrary> out;
    out.value = p.library();
    out.diagnostics = p.take_diags();
    if (!has_errors(out.diagnostics)) {
        auto semantic = validate(out.value);
        out.diagnostics.insert(out.diagnostics.end(), semantic.begin(), semantic.end());
    }
    return out;
}

ParseResult<Scenario> parse_scenario(std::string_view text, std::string filename,
                                     const PlanLibrary* lib)
{
    Parser p(text, std::move(filename));
    ParseResult<Scenario> out;
    out.value = p.scenario(lib);
    out.diagnostics = p.take_diags();
    return out;
}

ParseResult<GroundTruthScript> parse_script(std::string_view text, std::string filename)
{
    Parser p(text, std::move(filename));
    ParseResult<GroundTruthScript> out;
    out.value = p.script();
    out.diagnostics = p.take_diags();
    if (out.value.noise.drop_rate > 0 && !out.value.noise.seed)
        out.diagnostics.push_back({Severity::Error, "drop rate > 0 requires a seed", SourceSpan{}});
    return out;
}

}  // namespace sitest
