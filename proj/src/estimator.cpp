#include "sitest/estimator.hpp"

#include <algorithm>

namespace sitest {

namespace {

long instance_number(const InstanceId& id)
{
    if (id.size() > 1 && id[0] == 'i') return std::strtol(id.c_str() + 1, nullptr, 10);
    return 0;
}

bool instance_less(const PlanInstance& a, const PlanInstance& b)
{
    long na = instance_number(a.id), nb = instance_number(b.id);
    if (na != nb) return na < nb;
    return a.id < b.id;
}

std::set<std::string> term_constants(const Cube& c) { return c.constant_symbols(); }

std::string render_atoms(const std::vector<Atom>& atoms)
{
    std::string out = "[";
    bool first = true;
    for (const Atom& a : atoms) {
        if (!first) out += ",";
        out += to_string(a);
        first = false;
    }
    return out + "]";
}

std::string render_atoms(const std::set<Atom>& atoms)
{
    return render_atoms(std::vector<Atom>(atoms.begin(), atoms.end()));
}

std::string render_plans(const std::vector<PlanId>& ids)
{
    std::string out = "[";
    bool first = true;
    for (const PlanId& p : ids) {
        if (!first) out += ",";
        out += p;
        first = false;
    }
    return out + "]";
}

/// Constants at object-role argument positions. Undeclared predicates
/// default to first-argument-object.
std::set<std::string> atom_objects(const Atom& a, const PlanLibrary& lib)
{
    std::set<std::string> out;
    const PredicateDecl* d = lib.find_predicate(a.predicate);
    for (size_t i = 0; i < a.args.size(); ++i) {
        bool obj = d && i < d->roles.size() ? d->roles[i] == ArgRole::Object : i == 0;
        if (!obj) continue;
        if (const auto* c = std::get_if<Constant>(&a.args[i])) out.insert(c->symbol);
    }
    return out;
}

Cube project_cube(const Cube& c, const ObservabilityMask& mask)
{
    if (mask.all) return c;
    std::vector<Atom> atoms;
    for (const Atom& a : c.atoms())
        if (mask.is_visible(a.predicate)) atoms.push_back(a);
    std::set<std::string> vars;
    for (const Atom& a : atoms)
        for (const Term& t : a.args)
            if (const auto* v = std::get_if<Variable>(&t)) vars.insert(v->name);
    // constraints lose their anchor when their atoms are projected away
    std::vector<Constraint> constraints;
    for (const Constraint& k : c.constraints()) {
        bool anchored = true;
        auto check = [&](const Term& t) {
            if (const auto* v = std::get_if<Variable>(&t))
                if (!vars.count(v->name)) anchored = false;
        };
        check(k.left);
        if (const auto* t = std::get_if<Term>(&k.right)) check(*t);
        if (anchored) constraints.push_back(k);
    }
    return Cube(std::move(atoms), std::move(constraints));
}

// ---- per-instance evaluation against the predicted observation ----

struct BranchEval {
    size_t branch_index = 0;
    bool clean = false;
    std::set<PlaceId> matched_places;
    Substitution sigma;
    std::set<Atom> image;   // obs atoms explained by the match
    int newly = 0;          // matched atoms of entered places
    bool any_addressed = false;
    bool tolerance_ok = true;                 // bound tolerance constraints hold
    std::vector<Atom> dispersion_exceeded;    // kernel atoms behind violated tolerances
};

enum class Level { Commit, Tolerant, Idle, Miss };

struct InstanceEval {
    Level level = Level::Idle;
    bool unobservable = false;
    std::optional<BranchEval> best;           // Commit
    Substitution tolerant_sigma;              // Tolerant
    ActivityId tolerant_activity;
    std::set<Atom> tolerant_image;
    Innovation innovation;                    // Miss (and reporting)
    size_t miss_branch = 0;
};

/// All consistent joins of per-place matches for the places in `subset`.
bool join_matches(const std::vector<std::pair<PlaceId, Cube>>& kernels,
                  const std::set<PlaceId>& subset, const Cube& obs,
                  const Substitution& seed, Substitution& out)
{
    // Merge the selected kernels into one pattern; one match_ground call
    // enforces the shared plan-wide environment.
    Cube merged;
    for (const auto& [place, cube] : kernels)
        if (subset.count(place)) merged.merge(cube);
    auto sigmas = match_ground(merged, obs, seed);
    if (sigmas.empty()) return false;
    out = sigmas.front();  // lexicographically smallest
    return true;
}

std::vector<std::set<PlaceId>> subsets_by_size(const std::vector<PlaceId>& places)
{
    std::vector<std::set<PlaceId>> out;
    size_t n = places.size();
    for (size_t mask = 0; mask < (1u << n); ++mask) {
        std::set<PlaceId> s;
        for (size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) s.insert(places[i]);
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return out;
}

BranchEval evaluate_branch(const PredictedBranch& branch, size_t index, const Cube& obs,
                           const PlanInstance& inst, const PlanLibrary& lib,
                           const std::set<std::string>& obs_constants)
{
    BranchEval ev;
    ev.branch_index = index;

    std::vector<PlaceId> places;
    std::map<PlaceId, bool> addressed;
    for (const auto& [place, kernel] : branch.expected_kernels) {
        places.push_back(place);
        std::set<std::string> objs;
        for (const Atom& a : kernel.atoms()) {
            auto ao = atom_objects(a, lib);
            objs.insert(ao.begin(), ao.end());
        }
        bool adr = !objs.empty() && !kernel.atoms().empty() &&
                   std::all_of(objs.begin(), objs.end(), [&](const std::string& o) {
                       return obs_constants.count(o) != 0;
                   });
        addressed[place] = adr;
        if (adr) ev.any_addressed = true;
    }

    bool need_event = branch.fired > 0 && !branch.event.empty();
    for (const auto& subset : subsets_by_size(places)) {
        if (subset.empty()) break;  // an empty match is no evidence
        // every place outside the subset must be unaddressed (vacuous)
        bool vacuous_rest = true;
        for (const PlaceId& q : places)
            if (!subset.count(q) && addressed[q]) vacuous_rest = false;
        if (!vacuous_rest) continue;
        // an advance needs positive evidence for every newly entered place
        bool entered_ok = std::all_of(branch.entered.begin(), branch.entered.end(),
                                      [&](const PlaceId& q) { return subset.count(q) != 0; });
        if (!entered_ok) continue;

        Substitution sigma;
        if (!join_matches(branch.expected_kernels, subset, obs, inst.binding, sigma)) continue;
        if (need_event) {
            auto with_event = match_ground(branch.event, obs, sigma);
            if (with_event.empty()) continue;
            sigma = with_event.front();
        }

        ev.clean = true;
        ev.matched_places = subset;
        ev.sigma = sigma;
        for (const auto& [place, kernel] : branch.expected_kernels) {
            if (!subset.count(place)) continue;
            Cube grounded = apply(sigma, kernel);
            int entered_here = branch.entered.count(place) ? 1 : 0;
            for (const Atom& a : grounded.atoms()) {
                ev.image.insert(a);
                if (entered_here) ++ev.newly;
            }
        }
        if (need_event) {
            Cube ground_event = apply(sigma, branch.event);
            for (const Atom& a : ground_event.atoms()) ev.image.insert(a);
        }
        break;  // subsets are ordered largest-first: first hit is maximal
    }

    if (ev.clean) {
        // bound tolerance constraints of the matched activities
        const PlanPrototype* plan = lib.find_plan(inst.prototype);
        for (const auto& [place, kernel] : branch.expected_kernels) {
            if (!ev.matched_places.count(place)) continue;
            (void)kernel;
            if (!plan) break;
            auto pit = plan->places.find(place);
            if (pit == plan->places.end()) continue;
            const ActivityPrototype* act = lib.find_activity(pit->second);
            if (!act) continue;
            for (const Constraint& k : act->tolerance_constraints) {
                Constraint grounded = apply(ev.sigma, k);
                bool groundable = !is_variable(grounded.left);
                if (const auto* t = std::get_if<Term>(&grounded.right))
                    if (is_variable(*t)) groundable = false;
                if (!groundable) continue;  // satisfied where bound
                bool holds = false;
                try {
                    holds = eval_constraint(grounded);
                } catch (const EvalError&) {
                    holds = false;
                }
                if (!holds) {
                    ev.tolerance_ok = false;
                    // the kernel atoms carrying the out-of-dispersion values
                    std::set<std::string> cvars;
                    auto collect = [&](const Term& t) {
                        if (const auto* v = std::get_if<Variable>(&t)) cvars.insert(v->name);
                    };
                    collect(k.left);
                    if (const auto* t = std::get_if<Term>(&k.right)) collect(*t);
                    for (const Atom& a : act->kernel.atoms()) {
                        bool carries = false;
                        for (const Term& t : a.args)
                            if (const auto* v = std::get_if<Variable>(&t))
                                if (cvars.count(v->name)) carries = true;
                        if (carries) {
                            Atom g = apply(ev.sigma, apply(inst.binding, a));
                            ev.dispersion_exceeded.push_back(g);
                        }
                    }
                }
            }
        }
        std::sort(ev.dispersion_exceeded.begin(), ev.dispersion_exceeded.end());
        ev.dispersion_exceeded.erase(
            std::unique(ev.dispersion_exceeded.begin(), ev.dispersion_exceeded.end()),
            ev.dispersion_exceeded.end());
    }
    return ev;
}

Cube branch_kernel_union(const PredictedBranch& b)
{
    Cube out;
    for (const auto& [place, cube] : b.expected_kernels) out.merge(cube);
    if (!b.event.empty()) out.merge(b.event);
    return out;
}

InstanceEval evaluate_instance(const PlanInstance& inst, const Cube& obs,
                               const PredictedObservation& po, const PlanLibrary& lib,
                               const ObservabilityMask& mask)
{
    InstanceEval ev;
    std::set<std::string> obs_constants = term_constants(obs);

    std::vector<size_t> mine;
    for (size_t i = 0; i < po.branches.size(); ++i)
        if (po.branches[i].instance == inst.id) mine.push_back(i);

    bool all_unobservable = !mine.empty();
    for (size_t i : mine)
        if (!po.branches[i].unobservable) all_unobservable = false;
    if (all_unobservable) {
        ev.level = Level::Idle;
        ev.unobservable = true;
        return ev;
    }

    std::vector<BranchEval> clean;
    bool any_addressed = false;
    for (size_t i : mine) {
        if (po.branches[i].unobservable) continue;
        BranchEval be = evaluate_branch(po.branches[i], i, obs, inst, lib, obs_constants);
        if (be.any_addressed) any_addressed = true;
        if (be.clean) clean.push_back(std::move(be));
    }

    if (!clean.empty()) {
        std::stable_sort(clean.begin(), clean.end(), [&](const BranchEval& a, const BranchEval& b) {
            if (a.newly != b.newly) return a.newly > b.newly;
            int fa = po.branches[a.branch_index].fired;
            int fb = po.branches[b.branch_index].fired;
            if (fa != fb) return fa < fb;
            return po.branches[a.branch_index].marking < po.branches[b.branch_index].marking;
        });
        ev.level = Level::Commit;
        ev.best = clean.front();
        ev.innovation.matched_branch = ev.best->branch_index;
        std::vector<Atom> supp;
        for (const Atom& a : obs.atoms())
            if (!ev.best->image.count(a)) supp.push_back(a);
        ev.innovation.supplementary = Cube(std::move(supp));
        const PredictedBranch& b = po.branches[ev.best->branch_index];
        for (const auto& [place, kernel] : b.expected_kernels)
            if (!ev.best->matched_places.count(place) && !kernel.atoms().empty())
                ev.innovation.missing.push_back(apply(ev.best->sigma, kernel));
        return ev;
    }

    // kernel-only innovation: the imperfect matching against the branch
    // with most common atoms (reported even when tolerance absorbs the step)
    bool first = true;
    size_t best_common = 0;
    for (size_t i : mine) {
        if (po.branches[i].unobservable) continue;
        Generalization g = anti_unify(obs, branch_kernel_union(po.branches[i]));
        size_t common = g.general.atoms().size();
        bool better = first;
        if (!first) {
            if (common != best_common) {
                better = common > best_common;
            } else {
                const PredictedBranch& cur = po.branches[i];
                const PredictedBranch& prev = po.branches[ev.miss_branch];
                better = cur.fired < prev.fired ||
                         (cur.fired == prev.fired && cur.marking < prev.marking);
            }
        }
        if (better) {
            first = false;
            best_common = common;
            ev.miss_branch = i;
            ev.innovation.common = g.general;
            Cube left_image = apply(g.to_left, g.general);
            std::set<Atom> covered_obs(left_image.atoms().begin(), left_image.atoms().end());
            std::vector<Atom> supp;
            for (const Atom& a : obs.atoms())
                if (!covered_obs.count(a)) supp.push_back(a);
            ev.innovation.supplementary = Cube(std::move(supp));
            Cube right_image = apply(g.to_right, g.general);
            std::set<Atom> covered_kernel(right_image.atoms().begin(),
                                          right_image.atoms().end());
            ev.innovation.missing.clear();
            for (const auto& [place, kernel] : po.branches[i].expected_kernels) {
                std::vector<Atom> miss;
                for (const Atom& a : kernel.atoms())
                    if (!covered_kernel.count(a)) miss.push_back(a);
                if (!miss.empty()) ev.innovation.missing.push_back(Cube(std::move(miss)));
            }
        }
    }

    // tolerance activities may absorb the step on the stay branch; the
    // absorbed evidence must concern this instance's own objects
    const PlanPrototype* plan = lib.find_plan(inst.prototype);
    if (plan) {
        std::set<std::string> own = inst.bound_objects();
        for (const ActivityId& tid : plan->tolerance_activities) {
            const ActivityPrototype* act = lib.find_activity(tid);
            if (!act) continue;
            Cube kernel = project_cube(apply(inst.binding, act->kernel), mask);
            if (kernel.atoms().empty()) continue;
            auto sigmas = match_ground(kernel, obs, inst.binding);
            if (sigmas.empty()) continue;
            Cube absorbed = apply(sigmas.front(), kernel);
            bool mine = false;
            for (const Atom& a : absorbed.atoms())
                for (const Term& t : a.args)
                    if (const auto* c = std::get_if<Constant>(&t))
                        if (own.count(c->symbol)) mine = true;
            if (!mine) continue;
            ev.level = Level::Tolerant;
            ev.tolerant_sigma = sigmas.front();
            ev.tolerant_activity = tid;
            for (const Atom& a : absorbed.atoms()) ev.tolerant_image.insert(a);
            return ev;
        }
    }

    ev.level = any_addressed ? Level::Miss : Level::Idle;
    return ev;
}

}  // namespace

std::set<std::string> PlanInstance::bound_objects() const
{
    std::set<std::string> out;
    for (const auto& [var, term] : binding.bindings())
        if (const auto* c = std::get_if<Constant>(&term)) out.insert(c->symbol);
    return out;
}

std::set<std::string> observed_objects(const Cube& obs, const PlanLibrary& lib)
{
    std::set<std::string> out;
    for (const Atom& a : obs.atoms()) {
        auto objs = atom_objects(a, lib);
        out.insert(objs.begin(), objs.end());
    }
    return out;
}

std::set<std::string> unexplained_objects(const Situation& s, const Cube& obs,
                                          const PlanLibrary& lib)
{
    std::set<std::string> out;
    for (const std::string& o : observed_objects(obs, lib))
        if (!s.known_objects.count(o)) out.insert(o);
    return out;
}

std::vector<PredictedBranch> predict(const Situation& s, const PlanLibrary& lib)
{
    std::vector<PredictedBranch> out;
    for (const PlanInstance& inst : s.instances) {
        const PlanPrototype* plan = lib.find_plan(inst.prototype);
        if (!plan) throw std::out_of_range("instance " + inst.id + " references unknown plan '" +
                                           inst.prototype + "'");
        for (const Marking& m : reachable_one_step(*plan, inst.marking)) {
            PredictedBranch b;
            b.instance = inst.id;
            b.marking = m;
            b.fired = m == inst.marking ? 0 : 1;
            for (const PlaceId& q : m.marked)
                if (!inst.marking.marked.count(q)) b.entered.insert(q);
            for (const PlaceId& q : m.marked) {
                auto pit = plan->places.find(q);
                if (pit == plan->places.end()) continue;
                const ActivityPrototype* act = lib.find_activity(pit->second);
                if (!act) continue;
                b.expected_kernels.emplace_back(q, apply(inst.binding, act->kernel));
            }
            if (b.fired == 1) {
                for (size_t t : enabled(*plan, inst.marking)) {
                    if (fire(*plan, inst.marking, t) == m) {
                        b.event = apply(inst.binding, plan->transitions[t].event);
                        break;
                    }
                }
            }
            for (const HeldItem& h : inst.held_tolerance)
                if (!h.place || m.marked.count(*h.place)) b.propagated_tolerance.push_back(h);
            out.push_back(std::move(b));
        }
    }
    return out;
}

PredictedObservation project(std::vector<PredictedBranch> branches,
                             const ObservabilityMask& mask)
{
    PredictedObservation out;
    for (PredictedBranch& b : branches) {
        bool any_visible = false;
        for (auto& [place, kernel] : b.expected_kernels) {
            kernel = project_cube(kernel, mask);
            if (!kernel.atoms().empty()) any_visible = true;
        }
        b.event = project_cube(b.event, mask);
        if (!b.event.empty()) any_visible = true;
        std::vector<HeldItem> kept;
        for (HeldItem& h : b.propagated_tolerance) {
            if (const auto* a = std::get_if<Atom>(&h.item)) {
                if (mask.is_visible(a->predicate)) kept.push_back(std::move(h));
            } else {
                kept.push_back(std::move(h));
            }
        }
        b.propagated_tolerance = std::move(kept);
        b.unobservable = !any_visible;
        out.branches.push_back(std::move(b));
    }
    return out;
}

std::map<InstanceId, Innovation> innovate(const Cube& obs, const PredictedObservation& po,
                                          const Situation& s, const PlanLibrary& lib)
{
    std::map<InstanceId, Innovation> out;
    ObservabilityMask all;
    for (const PlanInstance& inst : s.instances)
        out[inst.id] = evaluate_instance(inst, obs, po, lib, all).innovation;
    return out;
}

// ---------------------------------------------------------------------------
// revision
// ---------------------------------------------------------------------------

namespace {

struct SpawnCandidate {
    PlanId plan;
    size_t marking_index = 0;  // BFS index, lower = less progressed
    Marking marking;
    Substitution sigma;
    std::set<Atom> image;
    int coverage = 0;    // atoms touching target objects
    int anti_common = 0; // case (e) ranking
};

struct MarkingMatch {
    Substitution sigma;
    std::set<Atom> image;
};

/// All full kernel matches of every place of a reachable marking against
/// obs (one consistent substitution across the places).
std::vector<MarkingMatch> match_marking(const PlanPrototype& plan, const Marking& m,
                                        const Cube& obs, const ObservabilityMask& mask,
                                        const PlanLibrary& lib)
{
    Cube merged;
    for (const PlaceId& q : m.marked) {
        auto pit = plan.places.find(q);
        if (pit == plan.places.end()) return {};
        const ActivityPrototype* act = lib.find_activity(pit->second);
        if (!act) return {};
        Cube kernel = project_cube(act->kernel, mask);
        if (kernel.atoms().empty()) return {};  // no visible evidence possible
        merged.merge(kernel);
    }
    std::vector<MarkingMatch> out;
    for (Substitution& sigma : match_ground(merged, obs)) {
        MarkingMatch mm;
        Cube ground = apply(sigma, merged);
        for (const Atom& a : ground.atoms()) mm.image.insert(a);
        mm.sigma = std::move(sigma);
        out.push_back(std::move(mm));
    }
    return out;
}

bool atom_mentions_any(const Atom& a, const std::set<std::string>& objs)
{
    for (const Term& t : a.args)
        if (const auto* c = std::get_if<Constant>(&t))
            if (objs.count(c->symbol)) return true;
    return false;
}

std::vector<SpawnCandidate> spawn_candidates(const PlanLibrary& lib, const Cube& obs,
                                             const ObservabilityMask& mask,
                                             const std::set<std::string>& targets)
{
    std::vector<SpawnCandidate> out;
    for (const auto& [pid, plan] : lib.plans) {
        auto reachable = enumerate_reachable(plan);
        for (size_t i = 0; i < reachable.size(); ++i) {
            // per (plan, marking), the best-covering substitution wins
            // (match_ground yields them in lexicographic order, so ties keep
            // the lexicographically smallest)
            std::optional<SpawnCandidate> best;
            for (MarkingMatch& mm : match_marking(plan, reachable[i], obs, mask, lib)) {
                std::set<std::string> bound;
                for (const auto& [var, term] : mm.sigma.bindings())
                    if (const auto* k = std::get_if<Constant>(&term)) bound.insert(k->symbol);
                bool explains =
                    std::any_of(targets.begin(), targets.end(),
                                [&](const std::string& o) { return bound.count(o) != 0; });
                if (!explains) continue;
                int coverage = 0;
                for (const Atom& a : mm.image)
                    if (atom_mentions_any(a, targets)) ++coverage;
                if (coverage == 0) continue;
                if (!best || coverage > best->coverage) {
                    SpawnCandidate c;
                    c.plan = pid;
                    c.marking_index = i;
                    c.marking = reachable[i];
                    c.sigma = std::move(mm.sigma);
                    c.image = std::move(mm.image);
                    c.coverage = coverage;
                    best = std::move(c);
                }
            }
            if (best) out.push_back(std::move(*best));
        }
    }
    return out;
}

/// Keeps, per plan, only the least progressed marking, then drops
/// candidates strictly more specific than another surviving candidate.
std::vector<SpawnCandidate> select_minimal(std::vector<SpawnCandidate> cands,
                                           const PlanLibrary& lib)
{
    std::map<PlanId, SpawnCandidate> per_plan;
    for (SpawnCandidate& c : cands) {
        auto it = per_plan.find(c.plan);
        if (it == per_plan.end() || c.marking_index < it->second.marking_index)
            per_plan[c.plan] = std::move(c);
    }
    std::vector<SpawnCandidate> minimal;
    for (const auto& [pid, c] : per_plan) {
        bool dominated = false;
        for (const auto& [other, _] : per_plan)
            if (other != pid && more_specific(lib, pid, other)) dominated = true;
        if (!dominated) minimal.push_back(c);
    }
    return minimal;  // per_plan map iteration: already sorted by plan id
}

struct Reviser {
    const Cube& obs;
    const PredictedObservation& po;
    const ObservabilityMask& mask;
    const PlanLibrary& lib;
    const EstimatorConfig& cfg;
    TimeIndex now;
    StepTrace* trace;

    std::vector<PlanInstance> live;
    std::vector<std::pair<PlanInstance, InstanceEval>> retired;
    std::set<Atom> explained;
    std::map<InstanceId, std::vector<Atom>> extensions;  // case (b) per instance
    long next_instance;

    void record(TraceRecord r)
    {
        if (trace) trace->add(std::move(r));
    }

    std::set<std::string> known_objects() const
    {
        std::set<std::string> out;
        for (const PlanInstance& i : live) {
            auto objs = i.bound_objects();
            out.insert(objs.begin(), objs.end());
        }
        return out;
    }

    bool object_capped(const std::set<std::string>& objects) const
    {
        if (cfg.max_instances_per_object <= 0) return false;
        for (const std::string& o : objects) {
            int count = 0;
            for (const PlanInstance& i : live)
                if (i.bound_objects().count(o)) ++count;
            if (count < cfg.max_instances_per_object) return false;
        }
        return true;
    }

    bool duplicate_of_live(const PlanId& plan, const Substitution& binding) const
    {
        for (const PlanInstance& i : live)
            if (i.prototype == plan && i.binding == binding) return true;
        return false;
    }

    void hold(PlanInstance& inst, HeldItem item)
    {
        auto it = std::lower_bound(inst.held_tolerance.begin(), inst.held_tolerance.end(), item);
        if (it == inst.held_tolerance.end() || !(*it == item))
            inst.held_tolerance.insert(it, std::move(item));
    }

    bool already_held(const PlanInstance& inst, const Atom& a) const
    {
        for (const HeldItem& h : inst.held_tolerance)
            if (const auto* held = std::get_if<Atom>(&h.item))
                if (*held == a) return true;
        return false;
    }

    /// Records matched per-activity tolerance atoms of the committed marking.
    void absorb_activity_tolerance(PlanInstance& inst, const Substitution& sigma)
    {
        const PlanPrototype* plan = lib.find_plan(inst.prototype);
        if (!plan) return;
        for (const PlaceId& q : inst.marking.marked) {
            auto pit = plan->places.find(q);
            if (pit == plan->places.end()) continue;
            const ActivityPrototype* act = lib.find_activity(pit->second);
            if (!act) continue;
            for (const Atom& ta : act->tolerance_atoms) {
                Atom g = apply(sigma, apply(inst.binding, ta));
                bool ground = std::none_of(g.args.begin(), g.args.end(),
                                           [](const Term& t) { return is_variable(t); });
                if (ground && obs.contains(g)) {
                    hold(inst, HeldItem{g, q});
                    explained.insert(g);
                }
            }
        }
    }

    void note_held_atoms_in_obs(const PlanInstance& inst)
    {
        for (const HeldItem& h : inst.held_tolerance)
            if (const auto* a = std::get_if<Atom>(&h.item))
                if (obs.contains(*a)) explained.insert(*a);
    }

    // ---- phase 1: continuation of existing instances ----

    void continuations(const Situation& s)
    {
        for (const PlanInstance& prev : s.instances) {
            InstanceEval ev = evaluate_instance(prev, obs, po, lib, mask);
            PlanInstance inst = prev;
            switch (ev.level) {
                case Level::Commit: {
                    const PredictedBranch& b = po.branches[ev.best->branch_index];
                    std::string before = to_string(inst.marking);
                    inst.marking = b.marking;
                    // only constant (object) bindings persist
                    for (const auto& [var, term] : ev.best->sigma.bindings())
                        if (is_constant(term)) inst.binding.bind_compatible(var, term);
                    inst.last_matched_at = now;
                    for (const Atom& a : ev.best->image) explained.insert(a);
                    absorb_activity_tolerance(inst, ev.best->sigma);
                    note_held_atoms_in_obs(inst);
                    if (!ev.best->tolerance_ok) {
                        for (const Atom& a : ev.best->dispersion_exceeded) {
                            if (already_held(inst, a)) continue;
                            extensions[inst.id].push_back(a);
                            hold(inst, HeldItem{a, std::nullopt});
                        }
                    }
                    // the record is scoped to this instance: leftovers about
                    // other objects must not alter its trace lines
                    bool own_leftovers = false;
                    auto bound = inst.bound_objects();
                    for (const Atom& a : ev.innovation.supplementary.atoms())
                        if (atom_mentions_any(a, bound)) own_leftovers = true;
                    TraceRecord r;
                    r.time = now;
                    r.inst = inst.id;
                    r.event = "commit";
                    r.case_label = 'a';
                    r.plan = inst.prototype;
                    r.marking_before = before;
                    r.marking_after = to_string(inst.marking);
                    r.detail = !own_leftovers && ev.best->tolerance_ok
                                   ? "innovation=none"
                                   : "matched=" + std::to_string(ev.best->image.size());
                    record(std::move(r));
                    live.push_back(std::move(inst));
                    break;
                }
                case Level::Tolerant: {
                    inst.last_matched_at = now;
                    for (const Atom& a : ev.tolerant_image) {
                        explained.insert(a);
                        if (!already_held(inst, a)) hold(inst, HeldItem{a, std::nullopt});
                    }
                    note_held_atoms_in_obs(inst);
                    TraceRecord r;
                    r.time = now;
                    r.inst = inst.id;
                    r.event = "absorb";
                    r.case_label = 'a';
                    r.plan = inst.prototype;
                    r.marking_before = to_string(inst.marking);
                    r.marking_after = to_string(inst.marking);
                    r.detail = "activity=" + ev.tolerant_activity +
                               " matched=" + render_atoms(ev.tolerant_image);
                    record(std::move(r));
                    live.push_back(std::move(inst));
                    break;
                }
                case Level::Idle: {
                    if (ev.unobservable) inst.last_matched_at = now;  // occluded steps do not age
                    note_held_atoms_in_obs(inst);
                    TraceRecord r;
                    r.time = now;
                    r.inst = inst.id;
                    r.event = "idle";
                    r.plan = inst.prototype;
                    r.marking_before = to_string(inst.marking);
                    r.marking_after = to_string(inst.marking);
                    r.detail = "age=" + std::to_string(now - inst.last_matched_at) +
                               (ev.unobservable ? " unobservable" : "");
                    record(std::move(r));
                    live.push_back(std::move(inst));
                    break;
                }
                case Level::Miss: {
                    TraceRecord r;
                    r.time = now;
                    r.inst = inst.id;
                    r.case_label = 'e';
                    r.event = "retire";
                    r.plan = inst.prototype;
                    r.marking_before = to_string(inst.marking);
                    r.marking_after = "{}";
                    std::string detail = "inf=" + render_atoms(ev.innovation.common.atoms());
                    if (!ev.innovation.supplementary.empty())
                        detail += " supplementary=" +
                                  render_atoms(ev.innovation.supplementary.atoms());
                    std::vector<Atom> missing;
                    for (const Cube& c : ev.innovation.missing)
                        for (const Atom& a : c.atoms()) missing.push_back(a);
                    std::sort(missing.begin(), missing.end());
                    if (!missing.empty()) detail += " missing=" + render_atoms(missing);
                    r.detail = std::move(detail);
                    record(std::move(r));
                    retired.emplace_back(std::move(inst), std::move(ev));
                    break;
                }
            }
        }
    }

    // ---- phase 2/3: supplementary dispatch, case (b) ----

    struct Classified {
        std::vector<Atom> known;  // all objects known
        std::vector<Atom> link;   // known and new objects together
        std::vector<Atom> fresh;  // new objects only
    };

    Classified classify_supplementary() const
    {
        Classified out;
        std::set<std::string> known = known_objects();
        for (const Atom& a : obs.atoms()) {
            if (explained.count(a)) continue;
            std::set<std::string> ks;
            for (const Term& t : a.args)
                if (const auto* c = std::get_if<Constant>(&t))
                    if (known.count(c->symbol)) ks.insert(c->symbol);
            std::set<std::string> ns;
            for (const std::string& o : atom_objects(a, lib))
                if (!known.count(o)) ns.insert(o);
            if (!ks.empty() && !ns.empty())
                out.link.push_back(a);
            else if (!ks.empty())
                out.known.push_back(a);
            else if (!ns.empty())
                out.fresh.push_back(a);
            // atoms with neither known nor object constants carry no duty
        }
        return out;
    }

    void extend_tolerances(const std::vector<Atom>& known_supp)
    {
        for (const Atom& a : known_supp) {
            std::set<std::string> objs;
            for (const Term& t : a.args)
                if (const auto* c = std::get_if<Constant>(&t)) objs.insert(c->symbol);
            for (PlanInstance& inst : live) {
                auto bound = inst.bound_objects();
                bool mine = std::any_of(objs.begin(), objs.end(), [&](const std::string& o) {
                    return bound.count(o) != 0;
                });
                if (!mine || already_held(inst, a)) continue;
                hold(inst, HeldItem{a, std::nullopt});
                extensions[inst.id].push_back(a);
            }
        }
        for (PlanInstance& inst : live) {
            auto it = extensions.find(inst.id);
            if (it == extensions.end() || it->second.empty()) continue;
            std::sort(it->second.begin(), it->second.end());
            it->second.erase(std::unique(it->second.begin(), it->second.end()),
                             it->second.end());
            TraceRecord r;
            r.time = now;
            r.inst = inst.id;
            r.case_label = 'b';
            r.event = "extend";
            r.plan = inst.prototype;
            r.detail = "extension=" + render_atoms(it->second);
            record(std::move(r));
        }
    }

    /// Shared switch machinery for cases (b) and (d): re-match a strictly
    /// more specific plan against obs, covering the instance's objects and
    /// the triggering atoms.
    bool try_switch(PlanInstance& inst, const std::vector<Atom>& must_cover, char label)
    {
        std::set<PlanId> targets = refinements_of(lib, inst.prototype);
        if (targets.empty()) return false;
        std::set<std::string> inst_objects = inst.bound_objects();

        std::optional<SpawnCandidate> best;
        for (const PlanId& pid : targets) {
            const PlanPrototype* plan = lib.find_plan(pid);
            if (!plan) continue;
            auto reachable = enumerate_reachable(*plan);
            for (size_t i = 0; i < reachable.size(); ++i) {
                std::optional<SpawnCandidate> here;
                for (MarkingMatch& mm : match_marking(*plan, reachable[i], obs, mask, lib)) {
                    std::set<std::string> bound;
                    for (const auto& [var, term] : mm.sigma.bindings())
                        if (const auto* c = std::get_if<Constant>(&term))
                            bound.insert(c->symbol);
                    bool continuity = std::all_of(
                        inst_objects.begin(), inst_objects.end(),
                        [&](const std::string& o) { return bound.count(o) != 0; });
                    if (!continuity) continue;
                    int covered = 0;
                    for (const Atom& a : must_cover)
                        if (mm.image.count(a)) ++covered;
                    if (covered == 0) continue;
                    if (!here || covered > here->coverage) {
                        SpawnCandidate c;
                        c.plan = pid;
                        c.marking_index = i;
                        c.marking = reachable[i];
                        c.sigma = std::move(mm.sigma);
                        c.image = std::move(mm.image);
                        c.coverage = covered;
                        here = std::move(c);
                    }
                }
                if (!here) continue;
                bool better = !best;
                if (best) {
                    if (here->coverage != best->coverage) {
                        better = here->coverage > best->coverage;
                    } else if (here->plan != best->plan) {
                        if (more_specific(lib, best->plan, here->plan))
                            better = true;  // prefer the less specific plan
                        else if (!more_specific(lib, here->plan, best->plan))
                            better = here->plan < best->plan;
                    } else {
                        better = here->marking_index < best->marking_index;
                    }
                }
                if (better) best = std::move(here);
                break;  // earliest matching marking per plan (BFS order)
            }
        }
        if (!best) return false;

        TraceRecord r;
        r.time = now;
        r.inst = inst.id;
        r.case_label = label;
        r.event = "switch";
        r.plan = best->plan;
        r.from_plan = inst.prototype;
        r.marking_before = to_string(inst.marking);
        r.marking_after = to_string(best->marking);
        std::vector<Atom> covered;
        for (const Atom& a : must_cover)
            if (best->image.count(a)) covered.push_back(a);
        r.detail = "covered=" + render_atoms(covered);

        inst.prototype = best->plan;
        inst.marking = best->marking;
        inst.binding = best->sigma.constants_only();
        for (HeldItem& h : inst.held_tolerance) h.place = std::nullopt;  // places changed
        inst.last_matched_at = now;
        for (const Atom& a : best->image) explained.insert(a);
        absorb_activity_tolerance(inst, best->sigma);
        r.binding = to_string(inst.binding);
        record(std::move(r));
        return true;
    }

    void specificity_switches()
    {
        for (PlanInstance& inst : live) {
            auto it = extensions.find(inst.id);
            if (it == extensions.end() || it->second.empty()) continue;
            try_switch(inst, it->second, 'b');
        }
    }

    void link_switches(const std::vector<Atom>& links)
    {
        for (const Atom& link : links) {
            if (explained.count(link)) continue;
            std::set<std::string> consts;
            for (const Term& t : link.args)
                if (const auto* c = std::get_if<Constant>(&t)) consts.insert(c->symbol);
            for (PlanInstance& inst : live) {
                auto bound = inst.bound_objects();
                bool owner = std::any_of(consts.begin(), consts.end(),
                                         [&](const std::string& o) { return bound.count(o) != 0; });
                if (!owner) continue;
                if (try_switch(inst, {link}, 'd')) break;
            }
        }
    }

    // ---- phase 5: case (e) replacements ----

    void replacements()
    {
        for (auto& [inst, ev] : retired) {
            std::set<std::string> known = known_objects();
            std::set<std::string> orphaned;
            for (const std::string& o : inst.bound_objects())
                if (!known.count(o)) orphaned.insert(o);
            if (orphaned.empty()) continue;  // continuation priority: already explained

            auto cands = spawn_candidates(lib, obs, mask, orphaned);
            std::vector<PlanId> considered;
            for (SpawnCandidate& c : cands) {
                int best_common = 0;
                const PlanPrototype* plan = lib.find_plan(c.plan);
                for (const auto& [q, aid] : plan->places) {
                    const ActivityPrototype* act = lib.find_activity(aid);
                    if (!act) continue;
                    Generalization g = anti_unify(ev.innovation.common, act->kernel);
                    best_common = std::max(best_common,
                                           static_cast<int>(g.general.atoms().size()));
                }
                c.anti_common = best_common;
            }
            cands.erase(std::remove_if(cands.begin(), cands.end(),
                                       [](const SpawnCandidate& c) { return c.anti_common < 1; }),
                        cands.end());
            if (cands.empty()) continue;
            int top = 0;
            for (const SpawnCandidate& c : cands) top = std::max(top, c.anti_common);
            std::set<PlanId> seen;
            for (const SpawnCandidate& c : cands)
                if (seen.insert(c.plan).second) considered.push_back(c.plan);
            std::sort(considered.begin(), considered.end());
            cands.erase(std::remove_if(cands.begin(), cands.end(),
                                       [&](const SpawnCandidate& c) { return c.anti_common < top; }),
                        cands.end());
            auto minimal = select_minimal(std::move(cands), lib);
            for (const SpawnCandidate& c : minimal)
                spawn(c, 'e', "replaces=" + inst.id + " candidates=" + render_plans(considered));
        }
    }

    // ---- phase 6: case (c) new plans for unexplained objects ----

    void instantiations()
    {
        while (true) {
            std::set<std::string> known = known_objects();
            std::set<std::string> fresh;
            for (const std::string& o : observed_objects(obs, lib))
                if (!known.count(o)) fresh.insert(o);
            if (fresh.empty()) return;

            auto cands = spawn_candidates(lib, obs, mask, fresh);
            if (cands.empty()) return;
            int top = 0;
            for (const SpawnCandidate& c : cands) top = std::max(top, c.coverage);
            cands.erase(std::remove_if(cands.begin(), cands.end(),
                                       [&](const SpawnCandidate& c) { return c.coverage < top; }),
                        cands.end());
            auto minimal = select_minimal(std::move(cands), lib);
            bool spawned = false;
            for (const SpawnCandidate& c : minimal)
                if (spawn(c, 'c', "trigger=" + render_atoms(c.image))) spawned = true;
            if (!spawned) return;  // nothing new explainable
        }
    }

    bool spawn(const SpawnCandidate& c, char label, const std::string& detail)
    {
        Substitution binding = c.sigma.constants_only();
        if (duplicate_of_live(c.plan, binding)) return false;
        std::set<std::string> objs;
        for (const auto& [var, term] : binding.bindings())
            if (const auto* k = std::get_if<Constant>(&term)) objs.insert(k->symbol);
        if (object_capped(objs)) return false;

        PlanInstance inst;
        inst.id = "i" + std::to_string(next_instance++);
        inst.prototype = c.plan;
        inst.marking = c.marking;
        inst.binding = std::move(binding);
        inst.created_at = now;
        inst.last_matched_at = now;
        for (const Atom& a : c.image) explained.insert(a);
        absorb_activity_tolerance(inst, c.sigma);

        TraceRecord r;
        r.time = now;
        r.inst = inst.id;
        r.case_label = label;
        r.event = "spawn";
        r.plan = inst.prototype;
        r.marking_before = "{}";
        r.marking_after = to_string(inst.marking);
        r.binding = to_string(inst.binding);
        r.detail = detail;
        record(std::move(r));
        live.push_back(std::move(inst));
        return true;
    }

    // ---- phases 7-9 ----

    void check_explained()
    {
        std::set<std::string> known = known_objects();
        for (const std::string& o : observed_objects(obs, lib)) {
            if (known.count(o)) continue;
            TraceRecord r;
            r.time = now;
            r.event = "violation";
            r.detail = "object=" + o;
            record(std::move(r));
        }
    }

    void sweep_stale()
    {
        std::vector<PlanInstance> kept;
        for (PlanInstance& inst : live) {
            long age = now - inst.last_matched_at;
            if (age > cfg.stale_after) {
                TraceRecord r;
                r.time = now;
                r.inst = inst.id;
                r.event = "drop";
                r.plan = inst.prototype;
                r.marking_before = to_string(inst.marking);
                r.marking_after = "{}";
                r.detail = "age=" + std::to_string(age);
                record(std::move(r));
            } else {
                kept.push_back(std::move(inst));
            }
        }
        live = std::move(kept);
    }

    Situation finish()
    {
        Situation out;
        out.time = now;
        out.next_instance = next_instance;
        std::sort(live.begin(), live.end(), instance_less);
        out.instances = std::move(live);
        out.known_objects.clear();
        for (const PlanInstance& i : out.instances) {
            auto objs = i.bound_objects();
            out.known_objects.insert(objs.begin(), objs.end());
        }
        return out;
    }
};

}  // namespace

Situation revise(const Situation& s, const Cube& obs, const PredictedObservation& po,
                 const ObservabilityMask& mask, const PlanLibrary& lib,
                 const EstimatorConfig& cfg, StepTrace* trace)
{
    Reviser rv{obs, po, mask, lib, cfg, s.time + 1, trace, {}, {}, {}, {}, s.next_instance};
    rv.continuations(s);
    auto classified = rv.classify_supplementary();
    rv.extend_tolerances(classified.known);
    rv.specificity_switches();
    rv.link_switches(classified.link);
    rv.replacements();
    rv.instantiations();
    rv.check_explained();
    rv.sweep_stale();
    return rv.finish();
}

std::pair<Situation, StepTrace> step(const Situation& s, const Cube& obs,
                                     const ObservabilityMask& mask, const PlanLibrary& lib,
                                     const EstimatorConfig& cfg)
{
    StepTrace trace;
    PredictedObservation po = project(predict(s, lib), mask);
    if (cfg.trace_verbosity >= 1) {
        for (const PredictedBranch& b : po.branches) {
            TraceRecord r;
            r.time = s.time + 1;
            r.inst = b.instance;
            r.event = "predict";
            r.marking_after = to_string(b.marking);
            r.detail = "k=" + std::to_string(b.fired) +
                       (b.unobservable ? " unobservable" : "");
            trace.add(std::move(r));
        }
    }
    Situation next = revise(s, obs, po, mask, lib, cfg, &trace);
    return {std::move(next), std::move(trace)};
}

}  // namespace sitest
