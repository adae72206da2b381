#include "sitest/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sitest/match.hpp"

namespace sitest {

namespace {

Rational sq(const Rational& x) { return x * x; }

Rational dist_sq(const Vec2& a, const Vec2& b)
{
    return sq(a.x - b.x) + sq(a.y - b.y);
}

/// cos^2 of the cone half-angle when it is exactly representable; these
/// angles get a fully exact membership test (the threshold effect is a
/// strict inequality, so exactness matters at the boundary).
std::optional<Rational> rational_cos_sq(long deg)
{
    switch (deg) {
        case 0: return Rational(1);
        case 30: return Rational(3, 4);
        case 45: return Rational(1, 2);
        case 60: return Rational(1, 4);
        case 90: return Rational(0);
        default: return std::nullopt;
    }
}

bool inside_cone(const Vec2& vel, const Vec2& toward, long half_angle_deg)
{
    Rational vv = sq(vel.x) + sq(vel.y);
    Rational dd = sq(toward.x) + sq(toward.y);
    if (vv == 0 || dd == 0) return false;
    Rational dot = vel.x * toward.x + vel.y * toward.y;
    if (dot <= 0) return false;
    if (auto cos_sq = rational_cos_sq(half_angle_deg))
        return sq(dot) > *cos_sq * vv * dd;
    double c = std::cos(static_cast<double>(half_angle_deg) * M_PI / 180.0);
    return static_cast<double>(dot) >
           c * std::sqrt(static_cast<double>(vv)) * std::sqrt(static_cast<double>(dd));
}

/// |v| quantized to one decimal, as an exact rational.
Rational quantized_speed(const Vec2& vel)
{
    Rational ss = sq(vel.x) + sq(vel.y);
    if (ss == 0) return Rational(0);
    double s = std::sqrt(static_cast<double>(ss));
    long long tenths = std::llround(s * 10.0);
    return Rational(tenths, 10);
}

}  // namespace

Cube derive_predicates(const WorldState& world, const SimParams& params)
{
    Cube out;
    Rational radius_sq = sq(params.close_radius);
    for (const auto& [name, pos] : world.pos) {
        auto vit = world.vel.find(name);
        Vec2 vel = vit == world.vel.end() ? Vec2{} : vit->second;
        out.add(Atom{"speed", {make_const(name), make_num(quantized_speed(vel))}});

        auto consider = [&](const std::string& other, const Vec2& other_pos) {
            if (other == name) return;
            Vec2 toward{other_pos.x - pos.x, other_pos.y - pos.y};
            if (inside_cone(vel, toward, params.cone_half_angle_deg))
                out.add(Atom{"getting-closer-to", {make_const(name), make_const(other)}});
            if (dist_sq(pos, other_pos) < radius_sq)
                out.add(Atom{"close-to", {make_const(name), make_const(other)}});
        };
        for (const auto& [other, other_pos] : world.pos) consider(other, other_pos);
        for (const Landmark& lm : world.landmarks) consider(lm.name, lm.pos);
    }
    return out;
}

namespace {

struct Timeline {
    long start = 0;
    long end = -1;

    void cover(long t)
    {
        if (end < start) {
            start = end = t;
        } else {
            start = std::min(start, t);
            end = std::max(end, t);
        }
    }
    bool empty() const { return end < start; }
};

const Marking* marking_at(const Execution& ex, long t)
{
    const Marking* out = nullptr;
    for (const ScheduleEntry& e : ex.schedule) {
        if (e.time > t) break;
        out = &e.marking;
    }
    return out;
}

}  // namespace

SimResult simulate(const GroundTruthScript& script, const PlanLibrary& lib,
                   std::optional<std::uint64_t> seed_override)
{
    SimResult result;
    auto& diags = result.diagnostics;

    Timeline span;
    for (const Execution& ex : script.executions) {
        const PlanPrototype* plan = lib.find_plan(ex.plan);
        if (!plan) {
            diags.push_back({Severity::Error,
                             "script executes unknown plan '" + ex.plan + "'", SourceSpan{}});
            continue;
        }
        const Marking* prev = nullptr;
        long prev_time = 0;
        for (const ScheduleEntry& e : ex.schedule) {
            span.cover(e.time);
            for (const PlaceId& q : e.marking.marked)
                if (!plan->places.count(q))
                    diags.push_back({Severity::Error,
                                     "schedule for '" + ex.plan + "' marks unknown place '" +
                                         q + "'",
                                     SourceSpan{}});
            if (prev && e.time <= prev_time)
                diags.push_back({Severity::Error,
                                 "schedule times for '" + ex.plan + "' must increase",
                                 SourceSpan{}});
            if (prev && !(e.marking == *prev)) {
                auto next = reachable_one_step(*plan, *prev);
                if (!next.count(e.marking))
                    diags.push_back(
                        {Severity::Error,
                         "schedule for '" + ex.plan + "' jumps from " + to_string(*prev) +
                             " to " + to_string(e.marking) +
                             ", which is not reachable by at most one firing",
                         SourceSpan{}});
            }
            prev = &e.marking;
            prev_time = e.time;
        }
    }
    for (const WorldObject& o : script.objects) {
        long prev = 0;
        bool first = true;
        for (const KinematicKey& k : o.keys) {
            span.cover(k.time);
            if (!first && k.time <= prev)
                diags.push_back({Severity::Error,
                                 "kinematic keys for '" + o.name + "' must increase",
                                 SourceSpan{}});
            prev = k.time;
            first = false;
        }
    }
    for (const OcclusionSpec& oc : script.noise.occlusion) {
        span.cover(oc.from);
        span.cover(oc.to);
    }
    for (const InjectionSpec& in : script.noise.fictitious) span.cover(in.time);
    for (const InjectionSpec& in : script.noise.interactions) span.cover(in.time);

    if (has_errors(diags) || span.empty()) return result;

    auto seed = seed_override ? seed_override : script.noise.seed;
    if (script.noise.drop_rate > 0 && !seed) {
        diags.push_back({Severity::Error, "drop rate > 0 requires a seed", SourceSpan{}});
        return result;
    }
    std::mt19937_64 rng(seed.value_or(0));

    // kinematic integration state
    std::map<std::string, Vec2> pos, vel;
    std::map<std::string, bool> alive;

    ObservabilityMask prev_mask;  // default all-visible
    for (long t = span.start; t <= span.end; ++t) {
        // apply keys, then read state (position integrates after emission)
        for (const WorldObject& o : script.objects) {
            for (const KinematicKey& k : o.keys) {
                if (k.time != t) continue;
                alive[o.name] = true;
                if (k.pos) pos[o.name] = *k.pos;
                if (k.vel) vel[o.name] = *k.vel;
            }
        }
        WorldState world;
        for (const auto& [name, live] : alive) {
            if (!live) continue;
            world.pos[name] = pos.count(name) ? pos[name] : Vec2{};
            world.vel[name] = vel.count(name) ? vel[name] : Vec2{};
        }
        world.landmarks = script.landmarks;

        Cube obs = derive_predicates(world, script.params);

        // scheduled kernel atoms, instantiated by the execution bindings;
        // atoms of derived predicates and atoms with numeric variables are
        // owned by the kinematics, not the schedule
        auto derived_predicate = [](const std::string& p) {
            return p == "speed" || p == "getting-closer-to" || p == "close-to";
        };
        for (const Execution& ex : script.executions) {
            const PlanPrototype* plan = lib.find_plan(ex.plan);
            const Marking* m = marking_at(ex, t);
            if (!plan || !m) continue;
            for (const PlaceId& q : m->marked) {
                auto pit = plan->places.find(q);
                if (pit == plan->places.end()) continue;
                const ActivityPrototype* act = lib.find_activity(pit->second);
                if (!act) continue;
                for (const Atom& a : act->kernel.atoms()) {
                    if (derived_predicate(a.predicate)) continue;
                    Atom g = apply(ex.binding, a);
                    bool ground = std::none_of(g.args.begin(), g.args.end(),
                                               [](const Term& tm) { return is_variable(tm); });
                    if (ground) obs.add(g);
                }
            }
        }

        // state noise first: interaction events are part of what happens
        for (const InjectionSpec& in : script.noise.interactions)
            if (in.time == t)
                for (const Atom& a : in.atoms) obs.add(a);

        // occlusion: hidden predicates define the step mask, hidden objects
        // silently drop their atoms
        ObservabilityMask mask;
        std::set<std::string> hidden_objects;
        std::set<std::string> hidden_predicates;
        for (const OcclusionSpec& oc : script.noise.occlusion) {
            if (t < oc.from || t > oc.to) continue;
            hidden_predicates.insert(oc.predicates.begin(), oc.predicates.end());
            hidden_objects.insert(oc.objects.begin(), oc.objects.end());
        }
        if (!hidden_predicates.empty()) {
            mask.all = false;
            for (const auto& [p, _] : lib.predicates)
                if (!hidden_predicates.count(p)) mask.visible.insert(p);
        }

        std::vector<Atom> kept;
        for (const Atom& a : obs.atoms()) {
            if (!mask.is_visible(a.predicate)) continue;
            bool hidden = false;
            for (const Term& tm : a.args)
                if (const auto* c = std::get_if<Constant>(&tm))
                    if (hidden_objects.count(c->symbol)) hidden = true;
            if (hidden) continue;
            if (script.noise.drop_rate > 0) {
                std::uint64_t draw = rng() >> 11;  // 53 uniform bits
                using boost::multiprecision::cpp_int;
                if (Rational(cpp_int(draw), cpp_int(1) << 53) < script.noise.drop_rate)
                    continue;
            }
            kept.push_back(a);
        }

        // observation noise last: fictitious atoms are never dropped
        for (const InjectionSpec& in : script.noise.fictitious)
            if (in.time == t)
                for (const Atom& a : in.atoms) kept.push_back(a);

        ScenarioStep step;
        step.time = t;
        step.obs = Cube(std::move(kept));
        if (!(mask == prev_mask)) {
            step.mask = mask;
            prev_mask = mask;
        }
        result.scenario.steps.push_back(std::move(step));

        // integrate one step of motion
        for (auto& [name, p] : pos) {
            auto vit = vel.find(name);
            if (vit == vel.end()) continue;
            p.x += vit->second.x;
            p.y += vit->second.y;
        }
    }
    return result;
}

}  // namespace sitest
