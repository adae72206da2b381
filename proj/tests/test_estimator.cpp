#include <doctest.h>

#include <fstream>
#include <sstream>

#include "sitest/dsl.hpp"
#include "sitest/estimator.hpp"
#include "sitest/runner.hpp"

using namespace sitest;

namespace {

std::string fixture_path(const std::string& name)
{
    return std::string(SITEST_FIXTURE_DIR) + "/" + name;
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

PlanLibrary load_parking()
{
    auto parsed = parse_library(slurp(fixture_path("parking.plan")), "parking.plan");
    REQUIRE(parsed.ok());
    return parsed.value;
}

Scenario load_scenario(const PlanLibrary& lib, const std::string& name)
{
    auto parsed = parse_scenario(slurp(fixture_path(name)), name, &lib);
    REQUIRE(parsed.ok());
    return parsed.value;
}

Atom ground(const char* pred, std::vector<const char*> consts)
{
    Atom a{pred, {}};
    for (const char* c : consts) a.args.push_back(make_const(c));
    return a;
}

Atom speed(const char* obj, long v)
{
    return Atom{"speed", {make_const(obj), make_num(Rational(v))}};
}

/// Mid-departure situation: pedestrian approaching the parked vehicle,
/// both bound.
Situation departure_midway()
{
    Situation s;
    s.time = 0;
    PlanInstance inst;
    inst.id = "i1";
    inst.prototype = "vehicle-departure";
    inst.marking.marked = {"vd-approach", "vd-parked"};
    inst.binding.bind("x", make_const("P1"));
    inst.binding.bind("y", make_const("V1"));
    inst.created_at = 0;
    inst.last_matched_at = 0;
    s.instances.push_back(inst);
    s.known_objects = {"P1", "V1"};
    s.next_instance = 2;
    return s;
}

/// Library with every tolerance item removed: activity dispersions,
/// supplementary atoms, and plan tolerance activities.
PlanLibrary strip_tolerance(PlanLibrary lib)
{
    for (auto& [id, act] : lib.activities) {
        act.tolerance_atoms.clear();
        act.tolerance_constraints.clear();
    }
    for (auto& [id, plan] : lib.plans) plan.tolerance_activities.clear();
    return lib;
}

/// (prototype, marking) pairs positively established anywhere in a run.
std::set<std::pair<PlanId, std::string>> reached_markings(const RunResult& run)
{
    std::set<std::pair<PlanId, std::string>> out;
    for (const TraceRecord& r : run.trace.records)
        if (r.event == "commit" || r.event == "spawn" || r.event == "switch" ||
            r.event == "absorb")
            out.insert({r.plan, r.marking_after});
    return out;
}

}  // namespace

TEST_CASE("prediction from the approach marking is the two-branch disjunction")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    auto branches = predict(s, lib);
    REQUIRE(branches.size() == 2);
    CHECK(branches[0].marking.marked ==
          std::set<PlaceId>{"vd-approach", "vd-parked"});
    CHECK(branches[0].fired == 0);
    CHECK(branches[1].marking.marked ==
          std::set<PlaceId>{"vd-entering", "vd-parked"});
    CHECK(branches[1].fired == 1);
    CHECK(branches[1].entered == std::set<PlaceId>{"vd-entering"});

    // kernels are instantiated by the plan-wide binding
    bool saw_p1 = false;
    for (const auto& [place, kernel] : branches[0].expected_kernels)
        for (const Atom& a : kernel.atoms())
            for (const Term& t : a.args)
                if (t == Term(make_const("P1"))) saw_p1 = true;
    CHECK(saw_p1);
}

TEST_CASE("a terminal marking predicts only itself")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    s.instances[0].marking.marked = {"vd-leaving"};
    auto branches = predict(s, lib);
    REQUIRE(branches.size() == 1);
    CHECK(branches[0].fired == 0);
}

TEST_CASE("held tolerance propagates into every predicted branch")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    HeldItem make_atom{Atom{"make", {make_const("V1"), make_const("Renault")}}, std::nullopt};
    s.instances[0].held_tolerance.push_back(make_atom);
    auto branches = predict(s, lib);
    REQUIRE(branches.size() == 2);
    for (const auto& b : branches) {
        REQUIRE(b.propagated_tolerance.size() == 1);
        CHECK(b.propagated_tolerance[0] == make_atom);
    }
}

TEST_CASE("place-tagged tolerance follows its place")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    s.instances[0].marking.marked = {"vd-entering", "vd-parked"};
    HeldItem tagged{Atom{"make", {make_const("V1"), make_const("Renault")}},
                    PlaceId("vd-parked")};
    s.instances[0].held_tolerance.push_back(tagged);
    auto branches = predict(s, lib);
    REQUIRE(branches.size() == 2);  // stay, or advance to vd-leaving
    for (const auto& b : branches) {
        if (b.marking.marked.count("vd-parked"))
            CHECK(b.propagated_tolerance.size() == 1);
        else
            CHECK(b.propagated_tolerance.empty());
    }
}

TEST_CASE("projection: the all mask is the identity")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    auto branches = predict(s, lib);
    auto po = project(branches, ObservabilityMask{});
    REQUIRE(po.branches.size() == branches.size());
    for (size_t i = 0; i < branches.size(); ++i) {
        CHECK(po.branches[i].expected_kernels == branches[i].expected_kernels);
        CHECK_FALSE(po.branches[i].unobservable);
    }
}

TEST_CASE("projection drops hidden predicates and orphaned constraints")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    ObservabilityMask mask;
    mask.all = false;
    mask.visible = {"type", "speed"};  // hides getting-closer-to
    auto po = project(predict(s, lib), mask);
    for (const auto& b : po.branches) {
        CHECK_FALSE(b.unobservable);
        for (const auto& [place, kernel] : b.expected_kernels)
            for (const Atom& a : kernel.atoms()) CHECK(a.predicate != "getting-closer-to");
    }
}

TEST_CASE("projection flags fully hidden branches unobservable")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    ObservabilityMask mask;
    mask.all = false;  // nothing visible
    auto po = project(predict(s, lib), mask);
    for (const auto& b : po.branches) CHECK(b.unobservable);
}

TEST_CASE("innovation: dispersion within tolerance is no innovation")
{
    PlanLibrary lib = load_parking();
    Situation s;
    s.time = 0;
    PlanInstance inst;
    inst.id = "i1";
    inst.prototype = "pedestrian-moving";
    inst.marking.marked = {"pm"};
    inst.binding.bind("x", make_const("P1"));
    s.instances.push_back(inst);
    s.known_objects = {"P1"};
    s.next_instance = 2;

    Cube obs({ground("type", {"P1", "pedestrian"}), speed("P1", 5)});
    auto po = project(predict(s, lib), ObservabilityMask{});
    auto innovations = innovate(obs, po, s, lib);
    REQUIRE(innovations.count("i1"));
    const Innovation& inn = innovations.at("i1");
    REQUIRE(inn.matched_branch.has_value());
    CHECK(inn.supplementary.empty());
    CHECK(inn.missing.empty());
}

TEST_CASE("innovation: supplementary property on a known object")
{
    PlanLibrary lib = load_parking();
    Situation s;
    s.time = 0;
    PlanInstance inst;
    inst.id = "i1";
    inst.prototype = "pedestrian-moving";
    inst.marking.marked = {"pm"};
    inst.binding.bind("x", make_const("P1"));
    s.instances.push_back(inst);
    s.known_objects = {"P1"};
    s.next_instance = 2;

    Cube obs({ground("type", {"P1", "pedestrian"}), speed("P1", 5),
              ground("close-to", {"P1", "building"})});
    auto po = project(predict(s, lib), ObservabilityMask{});
    auto innovations = innovate(obs, po, s, lib);
    const Innovation& inn = innovations.at("i1");
    REQUIRE(inn.matched_branch.has_value());
    REQUIRE(inn.supplementary.atoms().size() == 1);
    CHECK(inn.supplementary.atoms()[0] == ground("close-to", {"P1", "building"}));
}

TEST_CASE("innovation: kernel miss yields the common part and the missing kernel")
{
    PlanLibrary lib = load_parking();
    Situation s;
    s.time = 0;
    PlanInstance inst;
    inst.id = "i1";
    inst.prototype = "pedestrian-moving";
    inst.marking.marked = {"pm"};
    inst.binding.bind("x", make_const("P1"));
    s.instances.push_back(inst);
    s.known_objects = {"P1"};
    s.next_instance = 2;

    Cube obs({speed("P1", 5), ground("close-to", {"P1", "building"})});
    auto po = project(predict(s, lib), ObservabilityMask{});
    auto innovations = innovate(obs, po, s, lib);
    const Innovation& inn = innovations.at("i1");
    CHECK_FALSE(inn.matched_branch.has_value());
    REQUIRE(inn.common.atoms().size() == 1);
    CHECK(inn.common.atoms()[0] ==
          Atom{"speed", {make_const("P1"), make_var("_0")}});
    REQUIRE(inn.supplementary.atoms().size() == 1);
    CHECK(inn.supplementary.atoms()[0] == ground("close-to", {"P1", "building"}));
    REQUIRE(inn.missing.size() == 1);
    CHECK(inn.missing[0].atoms()[0] == ground("type", {"P1", "pedestrian"}));
}

TEST_CASE("empty observation: instances stay on the k=0 branch and age")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    auto [next, trace] = step(s, Cube{}, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(next.instances.size() == 1);
    CHECK(next.instances[0].marking == s.instances[0].marking);
    CHECK(next.instances[0].last_matched_at == 0);
    CHECK(next.time == 1);
    bool idled = false;
    for (const auto& r : trace.records)
        if (r.event == "idle" && r.inst == "i1") idled = true;
    CHECK(idled);
}

TEST_CASE("instances unmatched beyond the staleness horizon are dropped")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    EstimatorConfig cfg;
    cfg.stale_after = 2;
    for (int k = 0; k < 2; ++k) {
        auto [next, trace] = step(s, Cube{}, ObservabilityMask{}, lib, cfg);
        s = std::move(next);
        REQUIRE(s.instances.size() == 1);
    }
    auto [gone, trace] = step(s, Cube{}, ObservabilityMask{}, lib, cfg);
    CHECK(gone.instances.empty());
    bool dropped = false;
    for (const auto& r : trace.records)
        if (r.event == "drop" && r.inst == "i1") dropped = true;
    CHECK(dropped);
}

TEST_CASE("unobservable steps do not age an instance")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    EstimatorConfig cfg;
    cfg.stale_after = 1;
    ObservabilityMask hidden;
    hidden.all = false;
    for (int k = 0; k < 4; ++k) {
        auto [next, trace] = step(s, Cube{}, hidden, lib, cfg);
        s = std::move(next);
        REQUIRE(s.instances.size() == 1);
    }
}

TEST_CASE("continuation priority: a full match spawns nothing for its objects")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    Cube obs({ground("type", {"P1", "pedestrian"}), speed("P1", 4),
              ground("getting-closer-to", {"P1", "V1"}),
              ground("type", {"V1", "vehicle"}), speed("V1", 0)});
    auto [next, trace] = step(s, obs, ObservabilityMask{}, lib, EstimatorConfig{});
    CHECK(next.instances.size() == 1);
    CHECK(next.instances[0].id == "i1");
}

TEST_CASE("observation noise leaves existing instances untouched")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    Cube obs({ground("type", {"P1", "pedestrian"}), speed("P1", 4),
              ground("getting-closer-to", {"P1", "V1"}),
              ground("type", {"V1", "vehicle"}), speed("V1", 0),
              ground("type", {"D1", "dog"}), speed("D1", 6)});
    auto [next, trace] = step(s, obs, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(next.instances.size() == 2);
    CHECK(next.instances[0].id == "i1");
    CHECK(next.instances[0].marking == s.instances[0].marking);
    CHECK(next.instances[0].binding.bindings() == s.instances[0].binding.bindings());
    CHECK(next.instances[1].prototype == "object-moving");
    CHECK(next.instances[1].binding.lookup("o") == Term(make_const("D1")));
    CHECK(next.known_objects.count("D1"));
}

TEST_CASE("out-of-dispersion values commit with extended tolerance")
{
    PlanLibrary lib = load_parking();
    Situation s;
    s.time = 0;
    PlanInstance inst;
    inst.id = "i1";
    inst.prototype = "pedestrian-moving";
    inst.marking.marked = {"pm"};
    inst.binding.bind("x", make_const("P1"));
    s.instances.push_back(inst);
    s.known_objects = {"P1"};
    s.next_instance = 2;

    // 12 violates the walking dispersion (<= 8) but the kernel matched
    Cube obs({ground("type", {"P1", "pedestrian"}), speed("P1", 12)});
    auto [next, trace] = step(s, obs, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(next.instances.size() == 1);
    CHECK(next.instances[0].marking.marked == std::set<PlaceId>{"pm"});
    bool extended = false;
    for (const auto& r : trace.records)
        if (r.event == "extend" && r.inst == "i1") extended = true;
    CHECK(extended);
}

TEST_CASE("tolerance never gates kernel commits")
{
    PlanLibrary lib = load_parking();
    PlanLibrary bare = strip_tolerance(lib);
    REQUIRE(validate(bare).empty());
    for (const char* scenario :
         {"departure.obs", "tolerance_case.obs", "case_b.obs", "case_c.obs", "case_d.obs",
          "case_e.obs", "ambiguous.obs"}) {
        CAPTURE(scenario);
        Scenario sc = load_scenario(lib, scenario);
        auto with = run_scenario(lib, sc, EstimatorConfig{});
        auto without = run_scenario(bare, sc, EstimatorConfig{});
        auto reached_with = reached_markings(with);
        auto reached_without = reached_markings(without);
        for (const auto& rm : reached_with) CHECK(reached_without.count(rm));
    }
}

TEST_CASE("step is deterministic")
{
    PlanLibrary lib = load_parking();
    Scenario sc = load_scenario(lib, "departure.obs");
    auto a = run_scenario(lib, sc, EstimatorConfig{});
    auto b = run_scenario(lib, sc, EstimatorConfig{});
    CHECK(to_text(a.trace) == to_text(b.trace));
    CHECK(a.report_lines == b.report_lines);
}

TEST_CASE("ambiguous classification keeps both hypotheses")
{
    PlanLibrary lib = load_parking();
    Scenario sc = load_scenario(lib, "ambiguous.obs");
    auto run = run_scenario(lib, sc, EstimatorConfig{});
    REQUIRE(run.final_situation.instances.size() == 2);
    std::set<PlanId> protos;
    for (const auto& i : run.final_situation.instances) protos.insert(i.prototype);
    CHECK(protos == std::set<PlanId>{"pedestrian-moving", "vehicle-arrival"});
    CHECK(run.violations == 0);
}

TEST_CASE("gradual evidence drives a specificity switch")
{
    // an object known only by its speed starts as object-moving; the type
    // arriving later upgrades the hypothesis
    PlanLibrary lib = load_parking();
    Situation s;
    s.time = -1;
    Cube only_speed({speed("P1", 5)});
    auto [s0, t0] = step(s, only_speed, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s0.instances.size() == 1);
    CHECK(s0.instances[0].prototype == "object-moving");

    Cube with_type({ground("type", {"P1", "pedestrian"}), speed("P1", 5)});
    auto [s1, t1] = step(s0, with_type, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s1.instances.size() == 1);
    CHECK(s1.instances[0].prototype == "pedestrian-moving");
    bool switched = false;
    for (const auto& r : t1.records)
        if (r.event == "switch" && r.case_label == 'b') switched = true;
    CHECK(switched);
}

TEST_CASE("noise becomes signal: an attack switches the model to mugging")
{
    PlanLibrary lib = load_parking();
    Situation s;
    s.time = -1;
    Cube t0({ground("type", {"P1", "pedestrian"}), speed("P1", 3)});
    auto [s0, tr0] = step(s, t0, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s0.instances.size() == 1);
    CHECK(s0.instances[0].prototype == "pedestrian-moving");

    // a second pedestrian appears and attacks: the linking property forces
    // the switch to the more specific plan
    Cube t1({ground("type", {"P1", "pedestrian"}), speed("P1", 0),
             ground("type", {"Z1", "pedestrian"}), speed("Z1", 2),
             ground("attacks", {"Z1", "P1"})});
    auto [s1, tr1] = step(s0, t1, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s1.instances.size() == 1);
    CHECK(s1.instances[0].prototype == "mugging");
    CHECK(s1.instances[0].marking.marked == std::set<PlaceId>{"mg-assault"});
    bool switched = false;
    for (const auto& r : tr1.records)
        if (r.event == "switch" && r.case_label == 'd') switched = true;
    CHECK(switched);
    CHECK(unexplained_objects(s1, t1, lib).empty());
}

TEST_CASE("the per-object instance cap limits hypothesis fan-out")
{
    PlanLibrary lib = load_parking();
    EstimatorConfig cfg;
    cfg.max_instances_per_object = 1;
    Situation s;
    s.time = -1;
    // the ambiguous observation would spawn two hypotheses for O1
    Cube obs({ground("type", {"O1", "pedestrian"}), ground("type", {"O1", "vehicle"}),
              speed("O1", 7)});
    auto [next, trace] = step(s, obs, ObservabilityMask{}, lib, cfg);
    CHECK(next.instances.size() == 1);

    EstimatorConfig unlimited;
    auto [both, trace2] = step(s, obs, ObservabilityMask{}, lib, unlimited);
    CHECK(both.instances.size() == 2);
}

TEST_CASE("verbose traces include the prediction records")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    EstimatorConfig cfg;
    cfg.trace_verbosity = 1;
    auto [next, trace] = step(s, Cube{}, ObservabilityMask{}, lib, cfg);
    int predictions = 0;
    for (const auto& r : trace.records)
        if (r.event == "predict") ++predictions;
    CHECK(predictions == 2);
}

TEST_CASE("a transition event cube gates the advance")
{
    // two-place chain whose transition additionally requires an event atom
    const char* text =
        "predicate (type obj val)\n"
        "predicate (speed obj val)\n"
        "predicate (door-opens obj)\n"
        "activity waiting { kernel { (type ?x pedestrian) (speed ?x ?v) (= ?v 0) } }\n"
        "activity boarding { kernel { (type ?x pedestrian) } }\n"
        "plan boarding-plan {\n"
        "  places { w: waiting b: boarding }\n"
        "  transitions { t-board: pre { w } post { b } event { (door-opens ?x) } }\n"
        "  initial { w }\n"
        "}\n";
    auto parsed = parse_library(text, "event.plan");
    REQUIRE(parsed.ok());
    const PlanLibrary& lib = parsed.value;

    Situation s;
    s.time = -1;
    Cube t0({ground("type", {"P1", "pedestrian"}), speed("P1", 0)});
    auto [s0, tr0] = step(s, t0, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s0.instances.size() == 1);
    CHECK(s0.instances[0].marking.marked == std::set<PlaceId>{"w"});

    // the boarding kernel alone is matched by the same observation, but the
    // advance needs the door event
    auto [s1, tr1] = step(s0, t0, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s1.instances.size() == 1);
    CHECK(s1.instances[0].marking.marked == std::set<PlaceId>{"w"});

    Cube with_event({ground("type", {"P1", "pedestrian"}), speed("P1", 0),
                     Atom{"door-opens", {make_const("P1")}}});
    auto [s2, tr2] = step(s1, with_event, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s2.instances.size() == 1);
    CHECK(s2.instances[0].marking.marked == std::set<PlaceId>{"b"});
}

TEST_CASE("matched tolerance atoms are held and propagated")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    Cube obs({ground("type", {"P1", "pedestrian"}), speed("P1", 4),
              ground("getting-closer-to", {"P1", "V1"}),
              ground("type", {"V1", "vehicle"}), speed("V1", 0),
              ground("make", {"V1", "Renault"})});
    auto [next, trace] = step(s, obs, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(next.instances.size() == 1);
    // (make V1 Renault) is a tolerance atom of the parked-vehicle activity
    bool held = false;
    for (const HeldItem& h : next.instances[0].held_tolerance)
        if (const auto* a = std::get_if<Atom>(&h.item))
            if (*a == ground("make", {"V1", "Renault"})) {
                held = true;
                CHECK(h.place == PlaceId("vd-parked"));
            }
    CHECK(held);

    // and it travels with the prediction into both branches
    auto branches = predict(next, lib);
    REQUIRE(branches.size() == 2);
    for (const auto& b : branches) CHECK(b.propagated_tolerance.size() == 1);
}

TEST_CASE("mask changes mid-run keep occluded hypotheses alive")
{
    PlanLibrary lib = load_parking();
    const char* text =
        "t=0 obs (type P1 pedestrian) (speed P1 5)\n"
        "t=1 visible (close-to)\n"
        "t=1 obs\n"
        "t=2 obs\n"
        "t=3 obs\n"
        "t=4 visible all\n"
        "t=4 obs (type P1 pedestrian) (speed P1 5)\n";
    auto parsed = parse_scenario(text, "mask.obs", &lib);
    REQUIRE(parsed.ok());
    EstimatorConfig cfg;
    cfg.stale_after = 2;  // the occluded steps must not age the hypothesis
    auto run = run_scenario(lib, parsed.value, cfg);
    REQUIRE(run.final_situation.instances.size() == 1);
    CHECK(run.final_situation.instances[0].prototype == "pedestrian-moving");
    CHECK(run.final_situation.instances[0].last_matched_at == 4);
    CHECK(run.violations == 0);
}

TEST_CASE("revise composes with predict and project like step")
{
    PlanLibrary lib = load_parking();
    Situation s = departure_midway();
    Cube obs({ground("type", {"P1", "pedestrian"}), ground("type", {"V1", "vehicle"}),
              ground("getting-into", {"P1", "V1"}), speed("V1", 0)});
    ObservabilityMask mask;
    auto po = project(predict(s, lib), mask);
    Situation via_revise = revise(s, obs, po, mask, lib, EstimatorConfig{}, nullptr);
    auto [via_step, trace] = step(s, obs, mask, lib, EstimatorConfig{});
    CHECK(via_revise.time == via_step.time);
    REQUIRE(via_revise.instances.size() == via_step.instances.size());
    for (size_t i = 0; i < via_revise.instances.size(); ++i) {
        CHECK(via_revise.instances[i].marking == via_step.instances[i].marking);
        CHECK(via_revise.instances[i].binding.bindings() ==
              via_step.instances[i].binding.bindings());
    }
}

TEST_CASE("several objects of the same kind get their own hypotheses")
{
    PlanLibrary lib = load_parking();
    Situation s;
    s.time = -1;
    Cube obs({ground("type", {"P1", "pedestrian"}), speed("P1", 4),
              ground("type", {"P2", "pedestrian"}), speed("P2", 6)});
    auto [next, trace] = step(s, obs, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(next.instances.size() == 2);
    CHECK(next.instances[0].prototype == "pedestrian-moving");
    CHECK(next.instances[1].prototype == "pedestrian-moving");
    std::set<std::string> bound;
    for (const auto& i : next.instances)
        for (const auto& o : i.bound_objects()) bound.insert(o);
    CHECK(bound == std::set<std::string>{"P1", "P2"});
}

TEST_CASE("unit tags flow through matching and dispersions")
{
    const char* text =
        "predicate (type obj val)\n"
        "predicate (speed obj val)\n"
        "activity walking {\n"
        "  kernel { (type ?x pedestrian) (speed ?x ?v) }\n"
        "  tolerance { constraints { (<= ?v 8km/h) } }\n"
        "}\n"
        "plan walking-plan { places { w: walking } initial { w } }\n";
    auto parsed = parse_library(text, "units.plan");
    REQUIRE(parsed.ok());
    const PlanLibrary& lib = parsed.value;

    Situation s;
    s.time = -1;
    Cube tagged({ground("type", {"P1", "pedestrian"}),
                 Atom{"speed", {make_const("P1"), make_num(Rational(5), "km/h")}}});
    auto [s0, tr0] = step(s, tagged, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s0.instances.size() == 1);

    auto [s1, tr1] = step(s0, tagged, ObservabilityMask{}, lib, EstimatorConfig{});
    bool clean_commit = false;
    for (const auto& r : tr1.records)
        if (r.event == "commit" && r.detail == "innovation=none") clean_commit = true;
    CHECK(clean_commit);

    // a unitless reading cannot satisfy the km/h dispersion: the kernel
    // still commits, the value is recorded as an extension
    Cube untagged({ground("type", {"P1", "pedestrian"}), speed("P1", 5)});
    auto [s2, tr2] = step(s1, untagged, ObservabilityMask{}, lib, EstimatorConfig{});
    REQUIRE(s2.instances.size() == 1);
    bool committed = false, extended = false;
    for (const auto& r : tr2.records) {
        if (r.event == "commit") committed = true;
        if (r.event == "extend") extended = true;
    }
    CHECK(committed);
    CHECK(extended);
}

TEST_CASE("observed objects follow the declared argument roles")
{
    PlanLibrary lib = load_parking();
    Cube obs({ground("close-to", {"P1", "building"}), speed("P1", 5),
              ground("getting-into", {"P1", "V1"})});
    auto objs = observed_objects(obs, lib);
    CHECK(objs == std::set<std::string>{"P1", "V1"});
}
