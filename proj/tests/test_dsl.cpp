#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "sitest/dsl.hpp"

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

}  // namespace

TEST_CASE("parse_library loads the parking fixture")
{
    auto parsed = parse_library(slurp(fixture_path("parking.plan")), "parking.plan");
    REQUIRE(parsed.ok());
    CHECK(parsed.value.plans.size() == 6);
    CHECK(parsed.value.activities.size() == 11);
    CHECK(parsed.value.predicates.size() == 8);

    const PlanPrototype& vd = parsed.value.plans.at("vehicle-departure");
    CHECK(vd.places.size() == 4);
    CHECK(vd.transitions.size() == 2);
    CHECK(vd.initial_marking.marked == std::set<PlaceId>{"vd-approach", "vd-parked"});
    CHECK(vd.tolerance_activities ==
          std::set<ActivityId>{"pedestrian-stopped-act", "vehicle-moving-off-act"});
    CHECK(vd.refines == std::set<PlanId>{"pedestrian-moving"});
}

TEST_CASE("empty input parses to an empty library")
{
    auto parsed = parse_library("", "empty.plan");
    CHECK(parsed.ok());
    CHECK(parsed.value.predicates.empty());
    CHECK(parsed.value.activities.empty());
    CHECK(parsed.value.plans.empty());
    CHECK(parsed.diagnostics.empty());
}

TEST_CASE("arity mismatch is diagnosed with its span")
{
    const char* text =
        "predicate (type obj val)\n"
        "activity a {\n"
        "  kernel { (type ?x) }\n"
        "}\n";
    auto parsed = parse_library(text, "bad.plan");
    REQUIRE_FALSE(parsed.ok());
    int found = 0;
    for (const auto& d : parsed.diagnostics)
        if (d.message.find("arity") != std::string::npos) {
            ++found;
            CHECK(d.span.file == "bad.plan");
            CHECK(d.span.line == 3);  // the atom itself, not the declaration
            CHECK(d.span.column == 12);
        }
    CHECK(found == 1);
}

TEST_CASE("parser recovers to report several errors")
{
    const char* text =
        "predicate (type obj val\n"         // missing ')'
        "activity a { kernel { } }\n"       // empty kernel (semantic error later)
        "widget nonsense\n"                 // unknown declaration
        "plan p { }\n";                     // missing places/initial
    auto parsed = parse_library(text, "multi.plan");
    CHECK_FALSE(parsed.ok());
    int errors = 0;
    for (const auto& d : parsed.diagnostics)
        if (d.severity == Severity::Error) ++errors;
    CHECK(errors >= 2);
}

TEST_CASE("reserved names are rejected")
{
    auto in_pred = parse_library("predicate (in obj val)\n", "in.plan");
    CHECK_FALSE(in_pred.ok());
    auto underscore = parse_library(
        "predicate (p obj)\nactivity a { kernel { (p ?_x) } }\n", "under.plan");
    CHECK_FALSE(underscore.ok());
}

TEST_CASE("library round-trips through the canonical serializer")
{
    auto parsed = parse_library(slurp(fixture_path("parking.plan")), "parking.plan");
    REQUIRE(parsed.ok());
    std::string canonical = serialize(parsed.value);
    auto reparsed = parse_library(canonical, "canonical.plan");
    REQUIRE(reparsed.ok());
    CHECK(structurally_equal(parsed.value, reparsed.value));
    // serialization is deterministic and stable on its own output
    CHECK(serialize(reparsed.value) == canonical);
    CHECK(serialize(parsed.value) == canonical);
    // empty library serializes to an empty document
    CHECK(serialize(PlanLibrary{}).empty());
}

TEST_CASE("interval constraints parse and round-trip")
{
    const char* text =
        "predicate (speed obj val)\n"
        "activity cruising {\n"
        "  kernel { (speed ?o ?v) (in ?v 30 50) }\n"
        "  tolerance { constraints { (in ?v 25 55) } }\n"
        "}\n"
        "plan cruise { places { c: cruising } initial { c } }\n";
    auto parsed = parse_library(text, "iv.plan");
    REQUIRE(parsed.ok());
    const ActivityPrototype& act = parsed.value.activities.at("cruising");
    REQUIRE(act.kernel.constraints().size() == 1);
    CHECK(act.kernel.constraints()[0].rel == Relation::In);
    CHECK(std::holds_alternative<Interval>(act.kernel.constraints()[0].right));

    std::string canonical = serialize(parsed.value);
    auto reparsed = parse_library(canonical, "iv2.plan");
    REQUIRE(reparsed.ok());
    CHECK(structurally_equal(parsed.value, reparsed.value));
}

TEST_CASE("parse_scenario reads observation steps")
{
    auto parsed = parse_scenario("t=3 obs (type P1 pedestrian) (speed P1 5)\n", "s.obs");
    REQUIRE(parsed.ok());
    REQUIRE(parsed.value.steps.size() == 1);
    CHECK(parsed.value.steps[0].time == 3);
    CHECK(parsed.value.steps[0].obs.atoms().size() == 2);
}

TEST_CASE("comment-only scenario is empty")
{
    auto parsed = parse_scenario("# nothing here\n# at all\n", "c.obs");
    CHECK(parsed.ok());
    CHECK(parsed.value.steps.empty());
}

TEST_CASE("scenario rejects non-ground observations")
{
    auto parsed = parse_scenario("t=0 obs (type ?x pedestrian)\n", "g.obs");
    CHECK_FALSE(parsed.ok());
    bool found = false;
    for (const auto& d : parsed.diagnostics)
        if (d.message.find("ground") != std::string::npos) found = true;
    CHECK(found);
}

TEST_CASE("scenario rejects decreasing time indices")
{
    auto parsed = parse_scenario("t=2 obs (p a)\nt=1 obs (p a)\n", "d.obs");
    CHECK_FALSE(parsed.ok());
    bool found = false;
    for (const auto& d : parsed.diagnostics)
        if (d.message.find("strictly increasing") != std::string::npos) found = true;
    CHECK(found);
}

TEST_CASE("scenario checks atoms against the library when given")
{
    auto lib = parse_library(slurp(fixture_path("parking.plan")), "parking.plan");
    REQUIRE(lib.ok());
    auto bad = parse_scenario("t=0 obs (type P1)\n", "a.obs", &lib.value);
    CHECK_FALSE(bad.ok());
    auto unknown = parse_scenario("t=0 obs (sound P1 loud)\n", "u.obs", &lib.value);
    CHECK_FALSE(unknown.ok());
    auto good = parse_scenario("t=0 obs (type P1 pedestrian)\n", "ok.obs", &lib.value);
    CHECK(good.ok());
}

TEST_CASE("scenario visible directives set the mask")
{
    auto parsed = parse_scenario(
        "t=0 visible all\n"
        "t=0 obs (p a)\n"
        "t=1 visible (type speed)\n"
        "t=1 obs (p a)\n",
        "m.obs");
    REQUIRE(parsed.ok());
    REQUIRE(parsed.value.steps.size() == 2);
    REQUIRE(parsed.value.steps[0].mask);
    CHECK(parsed.value.steps[0].mask->all);
    REQUIRE(parsed.value.steps[1].mask);
    CHECK_FALSE(parsed.value.steps[1].mask->all);
    CHECK(parsed.value.steps[1].mask->visible == std::set<std::string>{"type", "speed"});
}

TEST_CASE("scenario round-trips through serialize")
{
    std::string text =
        "t=0 obs (speed P1 4.5) (type P1 pedestrian)\n"
        "t=1 visible (speed type)\n"
        "t=1 obs (speed P1 0)\n"
        "t=2 obs\n";
    auto parsed = parse_scenario(text, "r.obs");
    REQUIRE(parsed.ok());
    std::string canonical = serialize(parsed.value);
    auto reparsed = parse_scenario(canonical, "r2.obs");
    REQUIRE(reparsed.ok());
    CHECK(reparsed.value == parsed.value);
    CHECK(serialize(reparsed.value) == canonical);
}

TEST_CASE("parse_script reads the departure ground truth")
{
    auto parsed = parse_script(slurp(fixture_path("departure.script")), "departure.script");
    REQUIRE(parsed.ok());
    const GroundTruthScript& sc = parsed.value;
    CHECK(sc.name == "departure");
    CHECK(sc.library_path == "parking.plan");
    REQUIRE(sc.executions.size() == 1);
    CHECK(sc.executions[0].plan == "vehicle-departure");
    CHECK(sc.executions[0].schedule.size() == 3);
    CHECK(sc.objects.size() == 2);
    CHECK(sc.landmarks.size() == 1);
    CHECK(sc.params.close_radius == Rational(2));
}

TEST_CASE("script drop rate requires a seed")
{
    const char* text =
        "script s {\n"
        "  library \"parking.plan\"\n"
        "  noise { drop rate 0.5 }\n"
        "}\n";
    auto parsed = parse_script(text, "s.script");
    CHECK_FALSE(parsed.ok());
}

TEST_CASE("parser survives arbitrary input")
{
    // byte-level fuzz across all three entry points; diagnostics must stay
    // inside the source
    std::mt19937 rng(99);
    const std::string alphabet =
        "abct?_-(){}=<>!.#\" \n\r\t0123456789km/hpredicateactivityplanobsvisible\x01\xff";
    int rounds = 100000;
    for (int i = 0; i < rounds; ++i) {
        size_t len = rng() % 64;
        std::string text;
        text.reserve(len);
        for (size_t k = 0; k < len; ++k) text += alphabet[rng() % alphabet.size()];

        std::vector<Diagnostic> diags;
        switch (i % 3) {
            case 0: diags = parse_library(text, "fuzz").diagnostics; break;
            case 1: diags = parse_scenario(text, "fuzz").diagnostics; break;
            default: diags = parse_script(text, "fuzz").diagnostics; break;
        }
        size_t lines = 1 + static_cast<size_t>(std::count(text.begin(), text.end(), '\n'));
        for (const Diagnostic& d : diags) {
            if (!d.span.valid()) continue;
            CHECK(d.span.line >= 1);
            CHECK(static_cast<size_t>(d.span.line) <= lines + 1);
            CHECK(d.span.column >= 1);
        }
    }
}
