#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>

#include <ecoflux/model_format.hpp>

#include "fixtures.hpp"

using namespace ecoflux;

namespace {

// Expects parse_model(src) to throw ParseError whose reason mentions
// `needle` and whose position names `line` (1-based).
void expect_parse_error(const std::string& src, const std::string& needle,
                        int line) {
  try {
    (void)parse_model(src);
    FAIL("expected a parse error mentioning '" << needle << "'");
  } catch (const ParseError& e) {
    INFO("reason: " << e.reason());
    CHECK(std::string(e.reason()).find(needle) != std::string::npos);
    CHECK(e.where().line == line);
  }
}

const std::string kMinimal =
    "[model]\n"     // 1
    "n = 2\n"       // 2
    "[inputs]\n"    // 3
    "1 = 1\n"       // 4
    "[flows]\n"     // 5
    "2<-1 = 1\n"    // 6
    "[outputs]\n"   // 7
    "2 = 1\n"       // 8
    "[initial]\n"   // 9
    "1 = 0\n"       // 10
    "2 = 0\n";      // 11

}  // namespace

TEST_CASE("bundled model files parse") {
  SECTION("two-compartment oscillator") {
    CompartmentalModel m = fixtures::load("hippe.model");
    REQUIRE(m.n == 2);
    CHECK(m.names == std::vector<std::string>{"1", "2"});
    CHECK_FALSE(m.intensity(1, 0).empty());
    CHECK_FALSE(m.intensity(0, 1).empty());
    CHECK(m.intensity(0, 0).empty());
    CHECK_FALSE(m.input(0).empty());
    CHECK(m.x0(0) == 3.0);
    CHECK(m.defaults.has_span);
    CHECK(m.defaults.t1 == 10.0);
    CHECK(m.defaults.samples == 201);
  }
  SECTION("named three-compartment chain") {
    CompartmentalModel m = fixtures::load("hallam.model");
    REQUIRE(m.n == 3);
    CHECK(m.names ==
          std::vector<std::string>{"resource", "producer", "consumer"});
    CHECK(m.param_names.size() == 6);
    CHECK(m.compartment_index("consumer") == 2);
    CHECK_FALSE(m.intensity(1, 0).empty());  // producer<-resource
    CHECK_FALSE(m.intensity(0, 2).empty());  // resource<-consumer
    CHECK(m.defaults.t1 == 25.0);
    CHECK(m.defaults.samples == 501);
  }
}

TEST_CASE("serialization round-trips exactly") {
  for (const char* file :
       {"hippe.model", "hallam.model", "chain2.model", "fan3.model"}) {
    DYNAMIC_SECTION(file) {
      CompartmentalModel m = fixtures::load(file);
      std::string once = serialize_model(m);
      CompartmentalModel again = parse_model(once);
      std::string twice = serialize_model(again);
      CHECK(once == twice);
      REQUIRE(again.n == m.n);
      CHECK(again.names == m.names);
      CHECK(again.param_names == m.param_names);
      for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.n; ++j)
          CHECK(again.intensity(i, j).text() == m.intensity(i, j).text());
    }
  }
}

TEST_CASE("minimal model text parses") {
  CompartmentalModel m = parse_model(kMinimal);
  CHECK(m.n == 2);
  CHECK_FALSE(m.defaults.has_span);
  CHECK(m.input(1).empty());
}

TEST_CASE("format errors carry line numbers") {
  SECTION("duplicate key") {
    expect_parse_error(kMinimal + "[simulate]\nt0 = 0\nt0 = 1\n",
                       "duplicate key 't0'", 14);
  }
  SECTION("duplicate section") {
    expect_parse_error(kMinimal + "[inputs]\n", "duplicate section [inputs]",
                       12);
  }
  SECTION("missing required section") {
    expect_parse_error("[model]\nn = 1\n[inputs]\n1 = 1\n[flows]\n[outputs]\n",
                       "missing required section [initial]", 6);
  }
  SECTION("unknown section") {
    expect_parse_error("[model]\nn = 1\n[fluxes]\n", "unknown section [fluxes]",
                       3);
  }
  SECTION("model section must come first") {
    expect_parse_error("[inputs]\n", "[model] must come first", 1);
  }
  SECTION("entry before any section") {
    expect_parse_error("n = 2\n", "entry outside of any section", 1);
  }
  SECTION("names before n") {
    expect_parse_error("[model]\nnames = a b\n",
                       "'n' must be declared in [model]", 2);
  }
  SECTION("wrong number of names") {
    expect_parse_error("[model]\nn = 2\nnames = only\n", "expected 2 names",
                       3);
  }
  SECTION("bad flow key") {
    expect_parse_error("[model]\nn = 2\n[flows]\n1->2 = 1\n",
                       "flow keys look like 'i<-j'", 4);
  }
  SECTION("unknown compartment") {
    expect_parse_error("[model]\nn = 2\n[initial]\n7 = 1\n",
                       "unknown compartment '7'", 4);
  }
  SECTION("unknown simulate key") {
    expect_parse_error(kMinimal + "[simulate]\nsteps = 3\n",
                       "unknown [simulate] key 'steps'", 13);
  }
  SECTION("invalid number") {
    expect_parse_error("[model]\nn = 2\n[initial]\n1 = abc\n",
                       "invalid number for '1'", 4);
  }
  SECTION("invalid integer") {
    expect_parse_error("[model]\nn = 1.5\n", "invalid integer for 'n'", 2);
  }
  SECTION("missing equals sign") {
    expect_parse_error("[model]\nn 2\n", "expected 'key = value'", 2);
  }
  SECTION("empty value") {
    expect_parse_error("[model]\nn =\n", "empty value for 'n'", 2);
  }
  SECTION("unterminated header") {
    expect_parse_error("[model\n", "unterminated section header", 1);
  }
  SECTION("bad expression inherits the line") {
    expect_parse_error("[model]\nn = 2\n[inputs]\n1 = 2 +\n",
                       "unexpected end of expression", 4);
  }
}

TEST_CASE("comments and blank lines are ignored") {
  std::string src =
      "# header comment\n"
      "[model]\n"
      "n = 1   # trailing comment\n"
      "\n"
      "[inputs]\n1 = 1\n[flows]\n[outputs]\n1 = 1\n[initial]\n1 = 0\n";
  CompartmentalModel m = parse_model(src);
  CHECK(m.n == 1);
}

TEST_CASE("validation failures surface as model errors") {
  std::string src =
      "[model]\nn = 1\n[inputs]\n1 = 1\n[flows]\n1<-1 = 1\n"
      "[outputs]\n1 = 1\n[initial]\n1 = 0\n";
  try {
    (void)parse_model(src);
    FAIL("expected a validation error for an undeclared self-flow");
  } catch (const ModelError& e) {
    REQUIRE_FALSE(e.diagnostics().empty());
    bool mentions = false;
    for (const Diagnostic& d : e.diagnostics())
      if (d.message.find("self-flow") != std::string::npos) mentions = true;
    CHECK(mentions);
    CHECK(std::string(e.what()).find("self-flow") != std::string::npos);
  }
}

TEST_CASE("file loading reports missing paths") {
  CHECK_THROWS_AS(parse_model_file("/nonexistent/x.model"), IoError);
}

TEST_CASE("mutated model text never crashes the parser") {
  // Random splices, deletions, and duplications over a valid source.
  // Every outcome must be a parsed model, a positioned ParseError, or a
  // ModelError from validation; anything else fails the test.
  std::mt19937 rng(57102);
  const std::string splice = "[]=<-#\nx1 q.";
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<std::size_t> ch(0, splice.size() - 1);

  int parsed = 0, rejected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::string src = kMinimal;
    int edits = 1 + trial % 4;
    for (int e = 0; e < edits; ++e) {
      std::uniform_int_distribution<std::size_t> pos(0, src.size() - 1);
      std::size_t p = pos(rng);
      switch (kind(rng)) {
        case 0: src.erase(p, 1); break;
        case 1: src.insert(p, 1, splice[ch(rng)]); break;
        case 2: src[p] = splice[ch(rng)]; break;
        default: src.insert(p, src.substr(p, 5)); break;
      }
      if (src.empty()) src = "#";
    }
    try {
      (void)parse_model(src);
      ++parsed;
    } catch (const ParseError&) {
      ++rejected;
    } catch (const ModelError&) {
      ++rejected;
    }
  }
  CHECK(parsed + rejected == 1000);
  CHECK(rejected > 0);
}
