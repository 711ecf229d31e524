#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "growfem/cli_path.hpp"

using namespace growfem;

namespace {

const char* kMinimalFile =
    "$$HEADERSTART\n"
    "$$ASCII\n"
    "$$UNITS/1\n"
    "$$HEADEREND\n"
    "$$GEOMETRYSTART\n"
    "$$LAYER/0.06\n"
    "$$HATCHES/1,1,0,0,0.96,0\n"
    "$$GEOMETRYEND\n";

LaserPath random_alternating_hatch_path(std::mt19937_64& rng, int layers) {
  LaserPath path;
  path.units = 1.0;
  for (int l = 0; l < layers; ++l) {
    Layer layer;
    layer.height = 0.06 * (l + 1);
    const int n = 2 + static_cast<int>(rng() % 4);
    for (int h = 0; h < n; ++h) {
      const double c = 0.48 * h;
      if (l % 2 == 0)
        layer.hatches.push_back({{0.0, c}, {7.68, c}});
      else
        layer.hatches.push_back({{c, 0.0}, {c, 7.68}});
    }
    if (l == 0) {
      Polyline border;
      border.points = {{0, 0}, {7.68, 0}, {7.68, 7.68}, {0, 7.68}, {0, 0}};
      layer.polylines.push_back(border);
    }
    path.layers.push_back(layer);
  }
  return path;
}

}  // namespace

TEST_CASE("parse_cli reads the minimal grammar") {
  SECTION("one layer, one hatch") {
    LaserPath p = parse_cli(kMinimalFile);
    REQUIRE(p.layers.size() == 1);
    CHECK(p.layers[0].height == Catch::Approx(0.06));
    REQUIRE(p.layers[0].hatches.size() == 1);
    CHECK(p.layers[0].hatches[0].begin == Vec2{0, 0});
    CHECK(p.layers[0].hatches[0].end == Vec2{0.96, 0});
    CHECK(p.total_polylines() == 0);
  }

  SECTION("units scale every coordinate") {
    const char* text =
        "$$UNITS/0.01\n"
        "$$LAYER/6\n"
        "$$POLYLINE/1,1,2,0,0,96,0\n";
    LaserPath p = parse_cli(text);
    CHECK(p.layers[0].height == Catch::Approx(0.06));
    CHECK(p.layers[0].polylines[0].points[1].x == Catch::Approx(0.96));
  }

  SECTION("a HATCHES block with n segments expands to n hatch records") {
    const char* text =
        "$$UNITS/1\n"
        "$$LAYER/1\n"
        "$$HATCHES/1,3,0,0,1,0,0,1,1,1,0,2,1,2\n";
    LaserPath p = parse_cli(text);
    CHECK(p.layers[0].hatches.size() == 3);
    CHECK(p.layers[0].hatches[2].begin == Vec2{0, 2});
  }

  SECTION("informational CLI 2.0 directives are skipped with a warning") {
    const char* text =
        "$$HEADERSTART\n$$ASCII\n$$DATE/230526\n$$UNITS/1\n$$LAYERS/1\n$$HEADEREND\n"
        "$$LAYER/1\n$$HATCHES/1,1,0,0,1,0\n";
    std::vector<std::string> warnings;
    LaserPath p = parse_cli(text, &warnings);
    CHECK(p.layers.size() == 1);
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].find("line 3") != std::string::npos);
    CHECK(warnings[0].find("DATE") != std::string::npos);
  }
}

TEST_CASE("parse_cli diagnostics carry line numbers") {
  SECTION("geometry before any layer") {
    const char* text = "$$UNITS/1\n$$HATCHES/1,1,0,0,1,0\n";
    try {
      parse_cli(text);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("before any $$LAYER") != std::string::npos);
    }
  }

  SECTION("unknown directive") {
    try {
      parse_cli("$$UNITS/1\n$$LAYER/1\n$$FOO/1\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }

  SECTION("arity mismatch in a polyline") {
    try {
      parse_cli("$$UNITS/1\n$$LAYER/1\n$$POLYLINE/1,1,3,0,0,1,1\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("expects") != std::string::npos);
    }
  }

  SECTION("non-monotone layer heights") {
    try {
      parse_cli("$$UNITS/1\n$$LAYER/2\n$$HATCHES/1,1,0,0,1,0\n$$LAYER/1\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
      CHECK(std::string(e.what()).find("increasing") != std::string::npos);
    }
  }

  SECTION("binary mode is rejected") {
    CHECK_THROWS_AS(parse_cli("$$BINARY\n"), ParseError);
  }

  SECTION("bad number") {
    try {
      parse_cli("$$UNITS/1\n$$LAYER/abc\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
}

TEST_CASE("serializer round trip") {
  std::mt19937_64 rng(17);

  SECTION("generated alternating-hatch files round-trip structurally") {
    for (int trial = 0; trial < 20; ++trial) {
      LaserPath path = random_alternating_hatch_path(rng, 8);
      LaserPath back = parse_cli(serialize_cli(path));
      REQUIRE(back.layers.size() == path.layers.size());
      for (std::size_t l = 0; l < path.layers.size(); ++l) {
        REQUIRE(back.layers[l].height == path.layers[l].height);
        REQUIRE(back.layers[l].hatches.size() == path.layers[l].hatches.size());
        REQUIRE(back.layers[l].polylines.size() == path.layers[l].polylines.size());
        for (std::size_t h = 0; h < path.layers[l].hatches.size(); ++h) {
          REQUIRE(back.layers[l].hatches[h].begin == path.layers[l].hatches[h].begin);
          REQUIRE(back.layers[l].hatches[h].end == path.layers[l].hatches[h].end);
        }
      }
    }
  }

  SECTION("canonical output is byte-stable") {
    LaserPath path = random_alternating_hatch_path(rng, 5);
    const std::string once = serialize_cli(path);
    const std::string twice = serialize_cli(parse_cli(once));
    CHECK(once == twice);
  }
}

TEST_CASE("discretize splits entities into step-length subsegments") {
  DiscretePath dp(0.96, 100.0, 200.0);

  SECTION("a 0.96 mm hatch at 100 mm/s is one subsegment of 9.6e-3 s") {
    dp.discretize(Hatch{{0, 0}, {0.96, 0}});
    REQUIRE(dp.subsegments().size() == 1);
    CHECK(dp.subsegments()[0].dt == Catch::Approx(9.6e-3));
    CHECK(dp.scanning_time() == Catch::Approx(9.6e-3));
  }

  SECTION("a 2.0 mm segment splits into 0.96, 0.96, 0.08") {
    dp.discretize(Hatch{{0, 0}, {2.0, 0}});
    REQUIRE(dp.subsegments().size() == 3);
    CHECK(dp.subsegments()[0].length() == Catch::Approx(0.96));
    CHECK(dp.subsegments()[1].length() == Catch::Approx(0.96));
    CHECK(dp.subsegments()[2].length() == Catch::Approx(0.08));
  }

  SECTION("piece lengths sum to the entity length; every piece <= step length") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int trial = 0; trial < 200; ++trial) {
      Vec2 a{u(rng), u(rng)}, b{u(rng), u(rng)};
      if (norm(b - a) < 1e-6) continue;
      dp.discretize(Hatch{a, b});
      double sum = 0.0;
      for (const auto& s : dp.subsegments()) {
        sum += s.length();
        REQUIRE(s.length() <= 0.96 * (1 + 1e-12));
        REQUIRE(s.dt == s.length() / 100.0);
      }
      REQUIRE(sum == Catch::Approx(norm(b - a)).epsilon(1e-12));
      REQUIRE(dp.scanning_time() == Catch::Approx(norm(b - a) / 100.0).epsilon(1e-12));
    }
  }

  SECTION("a collinear 3-point polyline covers the total length") {
    Polyline poly;
    poly.points = {{0, 0}, {1.0, 0}, {2.5, 0}};
    dp.discretize(poly);
    double sum = 0.0;
    for (const auto& s : dp.subsegments()) sum += s.length();
    CHECK(sum == Catch::Approx(2.5));
  }

  SECTION("zero-length entities are an error") {
    Polyline poly;
    poly.points = {{1, 1}};
    CHECK_THROWS_AS(dp.discretize(poly), InvalidArgument);
  }

  SECTION("invalid construction parameters") {
    CHECK_THROWS_AS(DiscretePath(0.0, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(DiscretePath(1, 0.0, 1), InvalidArgument);
  }
}

TEST_CASE("relocation_time is distance over relocation speed") {
  CHECK(relocation_time({1, 1}, {1, 1}, 200.0) == 0.0);
  CHECK(relocation_time({0, 0}, {4, 0}, 200.0) == Catch::Approx(0.02));
  CHECK_THROWS_AS(relocation_time({0, 0}, {1, 0}, 0.0), InvalidArgument);
}
