#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "mmfc/dataset.hpp"
#include "mmfc/error.hpp"

using namespace mmfc;
using mmfc::test::var;

namespace {

Schema four_level_schema() {
  return {var("a", VariableKind::ordinal, 4, VariableGroup::focus),
          var("b", VariableKind::nominal, 3, VariableGroup::remainder)};
}

}  // namespace

TEST_CASE("three-row file with one NA has exactly one masked cell") {
  std::istringstream in("a,b\n1,2\nNA,3\n4,1\n");
  const Dataset d = read_dataset(in, four_level_schema());
  CHECK(d.n() == 3);
  CHECK(d.missing_count() == 1);
  CHECK(d.missing(1, d.column("a")));
}

TEST_CASE("empty cell counts as missing") {
  std::istringstream in("a,b\n1,\n2,3\n");
  const Dataset d = read_dataset(in, four_level_schema());
  CHECK(d.missing_count() == 1);
  CHECK(d.missing(0, d.column("b")));
}

TEST_CASE("code above the level count is rejected with row and column") {
  std::istringstream in("a,b\n5,1\n");
  try {
    (void)read_dataset(in, four_level_schema());
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("'a'") != std::string::npos);
  }
}

TEST_CASE("fully observed file") {
  std::istringstream in("b,a\n1,1\n2,2\n3,4\n2,3\n");
  const Dataset d = read_dataset(in, four_level_schema());
  CHECK(d.n() == 4);
  CHECK(d.complete());
  CHECK(d.value(2, d.column("a")) == 4);
}

TEST_CASE("malformed files") {
  const auto schema = four_level_schema();
  auto load = [&](const std::string& text) {
    std::istringstream in(text);
    return read_dataset(in, schema);
  };
  CHECK_THROWS_AS(load("a,b,c\n1,1,1\n"), ValidationError);  // unknown column
  CHECK_THROWS_AS(load("a\n1\n"), ValidationError);          // schema column absent
  CHECK_THROWS_AS(load("a,a\n1,1\n"), ValidationError);      // duplicate
  CHECK_THROWS_AS(load("a,b\n1.5,1\n"), ValidationError);    // non-integer
  CHECK_THROWS_AS(load("a,b\nx,1\n"), ValidationError);
  CHECK_THROWS_AS(load("a,b\n0,1\n"), ValidationError);      // codes are 1-based
  CHECK_THROWS_AS(load("a,b\n1\n"), ValidationError);        // short row
  CHECK_THROWS_AS(load("a,b\n"), ValidationError);           // n = 0
}

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(validate_schema({var("a", VariableKind::nominal, 1, VariableGroup::focus)}), ValidationError);
  CHECK_THROWS_AS(validate_schema({var("a", VariableKind::nominal, 2, VariableGroup::focus),
                                   var("a", VariableKind::nominal, 2, VariableGroup::focus)}),
                  ValidationError);
}

TEST_CASE("columns are stored canonically and round-trip through CSV") {
  const Schema schema{var("r1", VariableKind::nominal, 2, VariableGroup::remainder),
                      var("x1", VariableKind::nominal, 3, VariableGroup::focus),
                      var("y1", VariableKind::ordinal, 4, VariableGroup::focus),
                      var("r2", VariableKind::ordinal, 3, VariableGroup::remainder)};
  std::istringstream in("r1,x1,y1,r2\n1,2,3,NA\n2,,4,1\n");
  const Dataset d = read_dataset(in, schema);
  CHECK(d.schema()[0].name == "y1");
  CHECK(d.schema()[1].name == "x1");
  CHECK(d.schema()[2].name == "r1");
  CHECK(d.schema()[3].name == "r2");
  CHECK(d.original_order() == std::vector<std::string>{"r1", "x1", "y1", "r2"});

  std::ostringstream out;
  write_dataset(out, d);
  CHECK(out.str() == "y1,x1,r1,r2\n3,2,1,NA\n4,NA,2,1\n");
  std::istringstream back(out.str());
  CHECK(read_dataset(back, schema) == d);
}

TEST_CASE("few-focus partition sizes") {
  Schema schema;
  for (int j = 0; j < 2; ++j) schema.push_back(var("y" + std::to_string(j), VariableKind::ordinal, 3, VariableGroup::focus));
  for (int j = 0; j < 2; ++j) schema.push_back(var("x" + std::to_string(j), VariableKind::nominal, 3, VariableGroup::focus));
  for (int j = 0; j < 8; ++j) {
    schema.push_back(var("b" + std::to_string(j), j % 2 ? VariableKind::ordinal : VariableKind::nominal, 3,
                         VariableGroup::remainder));
  }
  const auto view = partition(canonical_schema(schema));
  CHECK(view.p_ordinal() == 2);
  CHECK(view.p_focus() == 4);
  CHECK(view.p() == 12);
  CHECK(view.remainder.size() == 8);
}

TEST_CASE("all-focus schema has an empty remainder; MM-Mix moves remainder into focus") {
  const Schema all_focus{var("y", VariableKind::ordinal, 3, VariableGroup::focus),
                         var("x", VariableKind::nominal, 2, VariableGroup::focus)};
  CHECK(partition(all_focus).remainder.empty());

  const auto schema = canonical_schema(mmfc::test::small_schema());
  const auto mix = partition(schema, ModelKind::mmmix);
  CHECK(mix.remainder.empty());
  CHECK(mix.p_focus() == 4);
}

TEST_CASE("remainder-only schema is rejected") {
  const Schema schema{var("b", VariableKind::nominal, 2, VariableGroup::remainder)};
  CHECK_THROWS_AS(partition(schema), ValidationError);
}

TEST_CASE("partition index sets are disjoint and cover every column") {
  const Schema schema = canonical_schema(mmfc::test::small_schema());
  for (auto kind : {ModelKind::mmfc, ModelKind::mmmix}) {
    const auto v = partition(schema, kind);
    std::set<std::size_t> all;
    for (const auto* s : {&v.ordinal_focus, &v.nominal_focus, &v.remainder}) all.insert(s->begin(), s->end());
    CHECK(all.size() == v.p());
    CHECK(v.p() == schema.size());
    // canonical order: the index sets are consecutive ranges
    std::vector<std::size_t> seq = v.ordinal_focus;
    seq.insert(seq.end(), v.nominal_focus.begin(), v.nominal_focus.end());
    seq.insert(seq.end(), v.remainder.begin(), v.remainder.end());
    CHECK(std::is_sorted(seq.begin(), seq.end()));
  }
}

TEST_CASE("schema JSON round trip") {
  const Schema schema = mmfc::test::small_schema();
  const nlohmann::json j = schema;
  CHECK(j.get<Schema>() == schema);
}
