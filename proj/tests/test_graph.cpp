#include <doctest.h>

#include "helpers.hpp"
#include "overmind/graph.hpp"

using namespace overmind;

TEST_CASE("parse the single-node corpus graph") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("elemadd.json")));
  REQUIRE(g.nodes.size() == 1);
  CHECK(g.nodes[0].kind == graph::OpKind::ElemAdd);
  CHECK(g.tensors.at("z").shape == std::vector<std::size_t>{4, 8});
  CHECK(g.tensors.at("z").strides == std::vector<std::size_t>{8, 1});
  CHECK(g.tensors.at("z").byte_size() == 128);
  CHECK(g.inputs == std::vector<std::string>{"x", "y"});
}

TEST_CASE("serialize -> parse round trip is stable") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("mixed.json")));
  std::string s1 = graph::serialize_graph(g);
  auto g2 = graph::parse_graph(s1);
  CHECK(graph::serialize_graph(g2) == s1);
  CHECK(g2.nodes.size() == g.nodes.size());
}

TEST_CASE("unknown operator kind is rejected with its name") {
  const char* doc = R"({"tensors":[{"id":"x","shape":[2]}],
    "nodes":[{"id":"n","kind":"Transmogrify","inputs":["x"],"output":"x"}]})";
  CHECK_THROWS_AS(graph::parse_graph(doc), UnknownOperator);
}

TEST_CASE("shape validation: MatMul inner-dimension mismatch") {
  const char* doc = R"({"tensors":[{"id":"a","shape":[2,3]},{"id":"b","shape":[4,2]},
    {"id":"c","shape":[2,2]}],
    "nodes":[{"id":"n","kind":"MatMul","inputs":["a","b"],"output":"c"}],
    "inputs":["a","b"],"outputs":["c"]})";
  CHECK_THROWS_AS(graph::parse_graph(doc), ParseError);
}

TEST_CASE("arity errors carry a field path") {
  const char* doc = R"({"tensors":[{"id":"a","shape":[2]},{"id":"c","shape":[2]}],
    "nodes":[{"id":"n","kind":"ElemAdd","inputs":["a"],"output":"c"}],
    "inputs":["a"],"outputs":["c"]})";
  try {
    graph::parse_graph(doc);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("nodes[0].inputs") != std::string::npos);
  }
}

TEST_CASE("undeclared input tensors are flagged with an index path") {
  const char* doc = R"({"tensors":[{"id":"a","shape":[2]},{"id":"c","shape":[2]}],
    "nodes":[{"id":"n","kind":"ElemAdd","inputs":["a","ghost"],"output":"c"}],
    "inputs":["a"],"outputs":["c"]})";
  try {
    graph::parse_graph(doc);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("inputs[1]") != std::string::npos);
  }
}

TEST_CASE("multiple producers for one tensor are rejected") {
  const char* doc = R"({"tensors":[{"id":"a","shape":[2]},{"id":"b","shape":[2]},
    {"id":"c","shape":[2]}],
    "nodes":[{"id":"n1","kind":"ElemAdd","inputs":["a","b"],"output":"c"},
             {"id":"n2","kind":"ElemMul","inputs":["a","b"],"output":"c"}],
    "inputs":["a","b"],"outputs":["c"]})";
  CHECK_THROWS_AS(graph::parse_graph(doc), ParseError);
}

TEST_CASE("cyclic dataflow is detected during ordering") {
  const char* doc = R"({"tensors":[{"id":"x","shape":[2]},{"id":"t1","shape":[2]},
    {"id":"t2","shape":[2]}],
    "nodes":[{"id":"n1","kind":"ElemAdd","inputs":["x","t2"],"output":"t1"},
             {"id":"n2","kind":"ElemAdd","inputs":["t1","x"],"output":"t2"}],
    "inputs":["x"],"outputs":["t2"]})";
  auto g = graph::parse_graph(doc);
  CHECK_THROWS_AS(graph::topo_order(g), CyclicGraph);
}

TEST_CASE("topological order respects dependencies deterministically") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("alternating6.json")));
  auto order = graph::topo_order(g);
  REQUIRE(order.size() == 6);
  for (std::size_t i = 0; i < order.size(); ++i)
    CHECK(order[i]->id == "l" + std::to_string(i + 1));
}

TEST_CASE("CircularConv requires matching N") {
  const char* doc = R"({"tensors":[{"id":"a","shape":[8]},{"id":"b","shape":[8]},
    {"id":"c","shape":[8]}],
    "nodes":[{"id":"n","kind":"CircularConv","inputs":["a","b"],"output":"c",
              "attrs":{"N":16}}],
    "inputs":["a","b"],"outputs":["c"]})";
  CHECK_THROWS_AS(graph::parse_graph(doc), ParseError);
}

TEST_CASE("op estimates: MatMul is M*K*N, CircularConv is N^2") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("alternating6.json")));
  for (const auto& n : g.nodes) {
    if (n.kind == graph::OpKind::MatMul) CHECK(graph::node_op_estimate(g, n) == 8 * 8 * 8);
    if (n.kind == graph::OpKind::CircularConv) CHECK(graph::node_op_estimate(g, n) == 64 * 64);
  }
}

TEST_CASE("workload profile axes each sum to 100 percent") {
  for (const char* f : {"alternating6.json", "mixed.json", "nvsa_like.json"}) {
    auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path(f)));
    auto w = graph::profile(g);
    CHECK(w.linear_pct + w.nonlinear_pct == doctest::Approx(100.0));
    CHECK(w.neural_pct + w.symbolic_pct == doctest::Approx(100.0));
  }
}

TEST_CASE("the retrieval-heavy corpus graph skews symbolic") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("nvsa_like.json")));
  auto w = graph::profile(g);
  CHECK(w.symbolic_pct > w.neural_pct);
}
