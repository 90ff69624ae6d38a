#include "doctest.h"

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sckls/errors.hpp"
#include "sckls/estimators.hpp"
#include "sckls/grid.hpp"
#include "sckls/io.hpp"
#include "sckls/rng.hpp"

using namespace sckls;

namespace {

std::filesystem::path io_scratch() {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() / "sckls_io_tests";
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

std::string scratch_file(const std::string& name, const std::string& content) {
  const std::string path = (io_scratch() / name).string();
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

bool same_bits(double a, double b) {
  std::uint64_t ua, ub;
  std::memcpy(&ua, &a, 8);
  std::memcpy(&ub, &b, 8);
  return ua == ub;
}

bool message_contains(const std::exception& e, const std::string& needle) {
  return std::string(e.what()).find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("csv parsing accepts plain numeric tables") {
  const DataTable t = parse_csv("x1, x2,y\r\n1.0,2.5,3\n-1e2,+4,.5\n");
  REQUIRE(t.columns == std::vector<std::string>{"x1", "x2", "y"});
  REQUIRE(t.values.rows() == 2);
  CHECK(t.values(0, 0) == 1.0);
  CHECK(t.values(0, 1) == 2.5);
  CHECK(t.values(0, 2) == 3.0);
  CHECK(t.values(1, 0) == -100.0);
  CHECK(t.values(1, 1) == 4.0);
  CHECK(t.values(1, 2) == 0.5);
  CHECK(t.find("x2") == 1);
  CHECK(t.find("absent") == -1);

  // Comment lines vanish wherever they appear; a missing final newline is fine.
  const DataTable c = parse_csv("# metadata\nx,y\n1,2\n  # interior\n3,4");
  CHECK(c.values.rows() == 2);
  CHECK(c.values(1, 1) == 4.0);
}

TEST_CASE("csv parsing rejects malformed input with located errors") {
  CHECK_THROWS_AS(parse_csv(""), DataError);
  CHECK_THROWS_AS(parse_csv("# only comments\n"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,x\n1,2\n"), doctest::Contains("duplicate column"),
                       DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,\n1,2\n"), doctest::Contains("header column 2"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1.0\n"), doctest::Contains("row 2 has 1 cells"),
                       DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1.0,\n"), doctest::Contains("missing value"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1.0,abc\n"), doctest::Contains("cannot parse"),
                       DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1.0,2.0e\n"), doctest::Contains("cannot parse"),
                       DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1.0,inf\n"), doctest::Contains("non-finite"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1.0,nan\n"), doctest::Contains("non-finite"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1.0,+-4\n"), doctest::Contains("cannot parse"),
                       DataError);

  // A locale-style decimal comma splits the token, so the row width is wrong.
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1,5,2.0\n"), doctest::Contains("row 2 has 3 cells"),
                       DataError);
  CHECK_THROWS_WITH_AS(parse_csv("x\n1,5\n"), doctest::Contains("row 2 has 2 cells"), DataError);

  // The error names the originating file.
  try {
    parse_csv("x\nbad\n", "input.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(message_contains(e, "input.csv"));
    CHECK(message_contains(e, "row 2"));
  }
}

TEST_CASE("round-trip formatting preserves doubles exactly") {
  const std::vector<double> cases = {0.0,
                                     -0.0,
                                     1.0 / 3.0,
                                     0.1,
                                     -1e-300,
                                     5e-324,
                                     1.7976931348623157e308,
                                     123456.789012345678,
                                     3.141592653589793,
                                     -2.2250738585072014e-308};
  for (double v : cases) {
    const std::string s = format_double(v);
    double back = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), back);
    REQUIRE(ec == std::errc());
    REQUIRE(p == s.data() + s.size());
    CHECK(same_bits(v, back));
  }
}

TEST_CASE("csv write and read round-trip a matrix bitwise") {
  rng::Stream s(777);
  Eigen::MatrixXd m(17, 3);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      m(i, j) = s.normal() * std::pow(10.0, s.uniform(-12.0, 12.0));
  const std::string path = (io_scratch() / "roundtrip.csv").string();
  write_csv(path, {"a", "b", "c"}, m);
  const DataTable t = read_csv(path);
  REQUIRE(t.columns == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.values.rows() == m.rows());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) CHECK(same_bits(t.values(i, j), m(i, j)));
}

TEST_CASE("content hashes match the published fnv-1a vectors") {
  CHECK(content_hash("") == "fnv1a64:cbf29ce484222325");
  CHECK(content_hash("a") == "fnv1a64:af63dc4c8601ec8c");
  CHECK(content_hash("foobar") == "fnv1a64:85944171f73967e8");
  const std::string path = scratch_file("hashme.bin", std::string("foo\0bar", 7) + "baz");
  CHECK(file_hash(path) == content_hash(std::string("foo\0bar", 7) + "baz"));
  CHECK(content_hash("x") != content_hash("y"));
}

TEST_CASE("column selection defaults to x1..xd and y") {
  DataTable t;
  t.columns = {"x2", "y", "x1", "extra", "z1"};
  t.values.resize(6, 5);
  for (int i = 0; i < 6; ++i) {
    t.values(i, 0) = 10.0 + i;  // x2
    t.values(i, 1) = 100.0 + i; // y
    t.values(i, 2) = 1.0 + i;   // x1
    t.values(i, 3) = -1.0;
    t.values(i, 4) = i % 2;     // z1
  }
  const LoadedData data = select_columns(t);
  REQUIRE(data.X.cols() == 2);
  CHECK(data.x_names == std::vector<std::string>{"x1", "x2"});
  CHECK(data.X(0, 0) == 1.0);
  CHECK(data.X(0, 1) == 10.0);
  CHECK(data.y[3] == 103.0);
  CHECK(data.Z.cols() == 0);

  const LoadedData named = select_columns(t, {"x2"}, "extra", {"z1"});
  CHECK(named.X(2, 0) == 12.0);
  CHECK(named.y[0] == -1.0);
  REQUIRE(named.Z.cols() == 1);
  CHECK(named.Z(1, 0) == 1.0);
}

TEST_CASE("column selection validates the frame") {
  DataTable t;
  t.columns = {"x1", "y"};
  t.values.resize(5, 2);
  for (int i = 0; i < 5; ++i) {
    t.values(i, 0) = i;
    t.values(i, 1) = 2 * i;
  }

  CHECK_THROWS_WITH_AS(select_columns(t, {"x9"}), doctest::Contains("\"x9\" not found"),
                       DataError);
  CHECK_THROWS_WITH_AS(select_columns(t, {"x1", "x1"}), doctest::Contains("selected twice"),
                       DataError);
  CHECK_THROWS_WITH_AS(select_columns(t, {"x1"}, "x1"), doctest::Contains("selected twice"),
                       DataError);

  DataTable no_x = t;
  no_x.columns = {"u", "y"};
  CHECK_THROWS_WITH_AS(select_columns(no_x), doctest::Contains("no input columns"), DataError);

  DataTable constant = t;
  constant.values.col(0).setConstant(4.0);
  CHECK_THROWS_WITH_AS(select_columns(constant), doctest::Contains("\"x1\" is constant"),
                       DataError);

  DataTable tiny = t;
  tiny.values.conservativeResize(2, 2);
  CHECK_THROWS_WITH_AS(select_columns(tiny), doctest::Contains("at least 3 rows"), DataError);
}

TEST_CASE("model files round-trip losslessly") {
  rng::Stream s(42);
  const int n = 16;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (int j = 0; j < n; ++j) {
    X(j, 0) = s.uniform(0.1, 2.0);
    y[j] = std::sqrt(X(j, 0)) + 0.05 * s.normal();
  }
  const EvalGrid grid = uniform_grid(X, {5});
  const HyperplaneModel model = sckls_fit(X, y, grid, BandwidthSpec::fixed(0.4, 1),
                                          KernelKind::Gaussian,
                                          ShapeSpec::concave_increasing(1));
  ModelProvenance prov;
  prov.tool_version = "9.9.9-test";
  prov.input_hash = "fnv1a64:0123456789abcdef";
  prov.seed = 0xDEADBEEFCAFEULL;
  prov.command = "fit --data \"quoted path.csv\" --seed 1";

  const std::string path = (io_scratch() / "model.json").string();
  save_model(path, model, prov);
  const LoadedModel back = load_model(path);

  CHECK(back.provenance.tool_version == prov.tool_version);
  CHECK(back.provenance.input_hash == prov.input_hash);
  CHECK(back.provenance.seed == prov.seed);
  CHECK(back.provenance.command == prov.command);

  const HyperplaneModel& m = back.model;
  REQUIRE(m.m() == model.m());
  REQUIRE(m.d() == 1);
  CHECK(m.shape.curvature == Curvature::Concave);
  CHECK(m.shape.monotonicity == std::vector<Monotone>{Monotone::Increasing});
  CHECK(m.kernel == KernelKind::Gaussian);
  CHECK(m.bandwidth.mode == BandwidthSpec::Mode::Fixed);
  CHECK(same_bits(m.bandwidth.h[0], 0.4));
  CHECK(m.grid.provenance == GridProvenance::Uniform);
  CHECK(m.grid.lattice_shape == model.grid.lattice_shape);
  CHECK(m.grid.cell_index == model.grid.cell_index);
  CHECK(same_bits(m.sse, model.sse));
  CHECK(m.diagnostics.status == model.diagnostics.status);
  CHECK(m.diagnostics.iterations == model.diagnostics.iterations);
  CHECK(m.diagnostics.rounds == model.diagnostics.rounds);
  CHECK(m.diagnostics.constraint_rows == model.diagnostics.constraint_rows);
  CHECK(m.diagnostics.polished == model.diagnostics.polished);
  CHECK(same_bits(m.diagnostics.qp_objective, model.diagnostics.qp_objective));
  CHECK(same_bits(m.diagnostics.kkt.stationarity, model.diagnostics.kkt.stationarity));
  for (int i = 0; i < model.m(); ++i) {
    CHECK(same_bits(m.a[i], model.a[i]));
    CHECK(same_bits(m.b(i, 0), model.b(i, 0)));
    CHECK(same_bits(m.grid.points(i, 0), model.grid.points(i, 0)));
  }

  // The reloaded model predicts bit-identically everywhere, inside and out.
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd p(1);
    p[0] = s.uniform(-0.5, 3.0);
    CHECK(same_bits(predict(m, p), predict(model, p)));
  }
}

TEST_CASE("knn and convexity metadata survive the model file") {
  Eigen::MatrixXd X(8, 2);
  rng::Stream s(7);
  for (int j = 0; j < 8; ++j) {
    X(j, 0) = s.uniform(0.0, 1.0);
    X(j, 1) = s.uniform(0.0, 1.0);
  }
  Eigen::VectorXd y = X.rowwise().squaredNorm();
  const EvalGrid grid = uniform_grid(X, {3, 3});
  const HyperplaneModel model =
      sckls_fit(X, y, grid, BandwidthSpec::knn(5), KernelKind::Epanechnikov,
                ShapeSpec::convex_only(2));
  const std::string path = (io_scratch() / "knn_model.json").string();
  save_model(path, model, ModelProvenance{"0", "none", 0, "test"});
  const LoadedModel back = load_model(path);
  CHECK(back.model.bandwidth.mode == BandwidthSpec::Mode::Knn);
  CHECK(back.model.bandwidth.k == 5);
  CHECK(back.model.kernel == KernelKind::Epanechnikov);
  CHECK(back.model.shape.curvature == Curvature::Convex);
  CHECK(back.model.shape.monotonicity ==
        std::vector<Monotone>{Monotone::Free, Monotone::Free});
  Eigen::VectorXd p(2);
  p << 0.4, 0.6;
  CHECK(same_bits(predict(back.model, p), predict(model, p)));
}

TEST_CASE("model parsing rejects malformed files") {
  CHECK_THROWS_WITH_AS(model_from_json("{not json"), doctest::Contains("not valid JSON"),
                       DataError);
  CHECK_THROWS_WITH_AS(model_from_json("{\"format\":\"other\",\"version\":1}"),
                       doctest::Contains("not a model file"), DataError);
  CHECK_THROWS_WITH_AS(model_from_json("{\"format\":\"sckls-model\",\"version\":2}"),
                       doctest::Contains("version 2"), DataError);

  // A valid file with one field knocked out names the missing field.
  Eigen::MatrixXd X(6, 1);
  X << 0, 1, 2, 3, 4, 5;
  Eigen::VectorXd y = X.col(0);
  const HyperplaneModel model =
      sckls_fit(X, y, uniform_grid(X, {3}), BandwidthSpec::fixed(1.5, 1),
                KernelKind::Gaussian, ShapeSpec::concave_increasing(1));
  std::string text = model_to_json(model, ModelProvenance{"0", "h", 1, "c"});
  const std::size_t at = text.find("\"a\":");
  REQUIRE(at != std::string::npos);
  std::string broken = text;
  broken.replace(at, 4, "\"A\":");
  CHECK_THROWS_WITH_AS(model_from_json(broken), doctest::Contains("missing field \"a\""),
                       DataError);

  // Inconsistent sizes are caught even when every field parses.
  std::string shrunk = text;
  const std::size_t ms = shrunk.find("\"monotonicity\": [");
  REQUIRE(ms != std::string::npos);
  const std::size_t me = shrunk.find(']', ms);
  shrunk.replace(ms, me - ms + 1, "\"monotonicity\": []");
  CHECK_THROWS_WITH_AS(model_from_json(shrunk), doctest::Contains("inconsistent"), DataError);

  CHECK_THROWS_AS(load_model((io_scratch() / "absent.json").string()), DataError);
}
