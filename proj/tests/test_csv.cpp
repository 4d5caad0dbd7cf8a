#include <catch2/catch_amalgamated.hpp>

#include "cputs/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

using namespace cputs;
using Catch::Approx;

namespace {

struct TempCsv
{
  std::string path;
  explicit TempCsv(const std::string& name, const std::string& content)
      : path("cputs_test_" + name + ".csv")
  {
    std::ofstream out(path);
    out << content;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("load_csv reads covariates and a response column")
{
  const TempCsv f("happy",
                  "x1,x2,y\n"
                  "1.0,2.0,3.0\n"
                  "4.0,5.0,6.0\n"
                  "7.5,-1.5,0.25\n");
  const Dataset ds = load_csv(f.path, "y");
  REQUIRE(ds.has_response());
  REQUIRE(ds.covariate_names == std::vector<std::string>{"x1", "x2"});
  REQUIRE(ds.X.rows() == 3);
  REQUIRE(ds.X.cols() == 2);
  REQUIRE(ds.X(1, 1) == Approx(5.0));
  REQUIRE(ds.y[2] == Approx(0.25));
  REQUIRE(ds.labeled_count() == 3);
  REQUIRE(ds.dropped_rows == 0);
}

TEST_CASE("load_csv without a response name yields covariates only")
{
  const TempCsv f("noresp", "a,b\n1,2\n3,4\n");
  const Dataset ds = load_csv(f.path);
  REQUIRE_FALSE(ds.has_response());
  REQUIRE(ds.X.cols() == 2);
  REQUIRE(ds.labeled_count() == 0);
}

TEST_CASE("malformed rows are dropped and counted")
{
  const TempCsv f("bad",
                  "x,y\n"
                  "1.0,2.0\n"
                  "oops,3.0\n"
                  "4.0\n"
                  "5.0,6.0\n");
  const Dataset ds = load_csv(f.path, "y");
  REQUIRE(ds.X.rows() == 2);
  REQUIRE(ds.dropped_rows == 2); // bad cell and short row
  REQUIRE(ds.y[1] == Approx(6.0));
}

TEST_CASE("missing responses drop rows unless partial labels are allowed")
{
  const std::string body =
      "x,y\n"
      "1.0,2.0\n"
      "3.0,\n"
      "5.0,6.0\n";
  const TempCsv f("partial", body);

  const Dataset strict = load_csv(f.path, "y", false);
  REQUIRE(strict.X.rows() == 2);
  REQUIRE(strict.dropped_rows == 1);

  const Dataset partial = load_csv(f.path, "y", true);
  REQUIRE(partial.X.rows() == 3);
  REQUIRE(partial.labeled_count() == 2);
  REQUIRE(std::isnan(partial.y[1]));
  REQUIRE(partial.labeled_X().rows() == 2);
  REQUIRE(partial.unlabeled_X().rows() == 1);
  REQUIRE(partial.unlabeled_X()(0, 0) == Approx(3.0));
  REQUIRE(partial.labeled_y()[1] == Approx(6.0));
}

TEST_CASE("windows line endings and blank lines are tolerated")
{
  const TempCsv f("crlf", "x,y\r\n1.0,2.0\r\n\r\n3.0,4.0\r\n");
  const Dataset ds = load_csv(f.path, "y");
  REQUIRE(ds.X.rows() == 2);
  REQUIRE(ds.y[1] == Approx(4.0));
}

TEST_CASE("header and path errors are reported")
{
  REQUIRE_THROWS_AS(load_csv("definitely_missing_file.csv"), std::invalid_argument);

  const TempCsv empty("empty", "");
  REQUIRE_THROWS_AS(load_csv(empty.path), std::invalid_argument);

  const TempCsv numeric_header("numhead", "1,2\n3,4\n");
  REQUIRE_THROWS_AS(load_csv(numeric_header.path), std::invalid_argument);

  const TempCsv ok("okd", "x,y\n1,2\n");
  REQUIRE_THROWS_AS(load_csv(ok.path, "z"), std::invalid_argument);

  const TempCsv no_rows("norows", "x,y\nbad,row\n");
  REQUIRE_THROWS_AS(load_csv(no_rows.path, "y"), std::invalid_argument);
}

TEST_CASE("load_csv_maybe_response falls back to covariates-only")
{
  const TempCsv with("maybe1", "x,y\n1,2\n3,4\n");
  const Dataset a = load_csv_maybe_response(with.path, "y");
  REQUIRE(a.has_response());
  REQUIRE(a.labeled_count() == 2);

  const TempCsv without("maybe2", "x1,x2\n1,2\n3,4\n");
  const Dataset b = load_csv_maybe_response(without.path, "y");
  REQUIRE_FALSE(b.has_response());
  REQUIRE(b.X.cols() == 2);
}
