#include "helpers.hpp"
#include "io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace blpnp;
using namespace blpnp::test;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("blpnp_io_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const char* kDraws =
    "market_id,consumer_id,nu_1,nu_2\n"
    "1,1,0.5,-0.2\n"
    "1,2,-1.0,0.3\n"
    "2,1,0.1,0.9\n"
    "2,2,1.2,-0.4\n";

std::string message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("dataset round trip") {
  TempDir dir;
  std::mt19937_64 g(50);
  const RandomData rd = random_dataset(g, 4, 3, 3, 6, 2, 4, 1.0);
  save_dataset(rd.data, dir.file("p.csv"), dir.file("d.csv"));
  const MarketDataset back = load_dataset(dir.file("p.csv"), dir.file("d.csv"));
  CHECK(back.markets() == 4);
  CHECK(back.products() == 3);
  CHECK(back.draws() == 6);
  CHECK(back.demographics() == 2);
  CHECK(back.x() == rd.data.x());
  CHECK(back.z() == rd.data.z());
  CHECK(back.shares() == rd.data.shares());
  CHECK(back.nu() == rd.data.nu());
  CHECK(back.demo() == rd.data.demo());

  SUBCASE("simulated data") {
    const GeneratedData gd = small_dgp(6, 3, 20, 4);
    save_dataset(gd.data, dir.file("g.csv"), dir.file("gd.csv"));
    const MarketDataset b = load_dataset(dir.file("g.csv"), dir.file("gd.csv"));
    CHECK(b.z() == gd.data.z());
    CHECK(b.shares() == gd.data.shares());
    CHECK(b.x() == gd.data.x());
  }
}

TEST_CASE("schema and invariant violations name their location") {
  TempDir dir;
  const std::string draws = dir.file("d.csv");
  write(draws, kDraws);
  const std::string good =
      "market_id,product_id,share,x_1,x_2,z_1,z_2\n"
      "1,a,0.2,1,0.5,1,0.3\n"
      "1,b,0.3,1,-0.5,1,0.1\n"
      "2,a,0.1,1,0.7,1,0.2\n"
      "2,b,0.4,1,0.2,1,0.8\n";
  const std::string prod = dir.file("p.csv");
  write(prod, good);
  CHECK(load_dataset(prod, draws).observations() == 4);

  SUBCASE("missing share column") {
    write(prod, "market_id,product_id,x_1,x_2,z_1,z_2\n1,a,1,0.5,1,0.3\n");
    const std::string msg = message([&] { load_dataset(prod, draws); });
    CHECK(msg.find("missing required column 'share'") != std::string::npos);
  }
  SUBCASE("zero share") {
    write(prod, "market_id,product_id,share,x_1,x_2,z_1,z_2\n1,a,0.2,1,0.5,1,0.3\n1,b,0,1,-0.5,1,0.1\n"
                "2,a,0.1,1,0.7,1,0.2\n2,b,0.4,1,0.2,1,0.8\n");
    const std::string msg = message([&] { load_dataset(prod, draws); });
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("'share'") != std::string::npos);
  }
  SUBCASE("inside shares sum to one") {
    write(prod, "market_id,product_id,share,x_1,x_2,z_1,z_2\n1,a,0.2,1,0.5,1,0.3\n1,b,0.3,1,-0.5,1,0.1\n"
                "2,a,0.6,1,0.7,1,0.2\n2,b,0.4,1,0.2,1,0.8\n");
    const std::string msg = message([&] { load_dataset(prod, draws); });
    CHECK(msg.find("market '2'") != std::string::npos);
    CHECK(msg.find("outside share must be positive") != std::string::npos);
  }
  SUBCASE("non-numeric value") {
    write(prod, "market_id,product_id,share,x_1,x_2,z_1,z_2\n1,a,0.2,1,abc,1,0.3\n1,b,0.3,1,-0.5,1,0.1\n"
                "2,a,0.1,1,0.7,1,0.2\n2,b,0.4,1,0.2,1,0.8\n");
    const std::string msg = message([&] { load_dataset(prod, draws); });
    CHECK(msg.find("line 2, column 'x_2'") != std::string::npos);
  }
  SUBCASE("unbalanced markets") {
    write(prod, "market_id,product_id,share,x_1,x_2,z_1,z_2\n1,a,0.2,1,0.5,1,0.3\n1,b,0.3,1,-0.5,1,0.1\n"
                "2,a,0.1,1,0.7,1,0.2\n");
    CHECK(message([&] { load_dataset(prod, draws); }).find("market '2' has 1 products") != std::string::npos);
  }
  SUBCASE("draw columns must match characteristics") {
    write(draws, "market_id,consumer_id,nu_1\n1,1,0.5\n2,1,0.1\n");
    CHECK(message([&] { load_dataset(prod, draws); }).find("1 nu columns") != std::string::npos);
  }
  SUBCASE("missing file") {
    CHECK(message([&] { load_dataset(dir.file("none.csv"), draws); }).find("cannot open") != std::string::npos);
  }
}

TEST_CASE("run settings") {
  RunSettings s;
  apply_setting(s, "tol_outer", "1e-7");
  apply_setting(s, "max_outer", "50");
  apply_setting(s, "weight", "identity");
  apply_setting(s, "variance", "outer-product");
  apply_setting(s, "newton_outer", "false");
  CHECK(s.solver.tol_outer == 1e-7);
  CHECK(s.solver.max_outer == 50);
  CHECK(s.weight == WeightKind::Identity);
  CHECK(s.variance == OmegaKind::OuterProduct);
  CHECK(!s.solver.newton_outer);
  CHECK_THROWS_AS(apply_setting(s, "tol_outr", "1"), InputError);
  CHECK_THROWS_AS(apply_setting(s, "max_outer", "ten"), InputError);
  CHECK_THROWS_AS(apply_setting(s, "tol_outer", "nan"), InputError);

  TempDir dir;
  write(dir.file("c.cfg"), "# solver\nstarts = 3\n\ngrad_tol=1e-9  # tighter\n");
  load_config(s, dir.file("c.cfg"));
  CHECK(s.solver.n_starts == 3);
  CHECK(s.solver.inner.grad_tol == 1e-9);
  write(dir.file("bad.cfg"), "starts 3\n");
  CHECK(message([&] { load_config(s, dir.file("bad.cfg")); }).find("line 1") != std::string::npos);
}
