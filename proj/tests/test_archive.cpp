#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "poms/archive.hpp"
#include "poms/rng.hpp"

using namespace poms;

namespace {

GridSpec grid_2d(double lo0, double hi0, std::size_t bins0, double lo1, double hi1,
                 std::size_t bins1) {
  GridSpec g;
  g.dims = {GridDim{GridDim::Kind::continuous, lo0, hi0, bins0},
            GridDim{GridDim::Kind::continuous, lo1, hi1, bins1}};
  return g;
}

ParamVector tagged_params(double tag) {
  ParamVector pv;
  pv.shape.input_dim = 1;
  pv.shape.output_dim = 1;
  pv.values = {tag, 0.0};
  return pv;
}

}  // namespace

TEST_CASE("bd_to_cell bins uniformly with boundary clipping") {
  GridSpec g;
  g.dims = {GridDim{GridDim::Kind::continuous, 0.0, 10.0, 5}};
  CHECK(bd_to_cell(std::vector<double>{0.0}, g) == std::vector<std::size_t>{0});
  CHECK(bd_to_cell(std::vector<double>{1.99}, g) == std::vector<std::size_t>{0});
  CHECK(bd_to_cell(std::vector<double>{2.0}, g) == std::vector<std::size_t>{1});
  CHECK(bd_to_cell(std::vector<double>{4.9}, g) == std::vector<std::size_t>{2});
  CHECK(bd_to_cell(std::vector<double>{9.99}, g) == std::vector<std::size_t>{4});
  // the upper edge and anything beyond it land in the last bin
  CHECK(bd_to_cell(std::vector<double>{10.0}, g) == std::vector<std::size_t>{4});
  CHECK(bd_to_cell(std::vector<double>{1e9}, g) == std::vector<std::size_t>{4});
  CHECK(bd_to_cell(std::vector<double>{-1e9}, g) == std::vector<std::size_t>{0});
}

TEST_CASE("bd_to_cell rounds categorical dimensions to the nearest category") {
  GridSpec g;
  g.dims = {GridDim{GridDim::Kind::categorical, 0.0, 0.0, 4}};
  CHECK(bd_to_cell(std::vector<double>{0.2}, g) == std::vector<std::size_t>{0});
  CHECK(bd_to_cell(std::vector<double>{1.6}, g) == std::vector<std::size_t>{2});
  CHECK(bd_to_cell(std::vector<double>{7.0}, g) == std::vector<std::size_t>{3});
  CHECK(bd_to_cell(std::vector<double>{-3.0}, g) == std::vector<std::size_t>{0});
}

TEST_CASE("bd_to_cell validates its descriptor") {
  GridSpec g = grid_2d(0, 1, 4, 0, 1, 4);
  CHECK_THROWS_AS(bd_to_cell(std::vector<double>{0.5}, g), DimensionMismatch);
  CHECK_THROWS_AS(bd_to_cell(std::vector<double>{0.5, std::nan("")}, g), NonFiniteDescriptor);
}

TEST_CASE("flat_index is row-major over the grid dimensions") {
  Archive archive(grid_2d(0, 1, 3, 0, 1, 5));
  CHECK(archive.flat_index(std::vector<std::size_t>{0, 0}) == 0);
  CHECK(archive.flat_index(std::vector<std::size_t>{0, 4}) == 4);
  CHECK(archive.flat_index(std::vector<std::size_t>{1, 0}) == 5);
  CHECK(archive.flat_index(std::vector<std::size_t>{2, 4}) == 14);
  CHECK(archive.grid().total_cells() == 15);
}

TEST_CASE("insert fills vacant cells unconditionally") {
  Archive archive(grid_2d(0, 1, 2, 0, 1, 2));
  Rng rng(1);
  const auto bd = make_descriptor({0.1, 0.1}, archive.grid());
  const auto out = archive.insert(tagged_params(1.0), bd, 7, rng);
  CHECK(out.inserted);
  CHECK_FALSE(out.was_occupied);
  CHECK(archive.occupied_count() == 1);
  const auto& cell = archive.cell_at(archive.flat_index(bd.cell));
  REQUIRE(cell.has_value());
  CHECK(cell->params.values[0] == 1.0);
  CHECK(cell->eval_index == 7);
  CHECK(cell->bd_raw == std::vector<double>{0.1, 0.1});
}

TEST_CASE("conflicts replace the occupant with probability one half") {
  Rng rng(2024);
  const std::size_t trials = 10000;
  std::size_t replaced = 0;
  Archive archive(grid_2d(0, 1, 1, 0, 1, 1));  // single cell
  const auto bd = make_descriptor({0.5, 0.5}, archive.grid());
  archive.insert(tagged_params(0.0), bd, 0, rng);
  for (std::size_t t = 0; t < trials; ++t) {
    const double tag = static_cast<double>(t + 1);
    const auto out = archive.insert(tagged_params(tag), bd, t + 1, rng);
    CHECK(out.was_occupied);
    const bool now_holds = archive.cell_at(0)->params.values[0] == tag;
    CHECK(out.inserted == now_holds);
    if (out.inserted) ++replaced;
  }
  // binomial(10000, 1/2): 3-sigma band is +-150
  CHECK(std::abs(static_cast<double>(replaced) - 5000.0) < 150.0);
  CHECK(archive.occupied_count() == 1);  // conflicts never change occupancy
}

TEST_CASE("coverage counts occupied cells over total cells and never decreases") {
  Archive archive(grid_2d(0, 1, 4, 0, 1, 4));
  Rng rng(5);
  CHECK(archive.coverage() == 0.0);
  double last = 0.0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> raw{rng.uniform01(), rng.uniform01()};
    archive.insert(tagged_params(static_cast<double>(t)), make_descriptor(raw, archive.grid()),
                   static_cast<std::size_t>(t), rng);
    CHECK(archive.coverage() >= last);
    last = archive.coverage();
  }
  CHECK(archive.coverage() == 1.0);  // 200 uniform draws fill 16 cells w.h.p.
  CHECK(archive.occupied_count() == 16);
}

TEST_CASE("sample draws occupants approximately uniformly") {
  Archive archive(grid_2d(0, 1, 4, 0, 1, 1));
  Rng rng(9);
  for (int c = 0; c < 4; ++c) {
    const double center = 0.125 + 0.25 * c;
    archive.insert(tagged_params(static_cast<double>(c)),
                   make_descriptor({center, 0.5}, archive.grid()),
                   static_cast<std::size_t>(c), rng);
  }
  std::map<double, std::size_t> counts;
  const std::size_t draws = 40000;
  for (std::size_t t = 0; t < draws; ++t) counts[archive.sample(rng).values[0]] += 1;
  REQUIRE(counts.size() == 4);
  for (const auto& [tag, n] : counts) {
    // binomial(40000, 1/4): 4-sigma band
    CHECK(std::abs(static_cast<double>(n) - 10000.0) < 4.0 * std::sqrt(40000 * 0.25 * 0.75));
  }
  const auto batch = archive.sample_batch(10, rng);
  CHECK(batch.size() == 10);
}

TEST_CASE("sample on an empty archive throws") {
  Archive archive(grid_2d(0, 1, 2, 0, 1, 2));
  Rng rng(3);
  CHECK_THROWS_AS(archive.sample(rng), EmptyArchive);
}

TEST_CASE("collection and for_each visit occupants in cell-index order") {
  Archive archive(grid_2d(0, 1, 3, 0, 1, 3));
  Rng rng(6);
  // insert out of order
  archive.insert(tagged_params(22.0), make_descriptor({0.9, 0.9}, archive.grid()), 0, rng);
  archive.insert(tagged_params(0.0), make_descriptor({0.1, 0.1}, archive.grid()), 1, rng);
  archive.insert(tagged_params(11.0), make_descriptor({0.5, 0.5}, archive.grid()), 2, rng);
  const auto coll = archive.collection();
  REQUIRE(coll.size() == 3);
  CHECK(coll[0][0] == 0.0);
  CHECK(coll[1][0] == 11.0);
  CHECK(coll[2][0] == 22.0);
  std::vector<std::size_t> visited;
  archive.for_each([&](std::size_t flat, const Archive::Cell&) { visited.push_back(flat); });
  CHECK(visited == std::vector<std::size_t>{0, 4, 8});
}

TEST_CASE("a 50x20 grid indexes like the kicker's behaviour space") {
  GridSpec g = grid_2d(0.0, 50.0, 50, 0.0, 8.0, 20);
  CHECK(g.total_cells() == 1000);
  // bin width 1.0 in x, 0.4 in y
  CHECK(bd_to_cell(std::vector<double>{0.5, 0.1}, g) == std::vector<std::size_t>{0, 0});
  CHECK(bd_to_cell(std::vector<double>{49.999, 7.999}, g) == std::vector<std::size_t>{49, 19});
  CHECK(bd_to_cell(std::vector<double>{25.0, 4.0}, g) == std::vector<std::size_t>{25, 10});
}
