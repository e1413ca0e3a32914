#pragma once

// Diversity archive over a fixed behaviour grid. Every cell holds at most one
// policy; conflicts are resolved by a fair coin flip (there is no fitness).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poms/errors.hpp"
#include "poms/policy.hpp"
#include "poms/rng.hpp"

namespace poms {

struct GridDim {
  enum class Kind { continuous, categorical };
  Kind kind = Kind::continuous;
  double lower = 0.0;  // continuous only
  double upper = 1.0;  // continuous only
  std::size_t bins = 1;  // bin count, or category count for categorical dims
};

struct GridSpec {
  std::vector<GridDim> dims;

  std::size_t total_cells() const {
    std::size_t n = 1;
    for (const auto& d : dims) n *= d.bins;
    return n;
  }
};

struct BehaviourDescriptor {
  std::vector<double> raw;
  std::vector<std::size_t> cell;
};

// Maps a raw descriptor to integer cell coordinates. Continuous dimensions
// use uniform bins over [lower, upper]; out-of-range values are clipped into
// the boundary bins. Categorical dimensions round to the nearest category.
inline std::vector<std::size_t> bd_to_cell(std::span<const double> raw, const GridSpec& grid) {
  if (raw.size() != grid.dims.size())
    throw DimensionMismatch("bd_to_cell: descriptor length does not match grid");
  std::vector<std::size_t> cell(raw.size());
  for (std::size_t d = 0; d < raw.size(); ++d) {
    const auto& dim = grid.dims[d];
    const double v = raw[d];
    if (!std::isfinite(v)) throw NonFiniteDescriptor("bd_to_cell: non-finite descriptor");
    if (dim.kind == GridDim::Kind::categorical) {
      const auto k = static_cast<long long>(std::llround(v));
      const long long hi = static_cast<long long>(dim.bins) - 1;
      cell[d] = static_cast<std::size_t>(std::clamp(k, 0ll, hi));
      continue;
    }
    const double pos = (v - dim.lower) / (dim.upper - dim.lower) * static_cast<double>(dim.bins);
    const auto idx = static_cast<long long>(std::floor(pos));
    const long long hi = static_cast<long long>(dim.bins) - 1;
    cell[d] = static_cast<std::size_t>(std::clamp(idx, 0ll, hi));
  }
  return cell;
}

inline BehaviourDescriptor make_descriptor(std::vector<double> raw, const GridSpec& grid) {
  BehaviourDescriptor bd;
  bd.cell = bd_to_cell(raw, grid);
  bd.raw = std::move(raw);
  return bd;
}

struct InsertOutcome {
  bool inserted = false;           // occupant of the cell changed
  bool was_occupied = false;       // a conflict coin flip happened
};

class Archive {
 public:
  struct Cell {
    ParamVector params;
    std::vector<double> bd_raw;
    std::size_t eval_index = 0;
  };

  explicit Archive(GridSpec grid) : grid_(std::move(grid)), cells_(grid_.total_cells()) {}

  const GridSpec& grid() const { return grid_; }

  std::size_t flat_index(std::span<const std::size_t> cell) const {
    std::size_t idx = 0;
    for (std::size_t d = 0; d < grid_.dims.size(); ++d)
      idx = idx * grid_.dims[d].bins + cell[d];
    return idx;
  }

  // Inserts into a vacant cell unconditionally; on conflict the newcomer
  // replaces the occupant with probability exactly 1/2.
  InsertOutcome insert(const ParamVector& theta, const BehaviourDescriptor& bd,
                       std::size_t eval_index, Rng& rng) {
    const std::size_t idx = flat_index(bd.cell);
    InsertOutcome out;
    out.was_occupied = cells_[idx].has_value();
    if (out.was_occupied && !rng.coin()) return out;
    if (!out.was_occupied) occupied_.push_back(idx);
    cells_[idx] = Cell{theta, bd.raw, eval_index};
    out.inserted = true;
    return out;
  }

  // Uniform draw over current occupants.
  const ParamVector& sample(Rng& rng) const {
    if (occupied_.empty()) throw EmptyArchive("sample: archive is empty");
    return cells_[occupied_[rng.index(occupied_.size())]]->params;
  }

  std::vector<ParamVector> sample_batch(std::size_t n, Rng& rng) const {
    std::vector<ParamVector> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(sample(rng));
    return batch;
  }

  std::size_t occupied_count() const { return occupied_.size(); }

  double coverage() const {
    return static_cast<double>(occupied_.size()) / static_cast<double>(cells_.size());
  }

  // Occupant parameter vectors, in deterministic (cell-index) order.
  std::vector<std::vector<double>> collection() const {
    std::vector<std::size_t> idx = occupied_;
    std::sort(idx.begin(), idx.end());
    std::vector<std::vector<double>> coll;
    coll.reserve(idx.size());
    for (std::size_t i : idx) coll.push_back(cells_[i]->params.values);
    return coll;
  }

  // Visits occupied cells in cell-index order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    std::vector<std::size_t> idx = occupied_;
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) fn(i, *cells_[i]);
  }

  const std::optional<Cell>& cell_at(std::size_t flat) const { return cells_[flat]; }

 private:
  GridSpec grid_;
  std::vector<std::optional<Cell>> cells_;
  std::vector<std::size_t> occupied_;
};

}  // namespace poms
