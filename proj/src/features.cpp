#include "cloudseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cloudseg {

const std::vector<std::string>& selector_channels(const std::string& selector) {
  static const std::vector<std::string> x1 = {"T", "H"};
  static const std::vector<std::string> x2 = {"Tp", "Hp"};
  static const std::vector<std::string> x3 = {"dT", "Hpp"};
  static const std::vector<std::string> x4 = {"vmag", "Tbar", "dT"};
  if (selector == "x1") return x1;
  if (selector == "x2") return x2;
  if (selector == "x3") return x3;
  if (selector == "x4") return x4;
  throw std::runtime_error("unknown feature selector: " + selector);
}

const std::vector<std::pair<int, int>>& neighbor_offsets(int order) {
  static const std::vector<std::pair<int, int>> none;
  static const std::vector<std::pair<int, int>> first = {
      {-1, 0}, {0, -1}, {0, 1}, {1, 0}};
  static const std::vector<std::pair<int, int>> second = {
      {-1, 0}, {0, -1}, {0, 1}, {1, 0}, {-1, -1}, {-1, 1}, {1, 1}, {1, -1}};
  switch (order) {
    case 0: return none;
    case 1: return first;
    case 2: return second;
    default: throw std::runtime_error("neighborhood order must be 0, 1 or 2");
  }
}

int stacked_dimension(int base_dim, int order) {
  return base_dim * (1 + static_cast<int>(neighbor_offsets(order).size()));
}

DesignMatrix assemble(const PixelGrid& grid, const std::string& selector) {
  const auto& names = selector_channels(selector);
  std::vector<int> idx;
  idx.reserve(names.size());
  for (const auto& n : names) idx.push_back(grid.channel_index(n));

  DesignMatrix dm;
  dm.grid_rows = grid.rows;
  dm.grid_cols = grid.cols;
  dm.selector = selector;
  dm.order = 0;
  dm.X.resize(static_cast<Eigen::Index>(grid.rows) * grid.cols,
              static_cast<Eigen::Index>(idx.size()));
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      const auto r = dm.row_of(i, j);
      for (std::size_t c = 0; c < idx.size(); ++c) {
        dm.X(r, static_cast<Eigen::Index>(c)) = grid.at(i, j, idx[c]);
      }
    }
  }
  return dm;
}

DesignMatrix stack_neighborhood(const DesignMatrix& dm, int order) {
  if (dm.order != 0) throw std::runtime_error("stack_neighborhood expects an order-0 matrix");
  if (order == 0) return dm;
  const auto& offsets = neighbor_offsets(order);
  const auto d0 = dm.X.cols();

  DesignMatrix out;
  out.grid_rows = dm.grid_rows;
  out.grid_cols = dm.grid_cols;
  out.selector = dm.selector;
  out.order = order;
  out.X.resize(dm.X.rows(), d0 * static_cast<Eigen::Index>(1 + offsets.size()));
  for (int i = 0; i < dm.grid_rows; ++i) {
    for (int j = 0; j < dm.grid_cols; ++j) {
      const auto r = dm.row_of(i, j);
      out.X.block(r, 0, 1, d0) = dm.X.row(r);
      for (std::size_t b = 0; b < offsets.size(); ++b) {
        const int ni = std::clamp(i + offsets[b].first, 0, dm.grid_rows - 1);
        const int nj = std::clamp(j + offsets[b].second, 0, dm.grid_cols - 1);
        out.X.block(r, d0 * static_cast<Eigen::Index>(b + 1), 1, d0) =
            dm.X.row(dm.row_of(ni, nj));
      }
    }
  }
  return out;
}

DesignMatrix assemble_stacked(const PixelGrid& grid, const std::string& selector,
                              int order) {
  return stack_neighborhood(assemble(grid, selector), order);
}

std::pair<DesignMatrix, Standardization> standardize(const DesignMatrix& dm) {
  const auto n = dm.X.rows();
  Standardization stats;
  stats.mean = dm.X.colwise().mean();
  stats.variance =
      (dm.X.rowwise() - stats.mean.transpose()).array().square().colwise().sum() /
      static_cast<double>(n);
  for (Eigen::Index c = 0; c < stats.variance.size(); ++c) {
    if (!(stats.variance[c] > 0.0)) {
      throw std::runtime_error("zero-variance column " + std::to_string(c) +
                               " cannot be standardized");
    }
  }
  return {apply_standardization(dm, stats), stats};
}

DesignMatrix apply_standardization(const DesignMatrix& dm, const Standardization& stats) {
  if (stats.mean.size() != dm.X.cols()) {
    throw std::runtime_error("standardization dimension mismatch");
  }
  DesignMatrix out = dm;
  const Eigen::ArrayXd sd = stats.variance.array().sqrt();
  out.X = (dm.X.rowwise() - stats.mean.transpose()).array().rowwise() /
          sd.transpose();
  return out;
}

}  // namespace cloudseg
