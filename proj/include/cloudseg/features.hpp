#ifndef CLOUDSEG_FEATURES_HPP_
#define CLOUDSEG_FEATURES_HPP_

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "cloudseg/core.hpp"

// Per-pixel feature assembly: channel selection (x1..x4), neighborhood
// stacking and standardization for k-means.
namespace cloudseg {

// Channels required by a named selector: x1={T,H}, x2={Tp,Hp},
// x3={dT,Hpp}, x4={vmag,Tbar,dT}.
const std::vector<std::string>& selector_channels(const std::string& selector);

// Neighbor offsets for a stacking order (1 -> 4-neighborhood, 2 -> adds the
// diagonals), in the fixed order used everywhere: (-1,0),(0,-1),(0,+1),
// (+1,0),(-1,-1),(-1,+1),(+1,+1),(+1,-1).
const std::vector<std::pair<int, int>>& neighbor_offsets(int order);

// Stacked dimensionality d0*(1 + 4*[order>=1] + 4*[order>=2]).
int stacked_dimension(int base_dim, int order);

// Row-major sample matrix over a grid's pixels plus provenance.
struct DesignMatrix {
  Eigen::MatrixXd X;  // (rows*cols) x d, pixel raster order
  int grid_rows = 0;
  int grid_cols = 0;
  std::string selector;
  int order = 0;

  Eigen::Index row_of(int i, int j) const {
    return static_cast<Eigen::Index>(i) * grid_cols + j;
  }
};

// Order-0 assembly: row (i,j) holds the selector's channels in declared order.
DesignMatrix assemble(const PixelGrid& grid, const std::string& selector);

// Stacks [center || neighbors in fixed offset order]; out-of-grid neighbors
// use replicate (clamp-to-edge) padding.
DesignMatrix stack_neighborhood(const DesignMatrix& dm, int order);

DesignMatrix assemble_stacked(const PixelGrid& grid, const std::string& selector,
                              int order);

// Zero-mean unit-variance columns, population variance convention. Throws
// naming the column when a column has zero variance.
std::pair<DesignMatrix, Standardization> standardize(const DesignMatrix& dm);

// Applies previously computed statistics (predict-time path).
DesignMatrix apply_standardization(const DesignMatrix& dm, const Standardization& stats);

}  // namespace cloudseg

#endif  // CLOUDSEG_FEATURES_HPP_
