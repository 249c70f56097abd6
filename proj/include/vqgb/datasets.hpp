#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vqgb/rng.hpp"

namespace vqgb {

// Points constrained to [0,1]^dim, so Delta = dim bounds the squared loss.
struct BoundedDataset {
  std::size_t dim = 0;
  std::vector<std::vector<double>> points;
  std::string provenance;

  std::size_t size() const { return points.size(); }
  double delta() const { return static_cast<double>(dim); }
  void validate() const;  // throws std::invalid_argument when a point leaves the box
};

// Gaussian mixture with component means on a fixed lattice in [0.2,0.8]^dim;
// samples are clamped into the unit box.
BoundedDataset synth_mixture(std::size_t dim, std::size_t components, std::size_t n,
                             double spread, Rng& rng);

// Mean positions used by synth_mixture (deterministic in dim and components).
std::vector<std::vector<double>> mixture_means(std::size_t dim, std::size_t components);

struct IdxFormatError : std::runtime_error {
  std::size_t byte_offset;
  IdxFormatError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
};

// Reads an IDX u8 image tensor (magic 0x00000803); pixels scaled into [0,1],
// images flattened row-major.
BoundedDataset load_idx(const std::string& path);

// Writes the matching IDX file; pixels quantized back to u8.
void write_idx(const std::string& path, std::span<const std::vector<double>> images,
               std::uint32_t rows, std::uint32_t cols);

// Per-coordinate affine map recorded by normalize_to_box.
struct AffineRecord {
  std::vector<double> scale;   // applied as y = (x - offset) * scale
  std::vector<double> offset;
  std::vector<double> inverse(std::span<const double> y) const;
};

struct NormalizeResult {
  BoundedDataset dataset;
  AffineRecord affine;
};

// Min-max scaling into [0,1] per coordinate; constant coordinates map to 0.5.
NormalizeResult normalize_to_box(std::span<const std::vector<double>> points);

// Header line "dim,n" followed by one comma-separated row per point.
void write_dataset_csv(std::ostream& os, const BoundedDataset& ds);

}  // namespace vqgb
