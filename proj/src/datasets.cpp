#include "vqgb/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace vqgb {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;

std::uint32_t read_u32_be(std::istream& is, std::size_t& offset) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (is.gcount() != 4) throw IdxFormatError("load_idx: truncated header", offset);
  offset += 4;
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

void write_u32_be(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

void BoundedDataset::validate() const {
  for (const auto& p : points) {
    if (p.size() != dim) throw std::invalid_argument("BoundedDataset: dimension mismatch");
    for (double v : p) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("BoundedDataset: coordinate outside [0,1]");
      }
    }
  }
}

std::vector<std::vector<double>> mixture_means(std::size_t dim, std::size_t components) {
  if (components == 0) throw std::invalid_argument("mixture_means: components must be >= 1");
  std::size_t grid = 1;
  while (true) {
    std::size_t capacity = 1;
    for (std::size_t i = 0; i < dim; ++i) capacity *= grid;
    if (capacity >= components) break;
    ++grid;
  }
  std::vector<std::vector<double>> means;
  means.reserve(components);
  for (std::size_t idx = 0; idx < components; ++idx) {
    std::vector<double> m(dim);
    std::size_t rest = idx;
    for (std::size_t a = 0; a < dim; ++a) {
      const std::size_t cell = rest % grid;
      rest /= grid;
      m[a] = grid == 1 ? 0.5
                       : 0.2 + 0.6 * static_cast<double>(cell) / static_cast<double>(grid - 1);
    }
    means.push_back(std::move(m));
  }
  return means;
}

BoundedDataset synth_mixture(std::size_t dim, std::size_t components, std::size_t n,
                             double spread, Rng& rng) {
  if (!(spread > 0.0)) throw std::invalid_argument("synth_mixture: spread must be positive");
  const auto means = mixture_means(dim, components);

  BoundedDataset ds;
  ds.dim = dim;
  ds.provenance = "synth_mixture(dim=" + std::to_string(dim) +
                  ",components=" + std::to_string(components) + ")";
  ds.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mean = means[rng.index(components)];
    std::vector<double> p(dim);
    for (std::size_t a = 0; a < dim; ++a) {
      p[a] = std::clamp(mean[a] + spread * rng.normal(), 0.0, 1.0);
    }
    ds.points.push_back(std::move(p));
  }
  return ds;
}

BoundedDataset load_idx(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IdxFormatError("load_idx: cannot open " + path, 0);

  std::size_t offset = 0;
  const std::uint32_t magic = read_u32_be(is, offset);
  if (magic != kIdxImageMagic) {
    throw IdxFormatError("load_idx: bad magic", 0);
  }
  const std::uint32_t count = read_u32_be(is, offset);
  const std::uint32_t rows = read_u32_be(is, offset);
  const std::uint32_t cols = read_u32_be(is, offset);

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  BoundedDataset ds;
  ds.dim = pixels;
  ds.provenance = "idx:" + path;
  ds.points.reserve(count);

  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < count; ++i) {
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(is.gcount()) != pixels) {
      throw IdxFormatError("load_idx: truncated payload", offset + is.gcount());
    }
    offset += pixels;
    std::vector<double> p(pixels);
    for (std::size_t j = 0; j < pixels; ++j) p[j] = static_cast<double>(buf[j]) / 255.0;
    ds.points.push_back(std::move(p));
  }
  // A trailing byte means the header undercounted.
  if (is.peek() != std::char_traits<char>::eof()) {
    throw IdxFormatError("load_idx: payload larger than header-declared count", offset);
  }
  return ds;
}

void write_idx(const std::string& path, std::span<const std::vector<double>> images,
               std::uint32_t rows, std::uint32_t cols) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_idx: cannot open " + path);
  write_u32_be(os, kIdxImageMagic);
  write_u32_be(os, static_cast<std::uint32_t>(images.size()));
  write_u32_be(os, rows);
  write_u32_be(os, cols);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  for (const auto& img : images) {
    if (img.size() != pixels) throw std::invalid_argument("write_idx: image size mismatch");
    for (double v : img) {
      const double clamped = std::clamp(v, 0.0, 1.0);
      const auto byte = static_cast<unsigned char>(std::lround(clamped * 255.0));
      os.put(static_cast<char>(byte));
    }
  }
}

std::vector<double> AffineRecord::inverse(std::span<const double> y) const {
  std::vector<double> x(y.size());
  for (std::size_t a = 0; a < y.size(); ++a) {
    x[a] = scale[a] != 0.0 ? y[a] / scale[a] + offset[a] : offset[a];
  }
  return x;
}

NormalizeResult normalize_to_box(std::span<const std::vector<double>> points) {
  if (points.empty()) throw std::invalid_argument("normalize_to_box: empty input");
  const std::size_t dim = points.front().size();

  std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
  std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
  for (const auto& p : points) {
    if (p.size() != dim) throw std::invalid_argument("normalize_to_box: dimension mismatch");
    for (std::size_t a = 0; a < dim; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }

  NormalizeResult res;
  res.affine.scale.resize(dim);
  res.affine.offset.resize(dim);
  for (std::size_t a = 0; a < dim; ++a) {
    if (hi[a] > lo[a]) {
      res.affine.scale[a] = 1.0 / (hi[a] - lo[a]);
      res.affine.offset[a] = lo[a];
    } else {
      // Constant coordinate: map to the box center, remember the raw value.
      res.affine.scale[a] = 0.0;
      res.affine.offset[a] = lo[a];
    }
  }

  res.dataset.dim = dim;
  res.dataset.provenance = "normalized";
  res.dataset.points.reserve(points.size());
  for (const auto& p : points) {
    std::vector<double> q(dim);
    for (std::size_t a = 0; a < dim; ++a) {
      q[a] = res.affine.scale[a] != 0.0
                 ? (p[a] - res.affine.offset[a]) * res.affine.scale[a]
                 : 0.5;
    }
    res.dataset.points.push_back(std::move(q));
  }
  return res;
}

void write_dataset_csv(std::ostream& os, const BoundedDataset& ds) {
  os << ds.dim << ',' << ds.size() << '\n';
  for (const auto& p : ds.points) {
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (a) os << ',';
      os << p[a];
    }
    os << '\n';
  }
}

}  // namespace vqgb
