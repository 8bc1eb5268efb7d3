#include "shareprefill/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "shareprefill/errors.hpp"

namespace shareprefill
{
GrayImage mask_image(const BlockMask& mask, std::size_t scale)
{
  const std::size_t n = mask.query_blocks();
  GrayImage image(n * scale, n * scale, 0);
  for (std::size_t r = 0; r < image.rows(); ++r)
  {
    for (std::size_t c = 0; c < image.cols(); ++c)
    {
      image(r, c) = mask.get(r / scale, c / scale) ? 255 : 0;
    }
  }
  return image;
}

GrayImage heatmap_image(const Matrix<double>& values, std::size_t scale)
{
  GrayImage image(values.rows() * scale, values.cols() * scale, 0);
  for (std::size_t r = 0; r < image.rows(); ++r)
  {
    for (std::size_t c = 0; c < image.cols(); ++c)
    {
      const double v = std::clamp(values(r / scale, c / scale), 0.0, 1.0);
      image(r, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return image;
}

void write_pgm(const GrayImage& image, const std::string& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw IoError("cannot open " + path + " for writing");
  }
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  const auto pixels = image.data();
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out)
  {
    throw IoError("failed writing " + path);
  }
}
}  // namespace shareprefill
