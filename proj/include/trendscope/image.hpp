#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "trendscope/common.hpp"

namespace trendscope {

/// Row-major plane of intensities in [0, 255].
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RgbImage {
  Plane r, g, b;

  Eigen::Index rows() const { return r.rows(); }
  Eigen::Index cols() const { return r.cols(); }

  static RgbImage constant(Eigen::Index rows, Eigen::Index cols, double red, double green,
                           double blue);
};

/// Decodes binary or ASCII PNM (P2, P3, P5, P6; maxval <= 65535). Throws
/// Error naming the source on any decoding failure.
RgbImage decode_pnm(const std::string& bytes, const std::string& source = "<memory>");
std::string encode_ppm(const RgbImage& image);

/// Loads "file://path" or a plain path.
RgbImage load_image(const std::string& uri);

/// ITU-R BT.601 luma.
Plane to_grayscale(const RgbImage& image);

/// Bilinear resize with pixel-center alignment and edge clamping.
Plane resize_bilinear(const Plane& src, Eigen::Index rows, Eigen::Index cols);

struct HogParams {
  Eigen::Index resize = 128;
  Eigen::Index cell = 8;
  int bins = 9;  // unsigned orientations over [0, 180)
  Eigen::Index block = 2;
  double epsilon = 1e-3;
};

/// Histogram-of-oriented-gradients descriptor: grayscale, resize, centered
/// [-1 0 1] gradients with clamped borders, per-cell magnitude-weighted
/// orientation histograms with linear interpolation between the two nearest
/// bin centers (wrapping at 180 degrees), then overlapping blocks of
/// block x block cells (stride one cell) each L2-normalized as
/// v / sqrt(|v|^2 + eps^2), concatenated row-major.
Eigen::VectorXd hog_descriptor(const RgbImage& image, const HogParams& params = {});

/// 8x8x8 RGB histogram, L1-normalized (512 bins, index r*64 + g*8 + b).
Eigen::VectorXd color_histogram(const RgbImage& image, int bins_per_channel = 8);

/// Cosine distance between HoG descriptors.
double hog_pair_score(const RgbImage& a, const RgbImage& b, const HogParams& params = {});

/// L1 distance between normalized color histograms, in [0, 2].
double color_hist_pair_score(const RgbImage& a, const RgbImage& b);

}  // namespace trendscope
