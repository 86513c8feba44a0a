#include "trendscope/image.hpp"

#include <cctype>
#include <cmath>
#include <numbers>

#include "trendscope/embedding.hpp"

namespace trendscope {

RgbImage RgbImage::constant(Eigen::Index rows, Eigen::Index cols, double red, double green,
                            double blue) {
  return RgbImage{Plane::Constant(rows, cols, red), Plane::Constant(rows, cols, green),
                  Plane::Constant(rows, cols, blue)};
}

namespace {

class PnmReader {
 public:
  PnmReader(const std::string& bytes, const std::string& source) : s_(bytes), source_(source) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw Error("cannot decode image " + source_ + ": " + why);
  }

  void skip_space_and_comments() {
    for (;;) {
      while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ < s_.size() && s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        return;
      }
    }
  }

  long number() {
    skip_space_and_comments();
    const std::size_t begin = pos_;
    long v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + (s_[pos_] - '0');
      if (v > 1'000'000'000) fail("header value too large");
      ++pos_;
    }
    if (pos_ == begin) fail("expected a number");
    return v;
  }

  unsigned binary_sample(bool wide) {
    if (pos_ + (wide ? 2 : 1) > s_.size()) fail("truncated pixel data");
    unsigned v = static_cast<unsigned char>(s_[pos_++]);
    if (wide) v = (v << 8) | static_cast<unsigned char>(s_[pos_++]);
    return v;
  }

  std::string_view magic() {
    if (s_.size() < 2 || s_[0] != 'P') fail("not a PNM file");
    pos_ = 2;
    return std::string_view(s_).substr(0, 2);
  }

  void single_whitespace() {
    if (pos_ >= s_.size() || !std::isspace(static_cast<unsigned char>(s_[pos_])))
      fail("missing whitespace after header");
    ++pos_;
  }

 private:
  const std::string& s_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

RgbImage decode_pnm(const std::string& bytes, const std::string& source) {
  PnmReader in(bytes, source);
  const auto magic = in.magic();
  const bool color = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";
  if (!(magic == "P2" || magic == "P3" || magic == "P5" || magic == "P6"))
    in.fail("unsupported PNM variant " + std::string(magic));
  const long width = in.number();
  const long height = in.number();
  const long maxval = in.number();
  if (width <= 0 || height <= 0) in.fail("empty image");
  if (maxval <= 0 || maxval > 65535) in.fail("bad maxval");
  if (binary) in.single_whitespace();
  const double scale = 255.0 / static_cast<double>(maxval);
  const bool wide = maxval > 255;

  RgbImage img{Plane(height, width), Plane(height, width), Plane(height, width)};
  auto sample = [&]() -> double {
    const long v = binary ? static_cast<long>(in.binary_sample(wide)) : in.number();
    if (v > maxval) in.fail("sample exceeds maxval");
    return static_cast<double>(v) * scale;
  };
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      if (color) {
        img.r(y, x) = sample();
        img.g(y, x) = sample();
        img.b(y, x) = sample();
      } else {
        const double v = sample();
        img.r(y, x) = img.g(y, x) = img.b(y, x) = v;
      }
    }
  }
  return img;
}

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(image.rows() * image.cols() * 3));
  auto byte = [](double v) {
    return static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 255.0))));
  };
  for (Eigen::Index y = 0; y < image.rows(); ++y)
    for (Eigen::Index x = 0; x < image.cols(); ++x) {
      out.push_back(byte(image.r(y, x)));
      out.push_back(byte(image.g(y, x)));
      out.push_back(byte(image.b(y, x)));
    }
  return out;
}

RgbImage load_image(const std::string& uri) {
  std::string path = uri;
  if (path.rfind("file://", 0) == 0) path = path.substr(7);
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    throw Error("cannot decode image " + uri + ": unreadable");
  }
  return decode_pnm(bytes, uri);
}

Plane to_grayscale(const RgbImage& image) {
  return 0.299 * image.r + 0.587 * image.g + 0.114 * image.b;
}

Plane resize_bilinear(const Plane& src, Eigen::Index rows, Eigen::Index cols) {
  if (src.size() == 0) throw Error("cannot resize an empty image");
  Plane out(rows, cols);
  const double sy = static_cast<double>(src.rows()) / static_cast<double>(rows);
  const double sx = static_cast<double>(src.cols()) / static_cast<double>(cols);
  const Eigen::Index max_y = src.rows() - 1, max_x = src.cols() - 1;
  for (Eigen::Index y = 0; y < rows; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(max_y));
    const Eigen::Index y0 = static_cast<Eigen::Index>(std::floor(fy));
    const Eigen::Index y1 = std::min(y0 + 1, max_y);
    const double wy = fy - static_cast<double>(y0);
    for (Eigen::Index x = 0; x < cols; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(max_x));
      const Eigen::Index x0 = static_cast<Eigen::Index>(std::floor(fx));
      const Eigen::Index x1 = std::min(x0 + 1, max_x);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * src(y0, x0) + wx * src(y0, x1);
      const double bottom = (1.0 - wx) * src(y1, x0) + wx * src(y1, x1);
      out(y, x) = (1.0 - wy) * top + wy * bottom;
    }
  }
  return out;
}

Eigen::VectorXd hog_descriptor(const RgbImage& image, const HogParams& p) {
  if (p.resize % p.cell != 0) throw Error("HoG resize must be a multiple of the cell size");
  const Plane gray = resize_bilinear(to_grayscale(image), p.resize, p.resize);
  const Eigen::Index n = p.resize;
  const Eigen::Index cells = n / p.cell;
  const double bin_width = 180.0 / p.bins;

  // cell histograms, [cy][cx][bin] flattened
  Eigen::ArrayXd hist = Eigen::ArrayXd::Zero(cells * cells * p.bins);
  for (Eigen::Index y = 0; y < n; ++y) {
    for (Eigen::Index x = 0; x < n; ++x) {
      const double gx = gray(y, std::min(x + 1, n - 1)) - gray(y, std::max<Eigen::Index>(x - 1, 0));
      const double gy = gray(std::min(y + 1, n - 1), x) - gray(std::max<Eigen::Index>(y - 1, 0), x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      if (angle >= 180.0) angle -= 180.0;
      const double pos = angle / bin_width - 0.5;
      const double lower = std::floor(pos);
      const double frac = pos - lower;
      const int b0 = (static_cast<int>(lower) + p.bins) % p.bins;
      const int b1 = (b0 + 1) % p.bins;
      const Eigen::Index base = ((y / p.cell) * cells + (x / p.cell)) * p.bins;
      hist[base + b0] += mag * (1.0 - frac);
      hist[base + b1] += mag * frac;
    }
  }

  const Eigen::Index blocks = cells - p.block + 1;
  const Eigen::Index block_len = p.block * p.block * p.bins;
  Eigen::VectorXd desc(blocks * blocks * block_len);
  Eigen::Index out = 0;
  for (Eigen::Index by = 0; by < blocks; ++by) {
    for (Eigen::Index bx = 0; bx < blocks; ++bx) {
      auto block = desc.segment(out, block_len);
      Eigen::Index k = 0;
      for (Eigen::Index cy = by; cy < by + p.block; ++cy)
        for (Eigen::Index cx = bx; cx < bx + p.block; ++cx)
          for (int b = 0; b < p.bins; ++b) block[k++] = hist[(cy * cells + cx) * p.bins + b];
      block /= std::sqrt(block.squaredNorm() + p.epsilon * p.epsilon);
      out += block_len;
    }
  }
  return desc;
}

Eigen::VectorXd color_histogram(const RgbImage& image, int bins_per_channel) {
  if (bins_per_channel <= 0 || 256 % bins_per_channel != 0)
    throw Error("bins per channel must divide 256");
  const int width = 256 / bins_per_channel;
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(bins_per_channel * bins_per_channel * bins_per_channel);
  auto bin = [&](double v) {
    const long q = std::clamp(std::lround(v), 0L, 255L);
    return static_cast<Eigen::Index>(q / width);
  };
  for (Eigen::Index y = 0; y < image.rows(); ++y)
    for (Eigen::Index x = 0; x < image.cols(); ++x)
      hist[(bin(image.r(y, x)) * bins_per_channel + bin(image.g(y, x))) * bins_per_channel +
           bin(image.b(y, x))] += 1.0;
  const double total = hist.sum();
  if (total > 0.0) hist /= total;
  return hist;
}

double hog_pair_score(const RgbImage& a, const RgbImage& b, const HogParams& params) {
  return general_cosine_distance(hog_descriptor(a, params), hog_descriptor(b, params));
}

double color_hist_pair_score(const RgbImage& a, const RgbImage& b) {
  return (color_histogram(a) - color_histogram(b)).cwiseAbs().sum();
}

}  // namespace trendscope
