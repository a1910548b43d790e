#include "timbre/eval.hpp"

#include <png.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <memory>

namespace timbre::eval {

namespace {

struct Rgb {
  uint8_t r, g, b;
};

// Dark blue -> teal -> green -> yellow.
Rgb ramp(double u) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{{0.27, 0.00, 0.33},
                                                               {0.23, 0.32, 0.55},
                                                               {0.13, 0.57, 0.55},
                                                               {0.37, 0.79, 0.38},
                                                               {0.99, 0.91, 0.14}}};
  u = std::clamp(u, 0.0, 1.0) * (stops.size() - 1);
  const size_t i = std::min<size_t>(static_cast<size_t>(u), stops.size() - 2);
  const double a = u - double(i);
  auto ch = [&](int c) {
    return static_cast<uint8_t>(std::lround(255.0 * ((1 - a) * stops[i][c] + a * stops[i + 1][c])));
  };
  return {ch(0), ch(1), ch(2)};
}

// 5x7 glyphs, one string per row, '#' = ink.
struct Glyph {
  char c;
  std::array<const char*, 7> rows;
};

constexpr Glyph kFont[] = {
    {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
    {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
    {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
    {'3', {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "}},
    {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
    {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
    {'6', {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "}},
    {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
    {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
    {'9', {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "}},
    {'.', {"     ", "     ", "     ", "     ", "     ", " ##  ", " ##  "}},
    {'(', {"   # ", "  #  ", " #   ", " #   ", " #   ", "  #  ", "   # "}},
    {')', {" #   ", "  #  ", "   # ", "   # ", "   # ", "  #  ", " #   "}},
    {'a', {"     ", "     ", " ### ", "    #", " ####", "#   #", " ####"}},
    {'b', {"#    ", "#    ", "# ## ", "##  #", "#   #", "#   #", "#### "}},
    {'d', {"    #", "    #", " ## #", "#  ##", "#   #", "#   #", " ####"}},
    {'e', {"     ", "     ", " ### ", "#   #", "#####", "#    ", " ### "}},
    {'i', {"  #  ", "     ", " ##  ", "  #  ", "  #  ", "  #  ", " ### "}},
    {'l', {" ##  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
    {'m', {"     ", "     ", "## # ", "# # #", "# # #", "#   #", "#   #"}},
    {'n', {"     ", "     ", "# ## ", "##  #", "#   #", "#   #", "#   #"}},
    {'s', {"     ", "     ", " ####", "#    ", " ### ", "    #", "#### "}},
    {'t', {" #   ", " #   ", "###  ", " #   ", " #   ", " #  #", "  ## "}},
};

const Glyph* find_glyph(char c) {
  for (const auto& g : kFont) {
    if (g.c == c) return &g;
  }
  return nullptr;
}

class Canvas {
 public:
  Canvas(int w, int h) : img_{w, h, std::vector<uint8_t>(size_t(w) * h * 3, 255)} {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    uint8_t* p = &img_.rgb[(size_t(y) * img_.width + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  void hline(int x0, int x1, int y, Rgb c) {
    for (int x = x0; x <= x1; ++x) set(x, y, c);
  }
  void vline(int x, int y0, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y) set(x, y, c);
  }
  // Text with its top-left corner at (x, y); vertical text runs bottom to top.
  void text(int x, int y, const std::string& s, bool vertical = false) {
    constexpr Rgb ink{0, 0, 0};
    for (size_t k = 0; k < s.size(); ++k) {
      const Glyph* g = find_glyph(s[k]);
      if (!g) continue;
      for (int r = 0; r < 7; ++r) {
        for (int col = 0; col < 5; ++col) {
          if (g->rows[r][col] != '#') continue;
          if (vertical) {
            set(x + r, y - int(k) * 6 - col, ink);
          } else {
            set(x + int(k) * 6 + col, y + r, ink);
          }
        }
      }
    }
  }
  void blit(const Image& src, int x0, int y0) {
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) {
        const uint8_t* p = &src.rgb[(size_t(y) * src.width + x) * 3];
        set(x0 + x, y0 + y, {p[0], p[1], p[2]});
      }
    }
  }
  Image take() { return std::move(img_); }

 private:
  Image img_;
};

int text_width(const std::string& s) { return int(s.size()) * 6 - 1; }

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::round(v * 1000.0) / 1000.0);
  return buf;
}

double nice_step(double span, int target) {
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10 * mag;
}

}  // namespace

Image render_mel(const dsp::MelSpectrogram& mel, int scale, double lo, double hi) {
  if (mel.n_frames() < 1 || mel.n_bands() < 1) throw std::invalid_argument("render_mel: empty");
  if (scale < 1) throw std::invalid_argument("render_mel: scale < 1");
  if (lo == hi) {
    lo = mel.values.minCoeff();
    hi = mel.values.maxCoeff();
  }
  const double span = hi > lo ? hi - lo : 1.0;
  Image img;
  img.width = int(mel.n_frames()) * scale;
  img.height = int(mel.n_bands()) * scale;
  img.rgb.resize(size_t(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    const Index band = mel.n_bands() - 1 - y / scale;
    for (int x = 0; x < img.width; ++x) {
      const Rgb c = ramp((mel.values(x / scale, band) - lo) / span);
      uint8_t* p = &img.rgb[(size_t(y) * img.width + x) * 3];
      p[0] = c.r;
      p[1] = c.g;
      p[2] = c.b;
    }
  }
  return img;
}

Image render_mel_figure(const dsp::MelSpectrogram& mel, double hop_seconds, int scale) {
  const Image heat = render_mel(mel, scale);
  const int left = 44, right = 12, top = 10, bottom = 36;
  Canvas cv(left + heat.width + right, top + heat.height + bottom);
  cv.blit(heat, left, top);
  constexpr Rgb black{0, 0, 0};
  const int x0 = left - 1, y1 = top + heat.height;
  cv.vline(x0, top, y1, black);
  cv.hline(x0, left + heat.width, y1, black);

  const double seconds = double(mel.n_frames()) * hop_seconds;
  const double tstep = nice_step(seconds, std::max(2, heat.width / 80));
  for (double t = 0; t <= seconds + 1e-9; t += tstep) {
    const int x = left + int(std::lround(t / hop_seconds * scale));
    cv.vline(x, y1, y1 + 3, black);
    const auto s = tick_label(t);
    cv.text(x - text_width(s) / 2, y1 + 6, s);
  }
  const std::string xlabel = "time (s)";
  cv.text(left + heat.width / 2 - text_width(xlabel) / 2, y1 + 22, xlabel);

  const int bands = int(mel.n_bands());
  const double bstep = std::max(1.0, nice_step(bands, std::max(2, heat.height / 40)));
  for (double b = 0; b < bands; b += bstep) {
    const int y = y1 - 1 - int(std::lround(b * scale));
    cv.hline(x0 - 3, x0, y, black);
    const auto s = tick_label(b);
    cv.text(x0 - 5 - text_width(s), y - 3, s);
  }
  const std::string ylabel = "mel band";
  cv.text(2, top + heat.height / 2 + text_width(ylabel) / 2, ylabel, true);
  return cv.take();
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.width < 1 || image.height < 1 ||
      image.rgb.size() != size_t(image.width) * image.height * 3) {
    throw std::invalid_argument("write_png: malformed image");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw std::runtime_error("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng error writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(&image.rgb[size_t(y) * image.width * 3]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!f) throw std::runtime_error("read_png: cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_png: libpng init failed");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: corrupt file " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.rgb.resize(size_t(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) png_read_row(png, &img.rgb[size_t(y) * img.width * 3], nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace timbre::eval
