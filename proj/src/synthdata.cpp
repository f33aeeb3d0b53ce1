#include "fedgai/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <utility>

#include <json.hpp>

namespace fedgai {

namespace {

struct Vec2 {
  double x, y;
};

constexpr double kPi = 3.14159265358979323846;

// --- garment templates ---------------------------------------------------
// Closed polygons in unit coordinates (y grows downward), with shape handles
// drawn from the per-pair rng. Margins keep strokes of width <= 4 plus a few
// pixels of jitter inside the canvas.

std::vector<Vec2> template_polygon(GarmentClass c, Rng& rng) {
  switch (c) {
    case GarmentClass::kTop: {
      const double bw = rng.uniform(0.14, 0.20);   // body half-width
      const double hem = rng.uniform(0.75, 0.85);  // hem height
      const double sl = rng.uniform(0.12, 0.20);   // sleeve reach
      return {{0.5 - bw * 0.9, 0.12},       {0.5 + bw * 0.9, 0.12},
              {0.5 + bw + sl, 0.22},        {0.5 + bw + sl - 0.06, 0.36},
              {0.5 + bw, 0.30},             {0.5 + bw, hem},
              {0.5 - bw, hem},              {0.5 - bw, 0.30},
              {0.5 - bw - sl + 0.06, 0.36}, {0.5 - bw - sl, 0.22}};
    }
    case GarmentClass::kSkirt: {
      const double whw = rng.uniform(0.10, 0.16);  // waist half-width
      const double hhw = rng.uniform(0.28, 0.38);  // hem half-width
      const double hem = rng.uniform(0.80, 0.88);
      return {{0.5 - whw, 0.15}, {0.5 + whw, 0.15},
              {0.5 + hhw, hem},  {0.5 - hhw, hem}};
    }
    case GarmentClass::kVest: {
      const double bw = rng.uniform(0.16, 0.22);
      const double hem = rng.uniform(0.72, 0.80);
      const double nd = rng.uniform(0.10, 0.18);  // neck notch depth
      return {{0.5 - bw, 0.14}, {0.5 - 0.04, 0.14}, {0.5, 0.14 + nd},
              {0.5 + 0.04, 0.14}, {0.5 + bw, 0.14}, {0.5 + bw, hem},
              {0.5 - bw, hem}};
    }
    case GarmentClass::kTrouser: {
      const double whw = rng.uniform(0.16, 0.22);
      const double cy = rng.uniform(0.38, 0.48);  // crotch height
      const double sp = rng.uniform(0.02, 0.08);  // leg spread
      return {{0.5 - whw, 0.12},      {0.5 + whw, 0.12},
              {0.5 + whw + sp, 0.88}, {0.5 + 0.06, 0.88},
              {0.5, cy},              {0.5 - 0.06, 0.88},
              {0.5 - whw - sp, 0.88}};
    }
    case GarmentClass::kDress: {
      const double shw = rng.uniform(0.12, 0.16);  // shoulder half-width
      const double whw = rng.uniform(0.08, 0.12);  // waist half-width
      const double hhw = rng.uniform(0.28, 0.38);  // hem half-width
      const double wy = rng.uniform(0.34, 0.42);   // waist height
      return {{0.5 - shw, 0.10}, {0.5 + shw, 0.10}, {0.5 + whw, wy},
              {0.5 + hhw, 0.88}, {0.5 - hhw, 0.88}, {0.5 - whw, wy}};
    }
  }
  fail("template_polygon: unknown garment class");
}

std::vector<Vec2> scale_polygon(const std::vector<Vec2>& poly, double s) {
  std::vector<Vec2> out;
  out.reserve(poly.size());
  for (const Vec2& p : poly) out.push_back({p.x * s, p.y * s});
  return out;
}

// Chamfers each corner by cutting a fraction of both adjacent edges.
std::vector<Vec2> round_corners(const std::vector<Vec2>& poly,
                                double rounding) {
  if (rounding <= 0.0) return poly;
  const double f = 0.35 * rounding;
  std::vector<Vec2> out;
  const size_t n = poly.size();
  out.reserve(2 * n);
  for (size_t i = 0; i < n; ++i) {
    const Vec2& prev = poly[(i + n - 1) % n];
    const Vec2& v = poly[i];
    const Vec2& next = poly[(i + 1) % n];
    out.push_back({v.x + f * (prev.x - v.x), v.y + f * (prev.y - v.y)});
    out.push_back({v.x + f * (next.x - v.x), v.y + f * (next.y - v.y)});
  }
  return out;
}

// Subdivides edges so no segment exceeds max_seg pixels; used only when
// jitter needs per-point wobble (collinear inserted points would otherwise
// perturb the scanline arithmetic in the last ulp).
std::vector<Vec2> densify(const std::vector<Vec2>& poly, double max_seg) {
  std::vector<Vec2> out;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    out.push_back(a);
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const int cuts = static_cast<int>(std::ceil(len / max_seg)) - 1;
    for (int k = 1; k <= cuts; ++k) {
      const double t = static_cast<double>(k) / (cuts + 1);
      out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
  }
  return out;
}

// Even-odd scanline fill over pixel centers: pixel (x, y) is inside when its
// center (x+0.5, y+0.5) is inside the polygon. Edges are counted half-open in
// y so shared vertices are handled consistently.
std::vector<uint8_t> fill_polygon(const std::vector<Vec2>& poly, int res) {
  std::vector<uint8_t> mask(static_cast<size_t>(res) * res, 0);
  const size_t n = poly.size();
  std::vector<double> xs;
  for (int y = 0; y < res; ++y) {
    const double cy = y + 0.5;
    xs.clear();
    for (size_t i = 0; i < n; ++i) {
      const Vec2& a = poly[i];
      const Vec2& b = poly[(i + 1) % n];
      if (a.y == b.y) continue;
      if ((cy >= a.y && cy < b.y) || (cy >= b.y && cy < a.y))
        xs.push_back(a.x + (cy - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (size_t k = 0; k + 1 < xs.size(); k += 2) {
      int xa = static_cast<int>(std::ceil(xs[k] - 0.5));
      int xb = static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1;
      xa = std::max(xa, 0);
      xb = std::min(xb, res - 1);
      for (int x = xa; x <= xb; ++x)
        mask[static_cast<size_t>(y) * res + x] = 1;
    }
  }
  return mask;
}

// Mask pixels with a 4-neighbor outside the mask (or on the canvas border).
std::vector<uint8_t> mask_boundary(const std::vector<uint8_t>& mask, int res) {
  std::vector<uint8_t> b(mask.size(), 0);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const size_t i = static_cast<size_t>(y) * res + x;
      if (!mask[i]) continue;
      const bool edge = x == 0 || x == res - 1 || y == 0 || y == res - 1 ||
                        !mask[i - 1] || !mask[i + 1] ||
                        !mask[i - static_cast<size_t>(res)] ||
                        !mask[i + static_cast<size_t>(res)];
      if (edge) b[i] = 1;
    }
  return b;
}

void stamp(std::vector<uint8_t>& ink, int res, int x, int y, int w) {
  for (int dy = stroke_stamp_lo(w); dy <= stroke_stamp_hi(w); ++dy)
    for (int dx = stroke_stamp_lo(w); dx <= stroke_stamp_hi(w); ++dx) {
      const int xx = x + dx, yy = y + dy;
      if (xx >= 0 && xx < res && yy >= 0 && yy < res)
        ink[static_cast<size_t>(yy) * res + xx] = 1;
    }
}

// Arc-length parameter of the closed polyline point nearest to (px, py).
double perimeter_param(const std::vector<Vec2>& poly,
                       const std::vector<double>& cum, double px, double py) {
  double best_d2 = 1e300, best_t = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double t = len2 > 0 ? ((px - a.x) * ex + (py - a.y) * ey) / len2 : 0.0;
    t = std::min(std::max(t, 0.0), 1.0);
    const double qx = a.x + t * ex, qy = a.y + t * ey;
    const double d2 = (px - qx) * (px - qx) + (py - qy) * (py - qy);
    if (d2 < best_d2) {
      best_d2 = d2;
      best_t = cum[i] + t * std::sqrt(len2);
    }
  }
  return best_t;
}

void bresenham(int x0, int y0, int x1, int y1,
               std::vector<std::array<int, 2>>& out) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  int x = x0, y = y0;
  while (true) {
    out.push_back({x, y});
    if (x == x1 && y == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}

// Per-pair rng draw order: garment class, template handles, jitter (if any),
// dash coins (if any), detail endpoints (if any). The image depends only on
// the first two, so sketch-style fields never disturb it.
StylePair render_pair(const StyleProfile& prof, uint64_t pair_seed, int res,
                      int style_id) {
  Rng rng(pair_seed);
  const auto cls =
      static_cast<GarmentClass>(rng.uniform_index(kGarmentClassCount));
  const std::vector<Vec2> base =
      scale_polygon(template_polygon(cls, rng), res);

  const std::vector<uint8_t> fill = fill_polygon(base, res);
  Tensor image = Tensor::full({3, res, res}, 1.0);
  for (int ch = 0; ch < 3; ++ch) {
    double* plane =
        image.values().data() + static_cast<size_t>(ch) * res * res;
    const double color = kGarmentColors[static_cast<int>(cls)][ch];
    for (size_t i = 0; i < fill.size(); ++i)
      if (fill[i]) plane[i] = color;
  }

  std::vector<Vec2> sk = round_corners(base, prof.corner_rounding);
  if (prof.jitter_amplitude_px > 0.0) {
    sk = densify(sk, 10.0);
    const double j = prof.jitter_amplitude_px;
    for (Vec2& p : sk) {
      p.x += rng.uniform(-j, j);
      p.y += rng.uniform(-j, j);
    }
  }

  const std::vector<uint8_t> sk_fill = fill_polygon(sk, res);
  std::vector<uint8_t> boundary = mask_boundary(sk_fill, res);
  const int w = std::max(1, static_cast<int>(std::lround(prof.stroke_width_px)));

  if (prof.dash_probability > 0.0) {
    // Split the contour into 24 arc-length bins and drop whole bins.
    std::vector<double> cum(sk.size() + 1, 0.0);
    for (size_t i = 0; i < sk.size(); ++i) {
      const Vec2& a = sk[i];
      const Vec2& b = sk[(i + 1) % sk.size()];
      cum[i + 1] = cum[i] + std::hypot(b.x - a.x, b.y - a.y);
    }
    const double total = cum.back();
    constexpr int kDashBins = 24;
    std::array<bool, kDashBins> keep{};
    for (int s = 0; s < kDashBins; ++s)
      keep[static_cast<size_t>(s)] = !rng.coin(prof.dash_probability);
    if (total > 0.0) {
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
          const size_t i = static_cast<size_t>(y) * res + x;
          if (!boundary[i]) continue;
          const double t = perimeter_param(sk, cum, x + 0.5, y + 0.5);
          const int bin = std::min(kDashBins - 1,
                                   static_cast<int>(t / (total / kDashBins)));
          if (!keep[static_cast<size_t>(bin)]) boundary[i] = 0;
        }
    }
  }

  std::vector<uint8_t> ink(static_cast<size_t>(res) * res, 0);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x)
      if (boundary[static_cast<size_t>(y) * res + x]) stamp(ink, res, x, y, w);

  const int n_detail = static_cast<int>(std::lround(prof.detail_density * 5.0));
  if (n_detail > 0) {
    std::vector<int> interior;
    for (size_t i = 0; i < sk_fill.size(); ++i)
      if (sk_fill[i]) interior.push_back(static_cast<int>(i));
    if (!interior.empty()) {
      std::vector<uint8_t> detail(ink.size(), 0);
      std::vector<std::array<int, 2>> pts;
      for (int d = 0; d < n_detail; ++d) {
        const int a = interior[rng.uniform_index(interior.size())];
        const int b = interior[rng.uniform_index(interior.size())];
        pts.clear();
        bresenham(a % res, a / res, b % res, b / res, pts);
        for (const auto& p : pts) stamp(detail, res, p[0], p[1], w);
      }
      // Detail strokes stay inside the garment.
      for (size_t i = 0; i < ink.size(); ++i)
        if (detail[i] && sk_fill[i]) ink[i] = 1;
    }
  }

  Tensor sketch = Tensor::zeros({1, res, res});
  for (size_t i = 0; i < ink.size(); ++i)
    sketch.values()[i] = ink[i] ? 1.0 : 0.0;

  StylePair pair;
  pair.image = image;
  pair.sketch = sketch;
  pair.garment_class = cls;
  pair.style_id = style_id;
  return pair;
}

// --- augmentation helpers -------------------------------------------------

double bilinear_at(const double* ch, int h, int w, double fy, double fx,
                   double fill) {
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double wx = fx - x0, wy = fy - y0;
  auto at = [&](int y, int x) {
    return (x < 0 || x >= w || y < 0 || y >= h)
               ? fill
               : ch[static_cast<size_t>(y) * w + x];
  };
  return (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
         wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
}

// map takes continuous destination coords (cy, cx) with pixel centers at
// half-integers and returns the matching source point.
template <typename MapFn>
Tensor warp(const Tensor& t, double fill, MapFn map) {
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor out = Tensor::zeros({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto [sy, sx] = map(y + 0.5, x + 0.5);
      for (int k = 0; k < c; ++k)
        out.values()[(static_cast<size_t>(k) * h + y) * w + x] = bilinear_at(
            t.values().data() + static_cast<size_t>(k) * h * w, h, w,
            sy - 0.5, sx - 0.5, fill);
    }
  return out;
}

Tensor hflip_tensor(const Tensor& t) {
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor out = Tensor::zeros({c, h, w});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.values()[(static_cast<size_t>(k) * h + y) * w + x] =
            t.values()[(static_cast<size_t>(k) * h + y) * w + (w - 1 - x)];
  return out;
}

Tensor clone_tensor(const Tensor& t) { return Tensor::from(t.shape(), t.values()); }

// Decomposes ink (value > 0.5) into 8-connected chunks of at most 24 pixels
// and erases each chunk with probability 0.1.
void line_erase_inplace(Tensor& sketch, Rng& rng) {
  const int h = sketch.dim(1), w = sketch.dim(2);
  std::vector<double>& v = sketch.values();
  std::vector<uint8_t> ink(v.size(), 0), visited(v.size(), 0);
  for (size_t i = 0; i < v.size(); ++i) ink[i] = v[i] > 0.5 ? 1 : 0;
  constexpr int kChunkCap = 24;
  std::vector<int> chunk;
  std::deque<int> queue;
  for (int start = 0; start < h * w; ++start) {
    if (!ink[static_cast<size_t>(start)] || visited[static_cast<size_t>(start)])
      continue;
    chunk.clear();
    queue.clear();
    queue.push_back(start);
    visited[static_cast<size_t>(start)] = 1;
    while (!queue.empty() && static_cast<int>(chunk.size()) < kChunkCap) {
      const int p = queue.front();
      queue.pop_front();
      chunk.push_back(p);
      const int y = p / w, x = p % w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const size_t q = static_cast<size_t>(yy) * w + xx;
          if (ink[q] && !visited[q]) {
            visited[q] = 1;
            queue.push_back(static_cast<int>(q));
          }
        }
    }
    // Pixels still queued belong to the next chunk.
    for (const int p : queue) visited[static_cast<size_t>(p)] = 0;
    if (rng.coin(0.1))
      for (const int p : chunk) v[static_cast<size_t>(p)] = 0.0;
  }
}

void line_thicken_inplace(Tensor& sketch, Rng& rng) {
  if (!rng.coin(0.5)) return;
  const int h = sketch.dim(1), w = sketch.dim(2);
  const std::vector<double> src = sketch.values();
  std::vector<double>& dst = sketch.values();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          m = std::max(m, src[static_cast<size_t>(yy) * w + xx]);
        }
      dst[static_cast<size_t>(y) * w + x] = m;
    }
}

unsigned char quantize_byte(double v) {
  v = std::min(std::max(v, 0.0), 1.0);
  return static_cast<unsigned char>(std::lround(v * 255.0));
}

std::string next_pnm_token(std::istream& in, const std::string& path) {
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (!std::isspace(ch)) break;
  }
  if (ch == EOF) fail("image read: truncated header in " + path);
  std::string tok(1, static_cast<char>(ch));
  while ((ch = in.get()) != EOF && !std::isspace(ch))
    tok += static_cast<char>(ch);
  return tok;
}

int parse_pnm_int(std::istream& in, const std::string& path) {
  const std::string tok = next_pnm_token(in, path);
  try {
    size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail("image read: bad header field '" + tok + "' in " + path);
  }
}

Tensor read_pnm(const std::string& path, const std::string& magic, int chans) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("image read: cannot open " + path);
  if (next_pnm_token(f, path) != magic)
    fail("image read: " + path + " is not a " + magic + " file");
  const int w = parse_pnm_int(f, path);
  const int h = parse_pnm_int(f, path);
  const int maxval = parse_pnm_int(f, path);
  if (w <= 0 || h <= 0) fail("image read: bad dimensions in " + path);
  if (maxval != 255) fail("image read: expected maxval 255 in " + path);
  std::vector<char> buf(static_cast<size_t>(w) * h * chans);
  f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<size_t>(f.gcount()) != buf.size())
    fail("image read: truncated pixel data in " + path);
  Tensor t = Tensor::zeros({chans, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < chans; ++c)
        t.values()[(static_cast<size_t>(c) * h + y) * w + x] =
            static_cast<unsigned char>(
                buf[(static_cast<size_t>(y) * w + x) * chans + c]) /
            255.0;
  return t;
}

void write_pnm(const std::string& path, const Tensor& t,
               const std::string& magic, int chans) {
  if (t.rank() != 3 || t.dim(0) != chans)
    fail("image write: expected (" + std::to_string(chans) +
         ",H,W) tensor, got " + shape_str(t.shape()));
  const int h = t.dim(1), w = t.dim(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("image write: cannot open " + path);
  f << magic << "\n" << w << " " << h << "\n255\n";
  std::vector<char> row(static_cast<size_t>(w) * chans);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < chans; ++c)
        row[static_cast<size_t>(x) * chans + c] =
            static_cast<char>(quantize_byte(
                t.values()[(static_cast<size_t>(c) * h + y) * w + x]));
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!f) fail("image write: failed writing " + path);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return dir.empty() ? name : dir + "/" + name;
}

}  // namespace

const double kGarmentColors[kGarmentClassCount][3] = {
    {217 / 255.0, 64 / 255.0, 64 / 255.0},
    {64 / 255.0, 115 / 255.0, 217 / 255.0},
    {77 / 255.0, 166 / 255.0, 89 / 255.0},
    {115 / 255.0, 89 / 255.0, 153 / 255.0},
    {230 / 255.0, 153 / 255.0, 64 / 255.0},
};

const char* garment_name(GarmentClass c) {
  switch (c) {
    case GarmentClass::kTop: return "top";
    case GarmentClass::kSkirt: return "skirt";
    case GarmentClass::kVest: return "vest";
    case GarmentClass::kTrouser: return "trouser";
    case GarmentClass::kDress: return "dress";
  }
  fail("garment_name: unknown class");
}

GarmentClass garment_from_name(const std::string& name) {
  for (int i = 0; i < kGarmentClassCount; ++i) {
    const auto c = static_cast<GarmentClass>(i);
    if (name == garment_name(c)) return c;
  }
  fail("garment_from_name: unknown garment class '" + name + "'");
}

void StyleProfile::validate() const {
  if (!(stroke_width_px > 0.0))
    fail("StyleProfile: stroke_width_px must be positive");
  if (jitter_amplitude_px < 0.0)
    fail("StyleProfile: jitter_amplitude_px must be non-negative");
  auto unit = [](double v, const char* name) {
    if (v < 0.0 || v > 1.0)
      fail(std::string("StyleProfile: ") + name + " must lie in [0,1]");
  };
  unit(corner_rounding, "corner_rounding");
  unit(dash_probability, "dash_probability");
  unit(detail_density, "detail_density");
}

int stroke_stamp_lo(int width) { return -((width - 1) / 2); }
int stroke_stamp_hi(int width) { return width / 2; }

std::vector<StylePair> generate_dataset(const StyleProfile& profile,
                                        int n_pairs, int resolution,
                                        int style_id) {
  profile.validate();
  if (n_pairs < 1) fail("generate_dataset: n_pairs must be >= 1");
  if (resolution < 8 || resolution % 8 != 0)
    fail("generate_dataset: resolution must be a positive multiple of 8, got " +
         std::to_string(resolution));
  std::vector<StylePair> out;
  out.reserve(static_cast<size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i)
    out.push_back(render_pair(profile,
                              mix_seed(profile.seed, static_cast<uint64_t>(i)),
                              resolution, style_id));
  return out;
}

StylePair augment(const StylePair& pair, const std::vector<AugmentOp>& ops,
                  uint64_t seed) {
  auto has = [&](AugmentOp op) {
    return std::find(ops.begin(), ops.end(), op) != ops.end();
  };
  Rng rng(seed);
  Tensor img = pair.image;
  Tensor sk = pair.sketch;
  const int h = img.dim(1), w = img.dim(2);

  if (has(AugmentOp::kCrop)) {
    const double area = rng.uniform(0.75, 1.0);
    const double side = std::sqrt(area);
    const int ws = std::max(1, static_cast<int>(std::lround(w * side)));
    const int hs = std::max(1, static_cast<int>(std::lround(h * side)));
    const int ox = static_cast<int>(rng.uniform_index(
        static_cast<uint64_t>(w - ws + 1)));
    const int oy = static_cast<int>(rng.uniform_index(
        static_cast<uint64_t>(h - hs + 1)));
    auto map = [=](double cy, double cx) {
      return std::pair<double, double>(oy + cy * hs / h, ox + cx * ws / w);
    };
    img = warp(img, 1.0, map);
    sk = warp(sk, 0.0, map);
  }
  if (has(AugmentOp::kHflip)) {
    img = hflip_tensor(img);
    sk = hflip_tensor(sk);
  }
  if (has(AugmentOp::kRotate)) {
    const double th = rng.uniform(-15.0, 15.0) * kPi / 180.0;
    const double cyc = h / 2.0, cxc = w / 2.0;
    const double co = std::cos(th), si = std::sin(th);
    auto map = [=](double cy, double cx) {
      const double ry = cy - cyc, rx = cx - cxc;
      return std::pair<double, double>(cyc - si * rx + co * ry,
                                       cxc + co * rx + si * ry);
    };
    img = warp(img, 1.0, map);
    sk = warp(sk, 0.0, map);
  }
  if (has(AugmentOp::kScale)) {
    const double s = rng.uniform(0.9, 1.1);
    const double cyc = h / 2.0, cxc = w / 2.0;
    auto map = [=](double cy, double cx) {
      return std::pair<double, double>(cyc + (cy - cyc) / s,
                                       cxc + (cx - cxc) / s);
    };
    img = warp(img, 1.0, map);
    sk = warp(sk, 0.0, map);
  }
  if (has(AugmentOp::kLineErase)) {
    sk = clone_tensor(sk);
    line_erase_inplace(sk, rng);
  }
  if (has(AugmentOp::kLineThicken)) {
    sk = clone_tensor(sk);
    line_thicken_inplace(sk, rng);
  }

  StylePair out;
  out.image = img;
  out.sketch = sk;
  out.garment_class = pair.garment_class;
  out.style_id = pair.style_id;
  return out;
}

Tensor to_model_input(const Tensor& t) {
  return add_scalar(scalar_mul(t, 2.0), -1.0);
}

Tensor from_model_output(const Tensor& t) {
  return clamp_t(scalar_mul(add_scalar(t, 1.0), 0.5), 0.0, 1.0);
}

void write_ppm(const std::string& path, const Tensor& image) {
  write_pnm(path, image, "P6", 3);
}

Tensor read_ppm(const std::string& path) { return read_pnm(path, "P6", 3); }

void write_pgm(const std::string& path, const Tensor& sketch) {
  write_pnm(path, sketch, "P5", 1);
}

Tensor read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }

std::string save_dataset(const std::string& dir,
                         const std::vector<StylePair>& pairs,
                         const std::string& prefix) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  char stem[128];
  for (size_t i = 0; i < pairs.size(); ++i) {
    std::snprintf(stem, sizeof(stem), "%s_%04zu", prefix.c_str(), i);
    const std::string img = std::string(stem) + ".ppm";
    const std::string skt = std::string(stem) + ".pgm";
    write_ppm(join_path(dir, img), pairs[i].image);
    write_pgm(join_path(dir, skt), pairs[i].sketch);
    manifest.push_back({{"image", img},
                        {"sketch", skt},
                        {"garment_class", garment_name(pairs[i].garment_class)},
                        {"style_id", pairs[i].style_id}});
  }
  const std::string mpath = join_path(dir, prefix + "_manifest.json");
  std::ofstream mf(mpath);
  if (!mf) fail("save_dataset: cannot open " + mpath);
  mf << manifest.dump(2) << "\n";
  return mpath;
}

std::vector<StylePair> load_dataset(const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) fail("load_dataset: cannot open " + manifest_path);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    fail("load_dataset: malformed manifest " + manifest_path + ": " + e.what());
  }
  if (!manifest.is_array()) fail("load_dataset: manifest must be a JSON list");
  const std::string dir =
      std::filesystem::path(manifest_path).parent_path().string();
  std::vector<StylePair> out;
  for (const auto& e : manifest) {
    try {
      StylePair p;
      p.image = read_ppm(join_path(dir, e.at("image").get<std::string>()));
      p.sketch = read_pgm(join_path(dir, e.at("sketch").get<std::string>()));
      p.garment_class =
          garment_from_name(e.at("garment_class").get<std::string>());
      p.style_id = e.at("style_id").get<int>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& ex) {
      fail("load_dataset: bad manifest entry: " + std::string(ex.what()));
    }
  }
  return out;
}

}  // namespace fedgai
