#include "affbench/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace affbench {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMagnitudes[4] = {30.0, 45.0, 60.0, 75.0};
constexpr double kRotations[4] = {0.0, 5.0, 10.0, 15.0};
}  // namespace

Vec2 EffectTable::direction(Action a) {
  switch (a) {
    case Action::push: return {0, -1};
    case Action::pull: return {0, +1};
    case Action::left_to_right: return {+1, 0};
    case Action::right_to_left: return {-1, 0};
  }
  throw std::invalid_argument("bad Action");
}

double EffectTable::magnitude(Tool t) { return kMagnitudes[static_cast<int>(t)]; }
double EffectTable::rotation_deg(Tool t) { return kRotations[static_cast<int>(t)]; }

Tool EffectTable::nearest_tool(double d) {
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (std::abs(d - kMagnitudes[i]) < std::abs(d - kMagnitudes[best])) best = i;
  return static_cast<Tool>(best);
}

std::pair<Vec2, double> apply_effect(Vec2 p0, Action a, Tool t, SplitMix64& rng) {
  Vec2 dir = EffectTable::direction(a);
  double mag = EffectTable::magnitude(t);
  // Truncated at 2 sigma (6 px) per axis: less than half the 15 px magnitude
  // gap, so nearest-magnitude decoding never crosses a tool boundary and the
  // oracle stays exact over any generated dataset.
  auto jitter = [&rng] {
    for (;;) {
      double j = EffectTable::jitter_sigma * rng.normal();
      if (std::abs(j) <= 2.0 * EffectTable::jitter_sigma) return j;
    }
  };
  Vec2 p1{p0.x + mag * dir.x + jitter(), p0.y + mag * dir.y + jitter()};
  return {p1, EffectTable::rotation_deg(t)};
}

std::pair<Action, Tool> oracle_infer(Vec2 p0, Vec2 p1) {
  double dx = p1.x - p0.x, dy = p1.y - p0.y;
  if (dx == 0 && dy == 0) throw std::invalid_argument("oracle_infer: zero displacement is ambiguous");
  Action a;
  if (std::abs(dx) >= std::abs(dy))
    a = dx > 0 ? Action::left_to_right : Action::right_to_left;
  else
    a = dy > 0 ? Action::pull : Action::push;
  return {a, EffectTable::nearest_tool(std::hypot(dx, dy))};
}

// ---------------------------------------------------------------------------
// Cameras

namespace {

struct Affine {
  // world = R(theta) * s * (pixel - centre) + centre + shift
  double theta, scale, tx, ty;
};

Affine camera_affine(CameraId cam) {
  switch (cam) {
    case CameraId::center: return {0.0, 1.0, 0.0, 0.0};
    case CameraId::left: return {-3.0 * kPi / 180.0, 0.98, 14.0, -9.0};
    case CameraId::right: return {+3.0 * kPi / 180.0, 1.02, -12.0, 7.0};
  }
  throw std::invalid_argument("bad CameraId");
}

}  // namespace

Vec2 camera_to_world(const SceneSpec& spec, CameraId cam, Vec2 pixel) {
  Affine A = camera_affine(cam);
  double cx = spec.width / 2.0, cy = spec.height / 2.0;
  double px = pixel.x - cx, py = pixel.y - cy;
  double c = std::cos(A.theta), s = std::sin(A.theta);
  return {A.scale * (c * px - s * py) + cx + A.tx, A.scale * (s * px + c * py) + cy + A.ty};
}

Vec2 world_to_camera(const SceneSpec& spec, CameraId cam, Vec2 world) {
  Affine A = camera_affine(cam);
  double cx = spec.width / 2.0, cy = spec.height / 2.0;
  double wx = (world.x - cx - A.tx) / A.scale, wy = (world.y - cy - A.ty) / A.scale;
  double c = std::cos(-A.theta), s = std::sin(-A.theta);
  return {c * wx - s * wy + cx, s * wx + c * wy + cy};
}

// ---------------------------------------------------------------------------
// Object shapes and background

namespace {

struct Rgb {
  double r, g, b;
};

/// Per-object appearance, derived deterministically from the object id.
struct ObjectLook {
  double half_len;    // along the main axis
  double half_width;  // across
  int shape;          // 0 bar, 1 ellipse, 2 triangle, 3 capsule
  Rgb color_a, color_b;
};

Rgb hsv(double h, double s, double v) {
  double c = v * s, hp = h / 60.0, x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  double m = v - c;
  return {r + m, g + m, b + m};
}

ObjectLook object_look(int object_id) {
  SplitMix64 rng(fnv1a64("affbench.object", static_cast<uint64_t>(object_id) * 0x9E37 + 17));
  ObjectLook look;
  look.half_len = 46.0 + 14.0 * rng.next_double();    // 92..120 px long
  look.half_width = 13.0 + 6.0 * rng.next_double();   // 26..38 px wide
  look.shape = static_cast<int>(rng.next_below(4));
  double hue = rng.uniform(0.0, 360.0);
  look.color_a = hsv(hue, 0.75, 0.9);
  look.color_b = hsv(std::fmod(hue + 150.0, 360.0), 0.7, 0.55);
  return look;
}

/// Signed distance to the object outline in object-local coordinates
/// (x along the main axis). Negative inside.
double object_sdf(const ObjectLook& o, double x, double y) {
  switch (o.shape) {
    case 0: {  // bar
      double dx = std::abs(x) - o.half_len, dy = std::abs(y) - o.half_width;
      double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
      return std::hypot(ox, oy) + std::min(std::max(dx, dy), 0.0);
    }
    case 1: {  // ellipse (approximate SDF, fine for rasterization)
      double k = std::hypot(x / o.half_len, y / o.half_width);
      return (k - 1.0) * std::min(o.half_len, o.half_width);
    }
    case 2: {  // isosceles triangle pointing +x
      double t = (x + o.half_len) / (2 * o.half_len);  // 0 at tail, 1 at tip
      double w = o.half_width * (1.2 - t);
      double dy = std::abs(y) - std::max(w, 0.5);
      double dx = std::abs(x) - o.half_len;
      return std::max(dx, dy);
    }
    default: {  // capsule
      double cx = std::clamp(x, -o.half_len + o.half_width, o.half_len - o.half_width);
      return std::hypot(x - cx, y) - o.half_width;
    }
  }
}

/// Object surface color: banded along the main axis plus a bright tip marker,
/// so orientation and rotation are visible.
Rgb object_color(const ObjectLook& o, double x, double y) {
  double t = (x + o.half_len) / (2 * o.half_len);
  bool band = std::fmod(std::max(t, 0.0) * 5.0, 1.0) < 0.5;
  Rgb base = band ? o.color_a : o.color_b;
  if (x > o.half_len - 2.2 * o.half_width && std::abs(y) < o.half_width * 0.45)
    return {0.95, 0.95, 0.92};  // tip marker
  return base;
}

/// Per-scene constants of the procedural desk texture.
struct BackgroundParams {
  double ox, oy, base;
  explicit BackgroundParams(uint64_t scene_key) {
    SplitMix64 rng(scene_key);
    ox = rng.uniform(0, 100);
    oy = rng.uniform(0, 100);
    base = 0.42 + 0.05 * rng.next_double();
  }
};

/// Smooth procedural desk texture, defined on the whole plane so off-frame
/// camera samples stay valid.
Rgb background(const BackgroundParams& p, double x, double y) {
  double v = p.base + 0.035 * std::sin((x + p.ox * 7) * 0.012) * std::cos((y + p.oy * 5) * 0.015) +
             0.025 * std::sin((x - y) * 0.004 + p.ox);
  double warm = 0.04 + 0.02 * std::sin(y * 0.002 + p.oy);
  return {v + warm, v + warm * 0.6, v};
}

/// Bilinear interpolant of the background over a world-space grid. The
/// texture's shortest wavelength is ~400 px, so an 8 px grid is exact to
/// well under one 8-bit step.
class BackgroundField {
 public:
  BackgroundField(const BackgroundParams& p, double x0, double y0, double x1, double y1)
      : x0_(x0 - kStep), y0_(y0 - kStep),
        nx_(static_cast<int>((x1 - x0) / kStep) + 4),
        ny_(static_cast<int>((y1 - y0) / kStep) + 4),
        grid_(static_cast<size_t>(nx_) * ny_) {
    for (int gy = 0; gy < ny_; ++gy)
      for (int gx = 0; gx < nx_; ++gx)
        grid_[static_cast<size_t>(gy) * nx_ + gx] =
            background(p, x0_ + gx * kStep, y0_ + gy * kStep);
  }

  Rgb at(double x, double y) const {
    double fx = (x - x0_) / kStep, fy = (y - y0_) / kStep;
    int gx = std::clamp(static_cast<int>(fx), 0, nx_ - 2);
    int gy = std::clamp(static_cast<int>(fy), 0, ny_ - 2);
    double tx = std::clamp(fx - gx, 0.0, 1.0), ty = std::clamp(fy - gy, 0.0, 1.0);
    const Rgb& a = grid_[static_cast<size_t>(gy) * nx_ + gx];
    const Rgb& b = grid_[static_cast<size_t>(gy) * nx_ + gx + 1];
    const Rgb& c = grid_[static_cast<size_t>(gy + 1) * nx_ + gx];
    const Rgb& d = grid_[static_cast<size_t>(gy + 1) * nx_ + gx + 1];
    auto lerp2 = [&](double va, double vb, double vc, double vd) {
      return (va + (vb - va) * tx) + ((vc + (vd - vc) * tx) - (va + (vb - va) * tx)) * ty;
    };
    return {lerp2(a.r, b.r, c.r, d.r), lerp2(a.g, b.g, c.g, d.g), lerp2(a.b, b.b, c.b, d.b)};
  }

 private:
  static constexpr double kStep = 8.0;
  double x0_, y0_;
  int nx_, ny_;
  std::vector<Rgb> grid_;
};

void gaussian_blur(std::vector<double>& img, int w, int h, double sigma) {
  int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  std::vector<double> tmp(img.size());
  // horizontal
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          int xx = std::clamp(x + i, 0, w - 1);
          acc += kernel[i + radius] * img[(static_cast<size_t>(y) * w + xx) * 3 + c];
        }
        tmp[(static_cast<size_t>(y) * w + x) * 3 + c] = acc;
      }
  // vertical
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          int yy = std::clamp(y + i, 0, h - 1);
          acc += kernel[i + radius] * tmp[(static_cast<size_t>(yy) * w + x) * 3 + c];
        }
        img[(static_cast<size_t>(y) * w + x) * 3 + c] = acc;
      }
}

}  // namespace

double SceneSpec::containment_margin() const {
  // largest object extent (~63 px) + max displacement + 4-sigma jitter
  return 64.0 + 75.0 + 4.0 * EffectTable::jitter_sigma + 4.0;
}

RawImage render_scene(const SceneSpec& spec, int object_id, Vec2 pos, double rot_deg,
                      CameraId cam, uint64_t scene_key, uint64_t noise_key,
                      const Vec2* trail_from) {
  const ObjectLook look = object_look(object_id);
  const double extent = std::hypot(look.half_len, look.half_width);
  if (pos.x - extent < 0 || pos.x + extent > spec.width || pos.y - extent < 0 ||
      pos.y + extent > spec.height)
    throw std::runtime_error("render_scene: object " + std::to_string(object_id) +
                             " out of frame at (" + std::to_string(pos.x) + ", " +
                             std::to_string(pos.y) + ")");

  const double cr = std::cos(-rot_deg * kPi / 180.0), sr = std::sin(-rot_deg * kPi / 180.0);
  const bool degrade = spec.degrade_side_cameras && cam != CameraId::center;
  const BackgroundParams bg(scene_key);
  double bx0 = 1e30, by0 = 1e30, bx1 = -1e30, by1 = -1e30;
  for (double cx : {0.0, static_cast<double>(spec.width)})
    for (double cy : {0.0, static_cast<double>(spec.height)}) {
      Vec2 w = camera_to_world(spec, cam, {cx, cy});
      bx0 = std::min(bx0, w.x);
      by0 = std::min(by0, w.y);
      bx1 = std::max(bx1, w.x);
      by1 = std::max(by1, w.y);
    }
  const BackgroundField field(bg, bx0, by0, bx1, by1);

  const Affine A = camera_affine(cam);
  const double ca = std::cos(A.theta), sa = std::sin(A.theta);
  const double ccx = spec.width / 2.0, ccy = spec.height / 2.0;
  auto to_world = [&](double px2, double py2) -> Vec2 {
    double dx = px2 - ccx, dy = py2 - ccy;
    return {A.scale * (ca * dx - sa * dy) + ccx + A.tx,
            A.scale * (sa * dx + ca * dy) + ccy + A.ty};
  };

  // Drag mark left on the desk by the manipulation: a soft-edged dark streak
  // behind the object, as long as the displacement. It is shifted back by the
  // object's bounding radius so the object never covers its own mark.
  Vec2 t0{0, 0};
  double tvx = 0, tvy = 0, tlen2 = 1;
  if (trail_from) {
    tvx = pos.x - trail_from->x;
    tvy = pos.y - trail_from->y;
    double len = std::max(std::hypot(tvx, tvy), 1e-9);
    t0 = {trail_from->x - extent * tvx / len, trail_from->y - extent * tvy / len};
    tlen2 = std::max(tvx * tvx + tvy * tvy, 1e-12);
  }
  constexpr double kTrailRadius = 4.0;
  auto trail_shade = [&](double wx, double wy) -> double {
    double t = std::clamp(((wx - t0.x) * tvx + (wy - t0.y) * tvy) / tlen2, 0.0, 1.0);
    double dx = wx - (t0.x + t * tvx), dy = wy - (t0.y + t * tvy);
    return std::clamp(kTrailRadius - std::sqrt(dx * dx + dy * dy), 0.0, 1.0);
  };
  auto shade = [&](Rgb col, double wx, double wy) -> Rgb {
    if (!trail_from) return col;
    double a = 0.22 * trail_shade(wx, wy);
    return {col.r * (1 - a), col.g * (1 - a), col.b * (1 - a)};
  };

  std::vector<double> img(static_cast<size_t>(spec.width) * spec.height * 3);
  for (int py = 0; py < spec.height; ++py)
    for (int px = 0; px < spec.width; ++px) {
      Vec2 wc = to_world(px + 0.5, py + 0.5);
      double lxc = cr * (wc.x - pos.x) - sr * (wc.y - pos.y);
      double lyc = sr * (wc.x - pos.x) + cr * (wc.y - pos.y);
      double dc = object_sdf(look, lxc, lyc);

      Rgb out_col;
      if (dc > 2.0) {
        // Far outside: the background is smooth, one sample suffices.
        out_col = shade(field.at(wc.x, wc.y), wc.x, wc.y);
      } else if (dc < -2.0) {
        out_col = object_color(look, lxc, lyc);
      } else {
        // 2x2 supersampling along the object edge. The SDF is 1-Lipschitz
        // and subsamples sit within ~0.36 px of the centre, so the 2 px
        // band covers every pixel the soft edge can touch.
        Rgb acc{0, 0, 0};
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx) {
            Vec2 w = to_world(px + 0.25 + 0.5 * sx, py + 0.25 + 0.5 * sy);
            Rgb col = shade(field.at(w.x, w.y), w.x, w.y);
            double lx = cr * (w.x - pos.x) - sr * (w.y - pos.y);
            double ly = sr * (w.x - pos.x) + cr * (w.y - pos.y);
            double d = object_sdf(look, lx, ly);
            if (d < 0.75) {
              Rgb oc = object_color(look, lx, ly);
              double a = std::clamp(0.75 - d, 0.0, 1.0);  // soft 1-px edge
              col = {col.r + (oc.r - col.r) * a, col.g + (oc.g - col.g) * a,
                     col.b + (oc.b - col.b) * a};
            }
            acc.r += col.r;
            acc.g += col.g;
            acc.b += col.b;
          }
        out_col = {acc.r * 0.25, acc.g * 0.25, acc.b * 0.25};
      }
      size_t o = (static_cast<size_t>(py) * spec.width + px) * 3;
      img[o] = out_col.r;
      img[o + 1] = out_col.g;
      img[o + 2] = out_col.b;
    }

  if (degrade && spec.blur_sigma > 0) gaussian_blur(img, spec.width, spec.height, spec.blur_sigma);

  RawImage out;
  out.width = spec.width;
  out.height = spec.height;
  out.pixels.resize(img.size());
  SplitMix64 noise(noise_key);
  const double nsigma = degrade ? spec.noise_sigma : 0.0;
  for (size_t i = 0; i < img.size(); ++i) {
    double v = img[i] * 255.0;
    if (nsigma > 0) v += nsigma * noise.normal();
    out.pixels[i] = static_cast<uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation

namespace {

std::string image_basename(const Sample& s, CameraId cam, bool final_phase) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "obj%02d_%s_%s_rep%02d_%s_%s.png", s.object_id,
                to_string(s.tool), to_string(s.action), s.repetition, to_string(cam),
                final_phase ? "final" : "initial");
  return buf;
}

uint64_t sample_hash(uint64_t seed, const std::string& key, const char* stream) {
  uint64_t h = fnv1a64(&seed, sizeof(seed));
  h = fnv1a64(key, h);
  return fnv1a64(stream, std::strlen(stream), h);
}

}  // namespace

GeneratedDataset generate_dataset(const SceneSpec& spec, uint64_t seed,
                                  const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "images");
  if (!fs::exists(out_dir)) throw std::runtime_error("cannot create output dir " + out_dir);

  const double margin = spec.containment_margin();
  if (2 * margin >= spec.width || 2 * margin >= spec.height)
    throw std::runtime_error("scene too small for the largest displacement");

  GeneratedDataset result;
  Manifest& m = result.manifest;
  m.base_dir = out_dir;
  m.metadata["source"] = "synthetic";
  m.metadata["seed"] = std::to_string(seed);
  m.metadata["image_width"] = std::to_string(spec.width);
  m.metadata["image_height"] = std::to_string(spec.height);

  for (int obj = 1; obj <= spec.n_objects; ++obj)
    for (int t = 0; t < kNumTools; ++t)
      for (int a = 0; a < kNumActions; ++a)
        for (int rep = 1; rep <= spec.repetitions; ++rep) {
          Sample s;
          s.object_id = obj;
          s.tool = static_cast<Tool>(t);
          s.action = static_cast<Action>(a);
          s.repetition = rep;
          const std::string key = s.key();

          // Independent per-sample rng stream: parallel and serial generation
          // agree bit for bit.
          SplitMix64 rng(sample_hash(seed, key, "scene"));
          Vec2 p0{rng.uniform(margin, spec.width - margin),
                  rng.uniform(margin, spec.height - margin)};
          auto [p1, rot] = apply_effect(p0, s.action, s.tool, rng);
          uint64_t scene_key = sample_hash(seed, key, "background");

          for (int c = 0; c < 3; ++c) {
            auto cam = static_cast<CameraId>(c);
            for (int phase = 0; phase < 2; ++phase) {
              bool fin = phase == 1;
              std::string name = image_basename(s, cam, fin);
              uint64_t noise_key =
                  sample_hash(seed, key + "/" + name, fin ? "noise_f" : "noise_i");
              RawImage img = render_scene(spec, obj, fin ? p1 : p0, fin ? rot : 0.0, cam,
                                          scene_key, noise_key, fin ? &p0 : nullptr);
              save_png((fs::path(out_dir) / "images" / name).string(), img);
              s.images[{cam, phase}] = "images/" + name;
            }
          }
          result.truth[key] = {p0, p1, rot};
          m.samples.push_back(std::move(s));
        }

  save_manifest(m, (fs::path(out_dir) / "manifest.json").string());

  json jt;
  for (const auto& [key, gt] : result.truth) {
    jt["samples"][key] = {{"p0", {gt.p0.x, gt.p0.y}},
                          {"p1", {gt.p1.x, gt.p1.y}},
                          {"rot_deg", gt.rot_deg}};
  }
  std::ofstream out(fs::path(out_dir) / "ground_truth.json");
  out << jt.dump(1) << "\n";
  return result;
}

std::map<std::string, GroundTruthEntry> load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ground truth not found: " + path);
  json j;
  in >> j;
  std::map<std::string, GroundTruthEntry> out;
  for (auto& [key, v] : j.at("samples").items()) {
    GroundTruthEntry e;
    e.p0 = {v.at("p0")[0].get<double>(), v.at("p0")[1].get<double>()};
    e.p1 = {v.at("p1")[0].get<double>(), v.at("p1")[1].get<double>()};
    e.rot_deg = v.at("rot_deg").get<double>();
    out[key] = e;
  }
  return out;
}

}  // namespace affbench
