#include "abmamba/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace abmamba {

namespace {

template <std::size_t N>
std::size_t lookup(const std::array<const char*, N>& names, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return i;
  throw DataError(std::string("unknown ") + what + " '" + s + "'");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

auto scene_key(const Scene& s) {
  return std::make_tuple(s.shape, s.color, s.direction, s.speed, s.x0, s.y0, s.event, s.event_frame);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(Shape s) { return kShapeNames[std::size_t(s)]; }
std::string to_string(Color c) { return kColorNames[std::size_t(c)]; }
std::string to_string(Direction d) { return kDirectionNames[std::size_t(d)]; }
std::string to_string(Event e) { return kEventNames[std::size_t(e)]; }
Shape parse_shape(const std::string& s) { return Shape(lookup(kShapeNames, s, "shape")); }
Color parse_color(const std::string& s) { return Color(lookup(kColorNames, s, "color")); }
Direction parse_direction(const std::string& s) {
  return Direction(lookup(kDirectionNames, s, "direction"));
}
Event parse_event(const std::string& s) { return Event(lookup(kEventNames, s, "event")); }

void FrameGeometry::validate() const {
  if (frames < 1) throw ConfigError("data.frames must be >= 1");
  if (height < 8 || width < 8) throw ConfigError("data.height and data.width must be >= 8");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::array<double, 2> shape_half_extent(Shape s) {
  switch (s) {
    case Shape::Square: return {3.0, 3.0};
    case Shape::Circle: return {3.0, 3.0};
    case Shape::Bar: return {4.0, 1.0};
  }
  return {0.0, 0.0};
}

std::array<double, 2> scene_centre(const Scene& s, Index t) {
  const double d = s.speed * double(t);
  switch (s.direction) {
    case Direction::Left: return {s.x0 - d, s.y0};
    case Direction::Right: return {s.x0 + d, s.y0};
    case Direction::Up: return {s.x0, s.y0 - d};
    case Direction::Down: return {s.x0, s.y0 + d};
  }
  return {s.x0, s.y0};
}

bool scene_fits(const Scene& s, const FrameGeometry& g) {
  const auto [hx, hy] = shape_half_extent(s.shape);
  for (Index t : {Index(0), g.frames - 1}) {
    const auto [cx, cy] = scene_centre(s, t);
    if (cx - hx < 0 || cx + hx > double(g.width) || cy - hy < 0 || cy + hy > double(g.height))
      return false;
  }
  return true;
}

Index first_event_frame(Index frames) { return 3 * frames / 4 + 1; }

Scene sample_scene(std::uint64_t seed, const FrameGeometry& g) {
  g.validate();
  Rng rng(mix_seed(seed, 0));
  Scene s;
  s.seed = seed;
  s.shape = Shape(std::uniform_int_distribution<int>(0, 2)(rng));
  s.color = Color(std::uniform_int_distribution<int>(0, 3)(rng));
  s.direction = Direction(std::uniform_int_distribution<int>(0, 3)(rng));
  double speed = std::uniform_real_distribution<double>(1.0, 1.6)(rng);
  const auto [hx, hy] = shape_half_extent(s.shape);
  const bool horizontal = s.direction == Direction::Left || s.direction == Direction::Right;
  const double along = horizontal ? double(g.width) : double(g.height);
  const double across = horizontal ? double(g.height) : double(g.width);
  const double h_along = horizontal ? hx : hy;
  const double h_across = horizontal ? hy : hx;
  if (across < 2 * h_across) throw DataError("sample_scene: frame too small for a " + to_string(s.shape));
  bool placed = false;
  for (int attempt = 0; attempt < 3 && !placed; ++attempt, speed *= 0.5) {
    const double travel = speed * double(g.frames - 1);
    const double lo = h_along, hi = along - h_along - travel;
    if (hi < lo) continue;
    double start = std::uniform_real_distribution<double>(lo, hi)(rng);
    const double side = std::uniform_real_distribution<double>(h_across, across - h_across)(rng);
    // Leftward and upward motion start from the far end of the same range.
    if (s.direction == Direction::Left || s.direction == Direction::Up) start += travel;
    s.speed = speed;
    s.x0 = horizontal ? start : side;
    s.y0 = horizontal ? side : start;
    placed = true;
  }
  if (!placed)
    throw DataError("sample_scene: seed " + std::to_string(seed) + " cannot keep a " +
                    to_string(s.shape) + " inside a " + std::to_string(g.width) + "x" +
                    std::to_string(g.height) + " frame for " + std::to_string(g.frames) +
                    " frames after 3 speed reductions");

  Rng event_rng(mix_seed(seed, 1));
  const auto kind = Event(std::uniform_int_distribution<int>(0, 2)(event_rng));
  const Index first = first_event_frame(g.frames);
  const Index frame = first <= g.frames - 1
                          ? std::uniform_int_distribution<Index>(first, g.frames - 1)(event_rng)
                          : -1;
  if (kind != Event::None && frame >= 0) {
    s.event = kind;
    s.event_frame = frame;
  }
  return s;
}

std::vector<Frame> render_frames(const Scene& s, const FrameGeometry& g) {
  g.validate();
  if (!scene_fits(s, g))
    throw DataError("render_frames: scene " + std::to_string(s.seed) + " leaves the frame");
  static const double palette[4][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}};
  const auto [hx, hy] = shape_half_extent(s.shape);
  std::vector<Frame> frames;
  for (Index t = 0; t < g.frames; ++t) {
    Frame f{g.height, g.width, std::vector<double>(std::size_t(g.height * g.width * 3), 0.0)};
    const bool after_event = s.event != Event::None && t >= s.event_frame;
    if (!(after_event && s.event == Event::Vanish)) {
      const bool white = s.event == Event::Flash && t == s.event_frame;
      const double* rgb = palette[int(s.color)];
      const auto [cx, cy] = scene_centre(s, t);
      for (Index y = 0; y < g.height; ++y)
        for (Index x = 0; x < g.width; ++x) {
          const double dx = double(x) + 0.5 - cx, dy = double(y) + 0.5 - cy;
          const bool inside = s.shape == Shape::Circle ? dx * dx + dy * dy < hx * hx
                                                       : std::abs(dx) < hx && std::abs(dy) < hy;
          if (!inside) continue;
          for (Index c = 0; c < 3; ++c) f.at(y, x, c) = white ? 1.0 : rgb[c];
        }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

EncoderStub EncoderStub::create(const std::string& name, Index patch, Index d, std::uint64_t seed) {
  if (patch < 1 || d < 1) throw ConfigError("encoder stub '" + name + "': patch and width must be >= 1");
  EncoderStub e;
  e.name = name;
  e.patch = patch;
  const Index fan_in = patch * patch * 3;
  Rng rng(mix_seed(seed, fnv1a(name)));
  e.weight.resize(d, fan_in);
  fill_uniform(e.weight, std::sqrt(3.0 / double(fan_in)), rng);
  e.bias.resize(d);
  fill_uniform(e.bias, 0.1, rng);
  return e;
}

Mat<double> patchify_encode(const Frame& f, const EncoderStub& stub) {
  const Index p = stub.patch;
  if (f.height % p != 0 || f.width % p != 0)
    throw ConfigError("patchify: frame " + std::to_string(f.height) + "x" + std::to_string(f.width) +
                      " is not divisible by patch size " + std::to_string(p));
  const Index gy = f.height / p, gx = f.width / p;
  Mat<double> patches(gy * gx, p * p * 3);
  for (Index py = 0; py < gy; ++py)
    for (Index px = 0; px < gx; ++px) {
      Index col = 0;
      for (Index y = 0; y < p; ++y)
        for (Index x = 0; x < p; ++x)
          for (Index c = 0; c < 3; ++c) patches(py * gx + px, col++) = f.at(py * p + y, px * p + x, c);
    }
  return (patches * stub.weight.transpose()).rowwise() + stub.bias.transpose();
}

EncoderPair EncoderPair::create(Index patch, Index d_s, Index d_d) {
  return {EncoderStub::create("semantic", patch, d_s, 0x51c1),
          EncoderStub::create("structural", patch, d_d, 0xd1e0)};
}

Mat<double> encode_video(const std::vector<Frame>& frames, const EncoderPair& enc) {
  require_shape(!frames.empty(), "encode_video: no frames");
  std::vector<Mat<double>> per;
  for (const auto& f : frames) {
    Mat<double> a = patchify_encode(f, enc.primary);
    Mat<double> b = patchify_encode(f, enc.secondary);
    Mat<double> both(a.rows(), a.cols() + b.cols());
    both << a, b;
    per.push_back(std::move(both));
  }
  const Index n = per[0].rows();
  Mat<double> out(Index(frames.size()) * n, enc.width());
  for (std::size_t t = 0; t < per.size(); ++t) out.middleRows(Index(t) * n, n) = per[t];
  return out;
}

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "<bos>", "<eos>", "<img>", "a", "moves", "then", "vanishes", "flashes"};
  for (auto* w : kColorNames) words_.push_back(w);
  for (auto* w : kShapeNames) words_.push_back(w);
  for (auto* w : kDirectionNames) words_.push_back(w);
}

int Vocabulary::id(const std::string& w) const {
  auto it = std::find(words_.begin(), words_.end(), w);
  if (it == words_.end()) throw InputError("word '" + w + "' is not in the vocabulary");
  return int(it - words_.begin());
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw InputError("token id " + std::to_string(id) + " out of range");
  return words_[std::size_t(id)];
}

std::vector<int> Vocabulary::encode(const std::string& caption) const {
  std::istringstream in(caption);
  std::vector<int> ids;
  for (std::string w; in >> w;) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos || id == kImg) continue;
    if (!out.empty()) out += ' ';
    out += word(id);
  }
  return out;
}

std::string caption_of(const Scene& s) {
  std::string c = "a " + to_string(s.color) + " " + to_string(s.shape) + " moves " + to_string(s.direction);
  if (s.event == Event::Vanish) c += " then vanishes";
  if (s.event == Event::Flash) c += " then flashes";
  return c;
}

Manifest make_dataset(Index n, std::uint64_t data_seed, const FrameGeometry& g, bool eval_split,
                      const Manifest* exclude) {
  if (n < 1) throw ConfigError("make_dataset: n must be >= 1");
  g.validate();
  std::set<decltype(scene_key(Scene{}))> taken;
  if (exclude)
    for (const auto& s : exclude->scenes) taken.insert(scene_key(s));
  Manifest m;
  m.geometry = g;
  std::uint64_t seed = (data_seed << 32) + (eval_split ? (std::uint64_t(1) << 31) : 0);
  while (Index(m.scenes.size()) < n) {
    Scene s = sample_scene(seed++, g);
    if (!taken.insert(scene_key(s)).second) continue;
    m.captions.push_back(caption_of(s));
    m.scenes.push_back(s);
  }
  return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open manifest '" + path + "' for writing");
  out << "# abmamba manifest v1 frames=" << m.geometry.frames << " height=" << m.geometry.height
      << " width=" << m.geometry.width << "\n";
  out << "# sample_seed,shape,color,direction,speed,x0,y0,event,event_frame,caption\n";
  for (std::size_t i = 0; i < m.scenes.size(); ++i) {
    const Scene& s = m.scenes[i];
    out << s.seed << ',' << to_string(s.shape) << ',' << to_string(s.color) << ','
        << to_string(s.direction) << ',' << format_double(s.speed) << ',' << format_double(s.x0)
        << ',' << format_double(s.y0) << ',' << to_string(s.event) << ',' << s.event_frame << ','
        << m.captions[i] << "\n";
  }
  if (!out) throw DataError("failed writing manifest '" + path + "'");
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  Manifest m;
  std::string line;
  long lineno = 0;
  bool have_geometry = false;
  auto fail = [&](const std::string& why) {
    throw DataError(path + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      long t, h, w;
      if (std::sscanf(line.c_str(), "# abmamba manifest v1 frames=%ld height=%ld width=%ld", &t, &h,
                      &w) == 3) {
        m.geometry = {t, h, w};
        have_geometry = true;
      }
      continue;
    }
    if (!have_geometry) fail("missing '# abmamba manifest v1' header");
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) fail("expected 10 comma-separated fields, found " + std::to_string(f.size()));
    try {
      Scene s;
      s.seed = std::stoull(f[0]);
      s.shape = parse_shape(f[1]);
      s.color = parse_color(f[2]);
      s.direction = parse_direction(f[3]);
      s.speed = std::stod(f[4]);
      s.x0 = std::stod(f[5]);
      s.y0 = std::stod(f[6]);
      s.event = parse_event(f[7]);
      s.event_frame = std::stol(f[8]);
      if (!scene_fits(s, m.geometry)) fail("scene leaves the frame");
      if (caption_of(s) != f[9]) fail("caption '" + f[9] + "' does not match the scene parameters");
      m.scenes.push_back(s);
      m.captions.push_back(f[9]);
    } catch (const DataError& e) {
      if (std::string(e.what()).rfind(path, 0) == 0) throw;
      fail(e.what());
    } catch (const std::exception& e) {
      fail(std::string("malformed number: ") + e.what());
    }
  }
  if (!have_geometry) throw DataError(path + ": missing '# abmamba manifest v1' header");
  if (m.scenes.empty()) throw DataError(path + ": manifest has no records");
  return m;
}

}  // namespace abmamba
