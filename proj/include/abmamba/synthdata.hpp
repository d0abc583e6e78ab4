#pragma once

// Procedural moving-shape videos with template captions, and frozen random
// patch encoders standing in for pretrained vision backbones.

#include "abmamba/core.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace abmamba {

enum class Shape { Square, Circle, Bar };
enum class Color { Red, Green, Blue, Yellow };
enum class Direction { Left, Right, Up, Down };
enum class Event { None, Vanish, Flash };

inline constexpr std::array<const char*, 3> kShapeNames{"square", "circle", "bar"};
inline constexpr std::array<const char*, 4> kColorNames{"red", "green", "blue", "yellow"};
inline constexpr std::array<const char*, 4> kDirectionNames{"left", "right", "up", "down"};
inline constexpr std::array<const char*, 3> kEventNames{"none", "vanish", "flash"};

std::string to_string(Shape s);
std::string to_string(Color c);
std::string to_string(Direction d);
std::string to_string(Event e);
Shape parse_shape(const std::string& s);
Color parse_color(const std::string& s);
Direction parse_direction(const std::string& s);
Event parse_event(const std::string& s);

struct FrameGeometry {
  Index frames = 16;
  Index height = 32;
  Index width = 32;
  void validate() const;
  bool operator==(const FrameGeometry&) const = default;
};

struct Scene {
  std::uint64_t seed = 0;
  Shape shape = Shape::Square;
  Color color = Color::Red;
  Direction direction = Direction::Right;
  double speed = 1.0;  // pixels per frame
  double x0 = 0.0;     // shape centre at frame 0, pixel units
  double y0 = 0.0;
  Event event = Event::None;
  Index event_frame = -1;  // first affected frame; -1 when event is None

  bool operator==(const Scene&) const = default;
};

// Half extents (x, y) of a shape's bounding box.
std::array<double, 2> shape_half_extent(Shape s);

// Centre of the shape at frame t.
std::array<double, 2> scene_centre(const Scene& s, Index t);

bool scene_fits(const Scene& s, const FrameGeometry& g);

// Draws shape, colour, direction, speed and start position from the sample
// seed; the event comes from an independent stream. Speed is halved and the
// draw repeated when the motion cannot fit, up to three attempts.
Scene sample_scene(std::uint64_t seed, const FrameGeometry& g);

// First frame eligible for an event: floor(3T/4) + 1.
Index first_event_frame(Index frames);

// H x W x 3 image in [0, 1], row-major with interleaved channels.
struct Frame {
  Index height = 0, width = 0;
  std::vector<double> pixels;
  double& at(Index y, Index x, Index c) { return pixels[std::size_t((y * width + x) * 3 + c)]; }
  double at(Index y, Index x, Index c) const { return pixels[std::size_t((y * width + x) * 3 + c)]; }
};

std::vector<Frame> render_frames(const Scene& s, const FrameGeometry& g);

struct EncoderStub {
  std::string name;
  Index patch = 8;
  Mat<double> weight;  // d x (patch^2 * 3)
  Vec<double> bias;    // d

  static EncoderStub create(const std::string& name, Index patch, Index d, std::uint64_t seed);
  Index width() const { return weight.rows(); }
};

// N_p x d features; patches in row-major grid order, each flattened as
// (row, column, channel).
Mat<double> patchify_encode(const Frame& f, const EncoderStub& stub);

struct EncoderPair {
  EncoderStub primary;
  EncoderStub secondary;
  static EncoderPair create(Index patch, Index d_s, Index d_d);
  Index width() const { return primary.width() + secondary.width(); }
};

// (T * N_p) x (d_s + d_d), frame-major, the two encoders concatenated per token.
Mat<double> encode_video(const std::vector<Frame>& frames, const EncoderPair& enc);

class Vocabulary {
 public:
  static constexpr int kPad = 0, kBos = 1, kEos = 2, kImg = 3;
  Vocabulary();
  int size() const { return int(words_.size()); }
  int id(const std::string& w) const;
  const std::string& word(int id) const;
  std::vector<int> encode(const std::string& caption) const;
  // Stops at EOS; skips other special tokens.
  std::string decode(const std::vector<int>& ids) const;
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
};

std::string caption_of(const Scene& s);

struct Manifest {
  FrameGeometry geometry;
  std::vector<Scene> scenes;
  std::vector<std::string> captions;
};

// Sample seeds for the train split start at data_seed * 2^32; eval seeds start
// 2^31 further on. Eval scenes whose parameters repeat a train scene are skipped.
Manifest make_dataset(Index n, std::uint64_t data_seed, const FrameGeometry& g,
                      bool eval_split = false, const Manifest* exclude = nullptr);

void write_manifest(const Manifest& m, const std::string& path);
Manifest read_manifest(const std::string& path);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace abmamba
