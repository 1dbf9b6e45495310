#pragma once

// Motion sequences: the synthetic generator, the text sequence format, and
// uniform clip sampling.
//
// Sequence file layout:
//   # fps=<float> channels=<int>
//   # names=<label>,<label>,...
//   <v>,<v>,...            one frame per line, shortest round-trip decimals
// Later lines starting with '#' are comments.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pvred/error.hpp"
#include "pvred/textio.hpp"

namespace pvred::data {

/// T x D exponential-map channels sampled at a fixed frame rate.
struct MotionSequence {
  Eigen::MatrixXd frames;
  double fps = 25.0;
  std::vector<std::string> channel_names;

  Eigen::Index length() const { return frames.rows(); }
  Eigen::Index channels() const { return frames.cols(); }

  bool operator==(const MotionSequence&) const = default;
};

/// Default channel labels: j<joint>_<axis>.
inline std::vector<std::string> default_channel_names(Eigen::Index channels) {
  static constexpr char kAxes[] = {'x', 'y', 'z'};
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(channels));
  for (Eigen::Index c = 0; c < channels; ++c)
    names.push_back("j" + std::to_string(c / 3) + "_" + kAxes[c % 3]);
  return names;
}

// ---------------------------------------------------------------------------
// Synthetic motion

/// Parameters of the synthetic generator. Channel c of a sequence is
///   offset_c + sum_k a_k sin(2 pi f_k t / fps + phi_k) + drift_c t / fps + noise,
/// with every coefficient drawn from the ranges below. Drift is non-zero only
/// on aperiodic sequences.
struct SynthSpec {
  int num_sequences = 24;
  long frames = 500;
  int joints = 4;
  double fps = 25.0;
  int harmonics = 2;
  double amplitude_min = 0.05;
  double amplitude_max = 0.3;
  double frequency_min = 0.1;  // Hz
  double frequency_max = 0.6;  // Hz
  double phase_min = 0.0;
  double phase_max = 2.0 * std::numbers::pi;
  double offset_max = 0.3;         // rest pose in [-offset_max, offset_max]
  double drift_max = 0.03;         // rad/s, aperiodic sequences only
  double aperiodic_fraction = 0.5;
  double noise_std = 0.002;
  std::uint64_t seed = 7;

  void validate() const {
    auto fail = [](const std::string& m) { throw InvalidSpec("synthetic spec: " + m); };
    if (num_sequences < 0) fail("num_sequences must be >= 0");
    if (frames < 1) fail("frames must be >= 1");
    if (joints < 1) fail("joints must be >= 1");
    if (!(fps > 0.0)) fail("fps must be positive");
    if (harmonics < 1) fail("harmonics must be >= 1");
    if (!(amplitude_min >= 0.0 && amplitude_min <= amplitude_max)) fail("amplitude range must satisfy 0 <= min <= max");
    if (amplitude_max > std::numbers::pi) fail("amplitude_max must not exceed pi");
    if (!(frequency_min >= 0.0 && frequency_min <= frequency_max)) fail("frequency range must satisfy 0 <= min <= max");
    if (frequency_max >= 0.5 * fps)
      fail("frequency_max " + textio::format_double(frequency_max) + " Hz is not below Nyquist (" +
           textio::format_double(0.5 * fps) + " Hz)");
    if (!(phase_min <= phase_max)) fail("phase range must satisfy min <= max");
    if (!(offset_max >= 0.0) || !(drift_max >= 0.0) || !(noise_std >= 0.0))
      fail("offset_max, drift_max and noise_std must be non-negative");
    if (!(aperiodic_fraction >= 0.0 && aperiodic_fraction <= 1.0)) fail("aperiodic_fraction must lie in [0, 1]");
  }

  Eigen::Index channels() const { return 3 * static_cast<Eigen::Index>(joints); }

  /// Whether sequence `index` carries a drift term; spreads them evenly.
  bool is_aperiodic(int index) const {
    return std::floor((index + 1) * aperiodic_fraction) > std::floor(index * aperiodic_fraction);
  }
};

namespace detail {

// uniform_real_distribution(a, a) is undefined, so degenerate ranges bypass it.
inline double draw_uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace detail

/// Deterministic function of `spec`.
inline std::vector<MotionSequence> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Eigen::Index channels = spec.channels();

  std::vector<MotionSequence> out;
  out.reserve(static_cast<std::size_t>(spec.num_sequences));
  for (int s = 0; s < spec.num_sequences; ++s) {
    MotionSequence seq;
    seq.fps = spec.fps;
    seq.channel_names = default_channel_names(channels);
    seq.frames.resize(spec.frames, channels);
    const bool aperiodic = spec.is_aperiodic(s);
    for (Eigen::Index c = 0; c < channels; ++c) {
      const double offset = detail::draw_uniform(rng, -spec.offset_max, spec.offset_max);
      const double drift = aperiodic ? detail::draw_uniform(rng, -spec.drift_max, spec.drift_max) : 0.0;
      std::vector<double> amp(spec.harmonics), freq(spec.harmonics), phase(spec.harmonics);
      for (int k = 0; k < spec.harmonics; ++k) {
        amp[k] = detail::draw_uniform(rng, spec.amplitude_min, spec.amplitude_max);
        freq[k] = detail::draw_uniform(rng, spec.frequency_min, spec.frequency_max);
        phase[k] = detail::draw_uniform(rng, spec.phase_min, spec.phase_max);
      }
      for (Eigen::Index t = 0; t < spec.frames; ++t) {
        const double time = static_cast<double>(t) / spec.fps;
        double value = offset + drift * time;
        for (int k = 0; k < spec.harmonics; ++k)
          value += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * time + phase[k]);
        if (spec.noise_std > 0.0) value += spec.noise_std * noise(rng);
        seq.frames(t, c) = value;
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence text format

inline std::string format_sequence(const MotionSequence& seq) {
  if (static_cast<Eigen::Index>(seq.channel_names.size()) != seq.channels())
    throw ShapeError("format_sequence: " + std::to_string(seq.channel_names.size()) + " names for " +
                     std::to_string(seq.channels()) + " channels");
  for (const auto& name : seq.channel_names)
    if (name.find_first_of(",\n\r") != std::string::npos)
      throw InvalidInput("format_sequence: channel name '" + name + "' contains a separator");
  if (!seq.frames.allFinite()) throw InvalidInput("format_sequence: non-finite frame value");

  std::string out = "# fps=" + textio::format_double(seq.fps) + " channels=" + std::to_string(seq.channels()) + "\n";
  out += "# names=";
  for (std::size_t i = 0; i < seq.channel_names.size(); ++i) {
    if (i) out += ',';
    out += seq.channel_names[i];
  }
  out += '\n';
  for (Eigen::Index t = 0; t < seq.length(); ++t) {
    for (Eigen::Index c = 0; c < seq.channels(); ++c) {
      if (c) out += ',';
      out += textio::format_double(seq.frames(t, c));
    }
    out += '\n';
  }
  return out;
}

inline MotionSequence parse_sequence(std::string_view text) {
  const auto lines = textio::lines(text);
  if (lines.size() < 2) throw ParseError("sequence file needs a two-line header", lines.size() + 1);

  MotionSequence seq;
  long channels = -1;
  {
    const std::string_view header = lines[0];
    constexpr std::string_view kFps = "# fps=";
    if (!header.starts_with(kFps)) throw ParseError("expected '# fps=<float> channels=<int>'", 1);
    const auto space = header.find(' ', kFps.size());
    if (space == std::string_view::npos || !header.substr(space + 1).starts_with("channels="))
      throw ParseError("expected '# fps=<float> channels=<int>'", 1);
    seq.fps = textio::parse_double(header.substr(kFps.size(), space - kFps.size()), 1);
    channels = textio::parse_long(header.substr(space + 1 + std::string_view("channels=").size()), 1);
    if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) throw ParseError("fps must be positive", 1);
    if (channels < 1) throw ParseError("channels must be >= 1", 1);
  }
  {
    constexpr std::string_view kNames = "# names=";
    if (!lines[1].starts_with(kNames)) throw ParseError("expected '# names=<labels>'", 2);
    for (auto name : textio::split(lines[1].substr(kNames.size()), ',')) seq.channel_names.emplace_back(name);
    if (static_cast<long>(seq.channel_names.size()) != channels)
      throw ParseError("names lists " + std::to_string(seq.channel_names.size()) + " labels for " +
                           std::to_string(channels) + " channels",
                       2);
  }

  std::vector<double> values;
  long rows = 0;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    const auto fields = textio::split(line, ',');
    if (static_cast<long>(fields.size()) != channels)
      throw ParseError("frame row has " + std::to_string(fields.size()) + " values, expected " +
                           std::to_string(channels),
                       i + 1);
    for (auto f : fields) {
      const double v = textio::parse_double(f, i + 1);
      if (!std::isfinite(v)) throw ParseError("non-finite value", i + 1);
      values.push_back(v);
    }
    ++rows;
  }
  seq.frames = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, channels);
  return seq;
}

inline void save_sequence(const MotionSequence& seq, const std::filesystem::path& path) {
  textio::atomic_write_file(path, format_sequence(seq));
}

inline MotionSequence load_sequence(const std::filesystem::path& path) {
  try {
    return parse_sequence(textio::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

// ---------------------------------------------------------------------------
// Clip sampling

/// A contiguous window: `observed` is frames [start, start+n), `target` the m frames after it.
struct Clip {
  Eigen::MatrixXd observed;
  Eigen::MatrixXd target;
  Eigen::Index start = 0;
};

inline Clip clip_at(const MotionSequence& seq, Eigen::Index start, Eigen::Index observed, Eigen::Index predicted) {
  if (observed < 1 || predicted < 0) throw InvalidInput("clip: need n >= 1 and m >= 0");
  if (start < 0 || start + observed + predicted > seq.length())
    throw InsufficientLength("clip [" + std::to_string(start) + ", " + std::to_string(start + observed + predicted) +
                             ") exceeds sequence of " + std::to_string(seq.length()) + " frames");
  return {seq.frames.middleRows(start, observed), seq.frames.middleRows(start + observed, predicted), start};
}

/// Uniformly random start in [0, T - n - m].
inline Clip sample_clip(const MotionSequence& seq, Eigen::Index observed, Eigen::Index predicted,
                        std::mt19937_64& rng) {
  if (seq.length() < observed + predicted)
    throw InsufficientLength("sequence has " + std::to_string(seq.length()) + " frames, clip needs " +
                             std::to_string(observed + predicted));
  std::uniform_int_distribution<Eigen::Index> start(0, seq.length() - observed - predicted);
  return clip_at(seq, start(rng), observed, predicted);
}

}  // namespace pvred::data
