#include "mtq/audio_io.hpp"

#include "mtq/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mtq::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats are read and written assuming a little-endian host");

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t offset) {
  if (offset + sizeof(T) > buf.size()) throw IoError("truncated file");
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

dsp::Waveform read_wav(const std::filesystem::path& path) {
  const std::vector<char> buf = slurp(path);
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw IoError(path.string() + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw IoError(path.string() + ": data chunk before fmt chunk");
      if (format != 1 || bits != 16 || channels != 1) {
        throw IoError(path.string() + ": only 16-bit PCM mono WAV is supported");
      }
      if (body + size > buf.size()) throw IoError(path.string() + ": truncated data chunk");
      dsp::Waveform w;
      w.sample_rate_hz = static_cast<int>(rate);
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        w.samples[i] = read_le<std::int16_t>(buf, body + 2 * i) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw IoError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const dsp::Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  write_le<std::uint16_t>(out, 2);
  write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double s : w.samples) {
    const double code = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    write_le<std::int16_t>(out, static_cast<std::int16_t>(code));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_embedding_sidecar(const std::filesystem::path& path) {
  const std::vector<char> buf = slurp(path);
  if (buf.size() < 16 || std::memcmp(buf.data(), "MTQE", 4) != 0) {
    throw IoError(path.string() + ": not an embedding sidecar (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(buf, 4);
  if (version != kEmbeddingVersion) {
    throw IoError(path.string() + ": unsupported sidecar version " + std::to_string(version));
  }
  const auto frames = read_le<std::uint32_t>(buf, 8);
  const auto dim = read_le<std::uint32_t>(buf, 12);
  if (frames == 0 || dim == 0) throw IoError(path.string() + ": empty embedding sidecar");
  const std::size_t count = static_cast<std::size_t>(frames) * dim;
  if (buf.size() != 16 + 4 * count) {
    throw IoError(path.string() + ": payload size does not match header");
  }
  Tensor out({frames, dim});
  for (std::size_t i = 0; i < count; ++i) out[i] = read_le<float>(buf, 16 + 4 * i);
  return out;
}

void write_embedding_sidecar(const std::filesystem::path& path, const Tensor& emb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("MTQE", 4);
  write_le<std::uint32_t>(out, kEmbeddingVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(emb.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(emb.cols()));
  for (double v : emb.values()) write_le<float>(out, static_cast<float>(v));
}

Tensor resample_rows(const Tensor& emb, std::size_t target_num_frames) {
  const std::size_t src = emb.rows();
  const std::size_t dim = emb.cols();
  if (target_num_frames == 0) throw ShapeError("target frame count must be positive");
  if (src == target_num_frames) return emb.reshaped({src, dim});
  Tensor out({target_num_frames, dim});
  for (std::size_t i = 0; i < target_num_frames; ++i) {
    const double pos = target_num_frames == 1
                           ? 0.0
                           : static_cast<double>(i) * static_cast<double>(src - 1) /
                                 static_cast<double>(target_num_frames - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), src - 1);
    const std::size_t hi = std::min(lo + 1, src - 1);
    const double frac = pos - static_cast<double>(lo);
    for (std::size_t d = 0; d < dim; ++d) {
      const double a = emb.at(lo, d);
      out.at(i, d) = frac == 0.0 ? a : a + frac * (emb.at(hi, d) - a);
    }
  }
  return out;
}

Tensor load_embeddings(const std::filesystem::path& path, std::size_t target_num_frames,
                       std::size_t expected_dim) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("embeddings enabled but sidecar is missing: " + path.string());
  }
  Tensor emb = read_embedding_sidecar(path);
  if (expected_dim != 0 && emb.cols() != expected_dim) {
    throw ShapeError("embedding dim mismatch: sidecar has " + std::to_string(emb.cols()) +
                     ", model expects " + std::to_string(expected_dim));
  }
  return resample_rows(emb, target_num_frames);
}

}  // namespace mtq::io
