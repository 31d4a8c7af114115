#pragma once

#include "mtq/dsp.hpp"
#include "mtq/tensor.hpp"

#include <cstdint>
#include <filesystem>

namespace mtq::io {

// 16-bit PCM mono WAV. Samples are scaled by 1/32768 on read; on write they
// are rounded to the nearest code and saturated.
dsp::Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const dsp::Waveform& w);

// Embedding sidecar: "MTQE", u32 version, u32 num_frames, u32 emb_dim, then
// num_frames * emb_dim little-endian float32, row-major.
inline constexpr std::uint32_t kEmbeddingVersion = 1;

Tensor read_embedding_sidecar(const std::filesystem::path& path);
void write_embedding_sidecar(const std::filesystem::path& path, const Tensor& emb);

// Resamples rows along time to target_num_frames by linear interpolation.
Tensor resample_rows(const Tensor& emb, std::size_t target_num_frames);

// Reads a sidecar and aligns it to the feature frame count. expected_dim of 0
// skips the dimension check.
Tensor load_embeddings(const std::filesystem::path& path, std::size_t target_num_frames,
                       std::size_t expected_dim = 0);

}  // namespace mtq::io
