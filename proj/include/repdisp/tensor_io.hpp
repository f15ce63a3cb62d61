#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "repdisp/matrix.hpp"

namespace repdisp {

/// Per-row metadata carried in the JSONL sidecar next to an EDF dump.
struct SegmentMeta {
  std::size_t row_index = 0;
  std::string segment_id;
  std::optional<std::uint64_t> token_count;
  std::optional<double> logprob_sum;  // natural log
  std::optional<double> perplexity;
  std::optional<bool> correct;
  std::optional<std::string> cluster_id;
  std::optional<std::string> layer_tag;
  std::vector<std::string> tags;
};

enum class TensorDtype { f32, f16, bf16 };

struct TensorHeaderEntry {
  std::string name;
  TensorDtype dtype = TensorDtype::f32;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::uint64_t begin = 0;  // relative to the start of the data section
  std::uint64_t end = 0;
};

// Embedding dump format: "EDF1", dtype byte, 3 reserved bytes, u64 rows,
// u64 dim (both little-endian), then row-major little-endian f32 payload.
inline constexpr std::size_t kEdfHeaderSize = 24;
inline constexpr std::uint8_t kEdfDtypeF32 = 0;

void write_edf(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix read_edf(const std::filesystem::path& path);

/// Encodes/decodes the EDF byte image; the file functions wrap these.
std::vector<std::uint8_t> encode_edf(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_edf(std::span<const std::uint8_t> bytes);

SegmentMeta parse_meta_line(const std::string& line, std::size_t line_number);
std::vector<SegmentMeta> read_meta_jsonl(const std::filesystem::path& path);

/// Checks every row_index against the paired matrix.
void validate_meta(std::span<const SegmentMeta> metas, const EmbeddingMatrix& matrix);

std::vector<TensorHeaderEntry> read_safetensors_header(const std::filesystem::path& path);

/// Reads a single rank-2 tensor, widening F16/BF16 to f32. Only the bytes
/// of the requested tensor are read from the data section.
EmbeddingMatrix read_safetensors_matrix(const std::filesystem::path& path,
                                        const std::string& tensor_name);

float half_to_float(std::uint16_t bits) noexcept;
float bfloat16_to_float(std::uint16_t bits) noexcept;

}  // namespace repdisp
