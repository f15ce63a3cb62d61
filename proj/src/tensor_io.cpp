#include "repdisp/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "repdisp/report_io.hpp"

namespace repdisp {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16_le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "failed to open: " + path.string());
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  if (size < 0) fail(Errc::io, "tellg failed: " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(buf.data()), size)) {
    fail(Errc::io, "failed to read: " + path.string());
  }
  return buf;
}

std::size_t dtype_size(TensorDtype d) {
  return d == TensorDtype::f32 ? 4 : 2;
}

TensorDtype parse_dtype(const std::string& s, const std::string& name) {
  if (s == "F32") return TensorDtype::f32;
  if (s == "F16") return TensorDtype::f16;
  if (s == "BF16") return TensorDtype::bf16;
  fail(Errc::unsupported_dtype, "tensor '" + name + "' has unsupported dtype " + s);
}

struct SafetensorsLayout {
  std::uint64_t header_len = 0;
  std::uint64_t data_size = 0;
  json header;
};

SafetensorsLayout read_layout(std::ifstream& in, const fs::path& path) {
  in.seekg(0, std::ios::end);
  const std::streamoff file_size = in.tellg();
  in.seekg(0, std::ios::beg);
  if (file_size < 8) fail(Errc::truncated, "safetensors file too small: " + path.string());

  std::uint8_t len_bytes[8];
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  SafetensorsLayout layout;
  layout.header_len = get_u64_le(len_bytes);
  if (layout.header_len > static_cast<std::uint64_t>(file_size) - 8) {
    fail(Errc::truncated, "safetensors header length exceeds file size: " + path.string());
  }
  std::string text(layout.header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(layout.header_len));
  if (!in) fail(Errc::io, "failed to read safetensors header: " + path.string());
  try {
    layout.header = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::parse, "malformed safetensors header: " + std::string(e.what()));
  }
  if (!layout.header.is_object()) fail(Errc::parse, "safetensors header is not an object");
  layout.data_size = static_cast<std::uint64_t>(file_size) - 8 - layout.header_len;
  return layout;
}

TensorHeaderEntry parse_entry(const std::string& name, const json& j) {
  TensorHeaderEntry e;
  e.name = name;
  try {
    e.dtype = parse_dtype(j.at("dtype").get<std::string>(), name);
    const auto shape = j.at("shape").get<std::vector<std::uint64_t>>();
    if (shape.size() != 2) {
      fail(Errc::bad_shape, "tensor '" + name + "' has rank " + std::to_string(shape.size()) +
                                ", expected 2");
    }
    e.rows = shape[0];
    e.cols = shape[1];
    const auto offsets = j.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2) fail(Errc::parse, "tensor '" + name + "' has malformed data_offsets");
    e.begin = offsets[0];
    e.end = offsets[1];
  } catch (const json::exception& ex) {
    fail(Errc::parse, "malformed entry for tensor '" + name + "': " + ex.what());
  }
  return e;
}

void check_entry_bounds(const TensorHeaderEntry& e, std::uint64_t data_size) {
  if (e.end < e.begin || e.end > data_size) {
    fail(Errc::out_of_bounds, "tensor '" + e.name + "' offsets [" + std::to_string(e.begin) +
                                  "," + std::to_string(e.end) + ") exceed data section of " +
                                  std::to_string(data_size) + " bytes");
  }
  const std::uint64_t want = e.rows * e.cols * dtype_size(e.dtype);
  if (e.end - e.begin != want) {
    fail(Errc::bad_shape, "tensor '" + e.name + "' spans " + std::to_string(e.end - e.begin) +
                              " bytes, shape needs " + std::to_string(want));
  }
}

template <typename T>
std::optional<T> opt_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

std::vector<std::uint8_t> encode_edf(const EmbeddingMatrix& matrix) {
  std::vector<std::uint8_t> out{'E', 'D', 'F', '1', kEdfDtypeF32, 0, 0, 0};
  out.reserve(kEdfHeaderSize + matrix.data().size() * 4);
  put_u64_le(out, matrix.n_rows());
  put_u64_le(out, matrix.dim());
  for (float f : matrix.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

EmbeddingMatrix decode_edf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "EDF1", 4) != 0) fail(Errc::bad_magic, "bad EDF magic");
  if (bytes.size() < kEdfHeaderSize) fail(Errc::truncated, "EDF header truncated");
  if (bytes[4] != kEdfDtypeF32) {
    fail(Errc::unsupported_dtype, "unsupported EDF dtype code " + std::to_string(bytes[4]));
  }
  const std::uint64_t rows = get_u64_le(bytes.data() + 8);
  const std::uint64_t dim = get_u64_le(bytes.data() + 16);
  if (rows == 0 || dim == 0) fail(Errc::bad_shape, "EDF declares an empty matrix");
  if (dim > std::numeric_limits<std::uint64_t>::max() / 4 / rows) {
    fail(Errc::bad_shape, "EDF shape overflows");
  }
  const std::uint64_t payload = rows * dim * 4;
  const std::uint64_t have = bytes.size() - kEdfHeaderSize;
  if (have < payload) {
    fail(Errc::truncated, "EDF payload truncated: have " + std::to_string(have) +
                              " bytes, need " + std::to_string(payload));
  }
  if (have > payload) {
    fail(Errc::bad_shape, "EDF has " + std::to_string(have - payload) + " trailing bytes");
  }
  std::vector<float> data(rows * dim);
  const std::uint8_t* p = bytes.data() + kEdfHeaderSize;
  for (std::size_t i = 0; i < data.size(); ++i, p += 4) {
    data[i] = std::bit_cast<float>(get_u32_le(p));
  }
  return EmbeddingMatrix(rows, dim, std::move(data));
}

void write_edf(const EmbeddingMatrix& matrix, const fs::path& path) {
  const auto bytes = encode_edf(matrix);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                           bytes.size()));
}

EmbeddingMatrix read_edf(const fs::path& path) {
  const auto bytes = read_all(path);
  return decode_edf(bytes);
}

SegmentMeta parse_meta_line(const std::string& line, std::size_t line_number) {
  const std::string where = "metadata line " + std::to_string(line_number);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(Errc::parse, where + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) fail(Errc::parse, where + ": expected a JSON object");

  SegmentMeta m;
  try {
    auto ri = j.find("row_index");
    if (ri == j.end() || !ri->is_number_integer() || ri->get<std::int64_t>() < 0) {
      fail(Errc::parse, where + ": missing or invalid row_index");
    }
    m.row_index = ri->get<std::size_t>();
    if (auto sid = j.find("segment_id"); sid != j.end() && !sid->is_null()) {
      m.segment_id = sid->is_string() ? sid->get<std::string>() : sid->dump();
    }
    m.token_count = opt_field<std::uint64_t>(j, "token_count");
    m.logprob_sum = opt_field<double>(j, "logprob_sum");
    m.perplexity = opt_field<double>(j, "perplexity");
    m.correct = opt_field<bool>(j, "correct");
    m.cluster_id = opt_field<std::string>(j, "cluster_id");
    m.layer_tag = opt_field<std::string>(j, "layer_tag");
    if (auto tags = opt_field<std::vector<std::string>>(j, "tags")) m.tags = *tags;
  } catch (const json::exception& e) {
    fail(Errc::parse, where + ": bad field type (" + e.what() + ")");
  }
  if (m.token_count && *m.token_count == 0) fail(Errc::parse, where + ": token_count must be >= 1");
  if (m.perplexity && !(*m.perplexity > 0.0)) fail(Errc::parse, where + ": perplexity must be > 0");
  return m;
}

std::vector<SegmentMeta> read_meta_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "failed to open: " + path.string());
  std::vector<SegmentMeta> out;
  std::set<std::size_t> seen;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    SegmentMeta m = parse_meta_line(line, line_number);
    if (!seen.insert(m.row_index).second) {
      fail(Errc::duplicate_index, "metadata line " + std::to_string(line_number) +
                                      ": duplicate row_index " + std::to_string(m.row_index));
    }
    out.push_back(std::move(m));
  }
  return out;
}

void validate_meta(std::span<const SegmentMeta> metas, const EmbeddingMatrix& matrix) {
  for (const auto& m : metas) {
    if (m.row_index >= matrix.n_rows()) {
      fail(Errc::out_of_bounds, "metadata row_index " + std::to_string(m.row_index) +
                                    " >= matrix rows " + std::to_string(matrix.n_rows()));
    }
  }
}

std::vector<TensorHeaderEntry> read_safetensors_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "failed to open: " + path.string());
  const auto layout = read_layout(in, path);
  std::vector<TensorHeaderEntry> out;
  for (const auto& [name, value] : layout.header.items()) {
    if (name == "__metadata__") continue;
    try {
      out.push_back(parse_entry(name, value));
    } catch (const Error& e) {
      // Tensors outside the supported subset are skipped in listings.
      if (e.code() != Errc::unsupported_dtype && e.code() != Errc::bad_shape) throw;
    }
  }
  return out;
}

EmbeddingMatrix read_safetensors_matrix(const fs::path& path, const std::string& tensor_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "failed to open: " + path.string());
  const auto layout = read_layout(in, path);

  auto it = layout.header.find(tensor_name);
  if (tensor_name == "__metadata__" || it == layout.header.end()) {
    fail(Errc::not_found, "tensor '" + tensor_name + "' not found in " + path.string());
  }
  const TensorHeaderEntry e = parse_entry(tensor_name, *it);
  check_entry_bounds(e, layout.data_size);
  if (e.rows == 0 || e.cols == 0) fail(Errc::bad_shape, "tensor '" + tensor_name + "' is empty");

  std::vector<std::uint8_t> raw(e.end - e.begin);
  in.seekg(static_cast<std::streamoff>(8 + layout.header_len + e.begin), std::ios::beg);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) fail(Errc::truncated, "failed to read tensor '" + tensor_name + "'");

  std::vector<float> data(e.rows * e.cols);
  const std::uint8_t* p = raw.data();
  switch (e.dtype) {
    case TensorDtype::f32:
      for (auto& v : data) { v = std::bit_cast<float>(get_u32_le(p)); p += 4; }
      break;
    case TensorDtype::f16:
      for (auto& v : data) { v = half_to_float(get_u16_le(p)); p += 2; }
      break;
    case TensorDtype::bf16:
      for (auto& v : data) { v = bfloat16_to_float(get_u16_le(p)); p += 2; }
      break;
  }
  return EmbeddingMatrix(e.rows, e.cols, std::move(data));
}

float half_to_float(std::uint16_t bits) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  std::uint32_t exp = (bits >> 10) & 0x1Fu;
  std::uint32_t mant = bits & 0x3FFu;
  std::uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      // subnormal: renormalize
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3FFu;
      out = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1F) {
    out = sign | 0x7F800000u | (mant << 13);
  } else {
    out = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(out);
}

float bfloat16_to_float(std::uint16_t bits) noexcept {
  return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

}  // namespace repdisp
