#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>

#include "evlt/common/image.hpp"
#include "evlt/events/events.hpp"
#include "evlt/numgrid/param_tree.hpp"

namespace evlt::io {

namespace fs = std::filesystem;

enum class FormatErrorCode {
  open_failed,
  write_failed,
  truncated,
  bad_magic,
  unsupported_version,
  unsupported_dtype,
  dim_payload_mismatch,
  unsupported_format,
  bad_header,
};

const char* code_name(FormatErrorCode c);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorCode code, const std::string& what)
      : std::runtime_error(std::string(code_name(code)) + ": " + what), code_(code) {}
  FormatErrorCode code() const { return code_; }

 private:
  FormatErrorCode code_;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using AnyTensor = std::variant<numgrid::Tensor<float>, numgrid::Tensor<double>>;

// Tensor record: "EVLT", u8 version 1, u8 dtype, u32 ndim, u64 dims[ndim],
// row-major payload. Everything little-endian.
template <typename T>
void write_tensor_record(std::ostream& os, const numgrid::Tensor<T>& t);
AnyTensor read_tensor_record(std::istream& is);

template <typename T>
void write_tensor(const fs::path& path, const numgrid::Tensor<T>& t);
/// Reads a single-tensor file; trailing or missing payload bytes are a
/// dim_payload_mismatch.
AnyTensor read_tensor(const fs::path& path);
/// Reads and converts to T.
template <typename T>
numgrid::Tensor<T> read_tensor_as(const fs::path& path);

// Checkpoint: "EVCK", u8 version 1, u32 count, then per entry u16 name
// length, UTF-8 name, tensor record. Entries in lexicographic order.
template <typename T>
void write_checkpoint(const fs::path& path, const numgrid::ParamTree<T>& params);
/// Loads every entry converted to T; nothing is frozen.
template <typename T>
numgrid::ParamTree<T> read_checkpoint(const fs::path& path);

/// P6, maxval 255; values clamped to [0,1] and rounded.
void write_ppm(const fs::path& path, const Image& img);
Image read_ppm(const fs::path& path);
/// P5, maxval 255, single channel.
void write_pgm(const fs::path& path, const Image& img);
Image read_pgm(const fs::path& path);
std::uint8_t quantize(double v);

// "EVST", u32 count, then u16 x, u16 y, f32 t, u8 c, i8 p per event.
void write_events(const fs::path& path, const events::EventStream& ev);
events::EventStream read_events(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace evlt::io
