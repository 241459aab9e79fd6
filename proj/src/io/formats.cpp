#include "evlt/io/formats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

namespace evlt::io {

const char* code_name(FormatErrorCode c) {
  switch (c) {
    case FormatErrorCode::open_failed: return "open-failed";
    case FormatErrorCode::write_failed: return "write-failed";
    case FormatErrorCode::truncated: return "truncated";
    case FormatErrorCode::bad_magic: return "bad-magic";
    case FormatErrorCode::unsupported_version: return "unsupported-version";
    case FormatErrorCode::unsupported_dtype: return "unsupported-dtype";
    case FormatErrorCode::dim_payload_mismatch: return "dim-payload-mismatch";
    case FormatErrorCode::unsupported_format: return "unsupported-format";
    case FormatErrorCode::bad_header: return "bad-header";
  }
  return "unknown";
}

namespace {

constexpr std::uint8_t kVersion = 1;

template <typename V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is, const char* what) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(V)))
    throw FormatError(FormatErrorCode::truncated, std::string("unexpected end of file reading ") + what);
  return v;
}

void expect_magic(std::istream& is, const char* magic) {
  char m[4];
  is.read(m, 4);
  if (is.gcount() != 4) throw FormatError(FormatErrorCode::truncated, "file shorter than its magic");
  if (std::memcmp(m, magic, 4) != 0)
    throw FormatError(FormatErrorCode::bad_magic,
                      "expected \"" + std::string(magic, 4) + "\", found \"" + std::string(m, 4) + "\"");
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw FormatError(FormatErrorCode::open_failed, "cannot open " + p.string());
  return is;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(FormatErrorCode::write_failed, "cannot create " + p.string());
  return os;
}

void finish(std::ofstream& os, const fs::path& p) {
  os.flush();
  if (!os) throw FormatError(FormatErrorCode::write_failed, "write to " + p.string() + " failed");
}

struct RecordHeader {
  DType dtype;
  numgrid::Shape shape;
  std::size_t numel;
};

RecordHeader read_header(std::istream& is) {
  expect_magic(is, "EVLT");
  const auto version = get<std::uint8_t>(is, "version");
  if (version != kVersion)
    throw FormatError(FormatErrorCode::unsupported_version, "tensor version " + std::to_string(version));
  const auto dtype = get<std::uint8_t>(is, "dtype");
  if (dtype > 1) throw FormatError(FormatErrorCode::unsupported_dtype, "dtype code " + std::to_string(dtype));
  const auto ndim = get<std::uint32_t>(is, "ndim");
  if (ndim == 0 || ndim > 16) throw FormatError(FormatErrorCode::bad_header, "ndim " + std::to_string(ndim));
  RecordHeader h{static_cast<DType>(dtype), {}, 1};
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = get<std::uint64_t>(is, "dims");
    if (d == 0 || d > (std::uint64_t{1} << 40))
      throw FormatError(FormatErrorCode::bad_header, "dimension " + std::to_string(d));
    h.shape.push_back(static_cast<std::size_t>(d));
    h.numel *= static_cast<std::size_t>(d);
    if (h.numel > (std::size_t{1} << 40)) throw FormatError(FormatErrorCode::bad_header, "tensor too large");
  }
  return h;
}

template <typename T>
numgrid::Tensor<T> read_payload(std::istream& is, const RecordHeader& h) {
  std::vector<T> v(h.numel);
  const auto bytes = static_cast<std::streamsize>(h.numel * sizeof(T));
  is.read(reinterpret_cast<char*>(v.data()), bytes);
  if (is.gcount() != bytes)
    throw FormatError(FormatErrorCode::dim_payload_mismatch,
                      "dims " + numgrid::shape_str(h.shape) + " need " + std::to_string(h.numel) + " values, found " +
                          std::to_string(is.gcount() / static_cast<std::streamsize>(sizeof(T))));
  return numgrid::Tensor<T>(h.shape, std::move(v));
}

AnyTensor read_record(std::istream& is, const RecordHeader& h) {
  if (h.dtype == DType::f32) return read_payload<float>(is, h);
  return read_payload<double>(is, h);
}

template <typename T>
numgrid::Tensor<T> convert(const AnyTensor& a) {
  return std::visit([](const auto& t) { return t.template cast<T>(); }, a);
}

// Netpbm header: magic, then three whitespace/comment separated integers.
struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
};

PnmHeader read_pnm_header(std::istream& is, const fs::path& p) {
  PnmHeader h;
  auto token = [&]() {
    std::string t;
    int ch;
    while ((ch = is.get()) != EOF) {
      if (ch == '#') {
        while ((ch = is.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    return t;
  };
  h.magic = token();
  auto num = [&](const char* what) {
    const std::string t = token();
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw FormatError(FormatErrorCode::bad_header, p.string() + ": bad " + what + " '" + t + "'");
    return std::stoi(t);
  };
  if (h.magic != "P6" && h.magic != "P5")
    throw FormatError(FormatErrorCode::unsupported_format, p.string() + ": magic '" + h.magic + "' (only P5/P6)");
  h.width = num("width");
  h.height = num("height");
  h.maxval = num("maxval");
  if (h.width <= 0 || h.height <= 0) throw FormatError(FormatErrorCode::bad_header, p.string() + ": empty image");
  if (h.maxval != 255)
    throw FormatError(FormatErrorCode::unsupported_format, p.string() + ": maxval " + std::to_string(h.maxval));
  return h;
}

Image read_pnm(const fs::path& p, const char* want, int channels) {
  auto is = open_in(p);
  const PnmHeader h = read_pnm_header(is, p);
  if (h.magic != want)
    throw FormatError(FormatErrorCode::unsupported_format, p.string() + ": expected " + want + ", got " + h.magic);
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * channels;
  std::vector<unsigned char> bytes(n);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError(FormatErrorCode::truncated, p.string() + ": expected " + std::to_string(n) +
                                                      " pixel bytes, got " + std::to_string(is.gcount()));
  Image img(h.height, h.width, channels);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_pnm(const fs::path& p, const Image& img, const char* magic, int channels) {
  require(img.channels == channels, std::string("write ") + magic + ": wrong channel count");
  auto os = open_out(p);
  os << magic << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(img.data[i]);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  finish(os, p);
}

}  // namespace

template <typename T>
void write_tensor_record(std::ostream& os, const numgrid::Tensor<T>& t) {
  require(t.defined(), "write_tensor: undefined tensor");
  os.write("EVLT", 4);
  put<std::uint8_t>(os, kVersion);
  put<std::uint8_t>(os, std::is_same_v<T, float> ? 0 : 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
}

AnyTensor read_tensor_record(std::istream& is) { return read_record(is, read_header(is)); }

template <typename T>
void write_tensor(const fs::path& path, const numgrid::Tensor<T>& t) {
  auto os = open_out(path);
  write_tensor_record(os, t);
  finish(os, path);
}

AnyTensor read_tensor(const fs::path& path) {
  auto is = open_in(path);
  const RecordHeader h = read_header(is);
  const std::size_t elem = h.dtype == DType::f32 ? 4 : 8;
  const auto here = is.tellg();
  is.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::size_t>(is.tellg() - here);
  is.seekg(here);
  if (remaining != h.numel * elem)
    throw FormatError(FormatErrorCode::dim_payload_mismatch,
                      path.string() + ": dims " + numgrid::shape_str(h.shape) + " need " + std::to_string(h.numel) +
                          " values, payload holds " + std::to_string(remaining / elem) +
                          (remaining % elem ? " and a partial value" : ""));
  return read_record(is, h);
}

template <typename T>
numgrid::Tensor<T> read_tensor_as(const fs::path& path) {
  return convert<T>(read_tensor(path));
}

template <typename T>
void write_checkpoint(const fs::path& path, const numgrid::ParamTree<T>& params) {
  auto os = open_out(path);
  os.write("EVCK", 4);
  put<std::uint8_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    require(name.size() <= 0xFFFF, "write_checkpoint: parameter name too long");
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor_record(os, t);
  }
  finish(os, path);
}

template <typename T>
numgrid::ParamTree<T> read_checkpoint(const fs::path& path) {
  auto is = open_in(path);
  expect_magic(is, "EVCK");
  const auto version = get<std::uint8_t>(is, "version");
  if (version != kVersion)
    throw FormatError(FormatErrorCode::unsupported_version, "checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is, "entry count");
  numgrid::ParamTree<T> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint16_t>(is, "name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (is.gcount() != len) throw FormatError(FormatErrorCode::truncated, "checkpoint entry name");
    const RecordHeader h = read_header(is);
    try {
      out.add(name, convert<T>(read_record(is, h)));
    } catch (const FormatError& e) {
      throw FormatError(e.code(), "entry '" + name + "': " + e.what());
    }
  }
  if (is.peek() != EOF) throw FormatError(FormatErrorCode::dim_payload_mismatch, "trailing bytes after checkpoint");
  return out;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_ppm(const fs::path& path, const Image& img) { write_pnm(path, img, "P6", 3); }
Image read_ppm(const fs::path& path) { return read_pnm(path, "P6", 3); }
void write_pgm(const fs::path& path, const Image& img) { write_pnm(path, img, "P5", 1); }
Image read_pgm(const fs::path& path) { return read_pnm(path, "P5", 1); }

void write_events(const fs::path& path, const events::EventStream& ev) {
  require(ev.size() <= 0xFFFFFFFFull, "write_events: too many events");
  auto os = open_out(path);
  os.write("EVST", 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ev.size()));
  for (const auto& e : ev) {
    put(os, e.x);
    put(os, e.y);
    put(os, e.t);
    put(os, e.c);
    put(os, e.p);
  }
  finish(os, path);
}

events::EventStream read_events(const fs::path& path) {
  auto is = open_in(path);
  expect_magic(is, "EVST");
  const auto count = get<std::uint32_t>(is, "event count");
  events::EventStream ev;
  ev.reserve(std::min<std::uint32_t>(count, 1u << 24));
  for (std::uint32_t i = 0; i < count; ++i) {
    events::Event e;
    e.x = get<std::uint16_t>(is, "event");
    e.y = get<std::uint16_t>(is, "event");
    e.t = get<float>(is, "event");
    e.c = get<std::uint8_t>(is, "event");
    e.p = get<std::int8_t>(is, "event");
    if (e.c > 2 || (e.p != 1 && e.p != -1))
      throw FormatError(FormatErrorCode::bad_header, "event " + std::to_string(i) + " has bad channel or polarity");
    ev.push_back(e);
  }
  if (is.peek() != EOF) throw FormatError(FormatErrorCode::dim_payload_mismatch, "trailing bytes after events");
  return ev;
}

std::string read_text(const fs::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  finish(os, path);
}

#define EVLT_IO_INSTANTIATE(T)                                                        \
  template void write_tensor_record<T>(std::ostream&, const numgrid::Tensor<T>&);     \
  template void write_tensor<T>(const fs::path&, const numgrid::Tensor<T>&);          \
  template numgrid::Tensor<T> read_tensor_as<T>(const fs::path&);                     \
  template void write_checkpoint<T>(const fs::path&, const numgrid::ParamTree<T>&);   \
  template numgrid::ParamTree<T> read_checkpoint<T>(const fs::path&);

EVLT_IO_INSTANTIATE(float)
EVLT_IO_INSTANTIATE(double)

}  // namespace evlt::io
