#include "xfer/array_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <optional>
#include <string_view>

#include "xfer/error.hpp"
#include "xfer/file_util.hpp"

static_assert(std::endian::native == std::endian::little, "payload is copied without byte swapping");

namespace xfer {

namespace {

constexpr std::uint8_t kMagic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kPreludeSize = 10;  // magic + version + header length
constexpr std::size_t kAlignment = 64;

std::size_t element_size(Dtype dtype) { return dtype == Dtype::kFloat32 ? 4 : 8; }

std::string shape_literal(const std::vector<std::size_t>& shape) {
  if (shape.size() == 1) return "(" + std::to_string(shape[0]) + ",)";
  return "(" + std::to_string(shape[0]) + ", " + std::to_string(shape[1]) + ")";
}

template <typename T>
void check_finite(const std::vector<T>& values) {
  if constexpr (std::is_floating_point_v<T>) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) throw DataError("non-finite value at element " + std::to_string(i));
    }
  }
}

// Minimal parser for the header dict literal numpy writes.
class HeaderParser {
 public:
  HeaderParser(std::string_view text, std::size_t base) : text_(text), base_(base) {}

  struct Fields {
    Dtype dtype;
    std::vector<std::size_t> shape;
  };

  Fields parse() {
    std::optional<Dtype> dtype;
    std::optional<bool> fortran;
    std::optional<std::vector<std::size_t>> shape;

    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::size_t key_pos = pos_;
      const std::string key = parse_string();
      expect(':');
      if (key == "descr") {
        const std::size_t at = pos_;
        const std::string descr = parse_string();
        if (descr == "<f8") dtype = Dtype::kFloat64;
        else if (descr == "<f4") dtype = Dtype::kFloat32;
        else if (descr == "<i8") dtype = Dtype::kInt64;
        else fail("unsupported dtype '" + descr + "'", at);
      } else if (key == "fortran_order") {
        skip_ws();
        const std::size_t at = pos_;
        if (consume("False")) fortran = false;
        else if (consume("True")) fortran = true;
        else fail("expected True or False", at);
      } else if (key == "shape") {
        shape = parse_shape();
      } else {
        fail("unexpected header key '" + key + "'", key_pos);
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect('}');
      break;
    }
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after header dict", pos_);
    if (!dtype || !fortran || !shape) fail("header is missing descr, fortran_order or shape", 0);
    if (*fortran) fail("fortran_order arrays are not supported", 0);
    return {*dtype, *shape};
  }

 private:
  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw ArrayFormatError("array header: " + what, base_ + at);
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool consume(std::string_view token) {
    if (text_.substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  std::string parse_string() {
    skip_ws();
    const char quote = peek();
    if (quote != '\'' && quote != '"') fail("expected quoted string", pos_);
    const std::size_t end = text_.find(quote, pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string", pos_);
    std::string out(text_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  std::size_t parse_dim() {
    skip_ws();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(text_[pos_] - '0');
      if (value > (std::size_t{1} << 40)) fail("dimension too large", start);
      ++pos_;
    }
    if (pos_ == start) fail("expected dimension", start);
    return value;
  }

  std::vector<std::size_t> parse_shape() {
    expect('(');
    const std::size_t start = pos_;
    std::vector<std::size_t> dims;
    skip_ws();
    while (peek() != ')') {
      dims.push_back(parse_dim());
      skip_ws();
      if (peek() == ',') ++pos_;
      skip_ws();
      if (pos_ >= text_.size()) fail("unterminated shape", start);
    }
    ++pos_;
    if (dims.empty() || dims.size() > 2) fail("only 1-D and 2-D arrays are supported", start);
    return dims;
  }

  std::string_view text_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

template <typename T>
std::vector<T> copy_payload(std::span<const std::uint8_t> payload, std::size_t count) {
  std::vector<T> out(count);
  if (count > 0) std::memcpy(out.data(), payload.data(), count * sizeof(T));
  return out;
}

}  // namespace

const char* dtype_descr(Dtype dtype) {
  switch (dtype) {
    case Dtype::kFloat64: return "<f8";
    case Dtype::kFloat32: return "<f4";
    case Dtype::kInt64: return "<i8";
  }
  return "?";
}

Array::Array(std::vector<std::size_t> shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) throw DataError("arrays must have one or two dimensions");
  std::size_t expected = 1;
  for (auto dim : shape_) expected *= dim;
  const std::size_t actual = std::visit([](const auto& v) { return v.size(); }, data_);
  if (expected != actual) {
    throw DataError("shape " + shape_literal(shape_) + " does not match " + std::to_string(actual) + " elements");
  }
}

Array Array::from_matrix(const Eigen::MatrixXd& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), m.rows(),
                                                                                      m.cols()) = m;
  return Array({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(data));
}

Array Array::from_matrix_f32(const Eigen::MatrixXd& m) {
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), m.rows(),
                                                                                     m.cols()) = m.cast<float>();
  return Array({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(data));
}

Array Array::from_labels(std::span<const int> labels) {
  std::vector<std::int64_t> data(labels.begin(), labels.end());
  return Array({labels.size(), 1}, std::move(data));
}

Dtype Array::dtype() const {
  return static_cast<Dtype>(data_.index());
}

Eigen::MatrixXd Array::to_matrix() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
  std::visit(
      [&](const auto& v) {
        for (std::size_t i = 0; i < rows(); ++i) {
          for (std::size_t j = 0; j < cols(); ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(v[i * cols() + j]);
          }
        }
      },
      data_);
  return out;
}

std::vector<std::int64_t> Array::to_integers() const {
  if (dtype() != Dtype::kInt64) {
    throw DataError(std::string("expected an <i8 array, got ") + dtype_descr(dtype()));
  }
  return std::get<std::vector<std::int64_t>>(data_);
}

std::vector<std::uint8_t> encode_array(const Array& array) {
  std::visit([](const auto& v) { check_finite(v); }, array.data());
  if (array.size() == 0) throw DataError("cannot write an empty array");

  std::string header = std::string("{'descr': '") + dtype_descr(array.dtype()) +
                       "', 'fortran_order': False, 'shape': " + shape_literal(array.shape()) + ", }";
  const std::size_t unpadded = kPreludeSize + header.size() + 1;
  header.append((kAlignment - unpadded % kAlignment) % kAlignment, ' ');
  header.push_back('\n');

  const std::size_t payload_size = array.size() * element_size(array.dtype());
  std::vector<std::uint8_t> out(kPreludeSize + header.size() + payload_size);
  std::memcpy(out.data(), kMagic, sizeof(kMagic));
  out[6] = 1;
  out[7] = 0;
  out[8] = static_cast<std::uint8_t>(header.size() & 0xff);
  out[9] = static_cast<std::uint8_t>(header.size() >> 8);
  std::memcpy(out.data() + kPreludeSize, header.data(), header.size());
  std::uint8_t* payload = out.data() + kPreludeSize + header.size();
  std::visit([&](const auto& v) { std::memcpy(payload, v.data(), payload_size); }, array.data());
  return out;
}

Array decode_array(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreludeSize) throw ArrayFormatError("file shorter than the array prelude", bytes.size());
  for (std::size_t i = 0; i < 6; ++i) {
    if (bytes[i] != kMagic[i]) throw ArrayFormatError("bad magic bytes", i);
  }
  if (bytes[6] != 1 || bytes[7] != 0) {
    throw ArrayFormatError("unsupported format version " + std::to_string(bytes[6]) + "." + std::to_string(bytes[7]),
                           6);
  }
  const std::size_t header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
  if (bytes.size() < kPreludeSize + header_len) {
    throw ArrayFormatError("truncated header: declared " + std::to_string(header_len) + " bytes", bytes.size());
  }
  const std::string_view header(reinterpret_cast<const char*>(bytes.data() + kPreludeSize), header_len);
  if (header.empty() || header.back() != '\n') {
    throw ArrayFormatError("header is not newline-terminated", kPreludeSize + header_len);
  }
  auto fields = HeaderParser(header, kPreludeSize).parse();

  std::size_t count = 1;
  for (auto dim : fields.shape) count *= dim;
  const std::size_t payload_offset = kPreludeSize + header_len;
  const std::size_t expected = count * element_size(fields.dtype);
  const std::size_t available = bytes.size() - payload_offset;
  if (available < expected) {
    throw ArrayFormatError("truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                               std::to_string(available),
                           bytes.size());
  }
  if (available > expected) {
    throw ArrayFormatError("unexpected trailing bytes after payload", payload_offset + expected);
  }

  const auto payload = bytes.subspan(payload_offset);
  Array::Storage storage;
  switch (fields.dtype) {
    case Dtype::kFloat64: storage = copy_payload<double>(payload, count); break;
    case Dtype::kFloat32: storage = copy_payload<float>(payload, count); break;
    case Dtype::kInt64: storage = copy_payload<std::int64_t>(payload, count); break;
  }
  return Array(std::move(fields.shape), std::move(storage));
}

Array read_array(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_array(bytes);
  } catch (const ArrayFormatError& e) {
    throw ArrayFormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write_array(const Array& array, const std::filesystem::path& path) {
  write_file_atomic(path, encode_array(array));
}

}  // namespace xfer
