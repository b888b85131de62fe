#pragma once

// Reader/writer for a strict subset of the NumPy .npy v1.0 layout:
// little-endian, C order, dtypes <f8 / <f4 / <i8, one or two dimensions.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace xfer {

enum class Dtype { kFloat64, kFloat32, kInt64 };

const char* dtype_descr(Dtype dtype);

class Array {
 public:
  using Storage = std::variant<std::vector<double>, std::vector<float>, std::vector<std::int64_t>>;

  // shape must have 1 or 2 entries whose product equals the element count.
  Array(std::vector<std::size_t> shape, Storage data);

  static Array from_matrix(const Eigen::MatrixXd& m);
  static Array from_matrix_f32(const Eigen::MatrixXd& m);
  // Labels are stored as an (n, 1) int64 column.
  static Array from_labels(std::span<const int> labels);

  Dtype dtype() const;
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }
  std::size_t size() const { return rows() * cols(); }
  const Storage& data() const { return data_; }

  // Any dtype, widened to double.
  Eigen::MatrixXd to_matrix() const;
  // int64 arrays only, flattened in C order. Throws DataError otherwise.
  std::vector<std::int64_t> to_integers() const;

  bool operator==(const Array& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  Storage data_;
};

// The exact bytes write_array would produce.
std::vector<std::uint8_t> encode_array(const Array& array);
Array decode_array(std::span<const std::uint8_t> bytes);

// Throws ArrayFormatError on malformed input, DataError on I/O failure.
Array read_array(const std::filesystem::path& path);
// Rejects empty arrays and non-finite floats. Writes through a temporary file and rename.
void write_array(const Array& array, const std::filesystem::path& path);

}  // namespace xfer
