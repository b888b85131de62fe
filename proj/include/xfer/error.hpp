#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xfer {

// Input data violates a format or domain invariant. The CLI maps this to exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed array file. `offset` is the byte position where parsing failed.
class ArrayFormatError : public DataError {
 public:
  ArrayFormatError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

}  // namespace xfer
