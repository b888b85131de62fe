#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "xfer/array_io.hpp"
#include "xfer/error.hpp"
#include "xfer/file_util.hpp"

using namespace xfer;
using xfer::testing::TempDir;

namespace {

// 3x1 int64 [0, 1, 2], assembled from the header layout byte by byte.
std::vector<std::uint8_t> hand_label_file() {
  const std::string dict = "{'descr': '<i8', 'fortran_order': False, 'shape': (3, 1), }";
  std::string header = dict + std::string(58, ' ') + "\n";  // 10 + 118 = 128
  std::vector<std::uint8_t> out = {0x93, 'N', 'U', 'M', 'P', 'Y', 0x01, 0x00, 0x76, 0x00};
  out.insert(out.end(), header.begin(), header.end());
  for (std::uint8_t v = 0; v < 3; ++v) {
    out.push_back(v);
    for (int k = 0; k < 7; ++k) out.push_back(0);
  }
  return out;
}

}  // namespace

TEST(ArrayIo, HandAssembledLabelFileParses) {
  const auto bytes = hand_label_file();
  ASSERT_EQ(bytes.size(), 128u + 24u);
  const Array a = decode_array(bytes);
  EXPECT_EQ(a.dtype(), Dtype::kInt64);
  EXPECT_EQ(a.shape(), (std::vector<std::size_t>{3, 1}));
  EXPECT_EQ(a.to_integers(), (std::vector<std::int64_t>{0, 1, 2}));
}

TEST(ArrayIo, EncoderHeaderIsAlignedAndNewlineTerminated) {
  for (auto shape : {std::vector<std::size_t>{1}, {7}, {2, 2}, {123456, 3}}) {
    std::size_t count = 1;
    for (auto s : shape) count *= s;
    const Array a(shape, std::vector<double>(count, 1.0));
    const auto bytes = encode_array(a);
    const std::size_t header_len = bytes[8] | (bytes[9] << 8);
    EXPECT_EQ((10 + header_len) % 64, 0u);
    EXPECT_EQ(bytes[10 + header_len - 1], '\n');
    EXPECT_EQ(bytes.size(), 10 + header_len + count * 8);
  }
}

TEST(ArrayIo, OneDimensionalShapeUsesTrailingComma) {
  const Array a({2}, std::vector<float>{1.5f, -2.0f});
  const auto bytes = encode_array(a);
  const std::string expected = "{'descr': '<f4', 'fortran_order': False, 'shape': (2,), }";
  const std::string text(bytes.begin() + 10, bytes.begin() + 10 + static_cast<std::ptrdiff_t>(expected.size()));
  EXPECT_EQ(text, expected);
}

TEST(ArrayIo, RoundTripIsByteExactForEveryDtype) {
  TempDir dir;
  xfer::synthetic::Rng rng(7);
  const Eigen::MatrixXd m = rng.normal_matrix(5, 3);
  std::vector<std::int64_t> ints = {-5, 0, 7, INT64_MAX, INT64_MIN, 42};
  const std::vector<Array> arrays = {
      Array::from_matrix(m),
      Array::from_matrix_f32(m),
      Array({6}, ints),
      Array({3, 2}, ints),
      Array({1, 1}, std::vector<double>{0.0}),
  };
  for (std::size_t k = 0; k < arrays.size(); ++k) {
    const auto path = dir / ("a" + std::to_string(k) + ".npy");
    write_array(arrays[k], path);
    const Array back = read_array(path);
    EXPECT_EQ(back, arrays[k]);
    EXPECT_EQ(read_file_bytes(path), encode_array(arrays[k]));
    EXPECT_EQ(encode_array(back), encode_array(arrays[k]));
  }
  const Eigen::MatrixXd back = read_array(dir / "a0.npy").to_matrix();
  EXPECT_EQ((back - m).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ArrayIo, WritesAreDeterministic) {
  TempDir dir;
  const Array a = Array::from_matrix(Eigen::MatrixXd::Random(4, 4));
  write_array(a, dir / "x.npy");
  write_array(a, dir / "y.npy");
  EXPECT_EQ(read_file_bytes(dir / "x.npy"), read_file_bytes(dir / "y.npy"));
}

TEST(ArrayIo, SingleZeroRoundTrips) {
  TempDir dir;
  write_array(Array::from_matrix(Eigen::MatrixXd::Zero(1, 1)), dir / "z.npy");
  const auto m = read_array(dir / "z.npy").to_matrix();
  ASSERT_EQ(m.rows(), 1);
  ASSERT_EQ(m.cols(), 1);
  EXPECT_EQ(m(0, 0), 0.0);
}

TEST(ArrayIo, WriteRejectsNonFiniteAndEmpty) {
  TempDir dir;
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(2, 2);
  m(1, 0) = std::nan("");
  EXPECT_THROW(write_array(Array::from_matrix(m), dir / "n.npy"), DataError);
  EXPECT_FALSE(std::filesystem::exists(dir / "n.npy"));
  EXPECT_THROW(write_array(Array({0}, std::vector<double>{}), dir / "e.npy"), DataError);
}

TEST(ArrayIo, CorruptMagicReportsOffset) {
  auto bytes = hand_label_file();
  bytes[2] = 'X';
  try {
    decode_array(bytes);
    FAIL() << "expected ArrayFormatError";
  } catch (const ArrayFormatError& e) {
    EXPECT_LT(e.offset(), 6u);
  }
}

TEST(ArrayIo, RejectsOtherVersions) {
  auto bytes = hand_label_file();
  bytes[6] = 0x02;
  EXPECT_THROW(decode_array(bytes), ArrayFormatError);
}

TEST(ArrayIo, TruncatedPayloadReportsPayloadOffset) {
  auto bytes = hand_label_file();
  bytes.resize(bytes.size() - 3);
  try {
    decode_array(bytes);
    FAIL() << "expected ArrayFormatError";
  } catch (const ArrayFormatError& e) {
    EXPECT_GE(e.offset(), 128u);
  }
}

TEST(ArrayIo, TrailingBytesRejected) {
  auto bytes = hand_label_file();
  bytes.push_back(0);
  EXPECT_THROW(decode_array(bytes), ArrayFormatError);
}

TEST(ArrayIo, RejectsUnsupportedHeaders) {
  auto make = [](const std::string& dict) {
    std::string header = dict;
    while ((10 + header.size() + 1) % 64 != 0) header.push_back(' ');
    header.push_back('\n');
    std::vector<std::uint8_t> out = {0x93, 'N', 'U', 'M', 'P', 'Y', 0x01, 0x00,
                                     static_cast<std::uint8_t>(header.size() & 0xff),
                                     static_cast<std::uint8_t>(header.size() >> 8)};
    out.insert(out.end(), header.begin(), header.end());
    out.resize(out.size() + 64, 0);
    return out;
  };
  EXPECT_THROW(decode_array(make("{'descr': '>f8', 'fortran_order': False, 'shape': (2, 2), }")), ArrayFormatError);
  EXPECT_THROW(decode_array(make("{'descr': '<i4', 'fortran_order': False, 'shape': (2, 2), }")), ArrayFormatError);
  EXPECT_THROW(decode_array(make("{'descr': '<f8', 'fortran_order': True, 'shape': (2, 2), }")), ArrayFormatError);
  EXPECT_THROW(decode_array(make("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2, 2), }")),
               ArrayFormatError);
  EXPECT_THROW(decode_array(make("{'descr': '<f8', 'fortran_order': False}")), ArrayFormatError);
  // 2x4 f8 fills the 64 payload bytes exactly.
  auto ok = make("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 4), }");
  EXPECT_NO_THROW(decode_array(ok));
}

TEST(ArrayIo, RandomCorruptionNeverCrashes) {
  const auto good = encode_array(Array::from_matrix(Eigen::MatrixXd::Random(3, 3)));
  xfer::synthetic::Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    auto bytes = good;
    const auto pos = rng.below(128);
    bytes[pos] = static_cast<std::uint8_t>(rng.below(256));
    if (trial % 3 == 0) bytes.resize(rng.below(bytes.size()));
    try {
      (void)decode_array(bytes);
    } catch (const ArrayFormatError&) {
    }
  }
}

TEST(ArrayIo, ReadErrorsNameTheFile) {
  TempDir dir;
  const auto path = dir / "bad.npy";
  std::ofstream(path) << "not an array";
  try {
    read_array(path);
    FAIL();
  } catch (const ArrayFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.npy"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("(at byte", std::string(e.what()).find("(at byte") + 1), std::string::npos);
  }
  EXPECT_THROW(read_array(dir / "missing.npy"), DataError);
}

TEST(ArrayIo, IntegersRequireIntDtype) {
  EXPECT_THROW(Array::from_matrix(Eigen::MatrixXd::Ones(2, 1)).to_integers(), DataError);
  const std::vector<int> labels = {2, 0, 1};
  const Array a = Array::from_labels(labels);
  EXPECT_EQ(a.shape(), (std::vector<std::size_t>{3, 1}));
  EXPECT_EQ(a.to_integers(), (std::vector<std::int64_t>{2, 0, 1}));
}
