#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "eldm/cli/archive.hpp"
#include "test_support.hpp"

using namespace eldm;
using eldm::testing::LogCapture;
using eldm::testing::random_matrix;

namespace {

StateMatrix named(const Matrix& m) {
  std::vector<Column> cols;
  for (Index j = 0; j < m.cols(); ++j) cols.push_back({"x" + std::to_string(j), ColumnRole::generic});
  return StateMatrix(m, cols);
}

std::string with_checksum(std::string body) {
  const Digest d = sha256(body.data(), body.size());
  body.append(reinterpret_cast<const char*>(d.data()), d.size());
  return body;
}

std::string without_checksum(const std::string& bytes) { return bytes.substr(0, bytes.size() - 32); }

void bump_version(std::string& bytes, std::uint16_t major, std::uint16_t minor) {
  bytes[4] = static_cast<char>(major & 0xff);
  bytes[5] = static_cast<char>(major >> 8);
  bytes[6] = static_cast<char>(minor & 0xff);
  bytes[7] = static_cast<char>(minor >> 8);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("eldm_test_" + name);
}

}  // namespace

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(hex(sha256("", 0)), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(hex(sha256("abc", 3)), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Archive, PcaRoundTripGivesBitIdenticalScores) {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(200, 6, rng) * 3.0;
  const auto b = fit_pca(named(x), Scaling::pareto);
  ModelArchive a;
  a.seed = 42;
  a.input_fingerprint = "abc";
  a.add("basis", b);
  const auto path = temp_file("pca.eldm");
  save_model(a, path);
  const auto back = load_model(path);
  std::filesystem::remove(path);

  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.input_fingerprint, "abc");
  EXPECT_EQ(back.toolkit_version, ELDM_VERSION);
  const auto& b2 = back.get<PcaBasis>("basis");
  const Matrix z1 = transform(apply_preprocessor(x, b.preprocessor), b, 3).values;
  const Matrix z2 = transform(apply_preprocessor(x, b2.preprocessor), b2, 3).values;
  ASSERT_EQ(z1.rows(), z2.rows());
  EXPECT_EQ(std::memcmp(z1.data(), z2.data(), sizeof(double) * static_cast<std::size_t>(z1.size())), 0);
  EXPECT_EQ(b2.preprocessor.method, Scaling::pareto);
}

TEST(Archive, EveryModelTypeRoundTrips) {
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(60, 4, rng);
  const Matrix xa = x.array().abs();

  VqpcaOptions vo;
  vo.k = 3;
  vo.q = 2;
  vo.seed = 5;
  const auto part = vqpca(x, vo).partition;
  const auto nmf = fit_nmf(xa, 2, 7, {50, 1e-12});
  const auto ae = init_autoencoder({4, 3, 2, 3, 4}, Activation::selu, 9);
  const auto gp = fit_gpr(x.leftCols(2), x.col(3), {1.5, Vector::Constant(2, 0.8)}, 1e-6);
  const auto pre = fit_preprocessor(x, Scaling::vast, Centering::minimum);

  ModelArchive a;
  a.add("pre", pre);
  a.add("part", part);
  a.add("nmf", nmf);
  a.add("ae", ae);
  a.add("gp", gp);
  const auto back = deserialize(serialize(a));
  ASSERT_EQ(back.records.size(), 5u);

  const auto& pre2 = back.get<Preprocessor>();
  EXPECT_EQ(pre2.centers, pre.centers);
  EXPECT_EQ(pre2.scales, pre.scales);
  EXPECT_EQ(pre2.centering, Centering::minimum);

  const auto& part2 = back.get<LocalPartition>();
  EXPECT_EQ(part2.labels, part.labels);
  EXPECT_EQ(part2.centroids, part.centroids);
  EXPECT_EQ(part2.q, part.q);
  ASSERT_EQ(part2.bases.size(), part.bases.size());
  for (std::size_t c = 0; c < part.bases.size(); ++c) EXPECT_EQ(part2.bases[c], part.bases[c]);

  const auto& nmf2 = back.get<NmfFactors>();
  EXPECT_EQ(nmf2.w, nmf.w);
  EXPECT_EQ(nmf2.f, nmf.f);
  EXPECT_EQ(nmf2.residual_history, nmf.residual_history);

  const auto& ae2 = back.get<AutoencoderModel>();
  EXPECT_EQ(encode(ae2, x), encode(ae, x));
  EXPECT_EQ(autoencode(ae2, x), autoencode(ae, x));

  const auto& gp2 = back.get<GprModel>();
  EXPECT_EQ(predict_gpr(gp2, x.leftCols(2)).mean, predict_gpr(gp, x.leftCols(2)).mean);

  EXPECT_EQ(serialize(back), serialize(a));
}

TEST(Archive, GetByNameAndMissingRecord) {
  ModelArchive a;
  a.add("one", Preprocessor::identity(2));
  a.add("two", Preprocessor::identity(3));
  EXPECT_EQ(a.get<Preprocessor>("two").centers.size(), 3);
  EXPECT_EQ(a.get<Preprocessor>().centers.size(), 2);
  EXPECT_FALSE(a.has<PcaBasis>());
  EXPECT_THROW(a.get<PcaBasis>(), DataError);
  EXPECT_THROW(a.get<Preprocessor>("three"), DataError);
}

TEST(Archive, TruncatedFileIsRejectedAsCorrupted) {
  ModelArchive a;
  a.add("pre", Preprocessor::identity(4));
  const std::string bytes = serialize(a);
  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 40, std::size_t{12}}) {
    try {
      deserialize(std::string_view(bytes).substr(0, cut));
      FAIL() << "accepted a truncated archive of " << cut << " bytes";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
    }
  }
}

TEST(Archive, FlippedBitIsDetected) {
  ModelArchive a;
  a.add("pre", Preprocessor::identity(4));
  std::string bytes = serialize(a);
  bytes[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(deserialize(bytes), DataError);
}

TEST(Archive, NewerMajorVersionIsRefusedWithUpgradeHint) {
  ModelArchive a;
  a.add("pre", Preprocessor::identity(2));
  std::string body = without_checksum(serialize(a));
  bump_version(body, archive_major + 1, 0);
  try {
    deserialize(with_checksum(body));
    FAIL() << "accepted a newer major version";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2.0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("upgrade"), std::string::npos) << msg;
  }
}

TEST(Archive, NewerMinorVersionSkipsUnknownRecords) {
  ModelArchive a;
  a.add("pre", Preprocessor::identity(2));
  std::string body = without_checksum(serialize(a));
  bump_version(body, archive_major, archive_minor + 1);
  // record count is the u32 just before the first record
  const std::size_t count_at = 8 + 4 + std::strlen(ELDM_VERSION) + 8 + 4;
  body[count_at] = 2;
  detail::ByteWriter extra;
  extra.u16(99);
  extra.string("future");
  extra.u64(3);
  extra.raw("xyz");
  body += extra.bytes();
  LogCapture log;
  const auto back = deserialize(with_checksum(body));
  EXPECT_EQ(back.records.size(), 1u);
  EXPECT_EQ(back.minor, archive_minor + 1);
  EXPECT_TRUE(log.contains("future"));
}

TEST(Archive, NotAnArchive) {
  EXPECT_THROW(deserialize("hello world, this is plainly not an archive at all"), DataError);
  EXPECT_THROW(load_model(temp_file("does_not_exist.eldm")), DataError);
}
