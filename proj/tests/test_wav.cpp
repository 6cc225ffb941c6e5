#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "segbeam/wav.hpp"
#include "test_util.hpp"

using namespace segbeam;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Wav, FloatSilence) {
  const auto dir = segbeam::testing::scratch_dir("wav_silence");
  const auto path = (dir / "s.wav").string();
  AudioBuffer buf;
  buf.samples = RealMatrix::Zero(2, 16000);
  write_wav(buf, path);
  const auto back = read_wav(path);
  EXPECT_EQ(back.channels(), 2);
  EXPECT_EQ(back.length(), 16000);
  EXPECT_EQ(back.sample_rate, 16000.0);
  EXPECT_EQ(back.samples.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Wav, FloatRoundTripBitExact) {
  const auto dir = segbeam::testing::scratch_dir("wav_float");
  const auto path = (dir / "f.wav").string();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  AudioBuffer buf;
  buf.sample_rate = 44100.0;
  buf.samples.resize(3, 999);
  for (Index c = 0; c < 3; ++c)
    for (Index t = 0; t < 999; ++t) buf.samples(c, t) = static_cast<float>(u(rng));
  write_wav(buf, path, WavFormat::Float32);
  const auto back = read_wav(path);
  EXPECT_EQ(back.sample_rate, 44100.0);
  EXPECT_EQ(back.samples, buf.samples);
  // Second pass reproduces the same bytes.
  const auto path2 = (dir / "g.wav").string();
  write_wav(back, path2, WavFormat::Float32);
  EXPECT_EQ(read_bytes(path), read_bytes(path2));
}

TEST(Wav, Pcm16FullScaleSquare) {
  const auto dir = segbeam::testing::scratch_dir("wav_square");
  const auto path = (dir / "sq.wav").string();
  AudioBuffer buf;
  buf.samples.resize(1, 64);
  for (Index t = 0; t < 64; ++t) buf.samples(0, t) = (t / 8) % 2 == 0 ? 32767.0 / 32768.0 : -32767.0 / 32768.0;
  write_wav(buf, path, WavFormat::Pcm16);
  const auto back = read_wav(path);
  EXPECT_EQ(back.samples, buf.samples);
  // Out-of-range values clamp rather than wrap.
  buf.samples(0, 0) = 3.0;
  buf.samples(0, 1) = -3.0;
  write_wav(buf, path, WavFormat::Pcm16);
  const auto clamped = read_wav(path);
  EXPECT_EQ(clamped.samples(0, 0), 32767.0 / 32768.0);
  EXPECT_EQ(clamped.samples(0, 1), -1.0);
}

TEST(Wav, Pcm16QuantizationBound) {
  const auto dir = segbeam::testing::scratch_dir("wav_pcm");
  const auto path = (dir / "p.wav").string();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  AudioBuffer buf;
  buf.samples.resize(2, 5000);
  for (Index c = 0; c < 2; ++c)
    for (Index t = 0; t < 5000; ++t) buf.samples(c, t) = u(rng);
  write_wav(buf, path, WavFormat::Pcm16);
  const auto back = read_wav(path);
  EXPECT_LE((back.samples - buf.samples).cwiseAbs().maxCoeff(), 1.0 / 32768.0);
  EXPECT_EQ(std::filesystem::file_size(path), 44u + 2u * 2u * 5000u);
}

TEST(Wav, Errors) {
  const auto dir = segbeam::testing::scratch_dir("wav_err");
  const auto path = (dir / "e.wav").string();
  AudioBuffer empty;
  EXPECT_THROW(write_wav(empty, path), ParameterError);
  EXPECT_THROW(read_wav((dir / "nope.wav").string()), IoError);
  EXPECT_THROW(write_wav(AudioBuffer{RealMatrix::Zero(1, 4), 16000.0}, (dir / "no/such/dir.wav").string()), IoError);

  AudioBuffer buf;
  buf.samples = RealMatrix::Zero(1, 100);
  write_wav(buf, path, WavFormat::Pcm16);
  const std::string good = read_bytes(path);

  write_bytes(path, good.substr(0, good.size() - 10));
  try {
    read_wav(path);
    ADD_FAILURE() << "truncated file accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }

  std::string bits24 = good;
  bits24[34] = 24;  // bits per sample
  write_bytes(path, bits24);
  try {
    read_wav(path);
    ADD_FAILURE() << "24-bit accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported"), std::string::npos);
  }

  write_bytes(path, "RIFX0000WAVE");
  EXPECT_THROW(read_wav(path), DataError);
}

TEST(ChangePoints, SidecarRoundTrip) {
  const auto dir = segbeam::testing::scratch_dir("cp");
  const auto path = (dir / "changes.txt").string();
  const std::vector<Index> pts{0, 64000, 128000, 999999999};
  write_change_points(pts, path);
  EXPECT_EQ(read_bytes(path), "0\n64000\n128000\n999999999\n");
  EXPECT_EQ(read_change_points(path), pts);
  write_bytes(path, "12\nabc\n");
  EXPECT_THROW(read_change_points(path), DataError);
}
