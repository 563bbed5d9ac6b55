#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace wavernn {

// 16-bit PCM mono audio.
struct WavFile {
  std::uint32_t sample_rate = 24000;
  std::vector<std::int16_t> samples;
};

// Throws FormatError on malformed or unsupported files (non-PCM codecs,
// more than one channel, widths other than 16 bits).
WavFile wav_read(const std::filesystem::path& path);
WavFile wav_parse(std::span<const std::uint8_t> bytes);
void wav_write(const WavFile& wav, const std::filesystem::path& path);
std::vector<std::uint8_t> wav_serialize(const WavFile& wav);

// Engine values are unsigned: u = s + 32768.
constexpr std::uint16_t to_engine(std::int16_t s) {
  return static_cast<std::uint16_t>(static_cast<int>(s) + 32768);
}
constexpr std::int16_t from_engine(std::uint16_t u) {
  return static_cast<std::int16_t>(static_cast<int>(u) - 32768);
}
std::vector<std::uint16_t> to_engine(std::span<const std::int16_t> samples);
std::vector<std::int16_t> from_engine(std::span<const std::uint16_t> values);

}  // namespace wavernn
