#include "wavernn/wav.h"

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "wavernn/errors.h"

namespace wavernn {

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 |
         std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

WavFile wav_parse(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file");
  }
  WavFile wav;
  bool have_format = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint8_t* chunk = b.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (size > b.size() - body) throw FormatError("truncated WAV chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("WAV format chunk too short");
      const std::uint16_t codec = read_u16(b.data() + body);
      const std::uint16_t channels = read_u16(b.data() + body + 2);
      wav.sample_rate = read_u32(b.data() + body + 4);
      const std::uint16_t bits = read_u16(b.data() + body + 14);
      if (codec != 1) {
        throw FormatError("unsupported WAV codec " + std::to_string(codec) +
                          " (only PCM is supported)");
      }
      if (channels != 1) {
        throw FormatError("WAV has " + std::to_string(channels) +
                          " channels; only mono is supported");
      }
      if (bits != 16) {
        throw FormatError("WAV sample width is " + std::to_string(bits) +
                          " bits; only 16-bit is supported");
      }
      if (wav.sample_rate == 0) throw FormatError("WAV sample rate is zero");
      have_format = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_format) throw FormatError("WAV data chunk precedes format chunk");
      if (size % 2 != 0) throw FormatError("WAV data length is not a whole sample");
      wav.samples.resize(size / 2);
      for (std::size_t i = 0; i < wav.samples.size(); ++i) {
        wav.samples[i] = static_cast<std::int16_t>(read_u16(b.data() + body + 2 * i));
      }
      return wav;
    }
    pos = body + size + (size & 1u);
  }
  throw FormatError(have_format ? "WAV file has no data chunk"
                                : "WAV file has no format chunk");
}

WavFile wav_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return wav_parse(bytes);
}

std::vector<std::uint8_t> wav_serialize(const WavFile& wav) {
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(wav.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, wav.sample_rate);
  put_u32(out, wav.sample_rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (std::int16_t s : wav.samples) put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

void wav_write(const WavFile& wav, const std::filesystem::path& path) {
  const auto bytes = wav_serialize(wav);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

std::vector<std::uint16_t> to_engine(std::span<const std::int16_t> samples) {
  std::vector<std::uint16_t> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = to_engine(samples[i]);
  return out;
}

std::vector<std::int16_t> from_engine(std::span<const std::uint16_t> values) {
  std::vector<std::int16_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = from_engine(values[i]);
  return out;
}

}  // namespace wavernn
