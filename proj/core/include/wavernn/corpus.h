#pragma once

// Synthetic training audio: sums of random-phase sinusoids plus Gaussian
// noise, quantized to 16 bits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "wavernn/wav.h"

namespace wavernn {

struct CorpusSpec {
  std::size_t utterances = 16;
  std::size_t length = 24000;  // samples per utterance
  std::uint32_t sample_rate = 24000;
  std::size_t components = 3;
  double min_frequency = 60.0;  // Hz, used when `frequencies` is empty
  double max_frequency = 400.0;
  std::vector<double> frequencies;  // fixed component frequencies
  double amplitude = 12000.0;       // peak of the sinusoid sum
  double noise_std = 8.0;
  std::uint64_t seed = 1;

  void validate() const;  // throws InputError
};

std::vector<WavFile> synthesize_corpus(const CorpusSpec& spec);

// Writes utt_0000.wav, utt_0001.wav, ... and returns their paths.
std::vector<std::filesystem::path> make_corpus(const CorpusSpec& spec,
                                               const std::filesystem::path& dir);

// Every .wav file in `dir`, sorted by name, as engine values.
std::vector<std::vector<std::uint16_t>> load_corpus(const std::filesystem::path& dir);

std::vector<std::vector<std::uint16_t>> corpus_values(const std::vector<WavFile>& wavs);

}  // namespace wavernn
