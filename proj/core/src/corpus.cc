#include "wavernn/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wavernn/errors.h"
#include "wavernn/rng.h"

namespace wavernn {

void CorpusSpec::validate() const {
  if (utterances == 0 || length == 0) {
    throw InputError("corpus needs at least one non-empty utterance");
  }
  if (sample_rate == 0) throw InputError("sample rate must be positive");
  if (frequencies.empty() && components == 0) {
    throw InputError("corpus needs at least one sinusoid");
  }
  const double nyquist = sample_rate / 2.0;
  if (frequencies.empty() &&
      !(min_frequency > 0.0 && min_frequency <= max_frequency &&
        max_frequency < nyquist)) {
    throw InputError("frequency range must satisfy 0 < min <= max < Nyquist");
  }
  for (double f : frequencies) {
    if (!(f > 0.0 && f < nyquist)) throw InputError("frequency out of range");
  }
  if (!(amplitude >= 0.0 && amplitude <= 32767.0)) {
    throw InputError("amplitude must be in [0, 32767]");
  }
  if (!(noise_std >= 0.0)) throw InputError("noise_std must be non-negative");
}

std::vector<WavFile> synthesize_corpus(const CorpusSpec& spec) {
  spec.validate();
  constexpr double kTwoPi = 6.283185307179586476925;
  std::vector<WavFile> out;
  for (std::size_t u = 0; u < spec.utterances; ++u) {
    Rng rng = Rng::substream(spec.seed, u);
    const std::size_t k =
        spec.frequencies.empty() ? spec.components : spec.frequencies.size();
    std::vector<double> freq(k), phase(k), weight(k);
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      freq[i] = spec.frequencies.empty()
                    ? spec.min_frequency +
                          (spec.max_frequency - spec.min_frequency) * rng.uniform()
                    : spec.frequencies[i];
      phase[i] = kTwoPi * rng.uniform();
      weight[i] = 0.5 + rng.uniform();
      weight_sum += weight[i];
    }
    WavFile wav;
    wav.sample_rate = spec.sample_rate;
    wav.samples.resize(spec.length);
    for (std::size_t t = 0; t < spec.length; ++t) {
      double v = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        v += weight[i] / weight_sum *
             std::sin(kTwoPi * freq[i] * static_cast<double>(t) / spec.sample_rate +
                      phase[i]);
      }
      v = spec.amplitude * v + spec.noise_std * rng.normal();
      wav.samples[t] =
          static_cast<std::int16_t>(std::clamp(std::lround(v), -32767L, 32767L));
    }
    out.push_back(std::move(wav));
  }
  return out;
}

std::vector<std::filesystem::path> make_corpus(const CorpusSpec& spec,
                                               const std::filesystem::path& dir) {
  auto wavs = synthesize_corpus(spec);
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < wavs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "utt_%04zu.wav", i);
    paths.push_back(dir / name);
    wav_write(wavs[i], paths.back());
  }
  return paths;
}

std::vector<std::vector<std::uint16_t>> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw InputError("corpus directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError("no .wav files in " + dir.string());
  std::vector<std::vector<std::uint16_t>> out;
  for (const auto& f : files) out.push_back(to_engine(wav_read(f).samples));
  return out;
}

std::vector<std::vector<std::uint16_t>> corpus_values(const std::vector<WavFile>& wavs) {
  std::vector<std::vector<std::uint16_t>> out;
  for (const auto& w : wavs) out.push_back(to_engine(w.samples));
  return out;
}

}  // namespace wavernn
