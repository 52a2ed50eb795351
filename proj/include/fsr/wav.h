#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fsr {

inline constexpr int kSampleRate = 16000;

struct AudioBuffer {
  std::vector<std::int16_t> samples;
  int sample_rate = kSampleRate;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

// RIFF/WAVE, PCM16 mono. Anything else is rejected with std::runtime_error.
AudioBuffer parse_wav(const std::string& bytes);
AudioBuffer read_wav(const std::filesystem::path& path);

std::string serialize_wav(const AudioBuffer& audio);
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

}  // namespace fsr
