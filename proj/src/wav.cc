#include "fsr/wav.h"

#include <cstring>
#include <sstream>
#include <stdexcept>

#include "fsr/binary_io.h"

namespace fsr {

namespace {

std::uint32_t le32(const std::string& b, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + off, 4);
  return v;
}

std::uint16_t le16(const std::string& b, std::size_t off) {
  std::uint16_t v;
  std::memcpy(&v, b.data() + off, 2);
  return v;
}

}  // namespace

AudioBuffer parse_wav(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 ||
      bytes.compare(8, 4, "WAVE") != 0) {
    throw std::runtime_error("not a RIFF/WAVE file");
  }
  AudioBuffer audio;
  bool have_fmt = false;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = le32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw std::runtime_error("truncated WAV chunk '" + id + "'");
    }
    if (id == "fmt ") {
      if (size < 16) throw std::runtime_error("short fmt chunk");
      const std::uint16_t format = le16(bytes, body);
      const std::uint16_t channels = le16(bytes, body + 2);
      const std::uint32_t rate = le32(bytes, body + 4);
      const std::uint16_t bits = le16(bytes, body + 14);
      if (format != 1 || bits != 16) {
        throw std::runtime_error("only PCM16 WAV is supported");
      }
      if (channels != 1) throw std::runtime_error("only mono WAV is supported");
      if (rate != kSampleRate) {
        throw std::runtime_error("sample rate " + std::to_string(rate) +
                                 " Hz; expected 16000 Hz");
      }
      audio.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (id == "data") {
      audio.samples.resize(size / 2);
      std::memcpy(audio.samples.data(), bytes.data() + body,
                  audio.samples.size() * 2);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) {
    throw std::runtime_error("WAV file missing fmt or data chunk");
  }
  return audio;
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  return parse_wav(io::read_file(path));
}

std::string serialize_wav(const AudioBuffer& audio) {
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  std::ostringstream os;
  io::write_magic(os, "RIFF");
  io::write_u32(os, 36 + data_bytes);
  io::write_magic(os, "WAVE");
  io::write_magic(os, "fmt ");
  io::write_u32(os, 16);
  const std::uint16_t fmt[2] = {1, 1};  // PCM, mono
  os.write(reinterpret_cast<const char*>(fmt), 4);
  io::write_u32(os, static_cast<std::uint32_t>(audio.sample_rate));
  io::write_u32(os, static_cast<std::uint32_t>(audio.sample_rate * 2));
  const std::uint16_t align_bits[2] = {2, 16};
  os.write(reinterpret_cast<const char*>(align_bits), 4);
  io::write_magic(os, "data");
  io::write_u32(os, data_bytes);
  os.write(reinterpret_cast<const char*>(audio.samples.data()), data_bytes);
  return os.str();
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  io::write_file(path, serialize_wav(audio));
}

}  // namespace fsr
