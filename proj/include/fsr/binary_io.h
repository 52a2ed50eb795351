#pragma once

// Little-endian primitives shared by the model, graph, corpus and feature
// file formats.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace fsr::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void write_magic(std::ostream& os, std::string_view magic);
// Throws std::runtime_error if the next bytes are not `magic`.
void expect_magic(std::istream& is, std::string_view magic);

void write_u32(std::ostream& os, std::uint32_t v);
void write_i32(std::ostream& os, std::int32_t v);
void write_f64(std::ostream& os, double v);
void write_f64s(std::ostream& os, std::span<const double> v);
void write_string(std::ostream& os, const std::string& s);

std::uint32_t read_u32(std::istream& is);
std::int32_t read_i32(std::istream& is);
double read_f64(std::istream& is);
void read_f64s(std::istream& is, std::span<double> out);
std::string read_string(std::istream& is);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace fsr::io
