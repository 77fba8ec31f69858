#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "uad/tensor.hpp"

namespace uad {

// "UADT": magic, version u16, rank u16, extents u32 each, f32 LE row-major.
void write_uadt(std::ostream& os, const Tensor& t);
Tensor read_uadt(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// P5 PGM, 16-bit; values clamped from [0,1]
void save_pgm(const std::filesystem::path& path, const Tensor& img);
Tensor load_pgm(const std::filesystem::path& path);

// plain-text key = value; '#' starts a comment
std::map<std::string, std::string> parse_config_text(std::istream& is);
std::map<std::string, std::string> load_config_file(const std::filesystem::path& path);

// write to tmp file in the same directory, then rename
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace uad
