#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "scralign/geometry.hpp"

namespace scr {

/// XYZ text: one "x y z" line per point, '#' comment lines ignored.
PointCloud parse_xyz(std::istream& in);
PointCloud read_xyz(const std::filesystem::path& path);

/// Shortest round-trip decimal representation, single spaces, LF endings.
void write_xyz(std::ostream& out, const PointCloud& cloud);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

/// Reads an XYZ file, or the vertices of an OFF mesh when the file starts with "OFF".
PointCloud read_point_file(const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace scr
