#include "scralign/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

#include "scralign/data.hpp"
#include "scralign/errors.hpp"

namespace scr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_number(std::string_view token, double& out) {
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

PointCloud parse_xyz(std::istream& in) {
  std::vector<Vec3> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::array<double, 3> xyz{};
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos < body.size()) {
      while (pos < body.size() && (body[pos] == ' ' || body[pos] == '\t')) ++pos;
      if (pos >= body.size()) break;
      std::size_t end = pos;
      while (end < body.size() && body[end] != ' ' && body[end] != '\t') ++end;
      if (count == 3) throw ParseError("expected 3 coordinates, found more", line_no);
      if (!parse_number(body.substr(pos, end - pos), xyz[count])) {
        throw ParseError("invalid number '" + std::string(body.substr(pos, end - pos)) + "'", line_no);
      }
      ++count;
      pos = end;
    }
    if (count != 3) throw ParseError("expected 3 coordinates, found " + std::to_string(count), line_no);
    pts.emplace_back(xyz[0], xyz[1], xyz[2]);
  }
  if (pts.empty()) throw ParseError("no points found");
  try {
    return PointCloud(std::move(pts));
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
}

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return parse_xyz(in);
  } catch (const ParseError& e) {
    throw e.with_prefix(path.string() + ": ");
  }
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  for (const auto& p : cloud) out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_xyz(out, cloud);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

PointCloud read_point_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string first;
  in >> first;
  if (first.rfind("OFF", 0) == 0) {
    const auto mesh = load_off(path);
    return PointCloud(mesh.vertices);
  }
  return read_xyz(path);
}

}  // namespace scr
