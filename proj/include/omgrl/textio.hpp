#pragma once

// Token-oriented text serialization shared by all checkpoint formats.
// Doubles are written in shortest round-trip form so save/load is exact.

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace omgrl::textio {

std::string format_double(double v);
double parse_double(std::string_view token);
std::int64_t parse_int(std::string_view token);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void magic(std::string_view header);
  void key(std::string_view k);
  void value(double v);
  void value(std::int64_t v);
  void value(int v) { value(static_cast<std::int64_t>(v)); }
  void value(std::size_t v) { value(static_cast<std::int64_t>(v)); }
  void value(std::string_view s);
  void matrix(const Eigen::MatrixXd& m);
  void vector(const Eigen::VectorXd& v);
  void endl();

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void expect_magic(std::string_view header);
  void expect_key(std::string_view k);
  std::string token();
  // Remainder of the current line, leading whitespace stripped.
  std::string rest_of_line();
  double real();
  std::int64_t integer();
  Eigen::MatrixXd matrix();
  Eigen::VectorXd vector();

 private:
  std::istream& in_;
};

// 64-bit FNV-1a; used for config fingerprints and artifact hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
std::string file_hash(const std::string& path);

}  // namespace omgrl::textio
