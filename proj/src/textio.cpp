#include "omgrl/textio.hpp"

#include "omgrl/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace omgrl::textio {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw StateError("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view token) {
  // from_chars rejects "inf"/"nan" spellings produced by to_chars only in
  // some forms; handle the ones we emit explicitly.
  if (token == "inf") return std::numeric_limits<double>::infinity();
  if (token == "-inf") return -std::numeric_limits<double>::infinity();
  if (token == "nan" || token == "-nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw DataError("not a number: '" + std::string(token) + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view token) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw DataError("not an integer: '" + std::string(token) + "'");
  }
  return v;
}

void Writer::magic(std::string_view header) { out_ << header << '\n'; }
void Writer::key(std::string_view k) { out_ << k; }
void Writer::value(double v) { out_ << ' ' << format_double(v); }
void Writer::value(std::int64_t v) { out_ << ' ' << v; }
void Writer::value(std::string_view s) { out_ << ' ' << s; }
void Writer::endl() { out_ << '\n'; }

void Writer::matrix(const Eigen::MatrixXd& m) {
  value(static_cast<std::int64_t>(m.rows()));
  value(static_cast<std::int64_t>(m.cols()));
  // column-major, matching Eigen storage
  for (Eigen::Index i = 0; i < m.size(); ++i) value(m.data()[i]);
}

void Writer::vector(const Eigen::VectorXd& v) {
  value(static_cast<std::int64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) value(v[i]);
}

void Reader::expect_magic(std::string_view header) {
  std::string line;
  in_ >> std::ws;
  if (!std::getline(in_, line) || line != header) {
    throw DataError("bad checkpoint header: expected '" + std::string(header) + "', got '" +
                    line + "'");
  }
}

std::string Reader::token() {
  std::string t;
  if (!(in_ >> t)) throw DataError("unexpected end of checkpoint");
  return t;
}

void Reader::expect_key(std::string_view k) {
  std::string t = token();
  if (t != k) throw DataError("checkpoint: expected key '" + std::string(k) + "', got '" + t + "'");
}

std::string Reader::rest_of_line() {
  std::string line;
  std::getline(in_, line);
  auto pos = line.find_first_not_of(" \t");
  return pos == std::string::npos ? std::string() : line.substr(pos);
}

double Reader::real() { return parse_double(token()); }
std::int64_t Reader::integer() { return parse_int(token()); }

Eigen::MatrixXd Reader::matrix() {
  const auto rows = integer();
  const auto cols = integer();
  if (rows < 0 || cols < 0) throw DataError("checkpoint: negative matrix shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = real();
  return m;
}

Eigen::VectorXd Reader::vector() {
  const auto n = integer();
  if (n < 0) throw DataError("checkpoint: negative vector length");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = real();
  return v;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

}  // namespace omgrl::textio
