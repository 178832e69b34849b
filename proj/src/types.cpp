#include "lanefuse/types.hpp"

#include <cmath>

namespace lanefuse {

double wrap_angle(double a) {
  double r = std::fmod(a + M_PI, 2.0 * M_PI);
  if (r <= 0.0) r += 2.0 * M_PI;
  return r - M_PI;
}

MatX2 rotate_rows(const MatX2& rows, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  MatX2 out(rows.rows(), 2);
  out.col(0) = c * rows.col(0) - s * rows.col(1);
  out.col(1) = s * rows.col(0) + c * rows.col(1);
  return out;
}

MatX2 rotate_diag_variances(const MatX2& variances, double angle) {
  const double c2 = std::cos(angle) * std::cos(angle);
  const double s2 = std::sin(angle) * std::sin(angle);
  MatX2 out(variances.rows(), 2);
  out.col(0) = c2 * variances.col(0) + s2 * variances.col(1);
  out.col(1) = s2 * variances.col(0) + c2 * variances.col(1);
  return out;
}

std::uint64_t stable_hash(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t stable_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) h = stable_hash(h ^ ch);
  return h;
}

}  // namespace lanefuse
