#pragma once

// Straight-from-the-definition reference implementations used only by tests.
// They work on '0'/'1' strings and brute force on purpose, and share no code
// with the library paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline std::string to_bits(std::uint32_t word, int width) {
  std::string s;
  for (int b = width - 1; b >= 0; --b) s.push_back(((word >> b) & 1) ? '1' : '0');
  return s;
}

inline std::uint32_t from_bits(const std::string& s) {
  std::uint32_t w = 0;
  for (char c : s) w = (w << 1) | static_cast<std::uint32_t>(c == '1');
  return w;
}

inline std::string bits_string(const std::vector<std::uint8_t>& bits) {
  std::string s;
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

// X-LSB attack by string splicing: w[0:s-X] + m_i, where a short final chunk
// keeps the cover bits below it.
inline std::vector<std::uint32_t> splice_attack(const std::vector<std::uint32_t>& cover, int width, int x,
                                                const std::string& payload) {
  std::vector<std::uint32_t> out = cover;
  const std::size_t t = (payload.size() + x - 1) / x;
  for (std::size_t i = 0; i < t; ++i) {
    const std::string chunk = payload.substr(i * x, x);
    const std::string w = to_bits(cover[i], width);
    const std::string spliced = w.substr(0, width - x) + chunk + w.substr(width - x + chunk.size());
    out[i] = from_bits(spliced);
  }
  return out;
}

// m^ceil(nX/k)[0:nX], or m[0:nX] when m is longer.
inline std::string fill_string(const std::string& m, std::size_t n, int x) {
  const std::size_t total = n * static_cast<std::size_t>(x);
  if (m.size() > total) return m.substr(0, total);
  std::string rep;
  const std::size_t copies = (total + m.size() - 1) / m.size();
  for (std::size_t c = 0; c < copies; ++c) rep += m;
  return rep.substr(0, total);
}

// Grayscale-Fourpart from 32-character bit strings.
inline std::vector<std::vector<int>> fourpart(const std::vector<std::uint32_t>& words) {
  const std::size_t n = words.size();
  std::size_t side = 0;
  while (side * side < n) ++side;
  std::vector<std::vector<int>> parts(4);
  for (auto w : words) {
    const std::string s = to_bits(w, 32);
    for (int j = 0; j < 4; ++j) parts[j].push_back(std::stoi(s.substr(8 * j, 8), nullptr, 2));
  }
  for (auto& p : parts) p.resize(side * side, 0);
  std::vector<std::vector<int>> image(2 * side, std::vector<int>(2 * side, 0));
  for (int j = 0; j < 4; ++j) {
    const std::size_t r0 = j < 2 ? 0 : side;
    const std::size_t c0 = j % 2 == 0 ? 0 : side;
    for (std::size_t i = 0; i < side * side; ++i) image[r0 + i / side][c0 + i % side] = parts[j][i];
  }
  return image;
}

// KNN by fully sorting every (distance, index) pair.
inline int brute_knn(const std::vector<std::vector<float>>& pts, const std::vector<int>& labels,
                     const std::vector<float>& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double d = 0;
    for (std::size_t j = 0; j < q.size(); ++j) d += (static_cast<double>(pts[i][j]) - q[j]) * (static_cast<double>(pts[i][j]) - q[j]);
    all.emplace_back(std::sqrt(d), i);
  }
  std::sort(all.begin(), all.end());
  int ones = 0;
  for (std::size_t i = 0; i < k; ++i) ones += labels[all[i].second];
  return 2 * ones >= static_cast<int>(k) ? 1 : 0;
}

}  // namespace oracle
