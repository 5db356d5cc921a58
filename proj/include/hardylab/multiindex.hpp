#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace hardylab {

// Multi-index alpha in N_0^n, padded with zeros beyond the active dimension.
struct MultiIndex {
  std::array<int, 3> k{0, 0, 0};

  int order() const { return k[0] + k[1] + k[2]; }
  int operator[](int d) const { return k[d]; }
  int& operator[](int d) { return k[d]; }

  bool operator==(const MultiIndex& o) const { return k == o.k; }

  std::string str() const {
    std::string s = "(";
    for (int d = 0; d < 3; ++d) {
      if (d) s += ",";
      s += std::to_string(k[d]);
    }
    return s + ")";
  }
};

// Graded-lexicographic order: first by |alpha|, then lexicographic.
inline bool grlex_less(const MultiIndex& a, const MultiIndex& b) {
  if (a.order() != b.order()) return a.order() < b.order();
  return a.k < b.k;
}

// All multi-indices with |alpha| <= max_order in dim dimensions, grlex-sorted.
inline std::vector<MultiIndex> multi_indices_up_to(int dim, int max_order) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("multi_indices_up_to: dim must be 1..3");
  if (max_order < 0) throw std::invalid_argument("multi_indices_up_to: negative order");
  std::vector<MultiIndex> out;
  for (int i = 0; i <= max_order; ++i)
    for (int j = 0; j <= (dim >= 2 ? max_order - i : 0); ++j)
      for (int l = 0; l <= (dim >= 3 ? max_order - i - j : 0); ++l)
        out.push_back({{i, j, l}});
  std::sort(out.begin(), out.end(), grlex_less);
  return out;
}

// (x - c)^alpha for points given as coordinate triples.
inline double pow_multi(const std::array<double, 3>& x, const std::array<double, 3>& c,
                        const MultiIndex& alpha) {
  double v = 1.0;
  for (int d = 0; d < 3; ++d) {
    const double b = x[d] - c[d];
    for (int i = 0; i < alpha.k[d]; ++i) v *= b;
  }
  return v;
}

}  // namespace hardylab
