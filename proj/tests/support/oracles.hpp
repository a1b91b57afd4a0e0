#pragma once

// Test-only oracles, independent of the library implementations they check.

#include <stack>
#include <vector>

#include "geogan/tensor.hpp"

namespace geogan::oracle {

// Reference connected-component labeling: row-major scan + explicit-stack
// flood fill. Same discovery-order label semantics as the production path.
inline Tensor<std::int32_t> flood_fill_label(const Layer& map, double tau,
                                             int connectivity) {
  const int h = map.dim(0), w = map.dim(1);
  Tensor<std::int32_t> labels({h, w});
  int next = 0;
  for (int r0 = 0; r0 < h; ++r0)
    for (int c0 = 0; c0 < w; ++c0) {
      if (!(map.at(r0, c0) > tau) || labels.at(r0, c0) != 0) continue;
      ++next;
      std::stack<std::pair<int, int>> todo;
      todo.push({r0, c0});
      labels.at(r0, c0) = next;
      while (!todo.empty()) {
        auto [r, c] = todo.top();
        todo.pop();
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (connectivity == 4 && dr != 0 && dc != 0) continue;
            int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            if (!(map.at(rr, cc) > tau) || labels.at(rr, cc) != 0) continue;
            labels.at(rr, cc) = next;
            todo.push({rr, cc});
          }
      }
    }
  return labels;
}

// Discrete Sierpinski triangle: pixel set {(r,c) : r & c == 0}, the exact
// self-similar construction with 3^k occupied boxes at scale 2^-k.
inline Layer sierpinski(int side) {
  Layer out({side, side});
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      if ((r & c) == 0) out.at(r, c) = 1.0f;
  return out;
}

}  // namespace geogan::oracle
