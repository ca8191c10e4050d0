// SPDX-License-Identifier: Apache-2.0
#include "hetplan/combinatorics.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace hetplan {

std::vector<std::vector<std::vector<int>>> set_partitions(
    const std::vector<int>& items) {
  std::vector<std::vector<std::vector<int>>> out;
  const int n = static_cast<int>(items.size());
  if (n == 0) {
    return out;
  }
  // restricted growth string: a[0] = 0, a[i] <= max(a[0..i-1]) + 1
  std::vector<int> a(n, 0);
  auto emit = [&] {
    int blocks = *std::max_element(a.begin(), a.end()) + 1;
    std::vector<std::vector<int>> groups(blocks);
    for (int i = 0; i < n; ++i) {
      groups[a[i]].push_back(items[i]);
    }
    out.push_back(std::move(groups));
  };
  while (true) {
    emit();
    int i = n - 1;
    for (; i > 0; --i) {
      int prefix_max = 0;
      for (int j = 0; j < i; ++j) {
        prefix_max = std::max(prefix_max, a[j]);
      }
      if (a[i] <= prefix_max) {
        ++a[i];
        std::fill(a.begin() + i + 1, a.end(), 0);
        break;
      }
    }
    if (i == 0) {
      break;
    }
  }
  return out;
}

double bell_number(int n) {
  // Bell triangle
  std::vector<std::vector<double>> tri{{1.0}};
  for (int i = 1; i <= n; ++i) {
    std::vector<double> row{tri.back().back()};
    for (double v : tri.back()) {
      row.push_back(row.back() + v);
    }
    tri.push_back(std::move(row));
  }
  return tri[n][0];
}

std::vector<std::vector<int>> compositions(int total, int parts, int quantum) {
  std::vector<std::vector<int>> out;
  if (parts <= 0 || total < parts) {
    return out;
  }
  if (quantum > 1) {
    if (total % quantum != 0) {
      return out;
    }
    out = compositions(total / quantum, parts, 1);
    for (auto& c : out) {
      for (auto& v : c) {
        v *= quantum;
      }
    }
    return out;
  }
  std::vector<int> cur;
  cur.reserve(parts);
  auto rec = [&](auto&& self, int remaining, int slots) -> void {
    if (slots == 1) {
      cur.push_back(remaining);
      out.push_back(cur);
      cur.pop_back();
      return;
    }
    for (int v = 1; v <= remaining - (slots - 1); ++v) {
      cur.push_back(v);
      self(self, remaining - v, slots - 1);
      cur.pop_back();
    }
  };
  rec(rec, total, parts);
  return out;
}

double composition_count(int total, int parts, int quantum) {
  if (parts <= 0 || total < parts) {
    return 0.0;
  }
  if (quantum > 1) {
    if (total % quantum != 0) {
      return 0.0;
    }
    return composition_count(total / quantum, parts, 1);
  }
  // C(total-1, parts-1)
  double r = 1.0;
  for (int i = 1; i <= parts - 1; ++i) {
    r = r * static_cast<double>(total - parts + i) / static_cast<double>(i);
  }
  return r;
}

std::vector<int> sample_composition(int total, int parts, int quantum,
                                    Rng& rng) {
  assert(parts >= 1 && total >= parts);
  if (quantum > 1 && total % quantum == 0 && total / quantum >= parts) {
    auto scaled = sample_composition(total / quantum, parts, 1, rng);
    for (auto& v : scaled) {
      v *= quantum;
    }
    return scaled;
  }
  // choose parts-1 distinct cut points from 1..total-1
  std::vector<int> cuts;
  cuts.reserve(parts - 1);
  while (static_cast<int>(cuts.size()) < parts - 1) {
    int c = 1 + static_cast<int>(rng.bounded(total - 1));
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) {
      cuts.push_back(c);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<int> comp;
  comp.reserve(parts);
  int prev = 0;
  for (int c : cuts) {
    comp.push_back(c - prev);
    prev = c;
  }
  comp.push_back(total - prev);
  return comp;
}

}  // namespace hetplan
