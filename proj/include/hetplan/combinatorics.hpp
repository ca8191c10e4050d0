// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "hetplan/rng.hpp"

namespace hetplan {

// All set partitions of `items`, enumerated via restricted growth strings in
// lexicographic RGS order. Bell(|items|) results; callers keep |items| small.
std::vector<std::vector<std::vector<int>>> set_partitions(
    const std::vector<int>& items);

double bell_number(int n);

// Compositions of `total` into `parts` positive integers, lexicographic.
// With quantum q > 1, every part must be a multiple of q (empty result when
// total is not divisible by q).
std::vector<std::vector<int>> compositions(int total, int parts,
                                           int quantum = 1);

// C(total-1, parts-1), as a double so callers can compare against caps
// without overflow.
double composition_count(int total, int parts, int quantum = 1);

// Uniform random composition of total into parts positive integers (cut-point
// sampling). Falls back to quantum 1 when total is not divisible by q.
std::vector<int> sample_composition(int total, int parts, int quantum,
                                    Rng& rng);

}  // namespace hetplan
