// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/ranking.hpp"

#include <algorithm>
#include <numeric>

#include "wrag/errors.hpp"

namespace wrag {

std::vector<ScoredPid> top_k(std::span<const double> scores, std::span<const std::string> pids,
                             std::size_t k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (scores.size() != pids.size()) throw InvalidArgument("scores and pids differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t n = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return pids[a] < pids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    better);
  std::vector<ScoredPid> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(ScoredPid{pids[order[i]], scores[order[i]]});
  return out;
}

}  // namespace wrag
