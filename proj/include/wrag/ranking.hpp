// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wrag/corpus_store.hpp"

namespace wrag {

/// Top-k of `scores` (parallel to `pids`), descending by score with ties
/// broken by ascending pid. Returns min(k, size) entries.
std::vector<ScoredPid> top_k(std::span<const double> scores, std::span<const std::string> pids,
                             std::size_t k);

}  // namespace wrag
