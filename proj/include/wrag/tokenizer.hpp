// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace wrag {

using TokenSeq = std::vector<std::string>;

/// Lowercases (Unicode simple case mapping) and splits on every code point
/// that is neither a letter nor a digit. Invalid UTF-8 bytes act as
/// separators. Shared by BM25, the mock scorer, the encoders and the QA
/// metrics so all of them agree on token boundaries.
TokenSeq tokenize(std::string_view text);

}  // namespace wrag
