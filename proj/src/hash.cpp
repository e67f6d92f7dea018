// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/hash.hpp"

#include <cstdio>

namespace wrag {

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace wrag
