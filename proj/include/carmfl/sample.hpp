// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "carmfl/tensor.hpp"

namespace carmfl {

using SampleId = std::int64_t;

/// Multi-hot label vector; entries are 0 or 1.
using MultiHot = std::vector<std::uint8_t>;

enum class Modality { Image, Text };

/// One record: optional image features, optional text features, labels.
struct Sample {
  SampleId id = 0;
  std::optional<Vector> img;
  std::optional<Vector> txt;
  MultiHot labels;

  bool operator==(const Sample&) const = default;
};

}  // namespace carmfl
