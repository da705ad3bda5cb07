// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cssm {

// Reflectance cube, band-major [C, H, W].
struct HsiCube {
  std::size_t height = 0, width = 0, bands = 0;
  std::vector<double> data;

  std::size_t pixels() const { return height * width; }
  double at(std::size_t band, std::size_t row, std::size_t col) const {
    return data[(band * height + row) * width + col];
  }
};

// Per-pixel class labels in raster order; 0 = unlabeled, classes are 1..K.
struct LabelGrid {
  std::size_t height = 0, width = 0;
  std::vector<int> labels;
};

struct Dataset {
  HsiCube cube;
  LabelGrid labels;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }
};

}  // namespace cssm
