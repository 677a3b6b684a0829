// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "radsnn/eval.hpp"
#include "support/test_util.hpp"

namespace radsnn::testing {

// One default pipeline instance, built once per test binary.
inline const Trial& reference_trial() {
  static const Trial t = build_trial(shipped_templates(), PipelineConfig{}, 42);
  return t;
}

inline int class_index(const LabeledDataset& ds, const std::string& name) {
  for (std::size_t k = 0; k < ds.class_names.size(); ++k)
    if (ds.class_names[k] == name) return static_cast<int>(k);
  return -1;
}

}  // namespace radsnn::testing
