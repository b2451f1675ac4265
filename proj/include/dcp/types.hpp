/*
 * Copyright 2026 The dcp Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DCP_TYPES_HPP_
#define DCP_TYPES_HPP_

#include <cstddef>
#include <vector>

namespace dcp {

using Vector = std::vector<double>;

// Categorical distribution over K classes, optionally followed by a deferral
// slot (K+1 entries).
using ProbVector = std::vector<double>;

struct LabeledExample {
  Vector features;
  std::size_t label = 0;
};

}  // namespace dcp

#endif  // DCP_TYPES_HPP_
