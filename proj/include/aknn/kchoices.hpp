// Copyright 2026 The aknn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.

#pragma once

#include <cstddef>
#include <vector>

namespace aknn {

/// The neighborhood sizes a Meta-k network chooses between: {0} plus every
/// power of two up to max_k. Choice 0 means "base model only".
class KChoices {
  public:
    /// Throws kInvalidArgument unless max_k is a power of two >= 1.
    explicit KChoices(std::size_t max_k);

    std::size_t max_k() const { return max_k_; }
    std::size_t size() const { return values_.size(); }
    std::size_t operator[](std::size_t i) const { return values_[i]; }
    const std::vector<std::size_t>& values() const { return values_; }

    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }

  private:
    std::size_t max_k_;
    std::vector<std::size_t> values_;
};

}  // namespace aknn
