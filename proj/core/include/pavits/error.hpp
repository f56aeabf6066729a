// Copyright 2026 The pavits-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace pavits {

// Malformed or unsupported input (bad files, unknown labels, shape violations).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint missing, truncated, corrupt, or built for a different architecture.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loss component became non-finite during training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& component, long step)
      : std::runtime_error("training diverged: non-finite " + component + " at step " +
                           std::to_string(step)),
        component_(component) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace pavits
