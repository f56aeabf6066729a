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

#include <complex>
#include <memory>

namespace pavits::detail {

// Thin wrapper over cached FFTW plans. Planning is serialized internally;
// execution is safe from any number of threads.
class RealFft {
 public:
  explicit RealFft(int n);

  int size() const { return n_; }
  // n real samples -> n/2 + 1 complex bins.
  void forward(const double* in, std::complex<double>* out) const;
  // Unnormalized inverse of a Hermitian half-spectrum. Overwrites `in`.
  void inverse(std::complex<double>* in, double* out) const;

  struct Plans;

 private:
  int n_;
  const Plans* plans_;
};

}  // namespace pavits::detail
