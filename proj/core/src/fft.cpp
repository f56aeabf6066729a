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

#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <vector>

namespace pavits::detail {

struct RealFft::Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Plans live for the process lifetime; FFTW_ESTIMATE keeps results
// reproducible from run to run.
const RealFft::Plans* plans_for(int n) {
  static std::map<int, std::unique_ptr<RealFft::Plans>> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second.get();
  std::vector<double> real(static_cast<std::size_t>(n));
  std::vector<fftw_complex> spec(static_cast<std::size_t>(n / 2 + 1));
  auto plans = std::make_unique<RealFft::Plans>();
  plans->r2c = fftw_plan_dft_r2c_1d(n, real.data(), spec.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans->c2r = fftw_plan_dft_c2r_1d(n, spec.data(), real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  auto* raw = plans.get();
  cache.emplace(n, std::move(plans));
  return raw;
}

}  // namespace

RealFft::RealFft(int n) : n_(n), plans_(plans_for(n)) {}

void RealFft::forward(const double* in, std::complex<double>* out) const {
  fftw_execute_dft_r2c(plans_->r2c, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
}

void RealFft::inverse(std::complex<double>* in, double* out) const {
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(in), out);
}

}  // namespace pavits::detail
