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

#include "binary_io.hpp"
#include "pavits/signal.hpp"

namespace pavits::signal {

namespace {
constexpr char kMagic[8] = {'P', 'V', 'F', 'E', 'A', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

FeatureRecord compute_features(const std::string& id, const Waveform& w, const FrameConfig& cfg) {
  FeatureRecord r;
  r.id = id;
  r.linear = linear_spectrogram(w, cfg);
  r.mel = mel_from_linear(r.linear, w.sample_rate);
  r.f0 = extract_f0(w, cfg);
  r.cepstra = cepstra_from_log_mel(r.mel);
  return r;
}

void write_feature_record(const std::filesystem::path& path, const FeatureRecord& record) {
  detail::BinaryWriter out;
  out.bytes(kMagic, sizeof(kMagic));
  out.pod(kVersion);
  out.str(record.id);
  out.matrix(record.linear.mag);
  out.matrix(record.mel.logmel);
  Matrix f0(2, static_cast<Index>(record.f0.size()));
  for (std::size_t t = 0; t < record.f0.size(); ++t) {
    f0(0, static_cast<Index>(t)) = record.f0.f0[t];
    f0(1, static_cast<Index>(t)) = record.f0.voiced[t];
  }
  out.matrix(f0);
  out.matrix(record.cepstra.coeffs);
  out.save(path);
}

FeatureRecord read_feature_record(const std::filesystem::path& path) {
  detail::BinaryReader<InputError> in(path);
  char magic[8];
  in.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw InputError("not a feature cache file: " + path.string());
  if (in.pod<std::uint32_t>() != kVersion) throw InputError("unsupported feature cache version: " + path.string());
  FeatureRecord r;
  r.id = in.str();
  r.linear.mag = in.matrix();
  r.mel.logmel = in.matrix();
  Matrix f0 = in.matrix();
  if (f0.rows() != 2) throw InputError("corrupt feature cache (F0 block): " + path.string());
  for (Index t = 0; t < f0.cols(); ++t) {
    r.f0.f0.push_back(f0(0, t));
    r.f0.voiced.push_back(static_cast<std::uint8_t>(f0(1, t) != 0.0));
  }
  r.cepstra.coeffs = in.matrix();
  if (!in.at_end()) throw InputError("corrupt feature cache (trailing bytes): " + path.string());
  const Index frames = r.linear.mag.cols();
  if (r.mel.logmel.cols() != frames || f0.cols() != frames || r.cepstra.coeffs.cols() != frames) {
    throw InputError("corrupt feature cache (frame counts disagree): " + path.string());
  }
  return r;
}

}  // namespace pavits::signal
