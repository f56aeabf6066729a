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


#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pavits/error.hpp"
#include "pavits/runtime.hpp"

namespace fs = std::filesystem;
using namespace pavits;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitDiverged = 4;

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

int cmd_synth_corpus(int n, std::uint64_t seed, const std::string& out) {
  runtime::SyntheticCorpusSpec spec;
  spec.utterances = n;
  spec.seed = seed;
  const fs::path manifest = runtime::generate_synthetic_corpus(spec, out);
  std::cout << "wrote " << n * kEmotionCount << " utterances, manifest " << manifest.string() << '\n';
  return kExitOk;
}

int cmd_prepare(const std::string& manifest, const std::string& out, const std::string& config) {
  signal::FrameConfig frames;
  if (!config.empty()) frames = train::load_config(config).model.frames;
  runtime::prepare_cache(manifest, out, frames);
  std::cout << "feature cache written to " << out << '\n';
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& ablate, long steps_override) {
  train::TrainConfig cfg = train::load_config(config_path);
  if (!ablate.empty()) cfg.ablation = parse_ablation(ablate);
  if (steps_override >= 0) cfg.steps = steps_override;
  const fs::path base = fs::path(config_path).parent_path();
  if (cfg.manifest.empty()) throw InputError("config: 'manifest' is required for training");
  const auto records = runtime::read_manifest(resolve(base, cfg.manifest));
  const tpp::PhonemeInventory inventory = runtime::inventory_from(records);
  std::optional<fs::path> cache;
  if (!cfg.cache_dir.empty()) cache = resolve(base, cfg.cache_dir);
  const auto recordings = runtime::load_recordings(records, inventory, cfg.model.frames, cache);
  const auto items = train::build_training_items(recordings);

  train::Trainer trainer(cfg, inventory);
  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!cfg.log.empty()) {
    log_file.open(resolve(base, cfg.log), std::ios::trunc);
    if (!log_file) throw InputError("cannot open log file: " + cfg.log);
    log = &log_file;
  }
  const auto t0 = std::chrono::steady_clock::now();
  train::run_training(trainer, items, cfg.steps, log);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path ckpt = resolve(base, cfg.checkpoint.empty() ? "model.ckpt" : cfg.checkpoint);
  if (!ckpt.parent_path().empty()) fs::create_directories(ckpt.parent_path());
  train::save_checkpoint(ckpt, trainer);
  std::cerr << "trained " << cfg.steps << " steps on " << items.size() << " items in " << secs << " s; checkpoint "
            << ckpt.string() << '\n';
  return kExitOk;
}

int cmd_convert(const std::string& ckpt, const std::string& mode_name, const std::string& input,
                const std::string& target_name, const std::string& out) {
  const runtime::Mode mode = runtime::parse_mode(mode_name);
  const Emotion target = parse_emotion(target_name);
  const runtime::Converter conv = runtime::Converter::from_checkpoint(ckpt);
  fs::create_directories(out);
  const std::string suffix = "_to_" + std::string(emotion_name(target)) + "_" + runtime::mode_name(mode) + ".wav";
  int written = 0;
  if (fs::path(input).extension() == ".wav") {
    if (mode == runtime::Mode::kVariableLength) {
      throw InputError("vl conversion needs phonemes: pass a manifest as --input");
    }
    const signal::Waveform w = signal::load_wav(input);
    signal::save_wav(fs::path(out) / (fs::path(input).stem().string() + suffix), conv.convert_fl(w, target));
    ++written;
  } else {
    for (const auto& r : runtime::read_manifest(input)) {
      runtime::ConversionRequest req;
      req.mode = mode;
      req.audio = signal::load_wav(r.audio_path);
      req.phonemes = r.phonemes;
      req.speaker = r.speaker;
      req.target = target;
      const std::string name = r.speaker + "_" + r.id + "_" + std::string(emotion_name(r.emotion)) + suffix;
      signal::save_wav(fs::path(out) / name, conv.convert(req));
      ++written;
    }
  }
  std::cout << "wrote " << written << " file(s) to " << out << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest, const std::string& mode_name,
             const std::string& out) {
  const runtime::Mode mode = runtime::parse_mode(mode_name);
  const runtime::Converter conv = runtime::Converter::from_checkpoint(ckpt);
  const auto report = runtime::evaluate_corpus(conv, runtime::read_manifest(manifest), mode);
  const std::string text = runtime::format_report(report);
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw InputError("cannot write report: " + out);
  f << text;
  std::cout << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotional voice conversion toolkit"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-corpus", "Render a parallel synthetic corpus");
  int n = 2;
  std::uint64_t seed = 1;
  std::string synth_out;
  synth->add_option("--n", n, "Utterances (each rendered under all five emotions)")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* prepare = app.add_subcommand("prepare", "Compute the feature cache for a manifest");
  std::string prep_manifest, prep_out, prep_config;
  prepare->add_option("manifest", prep_manifest, "Manifest file")->required();
  prepare->add_option("--out", prep_out, "Cache directory")->required();
  prepare->add_option("--config", prep_config, "Config file supplying frame settings");

  auto* trainc = app.add_subcommand("train", "Train a model");
  std::string config, ablate;
  long steps = -1;
  trainc->add_option("--config", config, "Config file")->required();
  trainc->add_option("--ablate", ablate, "Comma-separated ablation flags");
  trainc->add_option("--steps", steps, "Override the configured step count");

  auto* convert = app.add_subcommand("convert", "Convert audio to a target emotion");
  std::string ckpt, mode = "fl", input, target, conv_out;
  convert->add_option("--ckpt", ckpt, "Checkpoint")->required();
  convert->add_option("--mode", mode, "fl or vl");
  convert->add_option("--input", input, "WAV file or manifest")->required();
  convert->add_option("--target-emotion", target, "Target emotion label")->required();
  convert->add_option("--out", conv_out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval-mcd", "Evaluate mel-cepstral distortion over parallel pairs");
  std::string eval_ckpt, eval_manifest, eval_mode = "fl", eval_out = "report.tsv";
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval->add_option("--manifest", eval_manifest, "Manifest")->required();
  eval->add_option("--mode", eval_mode, "fl or vl");
  eval->add_option("--out", eval_out, "Report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (synth->parsed()) return cmd_synth_corpus(n, seed, synth_out);
    if (prepare->parsed()) return cmd_prepare(prep_manifest, prep_out, prep_config);
    if (trainc->parsed()) return cmd_train(config, ablate, steps);
    if (convert->parsed()) return cmd_convert(ckpt, mode, input, target, conv_out);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_manifest, eval_mode, eval_out);
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitBadInput;
}
