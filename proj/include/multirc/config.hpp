#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "multirc/model.hpp"
#include "multirc/negatives.hpp"
#include "multirc/pipeline.hpp"
#include "multirc/scoring.hpp"
#include "multirc/trainer.hpp"

namespace multirc {

/// Effective run configuration: every registered `section.key` with its
/// value (file, then overrides, then defaults), plus typed views.
class RunConfig {
 public:
  /// Defaults only.
  RunConfig();

  static RunConfig parse(std::istream& in, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Applies `section.key=value`; unknown keys are rejected.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  /// Every key in registry order, grouped by section; parseable by parse().
  std::string to_text() const;

  /// Typed views. Each validates its owning module's invariants.
  SynthScenario synth() const;
  std::uint64_t synth_seed() const;
  std::size_t synth_train_length() const;
  WindowConfig window() const;
  WindowConfig train_window() const;
  ModelConfig model() const;
  TrainConfig train() const;
  double valid_ratio() const;
  ScoreConfig score() const;
  ThresholdPolicy threshold() const;
  std::filesystem::path output_dir() const;
  std::filesystem::path train_path() const;
  std::filesystem::path test_path() const;

  /// Validates every typed view before any work starts.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Registered keys in declaration order.
const std::vector<std::string>& config_keys();

}  // namespace multirc
