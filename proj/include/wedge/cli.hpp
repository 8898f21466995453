#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "wedge/corpus.hpp"
#include "wedge/trainer.hpp"

namespace wedge::cli {

/// Everything needed to reproduce a run; the CLI flags mirror these fields.
struct ExperimentSpec {
  std::filesystem::path corpus;
  Visualization visualization = Visualization::SketchA;
  std::set<std::string> proveniences;  // empty = all
  std::uint64_t split_seed = 0;
  int min_instances = kDefaultMinInstances;
  TrainConfig train;
  std::optional<FineTuneConfig> fine_tune;
  /// Data used by the fine-tuning step and scored as its target subset;
  /// empty = all training proveniences.
  std::set<std::string> fine_tune_proveniences;
  int repeats = 1;
  std::filesystem::path output = "out";

  void validate() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);
/// Throws std::invalid_argument on unknown tags or invalid values.
ExperimentSpec spec_from_json(const nlohmann::json& j);
/// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string spec_hash(const ExperimentSpec& spec);

/// Entry point of the `wedge` tool. Returns the process exit code: 0 on
/// success, 1 on validation or runtime failure, 2 on usage errors.
int run(int argc, char** argv);

}  // namespace wedge::cli
