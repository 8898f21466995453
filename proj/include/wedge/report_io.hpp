#pragma once

#include <filesystem>
#include <string_view>

#include <json.hpp>

#include "wedge/corpus.hpp"
#include "wedge/evaluator.hpp"
#include "wedge/trainer.hpp"

namespace wedge {

nlohmann::json to_json(const Accuracy& a);
nlohmann::json to_json(const EvalReport& r, bool include_examples = true);
EvalReport eval_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainReport& r);
nlohmann::json to_json(const TransferMatrix& m);
nlohmann::json to_json(const FrequencyBinReport& r);
nlohmann::json to_json(const GridReport& r);
nlohmann::json to_json(const FrequencyHistogram& h, int min_instances = kDefaultMinInstances);

/// Published figures for an analysis ("eval", "viz-sweep", "transfer",
/// "experiment"), measured on the original restricted corpus. Reports carry
/// them for comparison only; nothing here is expected to match synthetic data.
nlohmann::json reference_values(std::string_view analysis);

/// Chance-level top-1/top-5 for `n_classes` under uniform logits.
nlohmann::json random_baseline(int n_classes);

/// Pretty-printed with a trailing newline; parent directories are created.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace wedge
