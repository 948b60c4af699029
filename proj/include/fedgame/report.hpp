// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgame/metrics.hpp"
#include "fedgame/protocol.hpp"

// Serialization of round and evaluation reports. Wall time is left out of every
// file so that identical runs produce identical bytes.

namespace fedgame {

nlohmann::json to_json(const RoundReport& report);
nlohmann::json to_json(const EvalReport& report);

/// One JSON object per line.
void write_rounds_jsonl(std::ostream& out, std::span<const RoundReport> reports);
/// client_id,qs,mil,icp,n plus a final `macro` row.
void write_eval_csv(std::ostream& out, const EvalReport& report);
/// round,i,j,w_ij for every off-diagonal entry.
void write_attention_csv(std::ostream& out, std::span<const RoundReport> reports);
void write_diagnostics_csv(std::ostream& out, std::span<const AttentionDiagnostics> diagnostics);

struct AblationRow {
  std::string method;
  std::uint64_t seed = 0;
  double qs = 0.0;
  double mil = 0.0;
  double icp = 0.0;
};

/// method,qs,mil,icp with the median over seeds of each metric.
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> runs);
/// method,seed,qs,mil,icp, one row per run.
void write_ablation_runs_csv(std::ostream& out, std::span<const AblationRow> runs);

double median(std::vector<double> values);

/// Writes `content` to `path`, throwing std::runtime_error on failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace fedgame
