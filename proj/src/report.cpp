// SPDX-License-Identifier: Apache-2.0
#include "fedgame/report.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "fedgame/format.hpp"

namespace fedgame {

using nlohmann::json;

json to_json(const RoundReport& r) {
  return json{
      {"round", r.round},
      {"train_loss", r.train_loss},
      {"meta_loss", r.meta_loss},
      {"attention", r.attention},
      {"gate_mix", r.gate_mix},
      {"upstream_bytes", r.upstream_bytes},
      {"downstream_bytes", r.downstream_bytes},
  };
}

json to_json(const EvalReport& r) {
  json clients = json::array();
  for (const auto& c : r.clients) {
    clients.push_back(json{{"client_id", c.client_id},
                           {"qs", c.qs},
                           {"mil", c.mil},
                           {"icp", c.icp},
                           {"n", c.n},
                           {"qs_per_quantile", c.qs_per_quantile}});
  }
  return json{
      {"quantiles", r.quantiles},
      {"macro", {{"qs", r.qs}, {"mil", r.mil}, {"icp", r.icp}, {"qs_per_quantile", r.qs_per_quantile}}},
      {"weighted", {{"qs", r.weighted_qs}, {"mil", r.weighted_mil}, {"icp", r.weighted_icp}}},
      {"n", r.n},
      {"clients", clients},
      {"excluded", r.excluded},
  };
}

void write_rounds_jsonl(std::ostream& out, std::span<const RoundReport> reports) {
  for (const auto& r : reports) out << to_json(r).dump() << '\n';
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "client_id,qs,mil,icp,n\n";
  for (const auto& c : report.clients) {
    out << c.client_id << ',' << format_double(c.qs) << ',' << format_double(c.mil) << ',' << format_double(c.icp)
        << ',' << c.n << '\n';
  }
  out << "macro," << format_double(report.qs) << ',' << format_double(report.mil) << ',' << format_double(report.icp)
      << ',' << report.n << '\n';
}

void write_attention_csv(std::ostream& out, std::span<const RoundReport> reports) {
  out << "round,i,j,w_ij\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.attention.size(); ++i) {
      for (std::size_t j = 0; j < r.attention[i].size(); ++j) {
        if (i == j) continue;
        out << r.round << ',' << i << ',' << j << ',' << format_double(r.attention[i][j]) << '\n';
      }
    }
  }
}

void write_diagnostics_csv(std::ostream& out, std::span<const AttentionDiagnostics> diagnostics) {
  out << "round,mean_entropy,weight_variance,intra_cluster_mass,uniform_baseline\n";
  for (const auto& d : diagnostics) {
    out << d.round << ',' << format_double(d.mean_entropy) << ',' << format_double(d.weight_variance) << ','
        << (d.intra_cluster_mass ? format_double(*d.intra_cluster_mass) : "") << ','
        << (d.uniform_baseline ? format_double(*d.uniform_baseline) : "") << '\n';
  }
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> runs) {
  out << "method,qs,mil,icp\n";
  std::vector<std::string> methods;
  for (const auto& r : runs) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  for (const auto& m : methods) {
    std::vector<double> qs, mil, icp;
    for (const auto& r : runs) {
      if (r.method != m) continue;
      qs.push_back(r.qs);
      mil.push_back(r.mil);
      icp.push_back(r.icp);
    }
    out << m << ',' << format_double(median(qs)) << ',' << format_double(median(mil)) << ','
        << format_double(median(icp)) << '\n';
  }
}

void write_ablation_runs_csv(std::ostream& out, std::span<const AblationRow> runs) {
  out << "method,seed,qs,mil,icp\n";
  for (const auto& r : runs) {
    out << r.method << ',' << r.seed << ',' << format_double(r.qs) << ',' << format_double(r.mil) << ','
        << format_double(r.icp) << '\n';
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace fedgame
