#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "smart_rar/engine.hpp"
#include "smart_rar/inference.hpp"
#include "smart_rar/scenario.hpp"

namespace smart_rar {

struct SimConfig {
  ScenarioParams scenario;
  TrialDesign design;
  std::vector<RandomizationPolicy> policies;
  int n_reps = 2000;
  std::uint64_t master_seed = 20260810;
  int threads = 0;  // 0 = hardware concurrency
  std::string output_dir = "out";
  long long oracle_n_mc = 10000000;

  int resolved_threads() const;
};

/// Parse the JSON config file.  Unknown keys are errors; missing keys take
/// the documented defaults.
SimConfig load_config(const std::string& path);
SimConfig config_from_json(const nlohmann::json& j);

struct ReplicationRow {
  int policy_index = 0;
  int rep = 0;
  bool failed = false;
  std::string error;
  double mean_y = 0.0;
  double frac_a1_opt = 0.0;
  double frac_regime_opt = 0.0;
  int t_star = -1;
  bool burn_in_complete = false;
  int fallback_count = 0;
  InferenceResult inference;
};

struct ReplicationTable {
  std::vector<std::string> policy_names;
  int n_regimes = 0;
  int n_reps = 0;
  OracleResult oracle;
  int oracle_optimal = 0;
  std::vector<ReplicationRow> rows;  // ordered by (policy, rep)
};

/// Parallel Monte Carlo over (policy, replication) with per-replication
/// substreams; the table is identical for any thread count.  Aborts the
/// study when more than 1% of replications fail.
ReplicationTable run_monte_carlo(const SimConfig& config);

struct MetricsReport {
  struct Row {
    std::string policy;
    std::string metric;
    std::string estimator;  // blank for in-trial metrics
    double value = 0.0;
    double mc_se = 0.0;  // NaN renders blank
  };
  std::vector<Row> rows;
};

MetricsReport aggregate(const ReplicationTable& table, const OracleResult& oracle);

enum class ReportFormat { csv, json };
void write_report(const MetricsReport& report, ReportFormat format, const std::string& path);

/// Fixed 6-decimal float rendering used by every report writer.
std::string render_fixed(double v);

void write_replications_csv(const ReplicationTable& table, const std::string& path);
/// Full-precision binary sidecar of the per-replication estimates.
void write_replications_binary(const ReplicationTable& table, const std::string& path);

/// Oracle versus externally reported values, with pairwise contrasts.
std::string oracle_report_csv(const OracleResult& oracle, const ScenarioParams& scenario,
                              const TrialDesign& design);

}  // namespace smart_rar
