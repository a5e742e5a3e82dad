#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bridgekd/config.hpp"
#include "bridgekd/cost.hpp"
#include "bridgekd/eval.hpp"

namespace bridgekd {

// Stage orchestration. Every verb reads a RunConfig, works inside
// out_dir/{checkpoints,reports,logs} and leaves artifacts another verb (or a
// rerun) can pick up. All randomness is derived from run.seed and the
// dataset manifest, so reruns reproduce artifacts byte for byte.

struct RunPaths {
  std::string run_dir;
  std::string checkpoints_dir;
  std::string reports_dir;
  std::string logs_dir;

  // Creates the directory tree; safe to call on an existing run.
  static RunPaths create(const std::string& run_dir);

  std::string checkpoint(const std::string& name) const;
  std::string report(const std::string& name) const;
  std::string log(const std::string& name) const;
};

// Teacher names a teacher set resolves to: V and C are independently seeded
// trunks, E uses both with features concatenated in this order.
std::vector<std::string> teacher_names_for(const std::string& teacher_set);

// Synthesizes the dataset into dataset.dir.
DatasetIndex cmd_gen_data(const RunConfig& config);

// Trains every teacher trunk the configured teacher set needs on the private
// split and checkpoints it.
void cmd_train_teacher(const RunConfig& config);

// Stage one: fine-tunes the public softmax head on frozen teacher features,
// trains the adapter against hard and softened targets, checkpoints both.
void cmd_adapt(const RunConfig& config);

// Head-to-head compression study on the frozen teacher, public split:
// accuracies on held-out public samples for a linear head on raw teacher
// features, the adapter without the soft-target term, the full adapter
// objective, and a unified classifier over the private and public identities.
struct AblationReport {
  double head_on_teacher = 0.0;
  double adapter_hard_only = 0.0;
  double adapter_full = 0.0;
  double mixed_union = 0.0;
  std::string to_text() const;
};
AblationReport cmd_ablation(const RunConfig& config);
AblationReport parse_ablation_text(const std::string& text);

// Stage two: trains the student at its low resolution, supervised per
// distill.mode, and checkpoints it. An existing warm-up checkpoint is reused
// instead of retraining.
void cmd_distill(const RunConfig& config);

// Verification and closed-set identification of the checkpointed student on
// the target split; writes the results line and the ROC curve.
ResultRow cmd_eval(const RunConfig& config);

// Analytic cost plus measured throughput of the student, and of the teacher
// when one is configured, on this machine.
struct BenchReport {
  CostReport student;
  std::optional<CostReport> teacher;
  double speedup = 0.0;  // student faces/s over teacher faces/s
  std::string to_text() const;
};
BenchReport cmd_bench(const RunConfig& config);

// Full sweep over grid.{resolutions,modes,teachers,seeds}. Teachers and
// adapters are prepared once in this run, then each cell distills and
// evaluates in a child process (at most `jobs` at a time) with its own
// config, run directory and log. With an empty cli_path cells run in
// process, sequentially.
struct GridOutcome {
  std::vector<std::string> cells;
  std::vector<std::string> failed;
  std::string results_text;  // one results line per finished cell
};
GridOutcome cmd_grid(const RunConfig& config, const std::string& cli_path, int jobs);

}  // namespace bridgekd
