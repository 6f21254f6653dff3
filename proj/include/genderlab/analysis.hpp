#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "genderlab/model.hpp"
#include "genderlab/stats.hpp"
#include "genderlab/wordlab.hpp"

namespace genderlab {

struct WeightDelta {
  TokenId token = 0;
  double before_norm = 0.0;
  double delta_norm = 0.0;
  double percent_change = 0.0;
};

enum class PercentBase { row, table };

// Every row ranked by percent change (descending, ties by token id). With
// PercentBase::table the denominator is the whole table's L2 norm.
std::vector<WeightDelta> rank_all_weight_changes(const Matrix<double>& before,
                                                 const Matrix<double>& after,
                                                 PercentBase base = PercentBase::row);

std::vector<WeightDelta> rank_weight_changes(const Matrix<double>& before, const Matrix<double>& after,
                                             std::size_t k, PercentBase base = PercentBase::row);

// x(parent_m) - x(parent_f).
std::vector<double> gender_axis(const Matrix<double>& pristine_embedding, const NovelNounSpec& spec);

// <delta, axis / |axis|>; positive leans masculine.
double project_on_gender_axis(std::span<const double> delta, std::span<const double> axis);

struct AggregateCell {
  std::string model;
  Condition condition = Condition::A;
  Gender taught = Gender::feminine;
  int shots = 0;      // 0 = before any learning
  int distance = -1;  // -1 pools every distance
  std::size_t n_trials = 0;
  double mean_acc = 0.0;
  Interval ci;
};

struct SpecCurvePoint {
  std::string model;
  std::size_t spec_index = 0;
  std::string label;
  Condition condition = Condition::A;
  Gender taught = Gender::feminine;
  int shots = 0;
  double mean_acc = 0.0;
};

struct TrialAggregate {
  std::vector<AggregateCell> cells;
  std::vector<SpecCurvePoint> curves;

  const AggregateCell* find(const std::string& model, Condition c, Gender g, int shots,
                            int distance = -1) const;
};

// Cells per (model, condition, taught gender, shots, distance), including a
// shots = 0 cell from the pre-update accuracy of each (spec, condition,
// gender). Trials are sorted by key first; a repeated key is an InputError.
TrialAggregate aggregate_trials(std::span<const FewShotTrial> trials,
                                const BootstrapConfig& bootstrap = {});

struct DeltaRecord {
  std::string trial_key;
  std::string model;
  Condition condition = Condition::A;
  Gender taught = Gender::feminine;
  bool control = false;
  int shots = 0;
  int rank = 0;
  std::string token;
  double percent_change = 0.0;
  double projection = 0.0;
};

std::vector<DeltaRecord> collect_deltas(std::span<const FewShotTrial> trials);

struct SweepPoint {
  double lr = 0.0;
  TrialAggregate aggregate;
};

struct ReportOptions {
  std::string title = "genderlab";
};

// aggregate.csv, gender_gap.csv, deltas.csv, summary.json, learning_curves.svg
// and, when there are deltas, weight_change_heatmap.svg. Returns the paths
// written.
std::vector<std::filesystem::path> emit_report(const TrialAggregate& aggregate,
                                               std::span<const DeltaRecord> deltas,
                                               const std::filesystem::path& out_dir,
                                               const ReportOptions& options = {});

// lr_sweep.csv and lr_sweep.svg.
std::vector<std::filesystem::path> emit_sweep_report(std::span<const SweepPoint> sweep,
                                                     const std::filesystem::path& out_dir);

std::string aggregate_to_csv(const TrialAggregate& aggregate);
// model, condition, shots, acc_f, acc_m, gap (masculine minus feminine).
std::string gender_gap_csv(const TrialAggregate& aggregate);
std::string deltas_to_csv(std::span<const DeltaRecord> deltas);

}  // namespace genderlab
