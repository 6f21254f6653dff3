#include "genderlab/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "genderlab/error.hpp"
#include "genderlab/random.hpp"

namespace genderlab {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

using CellKey = std::tuple<std::string, int, int, int, int>;  // model, condition, gender, shots, distance

std::string cond_str(Condition c) { return std::string(1, condition_code(c)); }
std::string gender_str(Gender g) { return std::string(1, gender_code(g)); }
std::string distance_str(int d) { return d < 0 ? "all" : std::to_string(d); }

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, std::string_view text,
                std::vector<std::filesystem::path>& written) {
  write_text_file(path, text);
  written.push_back(path);
}

constexpr const char* kFeminineColour = "#d95f02";
constexpr const char* kMasculineColour = "#1b9e77";

const char* gender_colour(Gender g) { return g == Gender::feminine ? kFeminineColour : kMasculineColour; }

struct Panel {
  double x = 0, y = 0, w = 0, h = 0;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  double px(double v) const { return x + (x_max > x_min ? (v - x_min) / (x_max - x_min) : 0.5) * w; }
  double py(double v) const { return y + h - (v - y_min) / (y_max - y_min) * h; }
};

std::string panel_frame(const Panel& p, const std::string& title, std::span<const double> x_ticks,
                        const std::string& x_label, const std::string& left_label,
                        const std::string& right_label, bool right_reversed) {
  std::string s;
  s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" "
                   "stroke=\"#444\"/>\n",
                   p.x, p.y, p.w, p.h);
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
                   p.x + p.w / 2, p.y - 8, xml_escape(title));
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double yy = p.py(p.y_min + t * (p.y_max - p.y_min));
    s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", p.x,
                     yy, p.x + p.w, yy);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\" font-size=\"9\">{:.0f}</text>\n",
                     p.x - 4, yy + 3, 100 * t);
    if (!right_label.empty()) {
      s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"9\">{:.0f}</text>\n", p.x + p.w + 4,
                       yy + 3, 100 * (right_reversed ? 1 - t : t));
    }
  }
  for (double t : x_ticks) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" font-size=\"9\">{:g}</text>\n",
                     p.px(t), p.y + p.h + 12, t);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
                   p.x + p.w / 2, p.y + p.h + 26, xml_escape(x_label));
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" transform=\"rotate(-90 {:.1f} "
                   "{:.1f})\" text-anchor=\"middle\">{}</text>\n",
                   p.x - 28, p.y + p.h / 2, p.x - 28, p.y + p.h / 2, xml_escape(left_label));
  if (!right_label.empty()) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" transform=\"rotate(90 {:.1f} "
                     "{:.1f})\" text-anchor=\"middle\">{}</text>\n",
                     p.x + p.w + 30, p.y + p.h / 2, p.x + p.w + 30, p.y + p.h / 2, xml_escape(right_label));
  }
  return s;
}

std::string polyline(const Panel& p, const std::vector<std::pair<double, double>>& pts, const char* colour,
                     double width, double opacity, const std::string& attrs) {
  std::string points;
  for (const auto& [x, y] : pts) points += fmt::format("{:.2f},{:.2f} ", p.px(x), p.py(y));
  if (!points.empty()) points.pop_back();
  return fmt::format("<polyline {}points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" "
                     "stroke-opacity=\"{}\"/>\n",
                     attrs, points, colour, width, opacity);
}

std::string svg_open(double w, double h) {
  return fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
                     "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\">\n"
                     "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
                     w, h, w, h);
}

// Learning curves on the feminine-share scale: feminine-taught accuracy as is,
// masculine-taught accuracy as 1 - acc, so 100% F sits where 0% M does.
std::string learning_curves_svg(const TrialAggregate& agg, const std::string& title) {
  std::set<std::string> models;
  std::set<int> conditions, shot_set;
  for (const auto& c : agg.cells) {
    models.insert(c.model);
    conditions.insert(int(c.condition));
    shot_set.insert(c.shots);
  }
  const double pw = 220, ph = 160, mx = 70, my = 60;
  const double W = mx + double(conditions.size()) * (pw + mx) + 20;
  const double H = my + double(models.size()) * (ph + my) + 20;
  std::string s = svg_open(W, H);
  s += fmt::format("<text x=\"{:.0f}\" y=\"20\" font-size=\"14\">{}</text>\n", mx, xml_escape(title));
  const std::vector<double> ticks(shot_set.begin(), shot_set.end());
  const double x_max = ticks.empty() ? 1.0 : ticks.back();
  int row = 0;
  for (const auto& model : models) {
    int col = 0;
    for (int ci : conditions) {
      const Condition cond = Condition(ci);
      Panel p{mx + col * (pw + mx), my + row * (ph + my), pw, ph, 0, x_max, 0, 1};
      s += panel_frame(p, fmt::format("{} condition {}", model, condition_code(cond)), ticks,
                       "learning sentences", "feminine %", "masculine %", true);
      for (Gender g : {Gender::feminine, Gender::masculine}) {
        auto share = [&](double acc) { return g == Gender::feminine ? acc : 1.0 - acc; };
        std::map<std::size_t, std::vector<std::pair<double, double>>> per_spec;
        for (const auto& pt : agg.curves) {
          if (pt.model == model && pt.condition == cond && pt.taught == g) {
            per_spec[pt.spec_index].emplace_back(pt.shots, share(pt.mean_acc));
          }
        }
        for (const auto& [spec, pts] : per_spec) s += polyline(p, pts, gender_colour(g), 0.8, 0.25, "");
        std::vector<std::pair<double, double>> mean_pts;
        for (const auto& c : agg.cells) {
          if (c.model == model && c.condition == cond && c.taught == g && c.distance == -1) {
            mean_pts.emplace_back(c.shots, share(c.mean_acc));
            const double lo = share(c.ci.lo), hi = share(c.ci.hi);
            s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\"/>\n",
                             p.px(c.shots), p.py(lo), p.px(c.shots), p.py(hi), gender_colour(g));
          }
        }
        s += polyline(p, mean_pts, gender_colour(g), 2.0, 1.0,
                      fmt::format("class=\"series\" data-model=\"{}\" data-condition=\"{}\" "
                                  "data-gender=\"{}\" ",
                                  xml_escape(model), condition_code(cond), gender_code(g)));
      }
      ++col;
    }
    ++row;
  }
  s += "</svg>\n";
  return s;
}

std::string heatmap_svg(std::span<const DeltaRecord> deltas) {
  // One panel per (model, condition, taught gender); rows are the ten tokens
  // with the largest mean percent change, columns the shot counts.
  using PanelKey = std::tuple<std::string, int, int>;
  std::map<PanelKey, std::map<std::string, std::map<int, std::pair<double, int>>>> cells;
  std::map<PanelKey, std::set<int>> shots;
  for (const auto& d : deltas) {
    if (d.control) continue;
    const PanelKey k{d.model, int(d.condition), int(d.taught)};
    auto& c = cells[k][d.token][d.shots];
    c.first += d.percent_change;
    c.second += 1;
    shots[k].insert(d.shots);
  }
  const double cw = 34, rh = 16, label_w = 90, pad = 40;
  const std::size_t n_panels = cells.size();
  const std::size_t cols = std::min<std::size_t>(4, std::max<std::size_t>(1, n_panels));
  double max_cols = 1;
  for (const auto& [k, s] : shots) max_cols = std::max(max_cols, double(s.size()));
  const double pw = label_w + max_cols * cw + pad, ph = 10 * rh + 50;
  const std::size_t rows = (n_panels + cols - 1) / cols;
  std::string s = svg_open(double(cols) * pw + 20, double(rows) * ph + 40);
  std::size_t idx = 0;
  for (const auto& [k, by_token] : cells) {
    const double x0 = 10 + double(idx % cols) * pw, y0 = 30 + double(idx / cols) * ph;
    std::vector<std::pair<double, std::string>> order;
    for (const auto& [tok, by_shot] : by_token) {
      double total = 0;
      int n = 0;
      for (const auto& [sh, v] : by_shot) {
        total += v.first;
        n += v.second;
      }
      order.emplace_back(-total / n, tok);
    }
    std::sort(order.begin(), order.end());
    if (order.size() > 10) order.resize(10);
    double vmax = 0;
    for (const auto& [neg, tok] : order) {
      for (const auto& [sh, v] : by_token.at(tok)) vmax = std::max(vmax, v.first / v.second);
    }
    const auto& [model, cond, gender] = k;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\">{} {} {}</text>\n", x0, y0 - 8,
                     xml_escape(model), condition_code(Condition(cond)), gender_code(Gender(gender)));
    const std::vector<int> sh(shots[k].begin(), shots[k].end());
    for (std::size_t j = 0; j < sh.size(); ++j) {
      s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" font-size=\"9\">{}</text>\n",
                       x0 + label_w + (double(j) + 0.5) * cw, y0 + 10 * rh + 14, sh[j]);
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::string& tok = order[i].second;
      const double yy = y0 + double(i) * rh;
      s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\" font-size=\"9\">{}</text>\n",
                       x0 + label_w - 4, yy + rh - 4, xml_escape(tok));
      for (std::size_t j = 0; j < sh.size(); ++j) {
        const auto& m = by_token.at(tok);
        const auto it = m.find(sh[j]);
        const double v = it == m.end() ? 0.0 : it->second.first / it->second.second;
        const double t = vmax > 0 ? v / vmax : 0.0;
        const int shade = int(std::lround(255 * (1 - t)));
        s += fmt::format("<rect class=\"cell\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" "
                         "fill=\"rgb(255,{},{})\"><title>{} {:.3f}%</title></rect>\n",
                         x0 + label_w + double(j) * cw, yy, cw - 1, rh - 1, shade, shade, xml_escape(tok), v);
      }
    }
    ++idx;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace

std::vector<WeightDelta> rank_all_weight_changes(const Matrix<double>& before, const Matrix<double>& after,
                                                 PercentBase base) {
  if (before.rows() != after.rows() || before.cols() != after.cols()) {
    throw InputError(fmt::format("embedding tables differ in shape: {}x{} vs {}x{}", before.rows(),
                                 before.cols(), after.rows(), after.cols()));
  }
  const double table_norm = before.norm();
  std::vector<WeightDelta> out;
  out.reserve(std::size_t(before.rows()));
  for (Eigen::Index r = 0; r < before.rows(); ++r) {
    WeightDelta w;
    w.token = TokenId(r);
    w.before_norm = before.row(r).norm();
    w.delta_norm = (after.row(r) - before.row(r)).norm();
    const double denom = base == PercentBase::row ? w.before_norm : table_norm;
    if (w.delta_norm == 0.0) {
      w.percent_change = 0.0;
    } else if (denom == 0.0) {
      w.percent_change = std::numeric_limits<double>::infinity();
    } else {
      w.percent_change = 100.0 * w.delta_norm / denom;
    }
    out.push_back(w);
  }
  std::stable_sort(out.begin(), out.end(), [](const WeightDelta& a, const WeightDelta& b) {
    return a.percent_change > b.percent_change;
  });
  return out;
}

std::vector<WeightDelta> rank_weight_changes(const Matrix<double>& before, const Matrix<double>& after,
                                             std::size_t k, PercentBase base) {
  auto all = rank_all_weight_changes(before, after, base);
  if (all.size() > k) all.resize(k);
  return all;
}

std::vector<double> gender_axis(const Matrix<double>& pristine_embedding, const NovelNounSpec& spec) {
  const auto rows = pristine_embedding.rows();
  if (spec.parent_f < 0 || spec.parent_f >= rows || spec.parent_m < 0 || spec.parent_m >= rows) {
    throw InputError("gender axis parent out of range");
  }
  std::vector<double> axis(std::size_t(pristine_embedding.cols()));
  for (Eigen::Index c = 0; c < pristine_embedding.cols(); ++c) {
    axis[std::size_t(c)] = pristine_embedding(spec.parent_m, c) - pristine_embedding(spec.parent_f, c);
  }
  return axis;
}

double project_on_gender_axis(std::span<const double> delta, std::span<const double> axis) {
  if (delta.size() != axis.size()) {
    throw InputError(fmt::format("delta has {} dimensions, axis has {}", delta.size(), axis.size()));
  }
  double norm2 = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < axis.size(); ++i) {
    norm2 += axis[i] * axis[i];
    dot += delta[i] * axis[i];
  }
  if (norm2 == 0.0) throw InputError("gender axis is the zero vector");
  return dot / std::sqrt(norm2);
}

const AggregateCell* TrialAggregate::find(const std::string& model, Condition c, Gender g, int shots,
                                          int distance) const {
  for (const auto& cell : cells) {
    if (cell.model == model && cell.condition == c && cell.taught == g && cell.shots == shots &&
        cell.distance == distance) {
      return &cell;
    }
  }
  return nullptr;
}

TrialAggregate aggregate_trials(std::span<const FewShotTrial> trials, const BootstrapConfig& bootstrap) {
  std::vector<const FewShotTrial*> sorted;
  for (const auto& t : trials) {
    if (!t.control) sorted.push_back(&t);
  }
  if (sorted.empty()) throw InputError("no trials to aggregate");
  std::vector<std::string> keys;
  for (const auto* t : sorted) keys.push_back(t->key());
  std::vector<std::size_t> order(sorted.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (keys[order[i]] == keys[order[i - 1]]) throw InputError("duplicate trial key " + keys[order[i]]);
  }

  std::map<CellKey, std::vector<double>> values;
  using CurveKey = std::tuple<std::string, int, int, std::size_t, int>;  // model, cond, gender, spec, shots
  std::map<CurveKey, std::pair<double, int>> curve;
  std::map<CurveKey, std::string> labels;
  std::set<std::tuple<std::string, std::size_t, int, int>> seen_pre;
  std::map<std::tuple<std::string, int, int, int>, std::set<int>> distance_sets;
  for (std::size_t i : order) {
    const FewShotTrial& t = *sorted[i];
    const int c = int(t.condition), g = int(t.taught);
    auto& dset = distance_sets[{t.model, c, g, t.shots}];
    std::set<int> mine;
    for (const auto& [d, acc] : t.post_accuracy) mine.insert(d);
    if (dset.empty()) {
      dset = mine;
    } else if (dset != mine) {
      throw InputError("trial " + t.key() + " reports different distances from its cell");
    }
    if (!t.post_accuracy.count(-1)) throw InputError("trial " + t.key() + " lacks a pooled accuracy");
    for (const auto& [d, acc] : t.post_accuracy) values[{t.model, c, g, t.shots, d}].push_back(acc);
    auto& cv = curve[{t.model, c, g, t.spec_index, t.shots}];
    cv.first += t.post_accuracy.at(-1);
    cv.second += 1;
    labels[{t.model, c, g, t.spec_index, t.shots}] = t.label;
    if (seen_pre.insert({t.model, t.spec_index, c, g}).second) {
      for (const auto& [d, acc] : t.pre_accuracy) values[{t.model, c, g, 0, d}].push_back(acc);
      if (t.pre_accuracy.count(-1)) {
        curve[{t.model, c, g, t.spec_index, 0}] = {t.pre_accuracy.at(-1), 1};
        labels[{t.model, c, g, t.spec_index, 0}] = t.label;
      }
    }
  }

  TrialAggregate agg;
  for (const auto& [key, v] : values) {
    const auto& [model, c, g, shots, d] = key;
    AggregateCell cell;
    cell.model = model;
    cell.condition = Condition(c);
    cell.taught = Gender(g);
    cell.shots = shots;
    cell.distance = d;
    cell.n_trials = v.size();
    cell.mean_acc = mean(v);
    BootstrapConfig b = bootstrap;
    b.seed = mix_seed(bootstrap.seed, {fnv1a(model), std::uint64_t(c), std::uint64_t(g),
                                       std::uint64_t(shots), std::uint64_t(d + 1)});
    cell.ci = bootstrap_mean_ci(v, b);
    agg.cells.push_back(cell);
  }
  for (const auto& [key, v] : curve) {
    const auto& [model, c, g, spec, shots] = key;
    agg.curves.push_back({model, spec, labels.at(key), Condition(c), Gender(g), shots, v.first / v.second});
  }
  return agg;
}

std::vector<DeltaRecord> collect_deltas(std::span<const FewShotTrial> trials) {
  std::vector<const FewShotTrial*> sorted;
  for (const auto& t : trials) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->key() < b->key(); });
  std::vector<DeltaRecord> out;
  for (const auto* t : sorted) {
    for (std::size_t r = 0; r < t->top.size(); ++r) {
      const auto& e = t->top[r];
      out.push_back({t->key(), t->model, t->condition, t->taught, t->control, t->shots, int(r) + 1, e.text,
                     e.percent_change, e.projection});
    }
  }
  return out;
}

std::string aggregate_to_csv(const TrialAggregate& aggregate) {
  std::string out = "model,condition,taught_gender,shots,distance,n_trials,mean_acc,ci_lo,ci_hi\n";
  for (const auto& c : aggregate.cells) {
    out += fmt::format("{},{},{},{},{},{},{:.6f},{:.6f},{:.6f}\n", c.model, condition_code(c.condition),
                       gender_code(c.taught), c.shots, distance_str(c.distance), c.n_trials, c.mean_acc,
                       c.ci.lo, c.ci.hi);
  }
  return out;
}

std::string gender_gap_csv(const TrialAggregate& aggregate) {
  std::string out = "model,condition,shots,acc_f,acc_m,gap\n";
  std::map<std::tuple<std::string, int, int>, std::pair<const AggregateCell*, const AggregateCell*>> pairs;
  for (const auto& c : aggregate.cells) {
    if (c.distance != -1) continue;
    auto& p = pairs[{c.model, int(c.condition), c.shots}];
    (c.taught == Gender::feminine ? p.first : p.second) = &c;
  }
  for (const auto& [k, p] : pairs) {
    if (!p.first || !p.second) continue;
    const auto& [model, cond, shots] = k;
    out += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f}\n", model, condition_code(Condition(cond)), shots,
                       p.first->mean_acc, p.second->mean_acc, p.second->mean_acc - p.first->mean_acc);
  }
  return out;
}

std::string deltas_to_csv(std::span<const DeltaRecord> deltas) {
  std::string out = "trial_key,rank,token,percent_change,axis_projection\n";
  for (const auto& d : deltas) {
    out += fmt::format("{},{},{},{:.6f},{:.6f}\n", d.trial_key, d.rank, d.token, d.percent_change,
                       d.projection);
  }
  return out;
}

std::vector<std::filesystem::path> emit_report(const TrialAggregate& aggregate,
                                               std::span<const DeltaRecord> deltas,
                                               const std::filesystem::path& out_dir,
                                               const ReportOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  write_file(out_dir / "aggregate.csv", aggregate_to_csv(aggregate), written);
  write_file(out_dir / "gender_gap.csv", gender_gap_csv(aggregate), written);
  write_file(out_dir / "deltas.csv", deltas_to_csv(deltas), written);
  write_file(out_dir / "learning_curves.svg", learning_curves_svg(aggregate, options.title), written);
  const bool heatmap = std::any_of(deltas.begin(), deltas.end(), [](const auto& d) { return !d.control; });
  if (heatmap) write_file(out_dir / "weight_change_heatmap.svg", heatmap_svg(deltas), written);

  nlohmann::json summary;
  summary["title"] = options.title;
  summary["aggregate_cells"] = aggregate.cells.size();
  summary["delta_rows"] = deltas.size();
  summary["heatmap"] = heatmap ? "weight_change_heatmap.svg" : "omitted: no weight-change deltas";
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : aggregate.cells) {
    if (c.distance != -1) continue;
    curves.push_back({{"model", c.model},
                      {"condition", cond_str(c.condition)},
                      {"taught_gender", gender_str(c.taught)},
                      {"shots", c.shots},
                      {"n_trials", c.n_trials},
                      {"mean_acc", c.mean_acc},
                      {"ci", {c.ci.lo, c.ci.hi}}});
  }
  summary["learning_curves"] = curves;
  std::vector<std::string> names;
  for (const auto& p : written) names.push_back(p.filename().string());
  names.push_back("summary.json");
  summary["files"] = names;
  write_file(out_dir / "summary.json", summary.dump(2) + "\n", written);
  return written;
}

std::vector<std::filesystem::path> emit_sweep_report(std::span<const SweepPoint> sweep,
                                                     const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  std::string csv = "model,lr,condition,taught_gender,shots,n_trials,mean_acc,ci_lo,ci_hi\n";
  // Taught-gender accuracy pooled over conditions and genders, per model and lr.
  std::map<std::pair<std::string, double>, std::map<int, std::pair<double, int>>> pooled;
  std::set<int> shot_set;
  for (const auto& point : sweep) {
    for (const auto& c : point.aggregate.cells) {
      if (c.distance != -1) continue;
      csv += fmt::format("{},{:g},{},{},{},{},{:.6f},{:.6f},{:.6f}\n", c.model, point.lr,
                         condition_code(c.condition), gender_code(c.taught), c.shots, c.n_trials, c.mean_acc,
                         c.ci.lo, c.ci.hi);
      auto& p = pooled[{c.model, point.lr}][c.shots];
      p.first += c.mean_acc;
      p.second += 1;
      shot_set.insert(c.shots);
    }
  }
  write_file(out_dir / "lr_sweep.csv", csv, written);

  std::set<std::string> models;
  std::set<double> lrs;
  for (const auto& [k, v] : pooled) {
    models.insert(k.first);
    lrs.insert(k.second);
  }
  const double pw = 300, ph = 200, mx = 70, my = 60;
  std::string s = svg_open(mx + double(std::max<std::size_t>(1, models.size())) * (pw + mx + 80), my + ph + 70);
  const std::vector<double> ticks(shot_set.begin(), shot_set.end());
  int col = 0;
  for (const auto& model : models) {
    Panel p{mx + col * (pw + mx + 80), my, pw, ph, 0, ticks.empty() ? 1.0 : ticks.back(), 0, 1};
    s += panel_frame(p, model + " learning-rate sweep", ticks, "learning sentences", "taught-gender accuracy %",
                     "", false);
    int li = 0;
    for (double lr : lrs) {
      const auto it = pooled.find({model, lr});
      if (it == pooled.end()) continue;
      std::vector<std::pair<double, double>> pts;
      for (const auto& [shots, v] : it->second) pts.emplace_back(shots, v.first / v.second);
      const double t = lrs.size() > 1 ? double(li) / double(lrs.size() - 1) : 0.0;
      const std::string colour = fmt::format("rgb({},{},{})", int(30 + 200 * t), 60, int(200 - 170 * t));
      s += polyline(p, pts, colour.c_str(), 1.8, 1.0,
                    fmt::format("class=\"series\" data-model=\"{}\" data-lr=\"{:g}\" ", xml_escape(model), lr));
      s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"9\" fill=\"{}\">lr {:g}</text>\n",
                       p.x + p.w + 6, p.y + 12 + 12 * li, colour, lr);
      ++li;
    }
    ++col;
  }
  s += "</svg>\n";
  write_file(out_dir / "lr_sweep.svg", s, written);
  return written;
}

}  // namespace genderlab
