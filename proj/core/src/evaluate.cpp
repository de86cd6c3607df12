#include "sarc/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sarc/config.hpp"
#include "sarc/csv.hpp"
#include "sarc/error.hpp"
#include "sarc/metrics.hpp"
#include "sarc/plot.hpp"

namespace sarc {
namespace fs = std::filesystem;

std::vector<double> predict_scores(SarcNetParams& params, std::span<const CellRecord> records,
                                   std::span<const FeatureVector> scaled_features,
                                   const InputPipeline& pipeline, std::size_t batch_size, InputCache* cache) {
  std::vector<double> out(records.size());
  BatchStream stream(records, scaled_features, pipeline, batch_size, std::nullopt, 0, cache);
  while (auto batch = stream.next()) {
    const Tensor pred = sarcnet_forward(batch->images, batch->features, params, Mode::kEval);
    const auto v = pred.values();
    for (std::size_t i = 0; i < batch->indices.size(); ++i) {
      if (!std::isfinite(v[i])) {
        throw NumericError("non-finite prediction for cell " + records[batch->indices[i]].cell_id);
      }
      out[batch->indices[i]] = v[i];
    }
  }
  return out;
}

Metrics compute_metrics(std::span<const double> pred, std::span<const double> target) {
  Metrics m;
  m.mae = mae(pred, target);
  m.mse = mse(pred, target);
  try {
    m.spearman = spearman(pred, target);
  } catch (const DegenerateInputError&) {
  }
  try {
    m.r2 = r2(pred, target);
  } catch (const DegenerateInputError&) {
  }
  return m;
}

std::array<std::size_t, kHistogramBins> score_histogram(std::span<const double> predictions) {
  std::array<std::size_t, kHistogramBins> h{};
  for (double p : predictions) {
    const double c = std::clamp(p, 1.0, 5.0);
    const auto k = static_cast<std::size_t>(std::floor((c - 0.5) / 0.5));
    ++h[std::min(k, kHistogramBins - 1)];
  }
  return h;
}

std::string format_metric(const std::optional<double>& v) { return v ? format_double(*v) : "null"; }

void EvalReport::check_consistency() const {
  std::vector<double> p, t;
  for (const auto& r : rows) {
    p.push_back(r.prediction);
    t.push_back(r.ground_truth);
  }
  const Metrics again = compute_metrics(p, t);
  auto same = [](const std::optional<double>& a, const std::optional<double>& b) {
    return a.has_value() == b.has_value() && (!a || *a == *b);
  };
  if (!same(again.spearman, metrics.spearman) || again.mae != metrics.mae || again.mse != metrics.mse ||
      !same(again.r2, metrics.r2)) {
    throw NumericError("report metrics do not match its per-cell table");
  }
}

EvalReport make_report(std::span<const CellRecord> records, std::span<const double> predictions,
                       std::string model_label, std::string provenance) {
  if (records.empty()) throw DegenerateInputError("evaluate: no records");
  if (records.size() != predictions.size()) {
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(records.size()) + " records");
  }
  EvalReport r;
  r.model_label = std::move(model_label);
  r.provenance = std::move(provenance);
  std::vector<double> targets;
  std::map<int, std::vector<double>> by_day;
  for (std::size_t i = 0; i < records.size(); ++i) {
    r.rows.push_back({records[i].cell_id, records[i].day, records[i].ground_truth, predictions[i]});
    targets.push_back(records[i].ground_truth);
    by_day[records[i].day].push_back(predictions[i]);
  }
  r.metrics = compute_metrics(predictions, targets);
  for (const auto& [day, preds] : by_day) {
    r.histograms[day] = score_histogram(preds);
    double s = 0;
    for (double p : preds) s += p;
    r.mean_prediction[day] = s / static_cast<double>(preds.size());
  }
  r.check_consistency();
  return r;
}

void write_report_csv(const EvalReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "cell_id,day,ground_truth,prediction\n";
  for (const auto& r : report.rows) {
    out << csv_field(r.cell_id) << ',' << r.day << ',' << format_double(r.ground_truth) << ','
        << format_double(r.prediction) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

EvalReport read_report_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t c_id = t.column("cell_id"), c_day = t.column("day"), c_gt = t.column("ground_truth"),
                    c_pred = t.column("prediction");
  for (auto c : {c_id, c_day, c_gt, c_pred}) {
    if (c == std::string::npos) {
      throw ParseError(path.string() + ": expected columns cell_id,day,ground_truth,prediction");
    }
  }
  std::vector<CellRecord> records;
  std::vector<double> preds;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string where = path.string() + " row " + std::to_string(t.line_numbers[i]);
    CellRecord rec;
    rec.cell_id = row[c_id];
    try {
      std::size_t used = 0;
      rec.day = std::stoi(row[c_day], &used);
      if (used != row[c_day].size()) throw std::invalid_argument("day");
      rec.ground_truth = std::stod(row[c_gt]);
      preds.push_back(std::stod(row[c_pred]));
    } catch (const std::exception&) {
      throw ParseError(where + ": malformed number");
    }
    if (!std::isfinite(rec.ground_truth) || !std::isfinite(preds.back())) {
      throw ParseError(where + ": non-finite value");
    }
    records.push_back(std::move(rec));
  }
  return make_report(records, preds, "from-csv", path.filename().string());
}

std::string report_summary(const EvalReport& report) {
  std::ostringstream s;
  s << "model = " << report.model_label << '\n';
  if (!report.provenance.empty()) s << "provenance = " << report.provenance << '\n';
  s << "cells = " << report.rows.size() << '\n';
  s << "spearman = " << format_metric(report.metrics.spearman) << '\n';
  s << "mae = " << format_double(report.metrics.mae) << '\n';
  s << "mse = " << format_double(report.metrics.mse) << '\n';
  s << "r2 = " << format_metric(report.metrics.r2) << '\n';
  std::vector<std::int64_t> days;
  for (const auto& [day, _] : report.histograms) days.push_back(day);
  s << "days = " << join_ints(days) << '\n';
  int best_day = 0;
  double best_mean = -INFINITY;
  for (const auto& [day, hist] : report.histograms) {
    std::size_t n = 0;
    for (auto c : hist) n += c;
    const double m = report.mean_prediction.at(day);
    s << "day" << day << ".cells = " << n << '\n';
    s << "day" << day << ".mean_prediction = " << format_double(m) << '\n';
    s << "day" << day << ".histogram = "
      << join_ints(std::vector<std::int64_t>(hist.begin(), hist.end())) << '\n';
    if (m > best_mean) {
      best_mean = m;
      best_day = day;
    }
  }
  if (report.histograms.size() > 1) s << "higher_mean_day = " << best_day << '\n';
  s << "histogram_bins = 0.5:5.5:0.5\n";
  return s.str();
}

std::vector<fs::path> write_day_histograms(const EvalReport& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<fs::path> out;
  for (const auto& [day, hist] : report.histograms) {
    char mean[32];
    std::snprintf(mean, sizeof mean, "%.2f", report.mean_prediction.at(day));
    const RgbCanvas canvas = render_histogram(hist, "DAY " + std::to_string(day) + " MEAN " + mean);
    const fs::path p = dir / ("hist_day" + std::to_string(day) + ".png");
    canvas.save(p);
    out.push_back(p);
  }
  return out;
}

}  // namespace sarc
