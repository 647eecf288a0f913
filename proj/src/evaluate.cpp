// SPDX-License-Identifier: Apache-2.0
#include "upgan/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace upgan {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// JSON has no infinities or NaN; they travel as strings.
ojson number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double from_number(const ojson& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return kNaN;
  }
  return j.get<double>();
}

ojson numbers(const std::vector<double>& v) {
  ojson out = ojson::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

std::vector<double> from_numbers(const ojson& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(from_number(x));
  return out;
}

ojson summary_json(const metrics::Summary& s) { return {{"mean", number(s.mean)}, {"std", number(s.std)}}; }

metrics::Summary summary_from(const ojson& j) { return {from_number(j.at("mean")), from_number(j.at("std"))}; }

std::string csv_number(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

double diff(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return 0.0;
  if (std::isinf(a) && a == b) return 0.0;
  return std::abs(a - b);
}

}  // namespace

EvalReport evaluate(const Cascade& model, const Dataset& data, Split split) {
  EvalReport report;
  report.split = split_name(split);
  report.phases = model.phases();
  report.max_i = data.manifest.intensity_range;
  report.seed = data.manifest.seed;
  const auto pool = data.select(split);
  if (pool.empty()) throw DataError(std::string("split '") + split_name(split) + "' has no samples");
  const metrics::SsimOptions ssim_opts{.data_range = report.max_i};
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const PairedSample& s = *pool[i];
    const CascadeState state = upgan_forward(s.input_a, model);
    const Image target = denormalize(s.target_b, s.b_range);
    const double scale = 0.5 * (s.b_range.hi - s.b_range.lo);
    ImageRow row;
    row.index = static_cast<int>(i);
    row.subject = s.subject_id;
    row.slice = s.slice_index;
    for (const auto& phase : state.phases) {
      const Image pred = denormalize(phase.prediction.mean, s.b_range);
      Image residual(pred.height, pred.width);
      double sigma_sum = 0.0;
      for (std::size_t p = 0; p < pred.size(); ++p) {
        residual.pixels[p] = pred.pixels[p] - target.pixels[p];
        sigma_sum += phase.sigma.pixels[p] * scale;
      }
      row.phase_mae.push_back(metrics::mae(pred, target));
      row.phase_uncertainty.push_back(sigma_sum / static_cast<double>(pred.size()));
      row.phase_correlation.push_back(metrics::uncertainty_error_correlation(phase.sigma, residual).value_or(kNaN));
    }
    const Image final_pred = denormalize(state.phases.back().prediction.mean, s.b_range);
    row.psnr = metrics::psnr(final_pred, target, report.max_i);
    row.ssim = metrics::ssim(final_pred, target, ssim_opts);
    row.mae = metrics::mae(final_pred, target);
    report.rows.push_back(std::move(row));
  }
  aggregate(report);
  return report;
}

void aggregate(EvalReport& report) {
  std::vector<double> psnr, ssim, mae;
  for (const auto& r : report.rows) {
    psnr.push_back(r.psnr);
    ssim.push_back(r.ssim);
    mae.push_back(r.mae);
  }
  report.psnr = metrics::summarize(psnr);
  report.ssim = metrics::summarize(ssim);
  report.mae = metrics::summarize(mae);
  report.mean_residual.assign(report.phases, 0.0);
  report.mean_uncertainty.assign(report.phases, 0.0);
  report.mean_correlation.assign(report.phases, kNaN);
  for (int m = 0; m < report.phases; ++m) {
    std::vector<double> res, unc, corr;
    for (const auto& r : report.rows) {
      res.push_back(r.phase_mae.at(m));
      unc.push_back(r.phase_uncertainty.at(m));
      if (!std::isnan(r.phase_correlation.at(m))) corr.push_back(r.phase_correlation[m]);
    }
    report.mean_residual[m] = metrics::summarize(res).mean;
    report.mean_uncertainty[m] = metrics::summarize(unc).mean;
    if (!corr.empty()) report.mean_correlation[m] = metrics::summarize(corr).mean;
  }
}

double self_consistency_error(const EvalReport& report) {
  EvalReport fresh = report;
  aggregate(fresh);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, diff(a, b)); };
  track(report.psnr.mean, fresh.psnr.mean);
  track(report.psnr.std, fresh.psnr.std);
  track(report.ssim.mean, fresh.ssim.mean);
  track(report.ssim.std, fresh.ssim.std);
  track(report.mae.mean, fresh.mae.mean);
  track(report.mae.std, fresh.mae.std);
  if (report.mean_residual.size() != fresh.mean_residual.size() ||
      report.mean_uncertainty.size() != fresh.mean_uncertainty.size() ||
      report.mean_correlation.size() != fresh.mean_correlation.size()) {
    return std::numeric_limits<double>::infinity();
  }
  for (std::size_t m = 0; m < fresh.mean_residual.size(); ++m) {
    track(report.mean_residual[m], fresh.mean_residual[m]);
    track(report.mean_uncertainty[m], fresh.mean_uncertainty[m]);
    track(report.mean_correlation[m], fresh.mean_correlation[m]);
  }
  return worst;
}

std::vector<Comparison> compare(const EvalReport& base, const EvalReport& other) {
  if (base.rows.size() != other.rows.size()) throw std::invalid_argument("compare: reports cover different images");
  for (std::size_t i = 0; i < base.rows.size(); ++i) {
    if (base.rows[i].subject != other.rows[i].subject || base.rows[i].slice != other.rows[i].slice) {
      throw std::invalid_argument("compare: reports are not paired image by image");
    }
  }
  std::vector<Comparison> out;
  auto run = [&](const char* metric, double ImageRow::*field) {
    std::vector<double> a, b;
    for (const auto& r : base.rows) a.push_back(r.*field);
    for (const auto& r : other.rows) b.push_back(r.*field);
    const auto w = metrics::wilcoxon_signed_rank(a, b);
    out.push_back({base.label + " vs " + other.label, metric, w.p_value, w.statistic, w.n_used, w.exact});
  };
  run("ssim", &ImageRow::ssim);
  run("psnr", &ImageRow::psnr);
  run("mae", &ImageRow::mae);
  return out;
}

ojson report_to_json(const EvalReport& report) {
  ojson rows = ojson::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"index", r.index},
                    {"subject", r.subject},
                    {"slice", r.slice},
                    {"psnr", number(r.psnr)},
                    {"ssim", number(r.ssim)},
                    {"mae", number(r.mae)},
                    {"phase_mae", numbers(r.phase_mae)},
                    {"phase_uncertainty", numbers(r.phase_uncertainty)},
                    {"phase_correlation", numbers(r.phase_correlation)}});
  }
  ojson comparisons = ojson::array();
  for (const auto& c : report.comparisons) {
    comparisons.push_back({{"label", c.label},
                           {"metric", c.metric},
                           {"p_value", number(c.p_value)},
                           {"statistic", number(c.statistic)},
                           {"n_used", c.n_used},
                           {"exact", c.exact}});
  }
  const double err = self_consistency_error(report);
  return {{"schema", "upgan.eval"},
          {"schema_version", 1},
          {"label", report.label},
          {"config_hash", report.config_hash},
          {"seed", report.seed},
          {"split", report.split},
          {"phases", report.phases},
          {"max_i", report.max_i},
          {"aggregate",
           {{"psnr", summary_json(report.psnr)},
            {"ssim", summary_json(report.ssim)},
            {"mae", summary_json(report.mae)},
            {"mean_residual", numbers(report.mean_residual)},
            {"mean_uncertainty", numbers(report.mean_uncertainty)},
            {"mean_correlation", numbers(report.mean_correlation)}}},
          {"comparisons", comparisons},
          {"self_consistency", {{"max_abs_diff", number(err)}, {"ok", err <= 1e-12}}},
          {"rows", rows}};
}

EvalReport report_from_json(const ojson& doc) {
  EvalReport r;
  r.label = doc.at("label").get<std::string>();
  r.config_hash = doc.at("config_hash").get<std::string>();
  r.seed = doc.at("seed").get<std::uint64_t>();
  r.split = doc.at("split").get<std::string>();
  r.phases = doc.at("phases").get<int>();
  r.max_i = doc.at("max_i").get<double>();
  const auto& a = doc.at("aggregate");
  r.psnr = summary_from(a.at("psnr"));
  r.ssim = summary_from(a.at("ssim"));
  r.mae = summary_from(a.at("mae"));
  r.mean_residual = from_numbers(a.at("mean_residual"));
  r.mean_uncertainty = from_numbers(a.at("mean_uncertainty"));
  r.mean_correlation = from_numbers(a.at("mean_correlation"));
  for (const auto& c : doc.at("comparisons")) {
    r.comparisons.push_back({c.at("label").get<std::string>(), c.at("metric").get<std::string>(),
                             from_number(c.at("p_value")), from_number(c.at("statistic")), c.at("n_used").get<int>(),
                             c.at("exact").get<bool>()});
  }
  for (const auto& j : doc.at("rows")) {
    ImageRow row;
    row.index = j.at("index").get<int>();
    row.subject = j.at("subject").get<std::string>();
    row.slice = j.at("slice").get<int>();
    row.psnr = from_number(j.at("psnr"));
    row.ssim = from_number(j.at("ssim"));
    row.mae = from_number(j.at("mae"));
    row.phase_mae = from_numbers(j.at("phase_mae"));
    row.phase_uncertainty = from_numbers(j.at("phase_uncertainty"));
    row.phase_correlation = from_numbers(j.at("phase_correlation"));
    r.rows.push_back(std::move(row));
  }
  return r;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "index,subject,slice,psnr,ssim,mae";
  for (int m = 0; m < report.phases; ++m) {
    out << ",mae_phase" << m << ",uncertainty_phase" << m << ",correlation_phase" << m;
  }
  out << '\n';
  for (const auto& r : report.rows) {
    out << r.index << ',' << r.subject << ',' << r.slice << ',' << csv_number(r.psnr) << ',' << csv_number(r.ssim)
        << ',' << csv_number(r.mae);
    for (int m = 0; m < report.phases; ++m) {
      out << ',' << csv_number(r.phase_mae[m]) << ',' << csv_number(r.phase_uncertainty[m]) << ','
          << csv_number(r.phase_correlation[m]);
    }
    out << '\n';
  }
  return out.str();
}

Image phase_panel(const CascadeState& state, const PairedSample& sample, int gap) {
  const int h = sample.target_b.height;
  const int w = sample.target_b.width;
  const int phases = static_cast<int>(state.phases.size());
  constexpr int kCols = 5;
  // Tiles are stored in display units [0, 1]; the panel background is 0.
  Image panel((phases + 1) * h + phases * gap, kCols * w + (kCols - 1) * gap, 0.0);
  auto blit = [&](const Image& tile, int row, int col, double lo, double hi) {
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        panel(row * (h + gap) + y, col * (w + gap) + x) = std::clamp((tile(y, x) - lo) / span, 0.0, 1.0);
      }
    }
  };
  auto max_of = [&](auto get) {
    double v = 1e-12;
    for (const auto& p : state.phases) {
      const Image& img = get(p);
      v = std::max(v, *std::max_element(img.pixels.begin(), img.pixels.end()));
    }
    return v;
  };
  std::vector<Image> residuals;
  for (const auto& p : state.phases) {
    Image r(h, w);
    for (std::size_t i = 0; i < r.size(); ++i) r.pixels[i] = std::abs(p.prediction.mean.pixels[i] - sample.target_b.pixels[i]);
    residuals.push_back(std::move(r));
  }
  double res_max = 1e-12;
  for (const auto& r : residuals) res_max = std::max(res_max, *std::max_element(r.pixels.begin(), r.pixels.end()));
  const double alpha_max = max_of([](const PhaseOutput& p) -> const Image& { return p.prediction.alpha; });
  const double beta_max = max_of([](const PhaseOutput& p) -> const Image& { return p.prediction.beta; });
  const double sigma_max = max_of([](const PhaseOutput& p) -> const Image& { return p.sigma; });

  blit(sample.input_a, 0, 0, -1.0, 1.0);
  blit(sample.target_b, 0, 1, -1.0, 1.0);
  for (int m = 0; m < phases; ++m) {
    const auto& p = state.phases[m];
    blit(p.prediction.mean, m + 1, 0, -1.0, 1.0);
    blit(residuals[m], m + 1, 1, 0.0, res_max);
    blit(p.prediction.alpha, m + 1, 2, 0.0, alpha_max);
    blit(p.prediction.beta, m + 1, 3, 0.0, beta_max);
    blit(p.sigma, m + 1, 4, 0.0, sigma_max);
  }
  return panel;
}

Image plot_curves(const std::vector<Curve>& curves, int width, int height) {
  Image img(height, width, 1.0);
  const int margin = 24;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      if (!std::isfinite(c.x[i]) || !std::isfinite(c.y[i])) continue;
      x0 = std::min(x0, c.x[i]);
      x1 = std::max(x1, c.x[i]);
      y0 = std::min(y0, c.y[i]);
      y1 = std::max(y1, c.y[i]);
    }
  }
  if (!std::isfinite(x0)) return img;
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); };
  auto dot = [&](int y, int x, double shade) {
    if (y >= 0 && y < height && x >= 0 && x < width) img(y, x) = shade;
  };
  for (int x = margin; x < width - margin; ++x) dot(height - margin, x, 0.0);
  for (int y = margin; y <= height - margin; ++y) dot(y, margin, 0.0);
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = curves[k];
    const double shade = curves.size() > 1 ? 0.6 * static_cast<double>(k) / (curves.size() - 1) : 0.0;
    for (std::size_t i = 0; i + 1 < c.x.size(); ++i) {
      const double ax = px(c.x[i]), ay = py(c.y[i]), bx = px(c.x[i + 1]), by = py(c.y[i + 1]);
      if (!std::isfinite(ay) || !std::isfinite(by)) continue;
      const int n = static_cast<int>(std::max(std::abs(bx - ax), std::abs(by - ay))) + 1;
      for (int t = 0; t <= n; ++t) {
        const double f = static_cast<double>(t) / n;
        dot(static_cast<int>(std::lround(ay + f * (by - ay))), static_cast<int>(std::lround(ax + f * (bx - ax))), shade);
      }
    }
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      if (!std::isfinite(c.y[i])) continue;
      const int cx = static_cast<int>(std::lround(px(c.x[i])));
      const int cy = static_cast<int>(std::lround(py(c.y[i])));
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) dot(cy + dy, cx + dx, shade);
      }
    }
  }
  return img;
}

}  // namespace upgan
