#include "pipeline.hpp"

#include "artifacts.hpp"
#include "lbill/husimi.hpp"
#include "lbill/numerics.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

namespace lbill::pipeline {

namespace {

using io::json;

// ---- configuration ---------------------------------------------------------

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + text + "' is not a number");
  }
}

long long parse_integer(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + text + "' is not an integer");
  }
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const unsigned long long v = std::stoull(text, &used, 0);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
  }
}

GridDims parse_dims(const std::string& key, const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw ConfigError(key + ": expected NQxNP, got '" + text + "'");
  return {static_cast<int>(parse_integer(key, trim(text.substr(0, x)))),
          static_cast<int>(parse_integer(key, trim(text.substr(x + 1))))};
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"lambda",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.lambdas.clear();
         for (const auto& item : split_list(v)) c.lambdas.push_back(parse_real(k, item));
       }},
      {"k_windows",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.windows.clear();
         for (const auto& item : split_list(v)) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) throw ConfigError(k + ": expected lo:hi, got '" + item + "'");
           c.windows.push_back({parse_real(k, trim(item.substr(0, colon))), parse_real(k, trim(item.substr(colon + 1)))});
         }
       }},
      {"grid", [](RunConfig& c, const std::string& k, const std::string& v) { c.grid = parse_dims(k, v); }},
      {"transport_ensemble",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.transport_ensemble = parse_unsigned(k, v); }},
      {"transport_fractions",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.fractions.clear();
         for (const auto& item : split_list(v)) c.fractions.push_back(parse_real(k, item));
       }},
      {"transport_collisions",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.transport_collisions = static_cast<int>(parse_integer(k, v));
       }},
      {"chaotic_collisions",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.chaotic_collisions = parse_integer(k, v); }},
      {"m_threshold", [](RunConfig& c, const std::string& k, const std::string& v) { c.m_threshold = parse_real(k, v); }},
      {"threshold_mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "fixed") c.threshold_mode = ThresholdMode::fixed;
         else if (v == "classical") c.threshold_mode = ThresholdMode::classical;
         else throw ConfigError(k + ": expected fixed or classical, got '" + v + "'");
       }},
      {"a0", [](RunConfig& c, const std::string& k, const std::string& v) { c.a0 = parse_real(k, v); }},
      {"a0_mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "fixed") c.a0_mode = UpperLimit::fixed;
         else if (v == "max_sample") c.a0_mode = UpperLimit::max_sample;
         else throw ConfigError(k + ": expected fixed or max_sample, got '" + v + "'");
       }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_unsigned(k, v); }},
      {"output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"stages",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.stages.clear();
         if (v == "all") return;
         for (const auto& item : split_list(v)) {
           const auto& names = stage_names();
           if (std::find(names.begin(), names.end(), item) == names.end()) {
             throw ConfigError(k + ": unknown stage '" + item + "'");
           }
           c.stages.push_back(item);
         }
       }},
      {"threads",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.threads = static_cast<int>(parse_integer(k, v)); }},
      {"solver",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "scaling") c.solver = SolverMethod::scaling;
         else if (v == "boundary_integral") c.solver = SolverMethod::boundary_integral;
         else throw ConfigError(k + ": expected scaling or boundary_integral, got '" + v + "'");
       }},
      {"samples_per_wavelength",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.samples_per_wavelength = parse_real(k, v); }},
      {"average_group",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.average_group = parse_unsigned(k, v); }},
      {"geometry_points",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.geometry_points = static_cast<int>(parse_integer(k, v));
       }},
      {"histogram_bins",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.histogram_bins = static_cast<int>(parse_integer(k, v));
       }},
  };
  return table;
}

// ---- layout ----------------------------------------------------------------

constexpr const char* kStageIndex = "stage.json";

std::string window_tag(double lambda, std::size_t w) { return "l" + lambda_tag(lambda) + "_w" + std::to_string(w); }

std::uint64_t derived_seed(const RunConfig& c, const std::string& purpose) { return fnv1a(purpose, *c.seed); }

// Collects written files relative to the run directory.
class StageWriter {
 public:
  StageWriter(const RunConfig& config, std::string stage)
      : run_dir_(run_directory(config)), stage_(std::move(stage)) {
    fs::create_directories(run_dir_ / stage_);
  }

  fs::path path(const std::string& name) {
    artifacts_.push_back(stage_ + "/" + name);
    return run_dir_ / stage_ / name;
  }

  // A file written alongside another (a JSON header), recorded for the manifest.
  void also(const std::string& name) { artifacts_.push_back(stage_ + "/" + name); }

  StageRecord finish() {
    std::sort(artifacts_.begin(), artifacts_.end());
    io::write_json(run_dir_ / stage_ / kStageIndex, json{{"stage", stage_}, {"artifacts", artifacts_}});
    return {artifacts_, 0.0};
  }

 private:
  fs::path run_dir_;
  std::string stage_;
  std::vector<std::string> artifacts_;
};

fs::path input(const RunConfig& c, const std::string& stage, const std::string& name) {
  const fs::path p = run_directory(c) / stage / name;
  if (!fs::exists(p)) throw MissingArtifact("missing " + stage + " artifact " + p.string());
  return p;
}

// ---- stages ----------------------------------------------------------------

StageRecord stage_geometry(const RunConfig& c) {
  StageWriter out(c, "geometry");
  json summary = json::array();
  for (double lambda : c.lambdas) {
    const BilliardShape shape(lambda);
    io::CsvWriter csv({"theta", "s", "x", "y", "curvature"});
    for (int i = 0; i < c.geometry_points; ++i) {
      const double theta = 2.0 * std::numbers::pi * i / c.geometry_points;
      const Vec2<double> r = shape.position(theta);
      csv.add(theta).add(shape.arclength(theta)).add(r.x()).add(r.y()).add(shape.curvature(theta));
      csv.end_row();
    }
    csv.save(out.path("boundary_l" + lambda_tag(lambda) + ".csv"));
    summary.push_back({{"lambda", lambda},
                       {"perimeter", shape.perimeter()},
                       {"area", shape.area()},
                       {"symmetry_line_length", shape.symmetry_line_length()}});
  }
  io::write_json(out.path("geometry.json"), summary);
  return out.finish();
}

StageRecord stage_transport(const RunConfig& c) {
  StageWriter out(c, "transport");
  io::CsvWriter table({"lambda", "criterion", "N_T"});
  json summary = json::array();
  TransportOptions options;
  options.threads = c.threads;
  for (double lambda : c.lambdas) {
    const BilliardShape shape(lambda);
    const TransportResult r = transport_time(shape, c.transport_ensemble, c.fractions, c.transport_collisions,
                                             derived_seed(c, "transport:" + lambda_tag(lambda)), options);
    for (const auto& [f, n] : r.n_t_by_criterion) {
      table.add(lambda).add(f).add(n);
      table.end_row();
    }
    io::CsvWriter series({"n", "p2"});
    for (std::size_t n = 0; n < r.second_moment_series.size(); ++n) {
      series.add(n).add(r.second_moment_series[n]);
      series.end_row();
    }
    series.save(out.path("series_l" + lambda_tag(lambda) + ".csv"));
    summary.push_back({{"lambda", lambda},
                       {"asymptote", r.asymptote},
                       {"ensemble", c.transport_ensemble},
                       {"max_collisions", c.transport_collisions}});
  }
  table.save(out.path("transport.csv"));
  io::write_json(out.path("transport.json"), summary);
  return out.finish();
}

StageRecord stage_chaotic_grid(const RunConfig& c) {
  StageWriter out(c, "chaotic-grid");
  for (double lambda : c.lambdas) {
    const BilliardShape shape(lambda);
    const ChaoticGrid grid =
        chaotic_grid(shape, c.chaotic_collisions, c.grid, derived_seed(c, "chaotic-grid:" + lambda_tag(lambda)));
    const std::string name = "grid_l" + lambda_tag(lambda) + ".bin";
    io::save_chaotic_grid(out.path(name), grid);
    out.also(name + ".json");
  }
  return out.finish();
}

StageRecord stage_solve(const RunConfig& c) {
  StageWriter out(c, "solve");
  io::CsvWriter spectrum({"lambda", "window", "k", "parity", "tension"});
  SolveOptions options;
  options.method = c.solver;
  options.samples_per_wavelength = c.samples_per_wavelength;
  options.threads = c.threads;
  for (double lambda : c.lambdas) {
    const BilliardShape shape(lambda);
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      const SpectralWindow window = solve_window(shape, c.windows[w].k_lo, c.windows[w].k_hi, options);
      for (const auto& level : window.levels) {
        spectrum.add(lambda).add(w).add(level.k).add(std::string("even")).add(level.tension);
        spectrum.end_row();
      }
      const std::string name = "boundary_" + window_tag(lambda, w) + ".bin";
      io::save_window(out.path(name), window, static_cast<int>(w));
      out.also(name + ".json");
    }
  }
  spectrum.save(out.path("spectrum.csv"));
  return out.finish();
}

StageRecord stage_husimi(const RunConfig& c) {
  StageWriter out(c, "husimi");
  for (double lambda : c.lambdas) {
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      const SpectralWindow window = io::load_window(input(c, "solve", "boundary_" + window_tag(lambda, w) + ".bin"));
      const std::string name = "husimi_" + window_tag(lambda, w) + ".bin";
      io::HusimiWriter writer(out.path(name));
      for (const auto& level : window.levels) writer.add(husimi_grid(level, c.grid, c.threads));
      writer.finish();
      out.also(name + ".json");
    }
  }
  return out.finish();
}

StageRecord stage_localize(const RunConfig& c) {
  StageWriter out(c, "localize");
  json thresholds = json::array();
  for (double lambda : c.lambdas) {
    const ChaoticGrid grid = io::load_chaotic_grid(input(c, "chaotic-grid", "grid_l" + lambda_tag(lambda) + ".bin"));
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      io::HusimiReader reader(input(c, "husimi", "husimi_" + window_tag(lambda, w) + ".bin"));
      std::vector<LocalizationRecord> records;
      for (std::size_t i = 0; i < reader.size(); ++i) records.push_back(localize(reader.grid(i), grid, c.m_threshold));
      double m_t = c.m_threshold;
      if (c.threshold_mode == ThresholdMode::classical && !records.empty()) {
        std::vector<double> m;
        for (const auto& r : records) m.push_back(r.m);
        m_t = classical_threshold(m, 1.0 - grid.chi_c);
        for (auto& r : records) r.classification = classify(r.m, m_t);
      }
      io::write_jsonl(out.path("localization_" + window_tag(lambda, w) + ".jsonl"), records);
      thresholds.push_back({{"lambda", lambda}, {"window", w}, {"M_t", m_t}, {"chi_c", grid.chi_c}});
    }
  }
  io::write_json(out.path("localize.json"), thresholds);
  return out.finish();
}

std::vector<double> window_levels(const io::CsvTable& spectrum, double lambda, std::size_t w) {
  const auto lc = spectrum.column_index("lambda"), wc = spectrum.column_index("window"), kc = spectrum.column_index("k");
  std::vector<double> ks;
  for (const auto& row : spectrum.rows) {
    if (std::stod(row[lc]) == lambda && std::stoul(row[wc]) == w) ks.push_back(std::stod(row[kc]));
  }
  return ks;
}

json report_json(const FitReport& r) {
  return {{"log_likelihood", r.log_likelihood},
          {"ks_statistic", r.ks_statistic},
          {"ks_pvalue", r.ks_pvalue},
          {"sample_count", r.sample_count}};
}

// Fits that cannot run on the available data are recorded rather than failing the stage.
template <class Fit>
json guarded(Fit&& fit) {
  try {
    json j = fit();
    j["status"] = "ok";
    return j;
  } catch (const InsufficientData& e) {
    return {{"status", "skipped"}, {"reason", e.what()}};
  } catch (const SampleOutOfRange& e) {
    return {{"status", "skipped"}, {"reason", e.what()}};
  }
}

StageRecord stage_spectra_fit(const RunConfig& c) {
  StageWriter out(c, "spectra-fit");
  const io::CsvTable spectrum = io::read_csv(input(c, "solve", "spectrum.csv"));
  json fits = json::array();
  for (double lambda : c.lambdas) {
    const BilliardShape shape(lambda);
    const json grid_header = io::read_json(input(c, "chaotic-grid", "grid_l" + lambda_tag(lambda) + ".bin.json"));
    const double rho1_classical = 1.0 - grid_header.at("chi_c").get<double>();
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      const std::string tag = window_tag(lambda, w);
      const UnfoldedSpectrum unfolded = unfold_levels(window_levels(spectrum, lambda, w), shape);
      io::write_column(out.path("spacings_" + tag + ".csv"), unfolded.spacings);

      const auto records = io::read_jsonl(input(c, "localize", "localization_" + tag + ".jsonl"));
      const auto regular = std::count_if(records.begin(), records.end(),
                                         [](const auto& r) { return r.classification == StateClass::regular; });
      const double rho1_quantum = records.empty() ? 0.0 : static_cast<double>(regular) / records.size();

      std::optional<BrodyFit> brody;
      std::optional<BRBFit> brb;
      json entry = {{"lambda", lambda},
                    {"window", w},
                    {"k0", c.windows[w].center()},
                    {"spacing_count", unfolded.spacings.size()},
                    {"rho1_classical", rho1_classical},
                    {"rho1_quantum", rho1_quantum}};
      entry["brody"] = guarded([&] {
        brody = fit_brody(unfolded.spacings);
        return json{{"beta", brody->model.beta}, {"report", report_json(brody->report)}};
      });
      entry["brb_classical"] = guarded([&] {
        brb = fit_brb(unfolded.spacings, rho1_classical);
        return json{{"rho1", brb->model.rho1}, {"beta", brb->model.beta}, {"report", report_json(brb->report)}};
      });
      entry["brb_quantum"] = guarded([&] {
        const BRBFit f = fit_brb(unfolded.spacings, rho1_quantum);
        return json{{"rho1", f.model.rho1}, {"beta", f.model.beta}, {"report", report_json(f.report)}};
      });
      entry["brb_free"] = guarded([&] {
        const BRBFit f = fit_brb(unfolded.spacings);
        return json{{"rho1", f.model.rho1}, {"beta", f.model.beta}, {"report", report_json(f.report)}};
      });
      fits.push_back(entry);

      // Curve table: model densities against the spacing histogram.
      constexpr double s_max = 4.0;
      constexpr int bins = 40;
      std::vector<int> counts(bins, 0);
      for (double s : unfolded.spacings) {
        if (s < s_max) ++counts[static_cast<int>(s / s_max * bins)];
      }
      io::CsvWriter curve({"S", "P_brody", "P_brb", "P_empirical"});
      const double width = s_max / bins;
      for (int b = 0; b < bins; ++b) {
        const double s = (b + 0.5) * width;
        const double n = static_cast<double>(std::max<std::size_t>(1, unfolded.spacings.size()));
        curve.add(s)
            .add(brody ? brody_P(s, brody->model.beta) : 0.0)
            .add(brb ? brb_P(s, brb->model.rho1, brb->model.beta) : 0.0)
            .add(counts[b] / (n * width));
        curve.end_row();
      }
      curve.save(out.path("curve_" + tag + ".csv"));
    }
  }
  io::write_json(out.path("spectra_fit.json"), fits);
  return out.finish();
}

StageRecord stage_beta_fit(const RunConfig& c) {
  StageWriter out(c, "beta-fit");
  json fits = json::array();
  for (double lambda : c.lambdas) {
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      const std::string tag = window_tag(lambda, w);
      const auto records = io::read_jsonl(input(c, "localize", "localization_" + tag + ".jsonl"));
      std::vector<double> samples;
      for (const auto& r : records) {
        if (r.classification == StateClass::chaotic) samples.push_back(r.a_normalized);
      }
      io::write_column(out.path("samples_" + tag + ".csv"), samples);
      std::optional<BetaFit> fit;
      json entry = {{"lambda", lambda}, {"window", w}, {"k0", c.windows[w].center()}};
      entry["beta_distribution"] = guarded([&] {
        fit = fit_beta_dist(samples, c.a0, c.a0_mode);
        const BetaMoments& m = fit->moments;
        return json{{"a", fit->model.a},
                    {"b", fit->model.b},
                    {"A0", fit->model.a0},
                    {"moments",
                     {{"mean", m.mean},
                      {"second_moment", m.second_moment},
                      {"sigma", m.sigma},
                      {"closed_mean", m.closed_mean},
                      {"closed_second_moment", m.closed_second_moment},
                      {"closed_sigma", m.closed_sigma},
                      {"shifted_mean", m.shifted_mean},
                      {"shifted_second_moment", m.shifted_second_moment},
                      {"shifted_sigma", m.shifted_sigma}}},
                    {"report", report_json(fit->report)}};
      });
      fits.push_back(entry);

      const double upper = fit ? fit->model.a0 : c.a0;
      io::CsvWriter hist({"bin_lo", "bin_hi", "P_empirical", "P_beta"});
      std::vector<int> counts(c.histogram_bins, 0);
      for (double a : samples) {
        const int b = static_cast<int>(a / upper * c.histogram_bins);
        if (a >= 0.0 && b < c.histogram_bins) ++counts[b];
      }
      const double width = upper / c.histogram_bins;
      for (int b = 0; b < c.histogram_bins; ++b) {
        const double n = static_cast<double>(std::max<std::size_t>(1, samples.size()));
        const double lo = b * width, hi = (b + 1) * width;
        hist.add(lo).add(hi).add(counts[b] / (n * width)).add(fit ? fit->model.density(0.5 * (lo + hi)) : 0.0);
        hist.end_row();
      }
      hist.save(out.path("histogram_" + tag + ".csv"));
    }
  }
  io::write_json(out.path("beta_fit.json"), fits);
  return out.finish();
}

json rational_json(std::span<const RationalPoint> points) {
  return guarded([&] {
    try {
      const RationalFit f = fit_rational(points);
      return json{{"asymptote", f.asymptote}, {"s", f.s}, {"residual_sum_squares", f.residual_sum_squares},
                  {"points", points.size()}};
    } catch (const DegenerateFit& e) {
      return json{{"degenerate", e.what()}, {"points", points.size()}};
    }
  });
}

StageRecord stage_report(const RunConfig& c) {
  StageWriter out(c, "report");
  const fs::path run_dir = run_directory(c);

  // Transport-time table and α per window.
  const io::CsvTable transport = io::read_csv(input(c, "transport", "transport.csv"));
  io::CsvWriter table({"lambda", "criterion", "N_T"});
  for (const auto& row : transport.rows) {
    table.add(row[0]).add(row[1]).add(row[2]);
    table.end_row();
  }
  table.save(out.path("transport_table.csv"));

  const json spectra_fits = io::read_json(input(c, "spectra-fit", "spectra_fit.json"));
  io::CsvWriter nipr_a({"lambda", "group", "mean_A", "mean_nIPR"});
  json nipr_fits = json::array();
  io::CsvWriter a_alpha({"lambda", "window", "k0", "criterion", "alpha", "mean_A", "mean_A_normalized",
                       "sigma_A_normalized", "chaotic_count"});
  io::CsvWriter beta_a({"lambda", "window", "k0", "beta_brb", "beta_brody", "mean_A_normalized"});
  io::CsvWriter beta_alpha({"lambda", "window", "k0", "criterion", "alpha", "beta_brb"});
  std::map<double, std::vector<RationalPoint>> a_vs_alpha, beta_vs_alpha;
  std::vector<double> all_a, all_nipr;

  for (double lambda : c.lambdas) {
    const BilliardShape shape(lambda);
    const std::map<double, int> n_t = read_transport_row(run_dir, lambda);
    std::vector<LocalizationRecord> pooled;
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      const std::string tag = window_tag(lambda, w);
      const auto records = io::read_jsonl(input(c, "localize", "localization_" + tag + ".jsonl"));
      pooled.insert(pooled.end(), records.begin(), records.end());
      std::vector<double> a, a_norm;
      for (const auto& r : records) {
        if (r.classification != StateClass::chaotic) continue;
        a.push_back(r.a);
        a_norm.push_back(r.a_normalized);
      }
      const double mean_a = a.empty() ? 0.0 : mean(a);
      const double mean_an = a_norm.empty() ? 0.0 : mean(a_norm);
      double var = 0.0;
      for (double x : a_norm) var += (x - mean_an) * (x - mean_an);
      const double sigma = a_norm.size() > 1 ? std::sqrt(var / (a_norm.size() - 1)) : 0.0;

      double beta_brb = -1.0, beta_brody = -1.0;
      for (const auto& e : spectra_fits) {
        if (e.at("lambda").get<double>() != lambda || e.at("window").get<std::size_t>() != w) continue;
        if (e.at("brb_classical").at("status") == "ok") beta_brb = e.at("brb_classical").at("beta").get<double>();
        if (e.at("brody").at("status") == "ok") beta_brody = e.at("brody").at("beta").get<double>();
      }
      const double k0 = c.windows[w].center();
      beta_a.add(lambda).add(w).add(k0).add(beta_brb).add(beta_brody).add(mean_an);
      beta_a.end_row();
      for (const auto& [f, n] : n_t) {
        const double al = alpha(shape, k0, n);
        a_alpha.add(lambda).add(w).add(k0).add(f).add(al).add(mean_a).add(mean_an).add(sigma).add(a.size());
        a_alpha.end_row();
        beta_alpha.add(lambda).add(w).add(k0).add(f).add(al).add(beta_brb);
        beta_alpha.end_row();
        if (!a_norm.empty()) a_vs_alpha[f].push_back({al, mean_an});
        if (beta_brb >= 0.0) beta_vs_alpha[f].push_back({al, beta_brb});
      }
    }
    std::sort(pooled.begin(), pooled.end(), [](const auto& x, const auto& y) { return x.k < y.k; });
    const std::vector<MeasurePair> groups = window_averages(pooled, c.average_group);
    std::vector<double> ga, gn;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      nipr_a.add(lambda).add(g).add(groups[g].a).add(groups[g].nipr);
      nipr_a.end_row();
      ga.push_back(groups[g].a);
      gn.push_back(groups[g].nipr);
    }
    all_a.insert(all_a.end(), ga.begin(), ga.end());
    all_nipr.insert(all_nipr.end(), gn.begin(), gn.end());
    json entry = {{"lambda", lambda}, {"points", ga.size()}};
    if (ga.size() >= 3) {
      const LineFit line = linear_fit(ga, gn);
      entry["slope"] = line.slope;
      entry["intercept"] = line.intercept;
      entry["pearson"] = pearson(ga, gn);
    }
    nipr_fits.push_back(entry);
  }
  json pooled_fit = {{"lambda", "all"}, {"points", all_a.size()}};
  if (all_a.size() >= 3) {
    const LineFit line = linear_fit(all_a, all_nipr);
    pooled_fit["slope"] = line.slope;
    pooled_fit["intercept"] = line.intercept;
    pooled_fit["pearson"] = pearson(all_a, all_nipr);
  }
  nipr_fits.push_back(pooled_fit);

  nipr_a.save(out.path("nipr_vs_a.csv"));
  io::write_json(out.path("nipr_vs_a_fit.json"), nipr_fits);
  a_alpha.save(out.path("a_vs_alpha.csv"));
  beta_a.save(out.path("beta_vs_a.csv"));
  beta_alpha.save(out.path("beta_vs_alpha.csv"));

  json a_alpha_fit = json::array(), beta_alpha_fit = json::array();
  for (const auto& [f, points] : a_vs_alpha) a_alpha_fit.push_back({{"criterion", f}, {"fit", rational_json(points)}});
  for (const auto& [f, points] : beta_vs_alpha) beta_alpha_fit.push_back({{"criterion", f}, {"fit", rational_json(points)}});
  io::write_json(out.path("a_vs_alpha_fit.json"), a_alpha_fit);
  io::write_json(out.path("beta_vs_alpha_fit.json"), beta_alpha_fit);

  // Histograms with beta-distribution fits, one table for all windows.
  io::CsvWriter hist({"lambda", "window", "bin_lo", "bin_hi", "P_empirical", "P_beta"});
  for (double lambda : c.lambdas) {
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      const io::CsvTable h = io::read_csv(input(c, "beta-fit", "histogram_" + window_tag(lambda, w) + ".csv"));
      for (const auto& row : h.rows) {
        hist.add(lambda).add(w).add(row[0]).add(row[1]).add(row[2]).add(row[3]);
        hist.end_row();
      }
    }
  }
  hist.save(out.path("a_histograms.csv"));
  io::write_json(out.path("beta_fits.json"), io::read_json(input(c, "beta-fit", "beta_fit.json")));
  return out.finish();
}

using StageFn = StageRecord (*)(const RunConfig&);

const std::map<std::string, StageFn>& stage_table() {
  static const std::map<std::string, StageFn> table = {
      {"geometry", stage_geometry},   {"transport", stage_transport},     {"chaotic-grid", stage_chaotic_grid},
      {"solve", stage_solve},         {"husimi", stage_husimi},           {"localize", stage_localize},
      {"spectra-fit", stage_spectra_fit}, {"beta-fit", stage_beta_fit}, {"report", stage_report},
  };
  return table;
}

json manifest_json(const RunManifest& m) {
  json stages = json::object();
  for (const auto& [name, rec] : m.stages) stages[name] = {{"artifacts", rec.artifacts}, {"seconds", rec.seconds}};
  return {{"config_hash", m.config_hash}, {"version", m.version}, {"stages", stages}};
}

}  // namespace

std::string lambda_tag(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", lambda);
  return buf;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"geometry", "transport", "chaotic-grid", "solve",  "husimi",
                                                 "localize", "spectra-fit", "beta-fit",    "report"};
  return names;
}

const std::vector<std::string>& stage_inputs(const std::string& stage) {
  static const std::map<std::string, std::vector<std::string>> inputs = {
      {"geometry", {}},
      {"transport", {}},
      {"chaotic-grid", {}},
      {"solve", {}},
      {"husimi", {"solve"}},
      {"localize", {"husimi", "chaotic-grid"}},
      {"spectra-fit", {"solve", "chaotic-grid", "localize"}},
      {"beta-fit", {"localize"}},
      {"report", {"transport", "localize", "spectra-fit", "beta-fit"}},
  };
  const auto it = inputs.find(stage);
  if (it == inputs.end()) throw ConfigError("unknown stage '" + stage + "'");
  return it->second;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty value for '" + key + "'");
    it->second(config, key, value);
  }
  return config;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const MissingArtifact&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text);
}

void validate(const RunConfig& c) {
  if (c.lambdas.empty()) throw ConfigError("lambda: at least one value required");
  for (double l : c.lambdas) {
    if (!(l >= 0.0 && l < 0.5)) throw ConfigError("lambda: values must lie in [0, 0.5)");
  }
  for (const auto& w : c.windows) {
    if (!(w.k_lo >= 20.0 && w.k_hi > w.k_lo)) throw ConfigError("k_windows: need 20 <= lo < hi");
  }
  if (c.grid.n_q < 2 || c.grid.n_p < 2) throw ConfigError("grid: both dimensions must be >= 2");
  if (c.transport_ensemble < kMinTransportEnsemble) {
    throw ConfigError("transport_ensemble: must be >= " + std::to_string(kMinTransportEnsemble));
  }
  if (c.fractions.empty()) throw ConfigError("transport_fractions: at least one value required");
  for (double f : c.fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("transport_fractions: values must lie in (0, 1)");
  }
  if (c.transport_collisions < 10) throw ConfigError("transport_collisions: must be >= 10");
  if (c.chaotic_collisions < 1000) throw ConfigError("chaotic_collisions: must be >= 1000");
  if (!(c.m_threshold >= -1.0 && c.m_threshold <= 1.0)) throw ConfigError("m_threshold: must lie in [-1, 1]");
  if (!(c.a0 > 0.0)) throw ConfigError("a0: must be positive");
  if (!c.seed) throw ConfigError("seed: required (config key or --seed)");
  if (c.output_dir.empty()) throw ConfigError("output_dir: required (config key or --out)");
  if (c.threads < 1) throw ConfigError("threads: must be >= 1");
  if (!(c.samples_per_wavelength >= 6.0)) throw ConfigError("samples_per_wavelength: must be >= 6");
  if (c.average_group < 1) throw ConfigError("average_group: must be >= 1");
  if (c.geometry_points < 8) throw ConfigError("geometry_points: must be >= 8");
  if (c.histogram_bins < 2) throw ConfigError("histogram_bins: must be >= 2");
}

std::string canonical_config(const RunConfig& c) {
  std::string s;
  auto add = [&](const std::string& key, const std::string& value) { s += key + "=" + value + "\n"; };
  std::string list;
  for (double l : c.lambdas) list += io::format_real(l) + ",";
  add("lambda", list);
  list.clear();
  for (const auto& w : c.windows) list += io::format_real(w.k_lo) + ":" + io::format_real(w.k_hi) + ",";
  add("k_windows", list);
  add("grid", std::to_string(c.grid.n_q) + "x" + std::to_string(c.grid.n_p));
  add("transport_ensemble", std::to_string(c.transport_ensemble));
  list.clear();
  for (double f : c.fractions) list += io::format_real(f) + ",";
  add("transport_fractions", list);
  add("transport_collisions", std::to_string(c.transport_collisions));
  add("chaotic_collisions", std::to_string(c.chaotic_collisions));
  add("m_threshold", io::format_real(c.m_threshold));
  add("threshold_mode", c.threshold_mode == ThresholdMode::fixed ? "fixed" : "classical");
  add("a0", io::format_real(c.a0));
  add("a0_mode", c.a0_mode == UpperLimit::fixed ? "fixed" : "max_sample");
  add("seed", c.seed ? std::to_string(*c.seed) : "unset");
  add("solver", c.solver == SolverMethod::scaling ? "scaling" : "boundary_integral");
  add("samples_per_wavelength", io::format_real(c.samples_per_wavelength));
  add("average_group", std::to_string(c.average_group));
  add("geometry_points", std::to_string(c.geometry_points));
  add("histogram_bins", std::to_string(c.histogram_bins));
  return s;
}

std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_config(c))));
  return buf;
}

fs::path run_directory(const RunConfig& c) { return c.output_dir / config_hash(c); }

StageRecord run_stage(const RunConfig& config, const std::string& stage) {
  const auto it = stage_table().find(stage);
  if (it == stage_table().end()) throw ConfigError("unknown stage '" + stage + "'");
  validate(config);
  for (const auto& upstream : stage_inputs(stage)) {
    if (!fs::exists(run_directory(config) / upstream / kStageIndex)) {
      throw MissingArtifact("stage '" + stage + "' needs artifacts of '" + upstream + "' in " +
                            run_directory(config).string());
    }
  }
  const auto start = std::chrono::steady_clock::now();
  StageRecord record;
  try {
    record = it->second(config);
  } catch (const MissingArtifact&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const NumericalError& e) {
    throw StageFailed(stage, e.what(), true);
  } catch (const std::exception& e) {
    throw StageFailed(stage, e.what(), false);
  }
  record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

RunManifest run(const RunConfig& config, const std::optional<std::string>& only) {
  validate(config);
  std::vector<std::string> selected;
  if (only) {
    if (!stage_table().count(*only)) throw ConfigError("unknown stage '" + *only + "'");
    selected.push_back(*only);
  } else {
    for (const auto& name : stage_names()) {
      if (config.stages.empty() || std::find(config.stages.begin(), config.stages.end(), name) != config.stages.end()) {
        selected.push_back(name);
      }
    }
  }
  // Every input must come from an earlier selected stage or an earlier run.
  const fs::path dir = run_directory(config);
  for (std::size_t i = 0; i < selected.size(); ++i) {
    for (const auto& upstream : stage_inputs(selected[i])) {
      const bool produced = std::find(selected.begin(), selected.begin() + static_cast<std::ptrdiff_t>(i), upstream) !=
                            selected.begin() + static_cast<std::ptrdiff_t>(i);
      if (!produced && !fs::exists(dir / upstream / kStageIndex)) {
        throw MissingArtifact("stage '" + selected[i] + "' needs '" + upstream +
                              "', which is neither enabled nor present in " + dir.string());
      }
    }
  }

  RunManifest manifest;
  const fs::path manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    const json old = io::read_json(manifest_path);
    for (const auto& [name, rec] : old.at("stages").items()) {
      manifest.stages[name] = {rec.at("artifacts").get<std::vector<std::string>>(), rec.at("seconds").get<double>()};
    }
  }
  manifest.config_hash = config_hash(config);
  manifest.version = LBILL_VERSION;
  fs::create_directories(dir);
  io::write_text(dir / "config.txt", canonical_config(config));
  for (const auto& stage : selected) {
    manifest.stages[stage] = run_stage(config, stage);
    io::write_json(manifest_path, manifest_json(manifest));
  }
  return manifest;
}

std::map<double, int> read_transport_row(const fs::path& run_dir, double lambda) {
  const io::CsvTable t = io::read_csv(run_dir / "transport" / "transport.csv");
  std::map<double, int> out;
  for (const auto& row : t.rows) {
    if (std::stod(row[0]) == lambda) out[std::stod(row[1])] = std::stoi(row[2]);
  }
  if (out.empty()) throw MissingArtifact("no transport rows for lambda " + lambda_tag(lambda));
  return out;
}

}  // namespace lbill::pipeline
