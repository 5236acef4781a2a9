#include "kamir/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "internal_util.hpp"

namespace kamir {

namespace fs = std::filesystem;

std::vector<GroupProfile> group_profiles(std::span<const GroupedVector> vectors) {
  if (vectors.empty()) throw DataError("group_profiles: no vectors");
  const std::size_t k = vectors.front().values.size();
  std::vector<GroupProfile> out;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> sums, sq_sums;
  for (const auto& v : vectors) {
    if (v.values.size() != k) throw DataError("group_profiles: inconsistent vector lengths");
    auto it = index.find(v.group);
    if (it == index.end()) {
      it = index.emplace(v.group, out.size()).first;
      out.push_back(GroupProfile{v.group, std::vector<double>(k, 0.0),
                                 std::vector<double>(k, 0.0), 0});
      sums.emplace_back(k, 0.0);
      sq_sums.emplace_back(k, 0.0);
    }
    const std::size_t g = it->second;
    out[g].count += 1;
    for (std::size_t j = 0; j < k; ++j) {
      sums[g][j] += v.values[j];
      sq_sums[g][j] += static_cast<double>(v.values[j]) * v.values[j];
    }
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const double n = static_cast<double>(out[g].count);
    for (std::size_t j = 0; j < k; ++j) {
      const double mean = sums[g][j] / n;
      out[g].mean[j] = mean;
      const double var = std::max(0.0, sq_sums[g][j] / n - mean * mean);
      out[g].stddev[j] = std::sqrt(var);
    }
  }
  return out;
}

namespace {

// Cyclic Jacobi for a symmetric k x k matrix; returns eigenvalues and row
// eigenvectors, both unsorted.
void jacobi_eigen(std::vector<double> a, std::size_t k, std::vector<double>& eigvals,
                  std::vector<std::vector<double>>& eigvecs) {
  std::vector<std::vector<double>> v(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = p + 1; q < k; ++q) off += a[p * k + q] * a[p * k + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        const double apq = a[p * k + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < k; ++i) {
          const double aip = a[i * k + p], aiq = a[i * k + q];
          a[i * k + p] = c * aip - s * aiq;
          a[i * k + q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < k; ++i) {
          const double api = a[p * k + i], aqi = a[q * k + i];
          a[p * k + i] = c * api - s * aqi;
          a[q * k + i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < k; ++i) {
          const double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  eigvals.assign(k, 0.0);
  eigvecs.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    eigvals[i] = a[i * k + i];
    for (std::size_t j = 0; j < k; ++j) eigvecs[i][j] = v[j][i];  // column -> row
  }
}

void fix_sign(std::vector<double>& component) {
  for (double x : component) {
    if (std::abs(x) > 1e-12) {
      if (x < 0.0)
        for (auto& c : component) c = -c;
      return;
    }
  }
}

}  // namespace

Projection2D project_2d(std::span<const GroupedVector> vectors) {
  if (vectors.size() < 3) throw DataError("project_2d: need at least 3 vectors");
  const std::size_t k = vectors.front().values.size();
  for (const auto& v : vectors)
    if (v.values.size() != k) throw DataError("project_2d: inconsistent vector lengths");
  if (k < 2) throw DataError("project_2d: vectors must have at least 2 dimensions");

  const double n = static_cast<double>(vectors.size());
  std::vector<double> mean(k, 0.0);
  for (const auto& v : vectors)
    for (std::size_t j = 0; j < k; ++j) mean[j] += v.values[j];
  for (auto& m : mean) m /= n;

  std::vector<double> cov(k * k, 0.0);
  std::vector<double> centered(k);
  for (const auto& v : vectors) {
    for (std::size_t j = 0; j < k; ++j) centered[j] = v.values[j] - mean[j];
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i; j < k; ++j) cov[i * k + j] += centered[i] * centered[j];
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) {
      cov[i * k + j] /= n;
      cov[j * k + i] = cov[i * k + j];
    }

  std::vector<double> eigvals;
  std::vector<std::vector<double>> eigvecs;
  jacobi_eigen(cov, k, eigvals, eigvecs);

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return eigvals[a] > eigvals[b]; });

  double trace = 0.0;
  for (double ev : eigvals) trace += std::max(0.0, ev);

  Projection2D out;
  for (int c = 0; c < 2; ++c) {
    out.components[c] = eigvecs[order[static_cast<std::size_t>(c)]];
    fix_sign(out.components[c]);
    const double ev = std::max(0.0, eigvals[order[static_cast<std::size_t>(c)]]);
    out.explained_variance[static_cast<std::size_t>(c)] = trace > 0.0 ? ev / trace : 0.0;
  }

  out.points.reserve(vectors.size());
  for (const auto& v : vectors) {
    std::array<double, 2> pt{0.0, 0.0};
    for (std::size_t j = 0; j < k; ++j) {
      const double c = v.values[j] - mean[j];
      pt[0] += out.components[0][j] * c;
      pt[1] += out.components[1][j] * c;
    }
    out.points.push_back(pt);
  }
  return out;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DataError("pearson_correlation: need two equal-length series of length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

namespace {

constexpr double kWidth = 720.0, kHeight = 480.0;
constexpr double kMarginL = 60.0, kMarginR = 150.0, kMarginT = 30.0, kMarginB = 50.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

struct Range {
  double lo = 0.0, hi = 1.0;
  double map(double v, double px_lo, double px_hi) const {
    if (hi == lo) return (px_lo + px_hi) / 2.0;
    return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
  }
};

Range padded(double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  double pad = (hi - lo) * 0.05;
  if (pad == 0.0) pad = std::max(1e-6, std::abs(hi) * 0.05 + 1e-6);
  return Range{lo - pad, hi + pad};
}

std::string svg_open() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
         "viewBox=\"0 0 720 480\" font-family=\"monospace\" font-size=\"12\">\n"
         "<rect width=\"720\" height=\"480\" fill=\"#ffffff\"/>\n";
}

void svg_axes(std::string& s, const Range& xr, const Range& yr, const std::string& x_label,
              const std::string& y_label) {
  using detail::format_g6;
  const double x0 = kMarginL, x1 = kWidth - kMarginR;
  const double y0 = kHeight - kMarginB, y1 = kMarginT;
  s += "<line x1=\"" + format_g6(x0) + "\" y1=\"" + format_g6(y0) + "\" x2=\"" + format_g6(x1) +
       "\" y2=\"" + format_g6(y0) + "\" stroke=\"#333333\"/>\n";
  s += "<line x1=\"" + format_g6(x0) + "\" y1=\"" + format_g6(y0) + "\" x2=\"" + format_g6(x0) +
       "\" y2=\"" + format_g6(y1) + "\" stroke=\"#333333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double px = xr.map(fx, x0, x1);
    const double py = yr.map(fy, y0, y1);
    s += "<text x=\"" + format_g6(px) + "\" y=\"" + format_g6(y0 + 18.0) +
         "\" text-anchor=\"middle\">" + format_g6(fx) + "</text>\n";
    s += "<text x=\"" + format_g6(x0 - 8.0) + "\" y=\"" + format_g6(py + 4.0) +
         "\" text-anchor=\"end\">" + format_g6(fy) + "</text>\n";
  }
  s += "<text x=\"" + format_g6((x0 + x1) / 2.0) + "\" y=\"" + format_g6(kHeight - 12.0) +
       "\" text-anchor=\"middle\">" + x_label + "</text>\n";
  s += "<text x=\"16\" y=\"" + format_g6((y0 + y1) / 2.0) + "\" text-anchor=\"middle\" "
       "transform=\"rotate(-90 16 " + format_g6((y0 + y1) / 2.0) + ")\">" + y_label +
       "</text>\n";
}

void svg_legend(std::string& s, std::span<const std::string> groups) {
  using detail::format_g6;
  const double lx = kWidth - kMarginR + 16.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double ly = kMarginT + 14.0 + 18.0 * static_cast<double>(g);
    s += "<rect x=\"" + format_g6(lx) + "\" y=\"" + format_g6(ly - 9.0) +
         "\" width=\"10\" height=\"10\" fill=\"" + kPalette[g % kPaletteSize] + "\"/>\n";
    s += "<text x=\"" + format_g6(lx + 16.0) + "\" y=\"" + format_g6(ly) + "\">" + groups[g] +
         "</text>\n";
  }
}

std::string profiles_svg(std::span<const GroupProfile> profiles) {
  const std::size_t k = profiles.front().mean.size();
  double lo = profiles.front().mean.front(), hi = lo;
  for (const auto& p : profiles)
    for (double m : p.mean) {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  const Range yr = padded(lo, hi);
  const Range xr{1.0, static_cast<double>(k)};
  const double x0 = kMarginL, x1 = kWidth - kMarginR;
  const double y0 = kHeight - kMarginB, y1 = kMarginT;

  std::string s = svg_open();
  svg_axes(s, xr, yr, "layer index", "mean similarity");
  std::vector<std::string> names;
  for (std::size_t g = 0; g < profiles.size(); ++g) {
    const auto& p = profiles[g];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[g % kPaletteSize]) +
         "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < k; ++j) {
      if (j) s += ' ';
      s += detail::format_g6(xr.map(static_cast<double>(j + 1), x0, x1)) + "," +
           detail::format_g6(yr.map(p.mean[j], y0, y1));
    }
    s += "\"/>\n";
    names.push_back(p.group);
  }
  svg_legend(s, names);
  s += "</svg>\n";
  return s;
}

std::string projection_svg(std::span<const GroupedVector> vectors, const Projection2D& proj) {
  double xlo = proj.points.front()[0], xhi = xlo;
  double ylo = proj.points.front()[1], yhi = ylo;
  for (const auto& pt : proj.points) {
    xlo = std::min(xlo, pt[0]);
    xhi = std::max(xhi, pt[0]);
    ylo = std::min(ylo, pt[1]);
    yhi = std::max(yhi, pt[1]);
  }
  const Range xr = padded(xlo, xhi), yr = padded(ylo, yhi);
  const double x0 = kMarginL, x1 = kWidth - kMarginR;
  const double y0 = kHeight - kMarginB, y1 = kMarginT;

  std::vector<std::string> names;
  std::map<std::string, std::size_t> color;
  for (const auto& v : vectors) {
    if (color.emplace(v.group, names.size()).second) names.push_back(v.group);
  }

  std::string s = svg_open();
  svg_axes(s, xr, yr,
           "pc1 (" + detail::format_g6(proj.explained_variance[0] * 100.0) + "% var)",
           "pc2 (" + detail::format_g6(proj.explained_variance[1] * 100.0) + "% var)");
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& pt = proj.points[i];
    s += "<circle cx=\"" + detail::format_g6(xr.map(pt[0], x0, x1)) + "\" cy=\"" +
         detail::format_g6(yr.map(pt[1], y0, y1)) + "\" r=\"3\" fill=\"" +
         kPalette[color[vectors[i].group] % kPaletteSize] + "\" fill-opacity=\"0.7\"/>\n";
  }
  svg_legend(s, names);
  s += "</svg>\n";
  return s;
}

const GroupSummary* find_group(std::span<const GroupSummary> rows, std::string_view name) {
  for (const auto& r : rows)
    if (r.group == name) return &r;
  return nullptr;
}

}  // namespace

void render_report(std::span<const GroupProfile> profiles, std::span<const GroupedVector> vectors,
                   const std::optional<Projection2D>& projection,
                   std::span<const GroupSummary> dynamics, const std::string& out_dir) {
  if (profiles.empty()) throw DataError("render_report: no group profiles");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw DataError("render_report: cannot create '" + out_dir + "'");
  const fs::path dir(out_dir);

  {
    std::string csv = "group,layer_index,mean,std,count\n";
    for (const auto& p : profiles) {
      for (std::size_t j = 0; j < p.mean.size(); ++j) {
        csv += detail::csv_escape(p.group);
        csv += ',' + std::to_string(j + 1);
        csv += ',' + detail::format_g9(p.mean[j]);
        csv += ',' + detail::format_g9(p.stddev[j]);
        csv += ',' + std::to_string(p.count);
        csv += '\n';
      }
    }
    detail::write_file_bytes((dir / "profiles.csv").string(), csv);
  }

  if (projection) {
    std::string csv = "doc_id,group,x,y\n";
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      csv += detail::csv_escape(vectors[i].doc_id);
      csv += ',' + detail::csv_escape(vectors[i].group);
      csv += ',' + detail::format_g9(projection->points[i][0]);
      csv += ',' + detail::format_g9(projection->points[i][1]);
      csv += '\n';
    }
    detail::write_file_bytes((dir / "projection.csv").string(), csv);
    detail::write_file_bytes((dir / "projection.svg").string(),
                             projection_svg(vectors, *projection));
  }

  detail::write_file_bytes((dir / "profiles.svg").string(), profiles_svg(profiles));

  if (!dynamics.empty())
    write_group_summary_csv(dynamics, (dir / "dynamics_summary.csv").string());

  std::string summary;
  summary += "groups: " + std::to_string(profiles.size()) + "\n";
  for (const auto& p : profiles)
    summary += "  " + p.group + ": " + std::to_string(p.count) + " vectors\n";
  for (std::size_t a = 0; a < profiles.size(); ++a) {
    for (std::size_t b = a + 1; b < profiles.size(); ++b) {
      if (profiles[a].mean.size() < 2) continue;
      const double r = pearson_correlation(profiles[a].mean, profiles[b].mean);
      summary += "profile correlation " + profiles[a].group + " vs " + profiles[b].group + ": " +
                 detail::format_g6(r) + "\n";
    }
  }
  if (!dynamics.empty()) {
    const auto* fam = find_group(dynamics, "familiar");
    const auto* unf = find_group(dynamics, "unfamiliar");
    if (fam && unf) {
      const bool ent = unf->mean_entropy > fam->mean_entropy;
      const bool gn = unf->mean_grad_norm > fam->mean_grad_norm;
      summary += "directional check (soft): unfamiliar entropy > familiar: " +
                 std::string(ent ? "yes" : "no") + " (" + detail::format_g6(unf->mean_entropy) +
                 " vs " + detail::format_g6(fam->mean_entropy) + ")\n";
      summary += "directional check (soft): unfamiliar grad_norm > familiar: " +
                 std::string(gn ? "yes" : "no") + " (" + detail::format_g6(unf->mean_grad_norm) +
                 " vs " + detail::format_g6(fam->mean_grad_norm) + ")\n";
    }
  }
  detail::write_file_bytes((dir / "summary.txt").string(), summary);
}

}  // namespace kamir
