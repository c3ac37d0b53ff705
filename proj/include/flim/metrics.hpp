#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "flim/volume.hpp"

namespace flim {

/// ET = {2}, NC = {3}, WT = {1, 2, 3}; ED is implied as WT minus ET and NC.
struct RegionMasks {
  Mask et, nc, wt;
};

inline RegionMasks compose_regions(const LabelVolume& labels) {
  RegionMasks r{Mask(labels.shape()), Mask(labels.shape()), Mask(labels.shape())};
  const auto& d = labels.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    r.et.data[i] = d[i] == 2;
    r.nc.data[i] = d[i] == 3;
    r.wt.data[i] = d[i] >= 1 && d[i] <= 3;
  }
  return r;
}

/// 2|a n b| / (|a| + |b|); two empty masks score 1.
inline double dice(const Mask& a, const Mask& b) {
  if (a.shape != b.shape) throw FormatError("dice: mask shapes differ");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a[i], y = b[i];
    inter += x && y;
    na += x;
    nb += y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

struct CaseDice {
  std::string case_id;
  double et = 0.0, nc = 0.0, wt = 0.0;
};

inline CaseDice case_dice(std::string id, const LabelVolume& pred, const LabelVolume& truth) {
  if (pred.shape() != truth.shape()) throw FormatError("dice: prediction and truth shapes differ for " + id);
  const auto p = compose_regions(pred), t = compose_regions(truth);
  return {std::move(id), dice(p.et, t.et), dice(p.nc, t.nc), dice(p.wt, t.wt)};
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

struct DiceReport {
  std::vector<CaseDice> cases;

  MeanStd et() const { return stat(&CaseDice::et); }
  MeanStd nc() const { return stat(&CaseDice::nc); }
  MeanStd wt() const { return stat(&CaseDice::wt); }

 private:
  MeanStd stat(double CaseDice::*f) const {
    std::vector<double> v;
    for (const auto& c : cases) v.push_back(c.*f);
    return mean_std(v);
  }
};

inline std::string fmt_num(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

/// case_id,dsc_et,dsc_nc,dsc_wt with mean and std footer rows.
inline std::string report_csv(const DiceReport& r) {
  std::string out = "case_id,dsc_et,dsc_nc,dsc_wt\n";
  for (const auto& c : r.cases) out += c.case_id + "," + fmt_num(c.et) + "," + fmt_num(c.nc) + "," + fmt_num(c.wt) + "\n";
  const MeanStd et = r.et(), nc = r.nc(), wt = r.wt();
  out += "mean," + fmt_num(et.mean) + "," + fmt_num(nc.mean) + "," + fmt_num(wt.mean) + "\n";
  out += "std," + fmt_num(et.std) + "," + fmt_num(nc.std) + "," + fmt_num(wt.std) + "\n";
  return out;
}

inline DiceReport parse_report_csv(const std::string& text) {
  DiceReport r;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos || text.substr(0, pos) != "case_id,dsc_et,dsc_nc,dsc_wt")
    throw FormatError("dice report: bad header");
  while (++pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string line = text.substr(pos, end - pos);
    pos = end == std::string::npos ? text.size() : end;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t a = 0;
    for (std::size_t b; (b = line.find(',', a)) != std::string::npos; a = b + 1) f.push_back(line.substr(a, b - a));
    f.push_back(line.substr(a));
    if (f.size() != 4) throw FormatError("dice report: expected 4 columns");
    if (f[0] == "mean" || f[0] == "std") continue;
    try {
      r.cases.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    } catch (const std::exception&) {
      throw FormatError("dice report: bad number in row " + f[0]);
    }
  }
  if (r.cases.empty()) throw FormatError("dice report: no cases");
  return r;
}

/// "0.746(0.052)"
inline std::string mean_std_cell(const MeanStd& m) { return fmt_num(m.mean, 3) + "(" + fmt_num(m.std, 3) + ")"; }

/// Markdown-style comparison table: one row per model, ET / NC / WT columns.
inline std::string comparison_table(const std::vector<std::pair<std::string, DiceReport>>& models) {
  std::size_t w = 5;
  for (const auto& [name, _] : models) w = std::max(w, name.size());
  auto pad = [w](std::string s) {
    s.resize(w, ' ');
    return s;
  };
  std::string out = "| " + pad("Model") + " | ET           | NC           | WT           |\n";
  out += "|" + std::string(w + 2, '-') + "|--------------|--------------|--------------|\n";
  for (const auto& [name, r] : models)
    out += "| " + pad(name) + " | " + mean_std_cell(r.et()) + " | " + mean_std_cell(r.nc()) + " | " +
           mean_std_cell(r.wt()) + " |\n";
  return out;
}

}  // namespace flim
