// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#include "stdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "stdnet/errors.hpp"
#include "stdnet/heads_losses.hpp"
#include "stdnet/tensor.hpp"

namespace stdnet {

namespace {

constexpr double kFar = 1e20;  // "no set pixel" squared distance

void check_same_shape(const Mask& a, const Mask& b, const char* who) {
  if (a.h != b.h || a.w != b.w) {
    throw InvalidInputError(std::string(who) + ": mask shapes differ (" +
                            std::to_string(a.h) + "x" + std::to_string(a.w) +
                            " vs " + std::to_string(b.h) + "x" +
                            std::to_string(b.w) + ")");
  }
}

// Set pixels whose 8-neighborhood leaves the mask; frame edges count as
// background, so a full-frame mask still has a one-pixel contour ring.
Mask inner_contour(const Mask& m) {
  Mask c(m.h, m.w);
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy) {
        for (int dx = -1; dx <= 1 && !edge; ++dx) {
          if (dy == 0 && dx == 0) continue;
          int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w || !m.at(ny, nx)) {
            edge = true;
          }
        }
      }
      if (edge) c.at(y, x) = 1;
    }
  }
  return c;
}

// Felzenszwalb-Huttenlocher lower envelope of parabolas rooted at f.
void dt_1d(const double* f, int n, int stride, double* out, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kFar;
  z[1] = kFar;
  for (int q = 1; q < n; ++q) {
    double fq = f[size_t(q) * stride] + double(q) * q;
    double s = 0;
    for (;;) {
      double fv = f[size_t(v[k]) * stride] + double(v[k]) * v[k];
      s = (fq - fv) / (2.0 * (q - v[k]));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kFar;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    double d = double(q) - v[k];
    out[size_t(q) * stride] = d * d + f[size_t(v[k]) * stride];
  }
}

// Mean fraction of contour pixels of `a` within tol of some contour pixel
// of `b`. Caller guarantees both contours are nonempty.
double contour_hit_rate(const Mask& a, const std::vector<double>& sq_dist_b,
                        double tol) {
  uint64_t total = 0, hit = 0;
  double tol2 = tol * tol;
  for (size_t i = 0; i < a.v.size(); ++i) {
    if (!a.v[i]) continue;
    ++total;
    // <= with a small slack so an integer tol matches distances exactly tol.
    if (sq_dist_b[i] <= tol2 * (1.0 + 1e-12)) ++hit;
  }
  return double(hit) / double(total);
}

struct PairScore {
  double j_mean = 0, f_mean = 0, j_recall = 0, f_recall = 0;
};

// Frame scores averaged over gt-present frames; prediction gaps are empty.
PairScore score_pair(const MaskSequence& pred, const MaskSequence& gt,
                     double tol) {
  PairScore s;
  if (gt.by_frame.empty()) return s;
  int n = 0, j_hits = 0, f_hits = 0;
  for (const auto& [frame, gm] : gt.by_frame) {
    Mask pm(gm.h, gm.w);
    auto it = pred.by_frame.find(frame);
    if (it != pred.by_frame.end()) pm = it->second;
    double j = region_j(pm, gm);
    double f = boundary_f(pm, gm, tol);
    s.j_mean += j;
    s.f_mean += f;
    if (j > 0.5) ++j_hits;
    if (f > 0.5) ++f_hits;
    ++n;
  }
  s.j_mean /= n;
  s.f_mean /= n;
  s.j_recall = double(j_hits) / n;
  s.f_recall = double(f_hits) / n;
  return s;
}

std::vector<const MaskSequence*> by_id(const std::vector<MaskSequence>& seqs,
                                       const char* who) {
  std::vector<const MaskSequence*> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(&s);
  std::sort(out.begin(), out.end(),
            [](const MaskSequence* a, const MaskSequence* b) {
              return a->id < b->id;
            });
  for (size_t i = 1; i < out.size(); ++i) {
    if (out[i]->id == out[i - 1]->id) {
      throw InvalidInputError(std::string(who) + ": duplicate sequence id " +
                              std::to_string(out[i]->id));
    }
  }
  return out;
}

}  // namespace

double region_j(const Mask& pred, const Mask& gt) {
  check_same_shape(pred, gt, "region_j");
  uint64_t inter = 0, uni = 0;
  mask_inter_union(pred, gt, &inter, &uni);
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

std::vector<double> squared_edt(const Mask& m) {
  std::vector<double> d(m.v.size(), kFar);
  for (size_t i = 0; i < m.v.size(); ++i) {
    if (m.v[i]) d[i] = 0.0;
  }
  int n = std::max(m.h, m.w);
  std::vector<int> v(size_t(n), 0);
  std::vector<double> z(size_t(n) + 1, 0.0);
  for (int x = 0; x < m.w; ++x) {  // columns first
    dt_1d(d.data() + x, m.h, m.w, d.data() + x, v.data(), z.data());
  }
  std::vector<double> row(size_t(m.w), 0.0);
  for (int y = 0; y < m.h; ++y) {
    double* r = d.data() + size_t(y) * m.w;
    dt_1d(r, m.w, 1, row.data(), v.data(), z.data());
    std::copy(row.begin(), row.end(), r);
  }
  return d;
}

double boundary_f(const Mask& pred, const Mask& gt, double tol) {
  check_same_shape(pred, gt, "boundary_f");
  if (!(tol >= 0) || !std::isfinite(tol)) {
    throw InvalidInputError("boundary_f: tol must be finite and >= 0");
  }
  bool pe = pred.empty_mask(), ge = gt.empty_mask();
  if (pe && ge) return 1.0;
  if (pe || ge) return 0.0;
  Mask pc = inner_contour(pred);
  Mask gc = inner_contour(gt);
  double precision = contour_hit_rate(pc, squared_edt(gc), tol);
  double recall = contour_hit_rate(gc, squared_edt(pc), tol);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double default_boundary_tol(int h, int w) {
  if (h <= 0 || w <= 0) {
    throw InvalidInputError("default_boundary_tol: non-positive frame size");
  }
  return std::ceil(0.008 * std::sqrt(double(h) * h + double(w) * w));
}

std::vector<int> assign_tracks(const std::vector<MaskSequence>& pred,
                               const std::vector<MaskSequence>& gt,
                               double tol) {
  std::vector<int> out(pred.size(), -1);
  if (pred.empty() || gt.empty()) return out;
  auto ps = by_id(pred, "assign_tracks(pred)");
  auto gs = by_id(gt, "assign_tracks(gt)");
  size_t np = ps.size(), ng = gs.size();

  Tensor score({int(np), int(ng)});
  for (size_t i = 0; i < np; ++i) {
    for (size_t j = 0; j < ng; ++j) {
      PairScore s = score_pair(*ps[i], *gs[j], tol);
      score.at(int(i), int(j)) = 0.5 * (s.j_mean + s.f_mean);
    }
  }

  // hungarian_assign minimizes with rows <= cols; negate, orient, map back.
  bool pred_rows = np <= ng;
  int nr = int(pred_rows ? np : ng), nc = int(pred_rows ? ng : np);
  Tensor cost({nr, nc});
  for (int r = 0; r < nr; ++r) {
    for (int c = 0; c < nc; ++c) {
      cost.at(r, c) = pred_rows ? -score.at(r, c) : -score.at(c, r);
    }
  }
  std::vector<int> a = hungarian_assign(cost);
  for (int r = 0; r < nr; ++r) {
    size_t pi = pred_rows ? size_t(r) : size_t(a[size_t(r)]);
    size_t gi = pred_rows ? size_t(a[size_t(r)]) : size_t(r);
    out[size_t(ps[pi] - pred.data())] = int(gs[gi] - gt.data());
  }
  return out;
}

EvalReport evaluate(const std::vector<MaskSequence>& pred,
                    const std::vector<MaskSequence>& gt, double tol) {
  std::vector<int> match = assign_tracks(pred, gt, tol);
  std::vector<int> pred_of_gt(gt.size(), -1);
  for (size_t i = 0; i < match.size(); ++i) {
    if (match[i] != -1) pred_of_gt[size_t(match[i])] = int(i);
  }

  EvalReport rep;
  auto gs = by_id(gt, "evaluate(gt)");
  static const MaskSequence kEmpty{};
  for (const MaskSequence* g : gs) {
    size_t gi = size_t(g - &gt[0]);
    int pi = pred_of_gt[gi];
    ObjectScore os;
    os.gt_id = g->id;
    os.pred_id = pi == -1 ? -1 : pred[size_t(pi)].id;
    PairScore s = score_pair(pi == -1 ? kEmpty : pred[size_t(pi)], *g, tol);
    os.j_mean = s.j_mean;
    os.f_mean = s.f_mean;
    os.j_recall = s.j_recall;
    os.f_recall = s.f_recall;
    rep.objects.push_back(os);
  }
  std::vector<EvalReport> one{rep};
  return combine_reports(one);
}

EvalReport combine_reports(const std::vector<EvalReport>& reports) {
  EvalReport out;
  for (const EvalReport& r : reports) {
    out.objects.insert(out.objects.end(), r.objects.begin(), r.objects.end());
  }
  if (out.objects.empty()) return out;
  for (const ObjectScore& o : out.objects) {
    out.j_mean += o.j_mean;
    out.f_mean += o.f_mean;
    out.j_recall += o.j_recall;
    out.f_recall += o.f_recall;
  }
  double n = double(out.objects.size());
  out.j_mean /= n;
  out.f_mean /= n;
  out.j_recall /= n;
  out.f_recall /= n;
  out.jf = 0.5 * (out.j_mean + out.f_mean);
  return out;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json objs = nlohmann::json::array();
  for (const ObjectScore& o : r.objects) {
    objs.push_back({{"gt_id", o.gt_id},
                    {"pred_id", o.pred_id},
                    {"j_mean", o.j_mean},
                    {"f_mean", o.f_mean},
                    {"j_recall", o.j_recall},
                    {"f_recall", o.f_recall}});
  }
  nlohmann::json j = {{"jf", r.jf},
                      {"j_mean", r.j_mean},
                      {"j_recall", r.j_recall},
                      {"f_mean", r.f_mean},
                      {"f_recall", r.f_recall},
                      {"objects", objs}};
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f,%.4f\n", r.jf,
                r.j_mean, r.j_recall, r.f_mean, r.f_recall);
  return std::string("J&F,J-Mean,J-Recall,F-Mean,F-Recall\n") + buf;
}

}  // namespace stdnet
