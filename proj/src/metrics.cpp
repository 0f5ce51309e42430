#include "tseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace tseg {

namespace {

void require_same_shape(Eigen::Index h1, Eigen::Index w1, Eigen::Index h2, Eigen::Index w2, const char* what) {
  if (h1 != h2 || w1 != w2) throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": shape mismatch");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance transform of a 1D sampled function (lower envelope of
// parabolas). Infinite samples carry no parabola.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = -kInf;
    while (k >= 0) {
      const int p = v[k];
      s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    if (k < 0) s = -kInf;
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  for (int q = 0, j = 0; q < n; ++q) {
    if (k < 0) {
      d[q] = kInf;
      continue;
    }
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

// Exact squared Euclidean distance from every pixel to the nearest set pixel.
Plane<double> squared_edt(const BinaryMask& sites) {
  const Eigen::Index h = sites.height(), w = sites.width();
  Plane<double> g(h, w);
  const Eigen::Index n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (Eigen::Index x = 0; x < w; ++x) {
    f.resize(h);
    d.resize(h);
    for (Eigen::Index y = 0; y < h; ++y) f[y] = sites(y, x) ? 0.0 : kInf;
    edt_1d(f, d, v, z);
    for (Eigen::Index y = 0; y < h; ++y) g(y, x) = d[y];
  }
  for (Eigen::Index y = 0; y < h; ++y) {
    f.resize(w);
    d.resize(w);
    for (Eigen::Index x = 0; x < w; ++x) f[x] = g(y, x);
    edt_1d(f, d, v, z);
    for (Eigen::Index x = 0; x < w; ++x) g(y, x) = d[x];
  }
  return g;
}

double directed_sq(const BinaryMask& from, const Plane<double>& dt_to) {
  double worst = 0.0;
  for (Eigen::Index y = 0; y < from.height(); ++y) {
    for (Eigen::Index x = 0; x < from.width(); ++x) {
      if (from(y, x)) worst = std::max(worst, dt_to(y, x));
    }
  }
  return worst;
}

struct Centroid {
  double y = 0.0, x = 0.0;
};

std::vector<Centroid> boundary_centroids(const InstanceMask& inst) {
  std::vector<Centroid> c(static_cast<std::size_t>(inst.count()) + 1);
  std::vector<double> n(c.size(), 0.0);
  for (std::int32_t l = 1; l <= inst.count(); ++l) {
    const BinaryMask b = boundary(inst.object(l));
    for (Eigen::Index y = 0; y < b.height(); ++y) {
      for (Eigen::Index x = 0; x < b.width(); ++x) {
        if (!b(y, x)) continue;
        c[l].y += y;
        c[l].x += x;
        n[l] += 1.0;
      }
    }
    c[l].y /= n[l];
    c[l].x /= n[l];
  }
  return c;
}

std::int32_t nearest_centroid(const Centroid& p, const std::vector<Centroid>& others) {
  std::int32_t best = 0;
  double best_d = kInf;
  for (std::size_t l = 1; l < others.size(); ++l) {
    const double d = (p.y - others[l].y) * (p.y - others[l].y) + (p.x - others[l].x) * (p.x - others[l].x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int32_t>(l);
    }
  }
  return best;
}

}  // namespace

PixelMetrics pixel_metrics(const BinaryMask& seg, const BinaryMask& gt) {
  require_same_shape(seg.height(), seg.width(), gt.height(), gt.width(), "pixel_metrics");
  PixelMetrics m;
  const auto& s = seg.data();
  const auto& g = gt.data();
  m.tp = ((s == 1) && (g == 1)).count();
  m.fp = ((s == 1) && (g == 0)).count();
  m.fn = ((s == 0) && (g == 1)).count();
  m.tn = ((s == 0) && (g == 0)).count();
  m.total = s.size();
  if (m.total > 0) {
    const auto total = static_cast<double>(m.total);
    m.pa = static_cast<double>(m.tp + m.tn) / total;
    m.type1 = static_cast<double>(m.fp) / total;
    m.type2 = static_cast<double>(m.fn) / total;
  }
  return m;
}

ObjectMatching match_objects(const InstanceMask& seg, const InstanceMask& gt) {
  require_same_shape(seg.height(), seg.width(), gt.height(), gt.width(), "match_objects");
  const auto ns = static_cast<std::size_t>(seg.count()), ng = static_cast<std::size_t>(gt.count());
  ObjectMatching m;
  m.overlap.setZero(static_cast<Eigen::Index>(ns) + 1, static_cast<Eigen::Index>(ng) + 1);
  for (Eigen::Index i = 0; i < seg.labels().size(); ++i) {
    ++m.overlap(seg.labels().data()[i], gt.labels().data()[i]);
  }
  m.seg_area = seg.areas();
  m.gt_area = gt.areas();

  m.seg_match.assign(ns + 1, 0);
  m.seg_tp.assign(ns + 1, false);
  m.gt_detected.assign(ng + 1, false);
  for (std::size_t i = 1; i <= ns; ++i) {
    Eigen::Index best = 0;
    for (std::size_t j = 1; j <= ng; ++j) {
      if (m.overlap(i, j) > best) {
        best = m.overlap(i, j);
        m.seg_match[i] = static_cast<std::int32_t>(j);
      }
    }
    const auto j = static_cast<std::size_t>(m.seg_match[i]);
    // |S ∩ G| / |G| >= 1/2 in exact integer arithmetic.
    if (j > 0 && 2 * best >= m.gt_area[j]) {
      m.seg_tp[i] = true;
      m.gt_detected[j] = true;
      ++m.tp;
    } else {
      ++m.fp;
    }
  }
  m.gt_match.assign(ng + 1, 0);
  for (std::size_t j = 1; j <= ng; ++j) {
    Eigen::Index best = 0;
    for (std::size_t i = 1; i <= ns; ++i) {
      if (m.overlap(i, j) > best) {
        best = m.overlap(i, j);
        m.gt_match[j] = static_cast<std::int32_t>(i);
      }
    }
    if (!m.gt_detected[j]) ++m.fn;
  }
  return m;
}

F1Score f1_score(const ObjectMatching& m) {
  F1Score s;
  const auto tp = static_cast<double>(m.tp);
  if (m.tp + m.fp > 0) s.precision = tp / static_cast<double>(m.tp + m.fp);
  if (m.tp + m.fn > 0) s.recall = tp / static_cast<double>(m.tp + m.fn);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a.height(), a.width(), b.height(), b.width(), "dice");
  const auto na = a.count(), nb = b.count();
  if (na + nb == 0) throw Error(ErrorCode::EmptySet, "dice: both sets are empty");
  const auto inter = ((a.data() == 1) && (b.data() == 1)).count();
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

ObjectDice object_dice(const InstanceMask& seg, const InstanceMask& gt) {
  const ObjectMatching m = match_objects(seg, gt);
  if (seg.count() == 0 || gt.count() == 0) return {0.0, true};
  double seg_total = 0.0, gt_total = 0.0;
  for (std::size_t i = 1; i < m.seg_area.size(); ++i) seg_total += static_cast<double>(m.seg_area[i]);
  for (std::size_t j = 1; j < m.gt_area.size(); ++j) gt_total += static_cast<double>(m.gt_area[j]);

  auto pair_dice = [&](std::size_t i, std::size_t j) {
    return 2.0 * static_cast<double>(m.overlap(i, j)) / static_cast<double>(m.seg_area[i] + m.gt_area[j]);
  };
  double a = 0.0, b = 0.0;
  for (std::size_t i = 1; i < m.seg_area.size(); ++i) {
    const auto j = static_cast<std::size_t>(m.seg_match[i]);
    if (j > 0) a += static_cast<double>(m.seg_area[i]) / seg_total * pair_dice(i, j);
  }
  for (std::size_t j = 1; j < m.gt_area.size(); ++j) {
    const auto i = static_cast<std::size_t>(m.gt_match[j]);
    if (i > 0) b += static_cast<double>(m.gt_area[j]) / gt_total * pair_dice(i, j);
  }
  return {0.5 * (a + b), false};
}

BinaryMask boundary(const BinaryMask& mask) {
  const Eigen::Index h = mask.height(), w = mask.width();
  Plane<std::uint8_t> out = Plane<std::uint8_t>::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == h - 1 || x == w - 1;
      out(y, x) = edge || !mask(y - 1, x) || !mask(y + 1, x) || !mask(y, x - 1) || !mask(y, x + 1);
    }
  }
  return BinaryMask(std::move(out));
}

double hausdorff(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a.height(), a.width(), b.height(), b.width(), "hausdorff");
  if (a.count() == 0 || b.count() == 0) throw Error(ErrorCode::EmptySet, "hausdorff: empty set");
  const BinaryMask ba = boundary(a), bb = boundary(b);
  const double sq = std::max(directed_sq(ba, squared_edt(bb)), directed_sq(bb, squared_edt(ba)));
  return std::sqrt(sq);
}

double object_hausdorff(const InstanceMask& seg, const InstanceMask& gt) {
  if (seg.count() == 0 || gt.count() == 0) throw Error(ErrorCode::EmptySet, "object_hausdorff: empty input");
  const ObjectMatching m = match_objects(seg, gt);
  const auto seg_c = boundary_centroids(seg), gt_c = boundary_centroids(gt);
  double seg_total = 0.0, gt_total = 0.0;
  for (std::size_t i = 1; i < m.seg_area.size(); ++i) seg_total += static_cast<double>(m.seg_area[i]);
  for (std::size_t j = 1; j < m.gt_area.size(); ++j) gt_total += static_cast<double>(m.gt_area[j]);

  std::vector<BinaryMask> seg_obj, gt_obj;
  for (std::int32_t i = 0; i <= seg.count(); ++i) seg_obj.push_back(i ? seg.object(i) : BinaryMask());
  for (std::int32_t j = 0; j <= gt.count(); ++j) gt_obj.push_back(j ? gt.object(j) : BinaryMask());

  double a = 0.0, b = 0.0;
  for (std::size_t i = 1; i < m.seg_area.size(); ++i) {
    auto j = static_cast<std::size_t>(m.seg_match[i]);
    if (j == 0) j = static_cast<std::size_t>(nearest_centroid(seg_c[i], gt_c));
    a += static_cast<double>(m.seg_area[i]) / seg_total * hausdorff(gt_obj[j], seg_obj[i]);
  }
  for (std::size_t j = 1; j < m.gt_area.size(); ++j) {
    auto i = static_cast<std::size_t>(m.gt_match[j]);
    if (i == 0) i = static_cast<std::size_t>(nearest_centroid(gt_c[j], seg_c));
    b += static_cast<double>(m.gt_area[j]) / gt_total * hausdorff(gt_obj[j], seg_obj[i]);
  }
  return 0.5 * (a + b);
}

EvaluationReport evaluate(const InstanceMask& seg, const InstanceMask& gt) {
  EvaluationReport r;
  r.pixel = pixel_metrics(seg.binarize(), gt.binarize());
  r.object = f1_score(match_objects(seg, gt));
  r.od = object_dice(seg, gt);
  r.oh = r.od.empty_input ? std::numeric_limits<double>::quiet_NaN() : object_hausdorff(seg, gt);
  return r;
}

std::string report_csv_header() { return "image,PA,TypeI,TypeII,Precision,Recall,F1,OD,OH"; }

std::string report_csv_row(const std::string& image, const EvaluationReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.pixel.pa, r.pixel.type1, r.pixel.type2,
                r.object.precision, r.object.recall, r.object.f1, r.od.value, r.oh);
  return image + buf;
}

}  // namespace tseg
