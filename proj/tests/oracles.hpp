// Independent reference implementations used only by the tests. Everything
// here is written as directly as possible (plain loops, no shared code with
// the library) so agreement between the two is meaningful.

#ifndef CASCADESEG_TEST_ORACLES_HPP
#define CASCADESEG_TEST_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cascadeseg/geometry.hpp"
#include "cascadeseg/mask.hpp"
#include "cascadeseg/tensor.hpp"

namespace oracle {

using cseg::Index;

// ---------------------------------------------------------------------------
// Convolution family, all plain quintuple loops over doubles.
// ---------------------------------------------------------------------------

struct Box {
  std::vector<double> v;
  Index c = 0, h = 0, w = 0;
  double& at(Index ci, Index i, Index j) {
    return v[static_cast<std::size_t>((ci * h + i) * w + j)];
  }
  double at(Index ci, Index i, Index j) const {
    return v[static_cast<std::size_t>((ci * h + i) * w + j)];
  }
  static Box zeros(Index c, Index h, Index w) {
    Box b;
    b.c = c;
    b.h = h;
    b.w = w;
    b.v.assign(static_cast<std::size_t>(c * h * w), 0.0);
    return b;
  }
};

template <typename S>
Box box_of(const cseg::Tensor<S>& t) {
  if (t.rank() != 3) throw std::invalid_argument("box_of: rank 3 expected");
  Box b = Box::zeros(t.dim(0), t.dim(1), t.dim(2));
  for (Index i = 0; i < t.size(); ++i) b.v[static_cast<std::size_t>(i)] = double(t.value()[i]);
  return b;
}

/// weight laid out {F, C, k, k}, bias {F}.
inline Box conv2d(const Box& x, const std::vector<double>& weight, const std::vector<double>& bias,
                  Index filters, Index kernel, Index stride, Index pad) {
  const Index out_h = (x.h + 2 * pad - kernel) / stride + 1;
  const Index out_w = (x.w + 2 * pad - kernel) / stride + 1;
  Box y = Box::zeros(filters, out_h, out_w);
  for (Index f = 0; f < filters; ++f)
    for (Index oi = 0; oi < out_h; ++oi)
      for (Index oj = 0; oj < out_w; ++oj) {
        double acc = bias[static_cast<std::size_t>(f)];
        for (Index c = 0; c < x.c; ++c)
          for (Index di = 0; di < kernel; ++di)
            for (Index dj = 0; dj < kernel; ++dj) {
              const Index ii = oi * stride + di - pad;
              const Index jj = oj * stride + dj - pad;
              if (ii < 0 || ii >= x.h || jj < 0 || jj >= x.w) continue;
              const std::size_t wi =
                  static_cast<std::size_t>(((f * x.c + c) * kernel + di) * kernel + dj);
              acc += weight[wi] * x.at(c, ii, jj);
            }
        y.at(f, oi, oj) = acc;
      }
  return y;
}

/// weight laid out {C_in, F, k, k}; output side s*(H-1)+k-2*crop.
inline Box conv2d_transpose(const Box& x, const std::vector<double>& weight, Index filters,
                            Index kernel, Index stride, Index crop) {
  const Index out_h = stride * (x.h - 1) + kernel - 2 * crop;
  const Index out_w = stride * (x.w - 1) + kernel - 2 * crop;
  Box y = Box::zeros(filters, out_h, out_w);
  for (Index c = 0; c < x.c; ++c)
    for (Index i = 0; i < x.h; ++i)
      for (Index j = 0; j < x.w; ++j)
        for (Index f = 0; f < filters; ++f)
          for (Index di = 0; di < kernel; ++di)
            for (Index dj = 0; dj < kernel; ++dj) {
              const Index oi = stride * i + di - crop;
              const Index oj = stride * j + dj - crop;
              if (oi < 0 || oi >= out_h || oj < 0 || oj >= out_w) continue;
              const std::size_t wi =
                  static_cast<std::size_t>(((c * filters + f) * kernel + di) * kernel + dj);
              y.at(f, oi, oj) += x.at(c, i, j) * weight[wi];
            }
  return y;
}

inline Box maxpool2(const Box& x) {
  const Index out_h = (x.h + 1) / 2, out_w = (x.w + 1) / 2;
  Box y = Box::zeros(x.c, out_h, out_w);
  for (Index c = 0; c < x.c; ++c)
    for (Index oi = 0; oi < out_h; ++oi)
      for (Index oj = 0; oj < out_w; ++oj) {
        double best = -std::numeric_limits<double>::infinity();
        for (Index di = 0; di < 2; ++di)
          for (Index dj = 0; dj < 2; ++dj) {
            const Index ii = 2 * oi + di, jj = 2 * oj + dj;
            if (ii >= x.h || jj >= x.w) continue;
            best = std::max(best, x.at(c, ii, jj));
          }
        y.at(c, oi, oj) = best;
      }
  return y;
}

inline double sigmoid_ce(const Box& z, const Box& t, double scale) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.v.size(); ++i) {
    const double zi = z.v[i], ti = t.v[i];
    total += std::max(zi, 0.0) - zi * ti + std::log1p(std::exp(-std::abs(zi)));
  }
  return scale * (total / static_cast<double>(z.c));
}

inline double softmax_ce(const Box& z, const cseg::SegMask& labels) {
  double total = 0.0;
  for (Index i = 0; i < z.h; ++i)
    for (Index j = 0; j < z.w; ++j) {
      double mx = z.at(0, i, j);
      for (Index c = 1; c < z.c; ++c) mx = std::max(mx, z.at(c, i, j));
      double lse = 0.0;
      for (Index c = 0; c < z.c; ++c) lse += std::exp(z.at(c, i, j) - mx);
      lse = mx + std::log(lse);
      total += lse - z.at(labels.labels(i, j), i, j);
    }
  return total / static_cast<double>(z.h * z.w);
}

// ---------------------------------------------------------------------------
// Geometry and metrics.
// ---------------------------------------------------------------------------

/// Even-odd test counting edge crossings strictly to the right of the point.
/// The crossing abscissa uses the same expression as the rasterizer, so the
/// two agree even when a crossing lands exactly on a pixel center.
inline bool point_in_polygon(double px, double py, const cseg::Polygon& poly) {
  int crossings = 0;
  const std::size_t n = poly.size();
  for (std::size_t e = 0; e < n; ++e) {
    const cseg::Point2& a = poly[e];
    const cseg::Point2& b = poly[(e + 1) % n];
    if ((a.y() <= py) == (b.y() <= py)) continue;
    const double x = a.x() + (py - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
    if (x > px) ++crossings;
  }
  return crossings % 2 == 1;
}

inline double iou_of_class(const cseg::SegMask& a, const cseg::SegMask& b, int cls,
                           bool& defined) {
  long inter = 0, uni = 0;
  for (Index i = 0; i < a.labels.rows(); ++i)
    for (Index j = 0; j < a.labels.cols(); ++j) {
      const bool in_a = a.labels(i, j) == cls;
      const bool in_b = b.labels(i, j) == cls;
      if (in_a && in_b) ++inter;
      if (in_a || in_b) ++uni;
    }
  defined = uni > 0;
  return defined ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check. The graph is rebuilt by `build` for every
// probe, so the closure must read the leaves' current values.
// ---------------------------------------------------------------------------

template <typename BuildFn>
double max_grad_error(const std::vector<cseg::Tensor<double>*>& leaves, BuildFn build,
                      double h = 1e-4) {
  cseg::Tensor<double> loss = build();
  if (loss.size() != 1) throw std::logic_error("grad check: loss must be scalar");
  loss.backward();

  std::vector<Eigen::Array<double, Eigen::Dynamic, 1>> analytic;
  analytic.reserve(leaves.size());
  for (cseg::Tensor<double>* t : leaves) {
    if (!t->has_grad()) throw std::logic_error("grad check: leaf received no gradient");
    analytic.push_back(t->grad());
    t->clear_grad();
  }

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& val = leaves[li]->value();
    for (Index i = 0; i < val.size(); ++i) {
      const double orig = val[i];
      double lp, lm;
      {
        cseg::NoGradGuard guard;
        val[i] = orig + h;
        lp = build().value()[0];
        val[i] = orig - h;
        lm = build().value()[0];
      }
      val[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[li][i];
      const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, std::abs(fd - an) / scale);
    }
  }
  return worst;
}

inline void fill_uniform(cseg::Tensor<double>& t, cseg::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
  for (Index i = 0; i < t.size(); ++i) t.value()[i] = cseg::uniform(rng, lo, hi);
}

}  // namespace oracle

#endif
