// Finite-difference gradient suite shared by the unit tests and the
// acceptance gate. Every differentiable op is checked on randomized shapes
// with 64-bit central differences; non-scalar ops are reduced to a scalar
// through the sigmoid cross-entropy loss against fixed random targets (the
// loss itself is checked directly on leaf logits).

#ifndef CASCADESEG_TEST_GRADCHECK_HPP
#define CASCADESEG_TEST_GRADCHECK_HPP

#include <string>
#include <vector>

#include "cascadeseg/mask.hpp"
#include "cascadeseg/ops.hpp"
#include "oracles.hpp"

namespace gradsuite {

using cseg::Index;
using cseg::Rng;
using DTensor = cseg::Tensor<double>;

struct OpReport {
  std::string op;
  int shapes = 0;
  double max_err = 0.0;
};

inline DTensor leaf(std::vector<Index> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  DTensor t = DTensor::zeros(std::move(shape), true);
  oracle::fill_uniform(t, rng, lo, hi);
  return t;
}

inline DTensor targets_like(const std::vector<Index>& shape, Rng& rng) {
  DTensor t = DTensor::zeros(shape);
  oracle::fill_uniform(t, rng, 0.05, 0.95);
  return t;
}

/// Values guaranteed pairwise-distinct by more than any finite-difference
/// probe, so maxpool argmaxes cannot flip during the check.
inline DTensor distinct_leaf(std::vector<Index> shape, Rng& rng) {
  DTensor t = DTensor::zeros(std::move(shape), true);
  const Index n = t.size();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (Index i = 0; i < n; ++i)
    t.value()[i] = -1.0 + 2.0 *
                              (static_cast<double>(perm[static_cast<std::size_t>(i)]) +
                               cseg::uniform(rng, 0.1, 0.9)) /
                              static_cast<double>(n);
  return t;
}

inline std::vector<OpReport> run(int shapes_per_op, std::uint64_t seed = 0x5eedULL) {
  using cseg::uniform_index;
  Rng rng(seed);
  std::vector<OpReport> reports;

  auto record = [&reports](const std::string& op, double err) {
    for (auto& r : reports)
      if (r.op == op) {
        ++r.shapes;
        r.max_err = std::max(r.max_err, err);
        return;
      }
    reports.push_back({op, 1, err});
  };

  for (int i = 0; i < shapes_per_op; ++i) {
    // conv2d: draw a geometry that tiles exactly by construction.
    {
      Index k, s, p, h, w;
      do {
        k = uniform_index(rng, 1, 3);
        s = uniform_index(rng, 1, 2);
        p = uniform_index(rng, 0, k / 2);
        h = s * (uniform_index(rng, 1, 4) - 1) + k - 2 * p;
        w = s * (uniform_index(rng, 1, 4) - 1) + k - 2 * p;
      } while (h < 1 || w < 1);
      const Index C = uniform_index(rng, 1, 3), F = uniform_index(rng, 1, 3);
      DTensor x = leaf({C, h, w}, rng);
      DTensor wt = leaf({F, C, k, k}, rng);
      DTensor b = leaf({F}, rng);
      DTensor out = [&] {
        cseg::NoGradGuard g;
        return cseg::conv2d(x, wt, b, s, p);
      }();
      const DTensor t = targets_like(out.shape(), rng);
      record("conv2d", oracle::max_grad_error({&x, &wt, &b}, [&] {
               return cseg::sigmoid_ce_loss(cseg::conv2d(x, wt, b, s, p), t, 1.0);
             }));
    }

    // conv2d_transpose.
    {
      Index k, s, crop, h, w;
      do {
        k = uniform_index(rng, 1, 4);
        s = uniform_index(rng, 1, 2);
        crop = uniform_index(rng, 0, (k - 1) / 2);
        h = uniform_index(rng, 1, 4);
        w = uniform_index(rng, 1, 4);
      } while (s * (h - 1) + k - 2 * crop < 1 || s * (w - 1) + k - 2 * crop < 1);
      const Index C = uniform_index(rng, 1, 3), F = uniform_index(rng, 1, 3);
      DTensor x = leaf({C, h, w}, rng);
      DTensor wt = leaf({C, F, k, k}, rng);
      DTensor out = [&] {
        cseg::NoGradGuard g;
        return cseg::conv2d_transpose(x, wt, s, crop);
      }();
      const DTensor t = targets_like(out.shape(), rng);
      record("conv2d_transpose", oracle::max_grad_error({&x, &wt}, [&] {
               return cseg::sigmoid_ce_loss(cseg::conv2d_transpose(x, wt, s, crop), t, 1.0);
             }));
    }

    // maxpool2 (distinct values so the argmax is stable under probing).
    {
      const Index C = uniform_index(rng, 1, 3);
      const Index h = uniform_index(rng, 1, 6), w = uniform_index(rng, 1, 6);
      DTensor x = distinct_leaf({C, h, w}, rng);
      const DTensor t = targets_like({C, (h + 1) / 2, (w + 1) / 2}, rng);
      record("maxpool2", oracle::max_grad_error({&x}, [&] {
               return cseg::sigmoid_ce_loss(cseg::maxpool2(x), t, 1.0);
             }));
    }

    // relu (values bounded away from the kink).
    {
      const Index C = uniform_index(rng, 1, 3);
      const Index h = uniform_index(rng, 1, 5), w = uniform_index(rng, 1, 5);
      DTensor x = DTensor::zeros({C, h, w}, true);
      for (Index j = 0; j < x.size(); ++j) {
        const double mag = cseg::uniform(rng, 0.1, 1.0);
        x.value()[j] = cseg::uniform(rng, 0.0, 1.0) < 0.5 ? -mag : mag;
      }
      const DTensor t = targets_like(x.shape(), rng);
      record("relu", oracle::max_grad_error({&x}, [&] {
               return cseg::sigmoid_ce_loss(cseg::relu(x), t, 1.0);
             }));
    }

    // crop_add.
    {
      const Index C = uniform_index(rng, 1, 3);
      const Index h = uniform_index(rng, 1, 4), w = uniform_index(rng, 1, 4);
      const Index dy = uniform_index(rng, 0, 2), dx = uniform_index(rng, 0, 2);
      DTensor coarse = leaf({C, h, w}, rng);
      DTensor skip = leaf({C, h + 2 * dy, w + 2 * dx}, rng);
      const DTensor t = targets_like(coarse.shape(), rng);
      record("crop_add", oracle::max_grad_error({&coarse, &skip}, [&] {
               return cseg::sigmoid_ce_loss(cseg::crop_add(coarse, skip), t, 1.0);
             }));
    }

    // sigmoid_ce_loss directly on leaf logits.
    {
      const Index C = uniform_index(rng, 1, 4);
      const Index h = uniform_index(rng, 1, 5), w = uniform_index(rng, 1, 5);
      DTensor z = leaf({C, h, w}, rng, -2.0, 2.0);
      const DTensor t = targets_like(z.shape(), rng);
      const double scale = cseg::uniform(rng, 0.2, 2.0);
      record("sigmoid_ce_loss", oracle::max_grad_error({&z}, [&] {
               return cseg::sigmoid_ce_loss(z, t, scale);
             }));
    }

    // softmax_ce_loss directly on leaf logits.
    {
      const Index C = uniform_index(rng, 2, 5);
      const Index h = uniform_index(rng, 1, 5), w = uniform_index(rng, 1, 5);
      DTensor z = leaf({C, h, w}, rng, -2.0, 2.0);
      cseg::SegMask labels(h, w);
      for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < w; ++c)
          labels.labels(r, c) = static_cast<std::uint8_t>(uniform_index(rng, 0, C - 1));
      record("softmax_ce_loss",
             oracle::max_grad_error({&z}, [&] { return cseg::softmax_ce_loss(z, labels); }));
    }
  }
  return reports;
}

}  // namespace gradsuite

#endif
