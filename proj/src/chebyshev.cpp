#include "taskfmm/chebyshev.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace taskfmm {

namespace {

constexpr int MAX_ORDER = 10;

}  // namespace

double chebyshev_t(int n, double x) {
  double tp = 1.0, t = x;
  if (n == 0) return tp;
  for (int i = 1; i < n; ++i) {
    const double next = 2.0 * x * t - tp;
    tp = t;
    t = next;
  }
  return t;
}

double chebyshev_u(int n, double x) {
  double up = 1.0, u = 2.0 * x;
  if (n == 0) return up;
  for (int i = 1; i < n; ++i) {
    const double next = 2.0 * x * u - up;
    up = u;
    u = next;
  }
  return u;
}

std::vector<double> chebyshev_roots(int order) {
  std::vector<double> roots(order);
  for (int m = 0; m < order; ++m)
    roots[m] = std::cos((2 * m + 1) * std::numbers::pi / (2 * order));
  return roots;
}

double s_eval(double root, double x, int order) {
  double acc = 1.0 / order;
  for (int n = 1; n < order; ++n) acc += (2.0 / order) * chebyshev_t(n, root) * chebyshev_t(n, x);
  return acc;
}

double s_grad(double root, double x, int order) {
  double acc = 0.0;
  for (int n = 1; n < order; ++n)
    acc += (2.0 / order) * chebyshev_t(n, root) * n * chebyshev_u(n - 1, x);
  return acc;
}

InterpolationEngine::InterpolationEngine(int order) : order_(order) {
  if (order < 2 || order > MAX_ORDER)
    throw std::invalid_argument("InterpolationEngine: order must be in [2, 10]");
  roots_ = chebyshev_roots(order);
  tn_at_roots_.resize(static_cast<std::size_t>(order) * (order - 1));
  for (int m = 0; m < order; ++m)
    for (int n = 1; n < order; ++n)
      tn_at_roots_[m * (order - 1) + (n - 1)] = chebyshev_t(n, roots_[m]);
  for (int side = 0; side < 2; ++side) {
    child_[side].resize(static_cast<std::size_t>(order) * order);
    child_t_[side].resize(static_cast<std::size_t>(order) * order);
    const double shift = side == 0 ? -0.5 : 0.5;
    for (int m = 0; m < order; ++m)
      for (int k = 0; k < order; ++k) {
        const double v = s_eval(roots_[m], 0.5 * roots_[k] + shift, order);
        child_[side][m * order + k] = v;
        child_t_[side][k * order + m] = v;
      }
  }
}

void InterpolationEngine::eval_all(double x, std::span<double> out) const {
  const int l = order_;
  double t[MAX_ORDER];
  double tp = 1.0, tc = x;
  for (int n = 1; n < l; ++n) {
    t[n - 1] = tc;
    const double next = 2.0 * x * tc - tp;
    tp = tc;
    tc = next;
  }
  const double c0 = 1.0 / l, c1 = 2.0 / l;
  for (int m = 0; m < l; ++m) {
    double acc = 0.0;
    const double* row = &tn_at_roots_[m * (l - 1)];
    for (int n = 0; n < l - 1; ++n) acc += row[n] * t[n];
    out[m] = c0 + c1 * acc;
  }
}

void InterpolationEngine::grad_all(double x, std::span<double> out) const {
  const int l = order_;
  double dt[MAX_ORDER];  // dT_n/dx = n U_{n-1}
  double up = 1.0, uc = 2.0 * x;
  for (int n = 1; n < l; ++n) {
    dt[n - 1] = n * up;
    const double next = 2.0 * x * uc - up;
    up = uc;
    uc = next;
  }
  const double c1 = 2.0 / l;
  for (int m = 0; m < l; ++m) {
    double acc = 0.0;
    const double* row = &tn_at_roots_[m * (l - 1)];
    for (int n = 0; n < l - 1; ++n) acc += row[n] * dt[n];
    out[m] = c1 * acc;
  }
}

void InterpolationEngine::p2m(const Cube& cell, std::span<const double> px,
                              std::span<const double> py, std::span<const double> pz,
                              std::span<const double> pw, std::span<double> multipole) const {
  const int l = order_;
  const double inv = 2.0 / cell.width;
  double sx[MAX_ORDER], sy[MAX_ORDER], sz[MAX_ORDER];
  for (std::size_t j = 0; j < px.size(); ++j) {
    eval_all((px[j] - cell.center[0]) * inv, {sx, static_cast<std::size_t>(l)});
    eval_all((py[j] - cell.center[1]) * inv, {sy, static_cast<std::size_t>(l)});
    eval_all((pz[j] - cell.center[2]) * inv, {sz, static_cast<std::size_t>(l)});
    const double w = pw[j];
    double* out = multipole.data();
    for (int n1 = 0; n1 < l; ++n1) {
      const double wx = w * sx[n1];
      for (int n2 = 0; n2 < l; ++n2) {
        const double wxy = wx * sy[n2];
        for (int n3 = 0; n3 < l; ++n3) *out++ += wxy * sz[n3];
      }
    }
  }
}

void InterpolationEngine::l2p(const Cube& cell, std::span<const double> local,
                              std::span<const double> px, std::span<const double> py,
                              std::span<const double> pz, std::span<double> potential,
                              std::span<double> fx, std::span<double> fy,
                              std::span<double> fz) const {
  const int l = order_;
  const double inv = 2.0 / cell.width;
  double sx[MAX_ORDER], sy[MAX_ORDER], sz[MAX_ORDER];
  double gx[MAX_ORDER], gy[MAX_ORDER], gz[MAX_ORDER];
  for (std::size_t j = 0; j < px.size(); ++j) {
    const double rx = (px[j] - cell.center[0]) * inv;
    const double ry = (py[j] - cell.center[1]) * inv;
    const double rz = (pz[j] - cell.center[2]) * inv;
    eval_all(rx, {sx, static_cast<std::size_t>(l)});
    eval_all(ry, {sy, static_cast<std::size_t>(l)});
    eval_all(rz, {sz, static_cast<std::size_t>(l)});
    grad_all(rx, {gx, static_cast<std::size_t>(l)});
    grad_all(ry, {gy, static_cast<std::size_t>(l)});
    grad_all(rz, {gz, static_cast<std::size_t>(l)});
    double pot = 0, dx = 0, dy = 0, dz = 0;
    const double* in = local.data();
    for (int n1 = 0; n1 < l; ++n1) {
      for (int n2 = 0; n2 < l; ++n2) {
        const double ss = sx[n1] * sy[n2];
        const double gs = gx[n1] * sy[n2];
        const double sg = sx[n1] * gy[n2];
        for (int n3 = 0; n3 < l; ++n3) {
          const double c = *in++;
          pot += c * ss * sz[n3];
          dx += c * gs * sz[n3];
          dy += c * sg * sz[n3];
          dz += c * ss * gz[n3];
        }
      }
    }
    potential[j] += pot;
    // force is minus the field gradient; inv is the reference-coordinate chain factor
    fx[j] -= inv * dx;
    fy[j] -= inv * dy;
    fz[j] -= inv * dz;
  }
}

//! dst(logical (rest, n)) = sum_k Mt[k][n] * src(logical (k, rest)); after three
//! passes the axes have cycled back into place. Mt is the transposed 1-D matrix
//! so the inner loop runs contiguous in both operands.
namespace {

void tensor_step(const double* mt, const double* src, double* dst, int l) {
  const int rest = l * l;
  for (int r = 0; r < rest; ++r)
    for (int n = 0; n < l; ++n) dst[r * l + n] = 0.0;
  for (int k = 0; k < l; ++k) {
    const double* mrow = mt + k * l;
    const double* srow = src + k * rest;
    for (int r = 0; r < rest; ++r) {
      const double s = srow[r];
      double* drow = dst + r * l;
      for (int n = 0; n < l; ++n) drow[n] += mrow[n] * s;
    }
  }
}

}  // namespace

void InterpolationEngine::tensor_apply(const double* m0, const double* m1, const double* m2,
                                       std::span<const double> in, std::span<double> out) const {
  const int l = order_;
  double t1[MAX_ORDER * MAX_ORDER * MAX_ORDER];
  double t2[MAX_ORDER * MAX_ORDER * MAX_ORDER];
  tensor_step(m0, in.data(), t1, l);
  tensor_step(m1, t1, t2, l);
  tensor_step(m2, t2, out.data(), l);
}

void InterpolationEngine::m2m(int octant, std::span<const double> child,
                              std::span<double> parent) const {
  double res[MAX_ORDER * MAX_ORDER * MAX_ORDER];
  const int sx = (octant >> 2) & 1, sy = (octant >> 1) & 1, sz = octant & 1;
  tensor_apply(child_t_[sx].data(), child_t_[sy].data(), child_t_[sz].data(), child,
               {res, child.size()});
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] += res[i];
}

void InterpolationEngine::l2l(int octant, std::span<const double> parent,
                              std::span<double> child) const {
  double res[MAX_ORDER * MAX_ORDER * MAX_ORDER];
  const int sx = (octant >> 2) & 1, sy = (octant >> 1) & 1, sz = octant & 1;
  tensor_apply(child_[sx].data(), child_[sy].data(), child_[sz].data(), parent,
               {res, parent.size()});
  for (std::size_t i = 0; i < child.size(); ++i) child[i] += res[i];
}

}  // namespace taskfmm
