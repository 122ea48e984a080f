#pragma once

#include <span>
#include <vector>

#include "taskfmm/geometry.hpp"

namespace taskfmm {

double chebyshev_t(int n, double x);  // first kind, three-term recurrence
double chebyshev_u(int n, double x);  // second kind

//! Roots of T_order: cos((2m-1)pi/(2*order)), m = 1..order, descending in x.
std::vector<double> chebyshev_roots(int order);

//! 1-D interpolation polynomial attached to root xm,
//!   S(xm, x) = 1/l + (2/l) sum_{n=1}^{l-1} T_n(xm) T_n(x),
//! and its x-derivative via T_n' = n U_{n-1}.
double s_eval(double root, double x, int order);
double s_grad(double root, double x, int order);

//! Tensor-product Chebyshev interpolation of order l per axis. Expansions are
//! vectors of l^3 coefficients, row-major with the first axis slowest.
//! Operators never allocate; callers pass cell-sized spans.
class InterpolationEngine {
 public:
  explicit InterpolationEngine(int order);

  int order() const { return order_; }
  int coeff_count() const { return order_ * order_ * order_; }
  const std::vector<double>& roots() const { return roots_; }

  //! out[m] = S(root_m, x) for all m; O(l^2). Gradient likewise.
  void eval_all(double x, std::span<double> out) const;
  void grad_all(double x, std::span<double> out) const;

  //! Child-to-parent 1-D transfer for one axis half (side 0 = lower):
  //! row-major l x l, entry [m][k] = S(root_m, map_side(root_k)) with
  //! map_side(t) = t/2 - 1/2 or t/2 + 1/2. Summing the rows elementwise gives
  //! the all-ones vector (partition of unity at the mapped nodes).
  const std::vector<double>& child_matrix(int side) const { return child_[side]; }

  //! Particle-to-multipole: multipole[n] += w_j * S_n(mapped position) over the
  //! given particles. Positions are mapped into [-1,1]^3 by `cell`.
  void p2m(const Cube& cell, std::span<const double> px, std::span<const double> py,
           std::span<const double> pz, std::span<const double> pw,
           std::span<double> multipole) const;

  //! Local-to-particle: adds the interpolated potential and its force
  //! (minus the field gradient, chain-rule factor 2/width per axis) to the
  //! accumulators. local must hold the cell's complete local expansion.
  void l2p(const Cube& cell, std::span<const double> local, std::span<const double> px,
           std::span<const double> py, std::span<const double> pz,
           std::span<double> potential, std::span<double> fx, std::span<double> fy,
           std::span<double> fz) const;

  //! parent += T_octant * child, where T_octant is the Kronecker product of the
  //! per-axis child matrices. Applied as three successive 1-D passes, O(l^4).
  //! Octant bit layout matches the Morton triple: (i&1)<<2 | (j&1)<<1 | (k&1).
  void m2m(int octant, std::span<const double> child, std::span<double> parent) const;

  //! child += T_octant^T * parent; transpose-direction counterpart of m2m.
  void l2l(int octant, std::span<const double> parent, std::span<double> child) const;

 private:
  void tensor_apply(const double* m0, const double* m1, const double* m2,
                    std::span<const double> in, std::span<double> out) const;

  int order_;
  std::vector<double> roots_;
  std::vector<double> tn_at_roots_;        // [m][n] = T_n(root_m), n = 1..l-1
  std::array<std::vector<double>, 2> child_;
  std::array<std::vector<double>, 2> child_t_;  // [k][m] copies, the layout m2m's passes read
};

}  // namespace taskfmm
