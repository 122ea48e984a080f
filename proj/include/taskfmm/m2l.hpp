#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace taskfmm {

//! Signed axis permutation of the cube symmetry group (48 elements):
//! (g v)[a] = sign[a] * v[perm[a]].
struct SymmetryOp {
  std::array<int, 3> perm{0, 1, 2};
  std::array<int, 3> sign{1, 1, 1};
};

std::array<SymmetryOp, 48> cube_symmetries();

//! The 316 transfer vectors (max-norm 2 or 3) reduce to 16 canonical classes
//! {(i,j,k) : 3 >= i >= j >= k >= 0, i >= 2}, listed lexicographically.
const std::array<std::array<int, 3>, 16>& canonical_m2l_vectors();

struct Canonicalization {
  int index;       // into canonical_m2l_vectors()
  SymmetryOp op;   // op applied to v yields the canonical vector
};
Canonicalization canonicalize_m2l_vector(const std::array<int, 3>& v);

//! Tensor-grid index permutation induced by a symmetry op: axes permuted, and
//! on sign-flipped axes the node index is reversed (the root set is symmetric
//! about 0). Returns p with p[flat(m)] = flat(g m).
std::vector<std::uint32_t> grid_permutation(const SymmetryOp& op, int order);

//! Dense M2L operator for transfer vector v between cells of the given width:
//! entry [m][n] = P(node_m, v*width + node_n), nodes at roots*(width/2).
Eigen::MatrixXd assemble_m2l(const std::array<int, 3>& v, int order, double width);

struct CompressedOperator {
  Eigen::MatrixXd u;      // l^3 x rank
  Eigen::VectorXd sigma;  // rank singular values
  Eigen::MatrixXd v;      // l^3 x rank
  int rank;
};

//! Truncated SVD with rank rule r = min{k : sigma_{k+1}/sigma_1 <= eps}
//! (full rank if never satisfied).
CompressedOperator compress_m2l(const Eigen::MatrixXd& k, double eps);

struct CompressionReport {
  int order = 0;
  double eps = 0;
  std::array<int, 16> ranks{};
  std::array<int, 16> multiplicity{};  // of 316 vectors per class
  double weighted_mean_rank = 0;       // sum(mult*rank)/316
};

//! Compressed-vs-dense per-cell M2L cost: 2 l^3 rbar16 / r316^2, where r316 is
//! the externally supplied dense interaction rank.
double m2l_cost_ratio(const CompressionReport& report, int order, double r316);

//! One far-field pair inside a batched M2L application; cell indices are
//! level-local, `vec` indexes the 7^3 transfer-vector table.
struct M2LPairRef {
  std::uint32_t target;
  std::uint32_t source;
  std::uint16_t vec;
};

//! Flat index of transfer vector v (components in [-3,3]) in the 343 table.
inline int m2l_vector_slot(const std::array<int, 3>& v) {
  return (v[0] + 3) * 49 + (v[1] + 3) * 7 + (v[2] + 3);
}

//! The 16 compressed operators assembled at unit reference width, plus the
//! per-vector transport data {canonical id, source-side and target-side grid
//! permutations}. The kernel is homogeneous of degree -1, so the operator for
//! cell width w is the unit-width operator times 1/w; across levels of one
//! tree that is a factor 2 per level of depth.
class M2LOperatorSet {
 public:
  M2LOperatorSet(int order, double eps);

  int order() const { return order_; }
  double eps() const { return eps_; }
  const CompressedOperator& op(int canonical) const { return ops_[canonical]; }
  const CompressionReport& report() const { return report_; }

  bool vector_admissible(const std::array<int, 3>& v) const;
  int canonical_of(const std::array<int, 3>& v) const;
  std::span<const std::uint32_t> source_perm(int vec_slot) const;
  std::span<const std::uint32_t> target_perm(int vec_slot) const;

  //! locals[target] += scale * K_vec * multipoles[source] for every pair, all
  //! pairs sharing one canonical class so the core runs as two matrix-matrix
  //! products against the gathered/permuted source columns.
  void apply_batch(int canonical, std::span<const M2LPairRef> pairs,
                   const double* multipoles, double* locals, std::size_t stride,
                   double scale) const;

  //! Binary cache keyed by (order, eps): header {magic, order, eps, 16 ranks}
  //! followed by row-major u, sigma, v arrays per class.
  bool save_cache(const std::string& path) const;
  static std::optional<M2LOperatorSet> load_cache(const std::string& path, int order, double eps);

 private:
  M2LOperatorSet() = default;
  void build_transport();

  int order_ = 0;
  double eps_ = 0;
  std::array<CompressedOperator, 16> ops_;
  CompressionReport report_;
  struct Transport {
    int canonical = -1;
    std::vector<std::uint32_t> source_perm;
    std::vector<std::uint32_t> target_perm;
  };
  std::array<Transport, 343> transport_;
};

}  // namespace taskfmm
