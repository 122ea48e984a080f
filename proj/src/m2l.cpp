#include "taskfmm/m2l.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "taskfmm/chebyshev.hpp"

namespace taskfmm {

std::array<SymmetryOp, 48> cube_symmetries() {
  static constexpr std::array<std::array<int, 3>, 6> perms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::array<SymmetryOp, 48> ops;
  int idx = 0;
  for (const auto& perm : perms)
    for (int bits = 0; bits < 8; ++bits) {
      SymmetryOp op;
      op.perm = perm;
      for (int a = 0; a < 3; ++a) op.sign[a] = (bits >> (2 - a)) & 1 ? -1 : 1;
      ops[idx++] = op;
    }
  return ops;
}

namespace {

std::array<int, 3> apply_op(const SymmetryOp& op, const std::array<int, 3>& v) {
  std::array<int, 3> u;
  for (int a = 0; a < 3; ++a) u[a] = op.sign[a] * v[op.perm[a]];
  return u;
}

int max_norm(const std::array<int, 3>& v) {
  return std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
}

bool is_canonical(const std::array<int, 3>& v) {
  return v[0] >= v[1] && v[1] >= v[2] && v[2] >= 0 && v[0] >= 2 && v[0] <= 3;
}

}  // namespace

const std::array<std::array<int, 3>, 16>& canonical_m2l_vectors() {
  static const std::array<std::array<int, 3>, 16> vectors = [] {
    std::array<std::array<int, 3>, 16> out;
    int idx = 0;
    for (int i = 2; i <= 3; ++i)
      for (int j = 0; j <= i; ++j)
        for (int k = 0; k <= j; ++k) out[idx++] = {i, j, k};
    return out;
  }();
  return vectors;
}

Canonicalization canonicalize_m2l_vector(const std::array<int, 3>& v) {
  const int d = max_norm(v);
  if (d < 2 || d > 3)
    throw std::invalid_argument("canonicalize_m2l_vector: max-norm must be 2 or 3");
  static const std::array<SymmetryOp, 48> ops = cube_symmetries();
  const auto& canon = canonical_m2l_vectors();
  for (const SymmetryOp& op : ops) {
    const auto u = apply_op(op, v);
    if (!is_canonical(u)) continue;
    for (int c = 0; c < 16; ++c)
      if (canon[c] == u) return {c, op};
  }
  throw std::logic_error("canonicalize_m2l_vector: no symmetry found");  // unreachable
}

std::vector<std::uint32_t> grid_permutation(const SymmetryOp& op, int order) {
  // Index image of the point map: coordinate a of the transformed node is
  // sign[a] * root[m_perm[a]], and root[l-1-m] = -root[m].
  std::vector<std::uint32_t> p(static_cast<std::size_t>(order) * order * order);
  std::array<int, 3> m;
  for (m[0] = 0; m[0] < order; ++m[0])
    for (m[1] = 0; m[1] < order; ++m[1])
      for (m[2] = 0; m[2] < order; ++m[2]) {
        std::uint32_t flat = 0;
        for (int a = 0; a < 3; ++a) {
          const int c = op.sign[a] > 0 ? m[op.perm[a]] : order - 1 - m[op.perm[a]];
          flat = flat * order + c;
        }
        p[(m[0] * order + m[1]) * order + m[2]] = flat;
      }
  return p;
}

Eigen::MatrixXd assemble_m2l(const std::array<int, 3>& v, int order, double width) {
  const std::vector<double> roots = chebyshev_roots(order);
  const int n3 = order * order * order;
  std::vector<std::array<double, 3>> nodes(n3);
  {
    int idx = 0;
    for (int a = 0; a < order; ++a)
      for (int b = 0; b < order; ++b)
        for (int c = 0; c < order; ++c)
          nodes[idx++] = {roots[a] * 0.5 * width, roots[b] * 0.5 * width,
                          roots[c] * 0.5 * width};
  }
  Eigen::MatrixXd k(n3, n3);
  for (int m = 0; m < n3; ++m)
    for (int n = 0; n < n3; ++n) {
      const double dx = nodes[m][0] - v[0] * width - nodes[n][0];
      const double dy = nodes[m][1] - v[1] * width - nodes[n][1];
      const double dz = nodes[m][2] - v[2] * width - nodes[n][2];
      k(m, n) = 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  return k;
}

CompressedOperator compress_m2l(const Eigen::MatrixXd& k, double eps) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(k, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const int full = static_cast<int>(sv.size());
  int rank = full;
  for (int i = 1; i < full; ++i)
    if (sv(i) <= eps * sv(0)) {
      rank = i;
      break;
    }
  CompressedOperator op;
  op.rank = rank;
  op.u = svd.matrixU().leftCols(rank);
  op.sigma = sv.head(rank);
  op.v = svd.matrixV().leftCols(rank);
  return op;
}

double m2l_cost_ratio(const CompressionReport& report, int order, double r316) {
  const double l3 = static_cast<double>(order) * order * order;
  return 2.0 * l3 * report.weighted_mean_rank / (r316 * r316);
}

M2LOperatorSet::M2LOperatorSet(int order, double eps) : order_(order), eps_(eps) {
  report_.order = order;
  report_.eps = eps;
  for (int c = 0; c < 16; ++c) {
    ops_[c] = compress_m2l(assemble_m2l(canonical_m2l_vectors()[c], order, 1.0), eps);
    report_.ranks[c] = ops_[c].rank;
  }
  build_transport();
}

void M2LOperatorSet::build_transport() {
  report_.multiplicity.fill(0);
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j)
      for (int k = -3; k <= 3; ++k) {
        const std::array<int, 3> v{i, j, k};
        if (max_norm(v) < 2) continue;
        const Canonicalization c = canonicalize_m2l_vector(v);
        Transport& t = transport_[m2l_vector_slot(v)];
        t.canonical = c.index;
        t.source_perm = grid_permutation(c.op, order_);
        t.target_perm = t.source_perm;  // scalar kernel on a symmetric grid
        ++report_.multiplicity[c.index];
      }
  double acc = 0;
  for (int c = 0; c < 16; ++c) acc += report_.multiplicity[c] * report_.ranks[c];
  report_.weighted_mean_rank = acc / 316.0;
}

bool M2LOperatorSet::vector_admissible(const std::array<int, 3>& v) const {
  const int d = max_norm(v);
  return d >= 2 && d <= 3;
}

int M2LOperatorSet::canonical_of(const std::array<int, 3>& v) const {
  return transport_[m2l_vector_slot(v)].canonical;
}

std::span<const std::uint32_t> M2LOperatorSet::source_perm(int vec_slot) const {
  return transport_[vec_slot].source_perm;
}

std::span<const std::uint32_t> M2LOperatorSet::target_perm(int vec_slot) const {
  return transport_[vec_slot].target_perm;
}

void M2LOperatorSet::apply_batch(int canonical, std::span<const M2LPairRef> pairs,
                                 const double* multipoles, double* locals, std::size_t stride,
                                 double scale) const {
  if (pairs.empty()) return;
  const CompressedOperator& op = ops_[canonical];
  const int n3 = order_ * order_ * order_;
  const int cols = static_cast<int>(pairs.size());

  Eigen::MatrixXd z(n3, cols);
  for (int j = 0; j < cols; ++j) {
    const double* w = multipoles + pairs[j].source * stride;
    const std::vector<std::uint32_t>& p = transport_[pairs[j].vec].source_perm;
    double* col = z.col(j).data();
    for (int n = 0; n < n3; ++n) col[p[n]] = w[n];
  }
  Eigen::MatrixXd y = op.u * (op.sigma.asDiagonal() * (op.v.transpose() * z));
  for (int j = 0; j < cols; ++j) {
    double* out = locals + pairs[j].target * stride;
    const std::vector<std::uint32_t>& p = transport_[pairs[j].vec].target_perm;
    const double* col = y.col(j).data();
    for (int m = 0; m < n3; ++m) out[m] += scale * col[p[m]];
  }
}

namespace {

constexpr std::uint64_t CACHE_MAGIC = 0x4c324d4d4d465400ull;

}  // namespace

bool M2LOperatorSet::save_cache(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) return false;
  bool ok = true;
  auto put = [&](const void* p, std::size_t bytes) {
    ok = ok && std::fwrite(p, 1, bytes, f) == bytes;
  };
  put(&CACHE_MAGIC, sizeof CACHE_MAGIC);
  const std::int32_t order32 = order_;
  put(&order32, sizeof order32);
  put(&eps_, sizeof eps_);
  for (int c = 0; c < 16; ++c) {
    const std::int32_t rank = ops_[c].rank;
    put(&rank, sizeof rank);
  }
  const int n3 = order_ * order_ * order_;
  for (int c = 0; c < 16; ++c) {
    const CompressedOperator& op = ops_[c];
    // row-major on disk
    for (int r = 0; r < n3 && ok; ++r)
      for (int s = 0; s < op.rank; ++s) put(&op.u(r, s), sizeof(double));
    put(op.sigma.data(), sizeof(double) * op.rank);
    for (int r = 0; r < n3 && ok; ++r)
      for (int s = 0; s < op.rank; ++s) put(&op.v(r, s), sizeof(double));
  }
  std::fclose(f);
  return ok;
}

std::optional<M2LOperatorSet> M2LOperatorSet::load_cache(const std::string& path, int order,
                                                         double eps) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return std::nullopt;
  bool ok = true;
  auto get = [&](void* p, std::size_t bytes) {
    ok = ok && std::fread(p, 1, bytes, f) == bytes;
  };
  std::uint64_t magic = 0;
  std::int32_t order32 = 0;
  double filed_eps = 0;
  get(&magic, sizeof magic);
  get(&order32, sizeof order32);
  get(&filed_eps, sizeof filed_eps);
  if (!ok || magic != CACHE_MAGIC || order32 != order || filed_eps != eps) {
    std::fclose(f);
    return std::nullopt;
  }
  M2LOperatorSet set;
  set.order_ = order;
  set.eps_ = eps;
  set.report_.order = order;
  set.report_.eps = eps;
  std::array<std::int32_t, 16> ranks{};
  for (int c = 0; c < 16; ++c) get(&ranks[c], sizeof(std::int32_t));
  const int n3 = order * order * order;
  for (int c = 0; c < 16 && ok; ++c) {
    CompressedOperator& op = set.ops_[c];
    op.rank = ranks[c];
    if (op.rank < 1 || op.rank > n3) {
      ok = false;
      break;
    }
    op.u.resize(n3, op.rank);
    op.sigma.resize(op.rank);
    op.v.resize(n3, op.rank);
    for (int r = 0; r < n3 && ok; ++r)
      for (int s = 0; s < op.rank; ++s) get(&op.u(r, s), sizeof(double));
    get(op.sigma.data(), sizeof(double) * op.rank);
    for (int r = 0; r < n3 && ok; ++r)
      for (int s = 0; s < op.rank; ++s) get(&op.v(r, s), sizeof(double));
    set.report_.ranks[c] = op.rank;
  }
  std::fclose(f);
  if (!ok) return std::nullopt;
  set.build_transport();
  return set;
}

}  // namespace taskfmm
