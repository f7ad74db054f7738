#include "simlab/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "simlab/rng.hpp"

namespace simlab {

// -------------------------------------------------------------- ParamShape

ParamShape ParamShape::of(const Model& model) {
  switch (model.kind()) {
    case ModelKind::two_layer:
      return two_layer(model.width(), model.input_dim());
    case ModelKind::mlp:
      return deep(model.widths());
    default:
      throw ShapeError("linear models carry no symmetry-group shape");
  }
}

ParamShape ParamShape::two_layer(int m, int d) {
  ParamShape s;
  s.kind = ModelKind::two_layer;
  s.m = m;
  s.d = d;
  return s;
}

ParamShape ParamShape::deep(std::vector<int> widths) {
  ParamShape s;
  s.kind = ModelKind::mlp;
  s.widths = std::move(widths);
  require_shape(s.widths.size() >= 2 && s.widths.back() == 1, "bad widths");
  return s;
}

int ParamShape::param_count() const {
  if (kind == ModelKind::two_layer) return (d + 1) * m;
  int n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l + 1] * (widths[l] + 1);
  return n;
}

int ParamShape::layer_count() const {
  return kind == ModelKind::two_layer ? 2 : static_cast<int>(widths.size()) - 1;
}

int ParamShape::hidden_width(int l) const {
  if (kind == ModelKind::two_layer) {
    require_shape(l == 1, "two-layer networks have one hidden layer");
    return m;
  }
  require_shape(l >= 1 && l < layer_count(), "hidden layer index out of range");
  return widths[l];
}

// ------------------------------------------------------ signed permutations

std::vector<int> identity_perm(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

std::vector<int> ones_sign(int n) { return std::vector<int>(n, 1); }

Vec SignedPermutation::apply(const Vec& v) const {
  require_shape(v.size() == static_cast<Eigen::Index>(source.size()),
                "vector length does not match group action");
  Vec out(v.size());
  for (std::size_t i = 0; i < source.size(); ++i) out(i) = sign[i] * v(source[i]);
  return out;
}

bool SignedPermutation::is_identity() const {
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] != static_cast<int>(i) || sign[i] != 1) return false;
  }
  return true;
}

namespace {

void check_perm(const std::vector<int>& p, int n, const char* what) {
  require_shape(static_cast<int>(p.size()) == n, what);
  std::vector<int> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i) require_shape(sorted[i] == i, what);
}

void check_sign(const std::vector<int>& s, int n, const char* what) {
  require_shape(static_cast<int>(s.size()) == n, what);
  for (int v : s) require_shape(v == 1 || v == -1, what);
}

// Boundary data for layer transitions: at boundary k (the activations a^(k)),
// out W^(l) row i pulls from perm[l+1][i], columns from perm[l][j], with signs
// left[l+1][i] * right[l][j].
struct BoundaryMaps {
  std::vector<std::vector<int>> perm;        // size L+1
  std::vector<std::vector<int>> left_sign;   // size L+1
  std::vector<std::vector<int>> right_sign;  // size L+1
};

BoundaryMaps boundary_maps(const GroupElement& g, const std::vector<int>& widths) {
  const int L = static_cast<int>(widths.size()) - 1;
  BoundaryMaps maps;
  maps.perm.resize(L + 1);
  maps.left_sign.resize(L + 1);
  maps.right_sign.resize(L + 1);
  for (int k = 0; k <= L; ++k) {
    maps.perm[k] = identity_perm(widths[k]);
    maps.left_sign[k] = ones_sign(widths[k]);
    maps.right_sign[k] = ones_sign(widths[k]);
  }
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, PermElement>) {
          require_shape(static_cast<int>(e.perm.size()) == L - 1,
                        "permutation element must cover hidden layers 1..L-1");
          for (int k = 1; k < L; ++k) {
            check_perm(e.perm[k - 1], widths[k], "bad permutation entry");
            maps.perm[k] = e.perm[k - 1];
          }
        } else if constexpr (std::is_same_v<T, SignElement>) {
          require_shape(static_cast<int>(e.lambda.size()) == L - 1,
                        "sign element must cover hidden layers 1..L-1");
          for (int k = 1; k < L; ++k) {
            check_sign(e.lambda[k - 1], widths[k], "bad sign entry");
            maps.left_sign[k] = e.lambda[k - 1];
            maps.right_sign[k] = e.lambda[k - 1];
          }
        } else if constexpr (std::is_same_v<T, SignPrimeElement>) {
          require_shape(static_cast<int>(e.lambda.size()) == L,
                        "sign-prime element must cover layers 1..L");
          for (int k = 1; k <= L; ++k) {
            check_sign(e.lambda[k - 1], widths[k], "bad sign entry");
            maps.left_sign[k] = e.lambda[k - 1];
            // no right factor: W^(l) -> Lambda^(l) W^(l)
          }
        } else if constexpr (std::is_same_v<T, CombinedElement>) {
          require_shape(static_cast<int>(e.lambda.size()) == L - 1 &&
                            static_cast<int>(e.perm.size()) == L - 1,
                        "combined element must cover hidden layers 1..L-1");
          for (int k = 1; k < L; ++k) {
            check_perm(e.perm[k - 1], widths[k], "bad permutation entry");
            check_sign(e.lambda[k - 1], widths[k], "bad sign entry");
            maps.perm[k] = e.perm[k - 1];
            maps.left_sign[k] = e.lambda[k - 1];
            maps.right_sign[k] = e.lambda[k - 1];
          }
        }
      },
      g);
  return maps;
}

int deep_index_W(const std::vector<int>& widths, int l, int i, int j) {
  int off = 0;
  for (int k = 0; k < l; ++k) off += widths[k + 1] * (widths[k] + 1);
  return off + i * widths[l] + j;
}

int deep_index_b(const std::vector<int>& widths, int l, int i) {
  return deep_index_W(widths, l, 0, 0) + widths[l + 1] * widths[l] + i;
}

SignedPermutation two_layer_flat_action(const GroupElement& g, int m, int d) {
  // Per-neuron source/sign; SignPrime additionally flips all outer weights by
  // the layer-2 sign.
  std::vector<int> src = identity_perm(m);
  std::vector<int> neuron_sign = ones_sign(m);
  std::vector<int> w_sign = ones_sign(m);
  int a_global = 1;
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, PermElement>) {
          require_shape(e.perm.size() == 1, "two-layer permutation has one layer");
          check_perm(e.perm[0], m, "bad permutation entry");
          src = e.perm[0];
        } else if constexpr (std::is_same_v<T, SignElement>) {
          require_shape(e.lambda.size() == 1, "two-layer sign has one layer");
          check_sign(e.lambda[0], m, "bad sign entry");
          neuron_sign = e.lambda[0];
          w_sign = e.lambda[0];
        } else if constexpr (std::is_same_v<T, SignPrimeElement>) {
          require_shape(e.lambda.size() == 2, "two-layer sign-prime has two layers");
          check_sign(e.lambda[0], m, "bad sign entry");
          check_sign(e.lambda[1], 1, "bad sign entry");
          w_sign = e.lambda[0];
          neuron_sign = ones_sign(m);
          a_global = e.lambda[1][0];
        } else if constexpr (std::is_same_v<T, CombinedElement>) {
          require_shape(e.lambda.size() == 1 && e.perm.size() == 1,
                        "two-layer combined has one layer");
          check_perm(e.perm[0], m, "bad permutation entry");
          check_sign(e.lambda[0], m, "bad sign entry");
          src = e.perm[0];
          neuron_sign = e.lambda[0];
          w_sign = e.lambda[0];
        }
      },
      g);
  SignedPermutation act;
  const int M = (d + 1) * m;
  act.source.resize(M);
  act.sign.resize(M);
  for (int i = 0; i < m; ++i) {
    act.source[(d + 1) * i] = (d + 1) * src[i];
    act.sign[(d + 1) * i] = neuron_sign[i] * a_global;
    for (int j = 0; j < d; ++j) {
      act.source[(d + 1) * i + 1 + j] = (d + 1) * src[i] + 1 + j;
      act.sign[(d + 1) * i + 1 + j] =
          std::holds_alternative<SignPrimeElement>(g) ? w_sign[i] : neuron_sign[i];
    }
  }
  return act;
}

SignedPermutation deep_flat_action(const GroupElement& g, const std::vector<int>& widths) {
  const int L = static_cast<int>(widths.size()) - 1;
  BoundaryMaps maps = boundary_maps(g, widths);
  int M = 0;
  for (int l = 0; l < L; ++l) M += widths[l + 1] * (widths[l] + 1);
  SignedPermutation act;
  act.source.resize(M);
  act.sign.resize(M);
  for (int l = 0; l < L; ++l) {
    const auto& po = maps.perm[l + 1];
    const auto& pi = maps.perm[l];
    const auto& lo = maps.left_sign[l + 1];
    const auto& ri = maps.right_sign[l];
    for (int i = 0; i < widths[l + 1]; ++i) {
      for (int j = 0; j < widths[l]; ++j) {
        const int dst = deep_index_W(widths, l, i, j);
        act.source[dst] = deep_index_W(widths, l, po[i], pi[j]);
        act.sign[dst] = lo[i] * ri[j];
      }
      const int dst = deep_index_b(widths, l, i);
      act.source[dst] = deep_index_b(widths, l, po[i]);
      act.sign[dst] = lo[i];
    }
  }
  return act;
}

}  // namespace

SignedPermutation flat_action(const GroupElement& g, const ParamShape& shape) {
  if (shape.kind == ModelKind::two_layer) {
    return two_layer_flat_action(g, shape.m, shape.d);
  }
  return deep_flat_action(g, shape.widths);
}

Vec apply(const GroupElement& g, const ParamShape& shape, const Vec& theta) {
  return flat_action(g, shape).apply(theta);
}

TwoLayerParams apply(const GroupElement& g, const TwoLayerParams& p) {
  ParamShape s = ParamShape::two_layer(p.m, p.d);
  return TwoLayerParams::unflatten(flat_action(g, s).apply(p.flatten()), p.m, p.d);
}

DeepParams apply(const GroupElement& g, const DeepParams& p) {
  ParamShape s = ParamShape::deep(p.widths);
  return DeepParams::unflatten(flat_action(g, s).apply(p.flatten()), p.widths);
}

CombinedElement compose(const CombinedElement& g1, const CombinedElement& g2) {
  require_shape(g1.perm.size() == g2.perm.size(), "combined elements differ in depth");
  CombinedElement out;
  for (std::size_t k = 0; k < g1.perm.size(); ++k) {
    const auto& p1 = g1.perm[k];
    const auto& p2 = g2.perm[k];
    const auto& l1 = g1.lambda[k];
    const auto& l2 = g2.lambda[k];
    require_shape(p1.size() == p2.size(), "combined elements differ in width");
    const int n = static_cast<int>(p1.size());
    std::vector<int> p(n), l(n);
    for (int i = 0; i < n; ++i) {
      // (L1, P1)(L2, P2) = (L1 P1 L2 P1^T, P1 P2) with source maps.
      p[i] = p2[p1[i]];
      l[i] = l1[i] * l2[p1[i]];
    }
    out.perm.push_back(std::move(p));
    out.lambda.push_back(std::move(l));
  }
  return out;
}

// ---------------------------------------------------------------- partitions

int NeuronPartition::m() const {
  int n = static_cast<int>(zero_block.size());
  for (const auto& b : blocks) n += static_cast<int>(b.size());
  return n;
}

std::string NeuronPartition::canonical_key() const {
  std::ostringstream os;
  os << (mode == PartitionMode::equality ? "E" : "S");
  os << "|z:";
  for (int i : zero_block) os << i << ",";
  for (const auto& b : blocks) {
    os << "|";
    for (int i : b) os << (mode == PartitionMode::sign ? (gamma[i] > 0 ? "+" : "-") : "")
                       << i << ",";
  }
  return os.str();
}

bool NeuronPartition::same_leaf(const NeuronPartition& other) const {
  return canonical_key() == other.canonical_key();
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  std::vector<int> rel;  // sign relative to parent

  explicit UnionFind(int n) : parent(n), rel(n, 1) {
    std::iota(parent.begin(), parent.end(), 0);
  }

  std::pair<int, int> find(int i) {
    if (parent[i] == i) return {i, 1};
    auto [root, sign] = find(parent[i]);
    parent[i] = root;
    rel[i] *= sign;
    return {root, rel[i]};
  }

  // Enforce x = sign * y. Returns false on an inconsistent merge.
  bool unite(int x, int y, int sign) {
    auto [rx, sx] = find(x);
    auto [ry, sy] = find(y);
    if (rx == ry) return sx == sign * sy;
    parent[ry] = rx;
    rel[ry] = sx * sign * sy;
    return true;
  }
};

std::vector<std::vector<int>> blocks_from_roots(int m, UnionFind& uf,
                                                const std::vector<bool>& skip) {
  std::vector<std::vector<int>> by_root(m);
  for (int i = 0; i < m; ++i) {
    if (skip[i]) continue;
    by_root[uf.find(i).first].push_back(i);
  }
  std::vector<std::vector<int>> blocks;
  for (int i = 0; i < m; ++i) {
    if (!by_root[i].empty()) blocks.push_back(by_root[i]);
  }
  // by_root groups are already leader-ordered and sorted
  return blocks;
}

void guard_band(double value, double tol, const char* what) {
  if (tol > 0.0 && value > tol && value < 2.0 * tol) {
    throw AmbiguityError(std::string(what) +
                         ": a pairwise distance falls in (tol, 2 tol); "
                         "classification refused");
  }
}

}  // namespace

NeuronPartition classify_partition(const TwoLayerParams& p, PartitionMode mode,
                                   double tol) {
  require_shape(tol >= 0.0, "classification tolerance must be nonnegative");
  const int m = p.m;
  NeuronPartition out;
  out.mode = mode;
  out.tol = tol;

  std::vector<Vec> u(m);
  for (int i = 0; i < m; ++i) u[i] = p.neuron(i);

  UnionFind uf(m);
  std::vector<bool> zero(m, false);

  if (mode == PartitionMode::equality) {
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        const double dist = inf_norm(u[i] - u[j]);
        guard_band(dist, tol, "equality classification");
        if (dist <= tol) uf.unite(i, j, 1);
      }
    }
    out.blocks = blocks_from_roots(m, uf, zero);
    return out;
  }

  // Sign mode.
  for (int i = 0; i < m; ++i) {
    const double n = inf_norm(u[i]);
    guard_band(n, tol, "sign classification (zero block)");
    zero[i] = n <= tol;
  }
  for (int i = 0; i < m; ++i) {
    if (zero[i]) continue;
    for (int j = i + 1; j < m; ++j) {
      if (zero[j]) continue;
      const double dp = inf_norm(u[i] - u[j]);
      const double dm = inf_norm(u[i] + u[j]);
      guard_band(dp, tol, "sign classification");
      guard_band(dm, tol, "sign classification");
      bool ok = true;
      if (dp <= tol) ok = uf.unite(i, j, 1);
      else if (dm <= tol) ok = uf.unite(i, j, -1);
      if (!ok) {
        throw AmbiguityError("sign classification: inconsistent sign relations");
      }
    }
  }
  for (int i = 0; i < m; ++i) {
    if (zero[i]) out.zero_block.push_back(i);
  }
  out.blocks = blocks_from_roots(m, uf, zero);
  // Canonical gamma: the leader of each block carries +1, zero entries +1.
  out.gamma.assign(m, 1);
  for (const auto& block : out.blocks) {
    const int leader = block.front();
    const int fix = uf.find(leader).second;
    for (int i : block) out.gamma[i] = uf.find(i).second * fix;
  }
  return out;
}

bool leaf_contains(const NeuronPartition& leaf, const TwoLayerParams& p) {
  if (leaf.m() != p.m) return false;
  std::vector<Vec> u(p.m);
  for (int i = 0; i < p.m; ++i) u[i] = p.neuron(i);

  if (leaf.mode == PartitionMode::equality) {
    for (const auto& block : leaf.blocks) {
      for (std::size_t k = 1; k < block.size(); ++k) {
        if (u[block[k]] != u[block[0]]) return false;
      }
    }
    // Cross-block representatives must differ.
    for (std::size_t a = 0; a < leaf.blocks.size(); ++a) {
      for (std::size_t b = a + 1; b < leaf.blocks.size(); ++b) {
        if (u[leaf.blocks[a][0]] == u[leaf.blocks[b][0]]) return false;
      }
    }
    return true;
  }

  for (int i : leaf.zero_block) {
    if (inf_norm(u[i]) != 0.0) return false;
  }
  std::vector<Vec> reps;
  for (const auto& block : leaf.blocks) {
    const Vec rep = leaf.gamma[block[0]] * u[block[0]];
    if (inf_norm(rep) == 0.0) return false;
    for (int i : block) {
      if (Vec(leaf.gamma[i] * u[i]) != rep) return false;
    }
    reps.push_back(rep);
  }
  for (std::size_t a = 0; a < reps.size(); ++a) {
    for (std::size_t b = a + 1; b < reps.size(); ++b) {
      if (reps[a] == reps[b] || reps[a] == Vec(-reps[b])) return false;
    }
  }
  return true;
}

long long stabilizer_order(const NeuronPartition& partition) {
  auto factorial = [](int n) {
    long long f = 1;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
  };
  long long order = 1;
  for (const auto& b : partition.blocks) order *= factorial(static_cast<int>(b.size()));
  if (partition.mode == PartitionMode::sign) {
    const int z = static_cast<int>(partition.zero_block.size());
    // Zero neurons admit arbitrary signs and arbitrary permutations among
    // themselves; nonzero blocks contribute their block permutations.
    order *= factorial(z);
    for (int k = 0; k < z; ++k) order *= 2;
  }
  return order;
}

namespace {

// Set partitions in restricted-growth-string order.
void rgs_partitions(int m, std::vector<std::vector<std::vector<int>>>& out) {
  std::vector<int> assign(m, 0);
  auto emit = [&] {
    int nblocks = 0;
    for (int a : assign) nblocks = std::max(nblocks, a + 1);
    std::vector<std::vector<int>> blocks(nblocks);
    for (int i = 0; i < m; ++i) blocks[assign[i]].push_back(i);
    out.push_back(std::move(blocks));
  };
  auto rec = [&](auto&& self, int i, int maxv) -> void {
    if (i == m) {
      emit();
      return;
    }
    for (int v = 0; v <= maxv + 1; ++v) {
      assign[i] = v;
      self(self, i + 1, std::max(maxv, v));
    }
  };
  if (m == 0) {
    out.push_back({});
    return;
  }
  rec(rec, 1, 0);  // assign[0] = 0 fixed
}

}  // namespace

std::vector<NeuronPartition> enumerate_leaves(int m, PartitionMode mode) {
  require_shape(m >= 1, "width must be positive");
  if (m > 6) throw BudgetError("leaf enumeration is limited to m <= 6");

  std::vector<NeuronPartition> leaves;
  if (mode == PartitionMode::equality) {
    std::vector<std::vector<std::vector<int>>> parts;
    rgs_partitions(m, parts);
    for (auto& blocks : parts) {
      NeuronPartition p;
      p.mode = PartitionMode::equality;
      p.blocks = std::move(blocks);
      leaves.push_back(std::move(p));
    }
    return leaves;
  }

  // Sign mode: choose the zero set, partition the rest, then assign canonical
  // gammas (block leaders fixed at +1, other members free).
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> zero, live;
    for (int i = 0; i < m; ++i) {
      if (mask & (1 << i)) zero.push_back(i);
      else live.push_back(i);
    }
    std::vector<std::vector<std::vector<int>>> parts;
    rgs_partitions(static_cast<int>(live.size()), parts);
    for (const auto& rel_blocks : parts) {
      std::vector<std::vector<int>> blocks;
      for (const auto& rb : rel_blocks) {
        std::vector<int> b;
        for (int k : rb) b.push_back(live[k]);
        blocks.push_back(std::move(b));
      }
      // Free sign slots: every non-leader member of every block.
      std::vector<int> free_slots;
      for (const auto& b : blocks) {
        for (std::size_t k = 1; k < b.size(); ++k) free_slots.push_back(b[k]);
      }
      const int nfree = static_cast<int>(free_slots.size());
      for (int smask = 0; smask < (1 << nfree); ++smask) {
        NeuronPartition p;
        p.mode = PartitionMode::sign;
        p.blocks = blocks;
        p.zero_block = zero;
        p.gamma.assign(m, 1);
        for (int k = 0; k < nfree; ++k) {
          if (smask & (1 << k)) p.gamma[free_slots[k]] = -1;
        }
        leaves.push_back(std::move(p));
      }
    }
  }
  return leaves;
}

TwoLayerParams construct_leaf_member(const NeuronPartition& leaf, int d,
                                     std::uint64_t seed) {
  const int m = leaf.m();
  Rng rng(seed);
  const double sep = 0.3;
  std::vector<Vec> reps;
  for (int attempt = 0; attempt < 200; ++attempt) {
    reps.clear();
    for (std::size_t p = 0; p < leaf.blocks.size(); ++p) {
      Vec u(d + 1);
      for (int k = 0; k <= d; ++k) u(k) = rng.gaussian();
      reps.push_back(u);
    }
    bool ok = true;
    for (const Vec& u : reps) {
      if (std::abs(u(0)) < sep || inf_norm(u.tail(d)) < sep) ok = false;
    }
    for (std::size_t a = 0; a < reps.size() && ok; ++a) {
      for (std::size_t b = a + 1; b < reps.size() && ok; ++b) {
        const Vec wa = reps[a].tail(d);
        const Vec wb = reps[b].tail(d);
        if (inf_norm(reps[a] - reps[b]) < sep || inf_norm(reps[a] + reps[b]) < sep ||
            inf_norm(wa - wb) < sep || inf_norm(wa + wb) < sep) {
          ok = false;
        }
      }
    }
    if (ok) break;
  }

  TwoLayerParams p;
  p.m = m;
  p.d = d;
  p.a = Vec::Zero(m);
  p.W = Mat::Zero(m, d);
  for (std::size_t blk = 0; blk < leaf.blocks.size(); ++blk) {
    for (int i : leaf.blocks[blk]) {
      const double g = leaf.mode == PartitionMode::sign ? leaf.gamma[i] : 1.0;
      p.set_neuron(i, Vec(g * reps[blk]));
    }
  }
  // zero-block neurons stay exactly zero
  return p;
}

// ------------------------------------------------------------- descriptors

namespace {

void require_two_layer(const ParamShape& shape, const char* what) {
  require_shape(shape.kind == ModelKind::two_layer, what);
}

void require_deep(const ParamShape& shape, const char* what) {
  require_shape(shape.kind == ModelKind::mlp, what);
}

// Constrained flat indices of a ZeroPattern on the given deep shape.
std::vector<int> zero_pattern_indices(const ZeroPattern& zp, const ParamShape& shape) {
  const auto& widths = shape.widths;
  const int L = static_cast<int>(widths.size()) - 1;
  require_shape(static_cast<int>(zp.hidden.size()) == L - 1,
                "zero pattern must list one index set per hidden layer");
  std::vector<std::vector<bool>> in_set(L + 1);
  for (int k = 0; k <= L; ++k) in_set[k].assign(widths[k], false);
  for (int k = 1; k < L; ++k) {
    for (int i : zp.hidden[k - 1]) {
      require_shape(i >= 0 && i < widths[k], "zero pattern index out of range");
      in_set[k][i] = true;
    }
  }
  std::vector<int> idx;
  for (int l = 0; l < L; ++l) {
    for (int i = 0; i < widths[l + 1]; ++i) {
      for (int j = 0; j < widths[l]; ++j) {
        const bool row_in = in_set[l + 1][i];
        const bool col_in = in_set[l][j];
        if (row_in != col_in) idx.push_back(deep_index_W(widths, l, i, j));
      }
      if (in_set[l + 1][i]) idx.push_back(deep_index_b(widths, l, i));
    }
  }
  return idx;
}

std::vector<int> row_zero_indices(const RowZero& rz, const ParamShape& shape) {
  const auto& widths = shape.widths;
  const int L = static_cast<int>(widths.size()) - 1;
  require_shape(rz.layer >= 0 && rz.layer < L, "row-zero layer out of range");
  require_shape(rz.row >= 0 && rz.row < widths[rz.layer + 1], "row-zero row out of range");
  std::vector<int> idx;
  for (int j = 0; j < widths[rz.layer]; ++j) {
    idx.push_back(deep_index_W(widths, rz.layer, rz.row, j));
  }
  idx.push_back(deep_index_b(widths, rz.layer, rz.row));
  return idx;
}

// Signed coordinate components of the joint fixed-point set of `elements`:
// comps[i] lists (coordinate, relative sign); contradictory components are
// pinned to zero.
struct FixedPointStructure {
  std::vector<std::vector<std::pair<int, int>>> comps;
  std::vector<bool> pinned;
};

FixedPointStructure fixed_point_structure(const FixedPointSet& fps,
                                          const ParamShape& shape) {
  const int M = shape.param_count();
  UnionFind uf(M);
  std::vector<bool> contradictory(M, false);
  for (const auto& g : fps.elements) {
    SignedPermutation act = flat_action(g, shape);
    for (int i = 0; i < M; ++i) {
      // fixed point: theta_i = sign[i] * theta_source[i]
      if (!uf.unite(i, act.source[i], act.sign[i])) {
        contradictory[uf.find(i).first] = true;
      }
    }
  }
  // A contradiction mark may sit on a stale root; recompute per final root.
  std::vector<bool> pin(M, false);
  for (int i = 0; i < M; ++i) {
    if (contradictory[i]) pin[uf.find(i).first] = true;
  }
  FixedPointStructure out;
  std::vector<int> comp_of(M, -1);
  out.pinned.clear();
  for (int i = 0; i < M; ++i) {
    auto [root, sign] = uf.find(i);
    if (comp_of[root] < 0) {
      comp_of[root] = static_cast<int>(out.comps.size());
      out.comps.emplace_back();
      out.pinned.push_back(pin[root]);
    }
    out.comps[comp_of[root]].push_back({i, sign});
  }
  return out;
}

Vec neuron_of(const ParamShape& shape, const Vec& theta, int i) {
  const int d = shape.d;
  Vec u(d + 1);
  u(0) = theta((d + 1) * i);
  u.tail(d) = theta.segment((d + 1) * i + 1, d);
  return u;
}

void set_neuron_of(const ParamShape& shape, Vec& theta, int i, const Vec& u) {
  const int d = shape.d;
  theta((d + 1) * i) = u(0);
  theta.segment((d + 1) * i + 1, d) = u.tail(d);
}

void check_neuron_index(const ParamShape& shape, int i) {
  require_shape(i >= 0 && i < shape.m, "neuron index out of range");
}

}  // namespace

double distance(const SimDescriptor& sim, const ParamShape& shape, const Vec& theta) {
  require_shape(theta.size() == shape.param_count(), "theta does not match shape");
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EqualityClass>) {
          require_two_layer(shape, "equality class needs a two-layer shape");
          double worst = 0.0;
          for (const auto& block : s.partition.blocks) {
            for (std::size_t a = 0; a < block.size(); ++a)
              for (std::size_t b = a + 1; b < block.size(); ++b)
                worst = std::max(worst,
                                 inf_norm(neuron_of(shape, theta, block[a]) -
                                          neuron_of(shape, theta, block[b])));
          }
          return worst;
        } else if constexpr (std::is_same_v<T, SignClass>) {
          require_two_layer(shape, "sign class needs a two-layer shape");
          double worst = 0.0;
          const auto& g = s.partition.gamma;
          for (const auto& block : s.partition.blocks) {
            for (std::size_t a = 0; a < block.size(); ++a)
              for (std::size_t b = a + 1; b < block.size(); ++b)
                worst = std::max(
                    worst,
                    inf_norm(g[block[a]] * neuron_of(shape, theta, block[a]) -
                             g[block[b]] * neuron_of(shape, theta, block[b])));
          }
          for (int i : s.partition.zero_block)
            worst = std::max(worst, inf_norm(neuron_of(shape, theta, i)));
          return worst;
        } else if constexpr (std::is_same_v<T, PairTie>) {
          require_two_layer(shape, "pair tie needs a two-layer shape");
          check_neuron_index(shape, s.i);
          check_neuron_index(shape, s.j);
          const Vec ui = neuron_of(shape, theta, s.i);
          const Vec uj = neuron_of(shape, theta, s.j);
          switch (s.relation) {
            case TieRelation::equal: return inf_norm(ui - uj);
            case TieRelation::negated: return inf_norm(ui + uj);
            case TieRelation::even_mirror: {
              const int d = shape.d;
              double worst = std::abs(ui(0) - uj(0));
              worst = std::max(worst, inf_norm(Vec(ui.tail(d) + uj.tail(d))));
              return worst;
            }
          }
          return 0.0;
        } else if constexpr (std::is_same_v<T, NeuronZero>) {
          require_two_layer(shape, "neuron zero needs a two-layer shape");
          check_neuron_index(shape, s.i);
          return inf_norm(neuron_of(shape, theta, s.i));
        } else if constexpr (std::is_same_v<T, WeightZero>) {
          require_two_layer(shape, "weight zero needs a two-layer shape");
          check_neuron_index(shape, s.i);
          return inf_norm(Vec(neuron_of(shape, theta, s.i).tail(shape.d)));
        } else if constexpr (std::is_same_v<T, OutputZero>) {
          require_two_layer(shape, "output zero needs a two-layer shape");
          check_neuron_index(shape, s.i);
          return std::abs(theta((shape.d + 1) * s.i));
        } else if constexpr (std::is_same_v<T, WeightTie>) {
          require_two_layer(shape, "weight tie needs a two-layer shape");
          check_neuron_index(shape, s.i);
          check_neuron_index(shape, s.j);
          const int d = shape.d;
          const Vec wi = neuron_of(shape, theta, s.i).tail(d);
          const Vec wj = neuron_of(shape, theta, s.j).tail(d);
          return inf_norm(Vec(wi - s.sign * wj));
        } else if constexpr (std::is_same_v<T, ZeroPattern>) {
          require_deep(shape, "zero pattern needs a deep shape");
          double worst = 0.0;
          for (int k : zero_pattern_indices(s, shape))
            worst = std::max(worst, std::abs(theta(k)));
          return worst;
        } else if constexpr (std::is_same_v<T, RowZero>) {
          require_deep(shape, "row zero needs a deep shape");
          double worst = 0.0;
          for (int k : row_zero_indices(s, shape))
            worst = std::max(worst, std::abs(theta(k)));
          return worst;
        } else if constexpr (std::is_same_v<T, FixedPointSet>) {
          double worst = 0.0;
          for (const auto& g : s.elements)
            worst = std::max(worst, inf_norm(apply(g, shape, theta) - theta));
          return worst;
        } else {
          return 0.0;  // FullSpace
        }
      },
      sim);
}

Vec project(const SimDescriptor& sim, const ParamShape& shape, const Vec& theta) {
  require_shape(theta.size() == shape.param_count(), "theta does not match shape");
  Vec out = theta;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EqualityClass>) {
          require_two_layer(shape, "equality class needs a two-layer shape");
          for (const auto& block : s.partition.blocks) {
            Vec mean = Vec::Zero(shape.d + 1);
            for (int i : block) mean += neuron_of(shape, theta, i);
            mean /= static_cast<double>(block.size());
            for (int i : block) set_neuron_of(shape, out, i, mean);
          }
        } else if constexpr (std::is_same_v<T, SignClass>) {
          require_two_layer(shape, "sign class needs a two-layer shape");
          const auto& g = s.partition.gamma;
          for (const auto& block : s.partition.blocks) {
            Vec mean = Vec::Zero(shape.d + 1);
            for (int i : block) mean += g[i] * neuron_of(shape, theta, i);
            mean /= static_cast<double>(block.size());
            for (int i : block) set_neuron_of(shape, out, i, Vec(g[i] * mean));
          }
          for (int i : s.partition.zero_block)
            set_neuron_of(shape, out, i, Vec::Zero(shape.d + 1));
        } else if constexpr (std::is_same_v<T, PairTie>) {
          require_two_layer(shape, "pair tie needs a two-layer shape");
          const Vec ui = neuron_of(shape, theta, s.i);
          const Vec uj = neuron_of(shape, theta, s.j);
          const int d = shape.d;
          switch (s.relation) {
            case TieRelation::equal: {
              const Vec mean = 0.5 * (ui + uj);
              set_neuron_of(shape, out, s.i, mean);
              set_neuron_of(shape, out, s.j, mean);
              break;
            }
            case TieRelation::negated: {
              const Vec v = 0.5 * (ui - uj);
              set_neuron_of(shape, out, s.i, v);
              set_neuron_of(shape, out, s.j, Vec(-v));
              break;
            }
            case TieRelation::even_mirror: {
              Vec vi(d + 1), vj(d + 1);
              const double t = 0.5 * (ui(0) + uj(0));
              const Vec w = 0.5 * (ui.tail(d) - uj.tail(d));
              vi(0) = t;
              vi.tail(d) = w;
              vj(0) = t;
              vj.tail(d) = -w;
              set_neuron_of(shape, out, s.i, vi);
              set_neuron_of(shape, out, s.j, vj);
              break;
            }
          }
        } else if constexpr (std::is_same_v<T, NeuronZero>) {
          require_two_layer(shape, "neuron zero needs a two-layer shape");
          set_neuron_of(shape, out, s.i, Vec::Zero(shape.d + 1));
        } else if constexpr (std::is_same_v<T, WeightZero>) {
          require_two_layer(shape, "weight zero needs a two-layer shape");
          out.segment((shape.d + 1) * s.i + 1, shape.d).setZero();
        } else if constexpr (std::is_same_v<T, OutputZero>) {
          require_two_layer(shape, "output zero needs a two-layer shape");
          out((shape.d + 1) * s.i) = 0.0;
        } else if constexpr (std::is_same_v<T, WeightTie>) {
          require_two_layer(shape, "weight tie needs a two-layer shape");
          const int d = shape.d;
          const Vec wi = theta.segment((d + 1) * s.i + 1, d);
          const Vec wj = theta.segment((d + 1) * s.j + 1, d);
          const Vec v = 0.5 * (wi + s.sign * wj);
          out.segment((d + 1) * s.i + 1, d) = v;
          out.segment((d + 1) * s.j + 1, d) = s.sign * v;
        } else if constexpr (std::is_same_v<T, ZeroPattern>) {
          require_deep(shape, "zero pattern needs a deep shape");
          for (int k : zero_pattern_indices(s, shape)) out(k) = 0.0;
        } else if constexpr (std::is_same_v<T, RowZero>) {
          require_deep(shape, "row zero needs a deep shape");
          for (int k : row_zero_indices(s, shape)) out(k) = 0.0;
        } else if constexpr (std::is_same_v<T, FixedPointSet>) {
          FixedPointStructure st = fixed_point_structure(s, shape);
          for (std::size_t c = 0; c < st.comps.size(); ++c) {
            if (st.pinned[c]) {
              for (auto [k, sg] : st.comps[c]) out(k) = 0.0;
              continue;
            }
            double mean = 0.0;
            for (auto [k, sg] : st.comps[c]) mean += sg * theta(k);
            mean /= static_cast<double>(st.comps[c].size());
            for (auto [k, sg] : st.comps[c]) out(k) = sg * mean;
          }
        }
        // FullSpace: identity
      },
      sim);
  return out;
}

bool member(const SimDescriptor& sim, const ParamShape& shape, const Vec& theta,
            double tol) {
  return distance(sim, shape, theta) <= tol;
}

int manifold_dim(const SimDescriptor& sim, const ParamShape& shape) {
  const int M = shape.param_count();
  return std::visit(
      [&](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EqualityClass>) {
          return (shape.d + 1) * static_cast<int>(s.partition.blocks.size());
        } else if constexpr (std::is_same_v<T, SignClass>) {
          return (shape.d + 1) * static_cast<int>(s.partition.blocks.size());
        } else if constexpr (std::is_same_v<T, PairTie>) {
          return M - (shape.d + 1);
        } else if constexpr (std::is_same_v<T, NeuronZero>) {
          return M - (shape.d + 1);
        } else if constexpr (std::is_same_v<T, WeightZero>) {
          return M - shape.d;
        } else if constexpr (std::is_same_v<T, OutputZero>) {
          return M - 1;
        } else if constexpr (std::is_same_v<T, WeightTie>) {
          return M - shape.d;
        } else if constexpr (std::is_same_v<T, ZeroPattern>) {
          return M - static_cast<int>(zero_pattern_indices(s, shape).size());
        } else if constexpr (std::is_same_v<T, RowZero>) {
          return M - static_cast<int>(row_zero_indices(s, shape).size());
        } else if constexpr (std::is_same_v<T, FixedPointSet>) {
          FixedPointStructure st = fixed_point_structure(s, shape);
          int dim = 0;
          for (std::size_t c = 0; c < st.comps.size(); ++c) {
            if (!st.pinned[c]) ++dim;
          }
          return dim;
        } else {
          return M;
        }
      },
      sim);
}

std::string kind_name(const SimDescriptor& sim) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EqualityClass>) return "equality_class";
        else if constexpr (std::is_same_v<T, SignClass>) return "sign_class";
        else if constexpr (std::is_same_v<T, PairTie>) return "pair_tie";
        else if constexpr (std::is_same_v<T, NeuronZero>) return "neuron_zero";
        else if constexpr (std::is_same_v<T, WeightZero>) return "weight_zero";
        else if constexpr (std::is_same_v<T, OutputZero>) return "output_zero";
        else if constexpr (std::is_same_v<T, WeightTie>) return "weight_tie";
        else if constexpr (std::is_same_v<T, ZeroPattern>) return "zero_pattern";
        else if constexpr (std::is_same_v<T, RowZero>) return "row_zero";
        else if constexpr (std::is_same_v<T, FixedPointSet>) return "fixed_point_set";
        else return "full_space";
      },
      sim);
}

// ------------------------------------------------------------------- JSON

namespace {

using nlohmann::json;

json blocks_to_json(const std::vector<std::vector<int>>& blocks) {
  json out = json::array();
  for (const auto& b : blocks) {
    json jb = json::array();
    for (int i : b) jb.push_back(i + 1);
    out.push_back(jb);
  }
  return out;
}

std::vector<std::vector<int>> blocks_from_json(const json& j) {
  std::vector<std::vector<int>> out;
  for (const auto& jb : j) {
    std::vector<int> b;
    for (const auto& v : jb) b.push_back(v.get<int>() - 1);
    out.push_back(std::move(b));
  }
  return out;
}

json indices_to_json(const std::vector<int>& v) {
  json out = json::array();
  for (int i : v) out.push_back(i + 1);
  return out;
}

std::vector<int> indices_from_json(const json& j) {
  std::vector<int> out;
  for (const auto& v : j) out.push_back(v.get<int>() - 1);
  return out;
}

}  // namespace

nlohmann::json partition_to_json(const NeuronPartition& p) {
  json j;
  j["mode"] = p.mode == PartitionMode::equality ? "equality" : "sign";
  j["blocks"] = blocks_to_json(p.blocks);
  if (p.mode == PartitionMode::sign) {
    j["zero_block"] = indices_to_json(p.zero_block);
    j["gamma"] = p.gamma;
  }
  j["tol"] = p.tol;
  return j;
}

NeuronPartition partition_from_json(const nlohmann::json& j) {
  NeuronPartition p;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "equality") p.mode = PartitionMode::equality;
  else if (mode == "sign") p.mode = PartitionMode::sign;
  else throw ConfigError("unknown partition mode: " + mode);
  p.blocks = blocks_from_json(j.at("blocks"));
  if (p.mode == PartitionMode::sign) {
    if (j.contains("zero_block")) p.zero_block = indices_from_json(j["zero_block"]);
    if (j.contains("gamma")) p.gamma = j["gamma"].get<std::vector<int>>();
    else p.gamma.assign(p.m(), 1);
  }
  p.tol = j.value("tol", 0.0);
  return p;
}

nlohmann::json group_element_to_json(const GroupElement& g) {
  json j;
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, PermElement>) {
          j["variant"] = "perm";
          j["perm"] = blocks_to_json(e.perm);
        } else if constexpr (std::is_same_v<T, SignElement>) {
          j["variant"] = "sign";
          j["lambda"] = e.lambda;
        } else if constexpr (std::is_same_v<T, SignPrimeElement>) {
          j["variant"] = "sign_prime";
          j["lambda"] = e.lambda;
        } else {
          j["variant"] = "combined";
          j["perm"] = blocks_to_json(e.perm);
          j["lambda"] = e.lambda;
        }
      },
      g);
  return j;
}

GroupElement group_element_from_json(const nlohmann::json& j) {
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "perm") {
    PermElement e;
    e.perm = blocks_from_json(j.at("perm"));
    return e;
  }
  if (variant == "sign") {
    SignElement e;
    e.lambda = j.at("lambda").get<std::vector<std::vector<int>>>();
    return e;
  }
  if (variant == "sign_prime") {
    SignPrimeElement e;
    e.lambda = j.at("lambda").get<std::vector<std::vector<int>>>();
    return e;
  }
  if (variant == "combined") {
    CombinedElement e;
    e.perm = blocks_from_json(j.at("perm"));
    e.lambda = j.at("lambda").get<std::vector<std::vector<int>>>();
    return e;
  }
  throw ConfigError("unknown group element variant: " + variant);
}

nlohmann::json sim_to_json(const SimDescriptor& sim) {
  json j;
  j["kind"] = kind_name(sim);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EqualityClass> || std::is_same_v<T, SignClass>) {
          j["partition"] = partition_to_json(s.partition);
        } else if constexpr (std::is_same_v<T, PairTie>) {
          j["i"] = s.i + 1;
          j["j"] = s.j + 1;
          j["relation"] = s.relation == TieRelation::equal     ? "equal"
                          : s.relation == TieRelation::negated ? "negated"
                                                               : "even_mirror";
        } else if constexpr (std::is_same_v<T, NeuronZero> ||
                             std::is_same_v<T, WeightZero> ||
                             std::is_same_v<T, OutputZero>) {
          j["i"] = s.i + 1;
        } else if constexpr (std::is_same_v<T, WeightTie>) {
          j["i"] = s.i + 1;
          j["j"] = s.j + 1;
          j["sign"] = s.sign;
        } else if constexpr (std::is_same_v<T, ZeroPattern>) {
          j["hidden_sets"] = blocks_to_json(s.hidden);
        } else if constexpr (std::is_same_v<T, RowZero>) {
          j["layer"] = s.layer + 1;
          j["row"] = s.row + 1;
        } else if constexpr (std::is_same_v<T, FixedPointSet>) {
          json els = json::array();
          for (const auto& g : s.elements) els.push_back(group_element_to_json(g));
          j["elements"] = els;
        }
      },
      sim);
  return j;
}

SimDescriptor sim_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "equality_class") return EqualityClass{partition_from_json(j.at("partition"))};
  if (kind == "sign_class") return SignClass{partition_from_json(j.at("partition"))};
  if (kind == "pair_tie") {
    PairTie s;
    s.i = j.at("i").get<int>() - 1;
    s.j = j.at("j").get<int>() - 1;
    const std::string rel = j.at("relation").get<std::string>();
    if (rel == "equal") s.relation = TieRelation::equal;
    else if (rel == "negated") s.relation = TieRelation::negated;
    else if (rel == "even_mirror") s.relation = TieRelation::even_mirror;
    else throw ConfigError("unknown pair_tie relation: " + rel);
    return s;
  }
  if (kind == "neuron_zero") return NeuronZero{j.at("i").get<int>() - 1};
  if (kind == "weight_zero") return WeightZero{j.at("i").get<int>() - 1};
  if (kind == "output_zero") return OutputZero{j.at("i").get<int>() - 1};
  if (kind == "weight_tie") {
    WeightTie s;
    s.i = j.at("i").get<int>() - 1;
    s.j = j.at("j").get<int>() - 1;
    s.sign = j.value("sign", 1);
    if (s.sign != 1 && s.sign != -1) throw ConfigError("weight_tie sign must be +-1");
    return s;
  }
  if (kind == "zero_pattern") return ZeroPattern{blocks_from_json(j.at("hidden_sets"))};
  if (kind == "row_zero") {
    return RowZero{j.at("layer").get<int>() - 1, j.at("row").get<int>() - 1};
  }
  if (kind == "fixed_point_set") {
    FixedPointSet s;
    for (const auto& je : j.at("elements")) s.elements.push_back(group_element_from_json(je));
    return s;
  }
  if (kind == "full_space") return FullSpace{};
  throw ConfigError("unknown descriptor kind: " + kind);
}

// ------------------------------------------------- infinitesimal invariance

InvarianceCheckReport check_infinitesimal_invariance(const Model& model,
                                                     const GroupElement& g,
                                                     const Vec& theta, int n_samples,
                                                     std::uint64_t seed) {
  const ParamShape shape = ParamShape::of(model);
  const SignedPermutation act = flat_action(g, shape);
  const double fixed_err = inf_norm(act.apply(theta) - theta);
  if (fixed_err > 1e-12) {
    throw std::invalid_argument(
        "theta is not a fixed point of the group element (residual " +
        std::to_string(fixed_err) + ")");
  }
  Rng rng(seed);
  InvarianceCheckReport report;
  report.n_samples = n_samples;
  for (int k = 0; k < n_samples; ++k) {
    Vec x(model.input_dim());
    for (int i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
    const Vec grad = model.grad_theta(theta, x);
    report.max_violation = std::max(report.max_violation, inf_norm(act.apply(grad) - grad));
  }
  return report;
}

}  // namespace simlab
