#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "simlab/liegeom.hpp"
#include "simlab/symmetry.hpp"
#include "test_support.hpp"

using namespace simlab;
using namespace simlab::testing;

namespace {

// Exhaustive sweep oracle: every (delta, pi) in {-1,1}^m x S_m fixing theta.
long long count_fixing_elements(const TwoLayerParams& p) {
  std::vector<int> perm(p.m);
  std::iota(perm.begin(), perm.end(), 0);
  long long count = 0;
  const Vec flat = p.flatten();
  const ParamShape shape = ParamShape::two_layer(p.m, p.d);
  do {
    for (int mask = 0; mask < (1 << p.m); ++mask) {
      CombinedElement g;
      g.perm = {perm};
      g.lambda = {std::vector<int>(p.m, 1)};
      for (int i = 0; i < p.m; ++i) {
        if (mask & (1 << i)) g.lambda[0][i] = -1;
      }
      if (apply(g, shape, flat) == flat) ++count;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return count;
}

// Direct enumeration oracle for sign-mode leaves: all (zero set, partition,
// raw gamma) triples, identified by the canonical key of the set they define.
std::set<std::string> sign_leaf_oracle(int m) {
  std::set<std::string> keys;
  for (int zmask = 0; zmask < (1 << m); ++zmask) {
    std::vector<int> live;
    for (int i = 0; i < m; ++i) {
      if (!(zmask & (1 << i))) live.push_back(i);
    }
    const int n = static_cast<int>(live.size());
    // All assignments of live neurons to blocks (surjective labelings up to
    // relabeling handled by canonicalization), all raw gammas.
    std::vector<int> label(n, 0);
    auto emit = [&](const std::vector<int>& lab, int gmask) {
      NeuronPartition p;
      p.mode = PartitionMode::sign;
      for (int i = 0; i < m; ++i) {
        if (zmask & (1 << i)) p.zero_block.push_back(i);
      }
      const int nblocks = n == 0 ? 0 : *std::max_element(lab.begin(), lab.end()) + 1;
      std::vector<std::vector<int>> blocks(nblocks);
      std::vector<int> raw_gamma(m, 1);
      for (int k = 0; k < n; ++k) {
        blocks[lab[k]].push_back(live[k]);
        if (gmask & (1 << k)) raw_gamma[live[k]] = -1;
      }
      // Canonicalize: order blocks by leader, set leader gamma to +1.
      std::sort(blocks.begin(), blocks.end());
      p.blocks = blocks;
      p.gamma.assign(m, 1);
      for (const auto& b : blocks) {
        for (int i : b) p.gamma[i] = raw_gamma[i] * raw_gamma[b.front()];
      }
      keys.insert(p.canonical_key());
    };
    auto rec = [&](auto&& self, int i, int maxv) -> void {
      if (i == n) {
        for (int gmask = 0; gmask < (1 << n); ++gmask) emit(label, gmask);
        return;
      }
      for (int v = 0; v <= std::min(i, maxv + 1); ++v) {
        label[i] = v;
        self(self, i + 1, std::max(maxv, v));
      }
    };
    if (n == 0) {
      emit(label, 0);
    } else {
      rec(rec, 0, -1);
    }
  }
  return keys;
}

TwoLayerParams params_from(std::initializer_list<double> flat, int m, int d) {
  Vec v(static_cast<int>(flat.size()));
  int k = 0;
  for (double x : flat) v(k++) = x;
  return TwoLayerParams::unflatten(v, m, d);
}

}  // namespace

TEST_CASE("identity elements act as the identity") {
  Rng rng(1);
  const TwoLayerParams p = random_nondegenerate(3, 2, 1);
  PermElement id_perm{{identity_perm(3)}};
  SignElement id_sign{{ones_sign(3)}};
  CHECK(apply(id_perm, p).flatten() == p.flatten());
  CHECK(apply(id_sign, p).flatten() == p.flatten());

  DeepParams dp = DeepParams::zeros({2, 3, 2, 1});
  for (auto& w : dp.W)
    for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.gaussian();
  for (auto& b : dp.b)
    for (int i = 0; i < b.size(); ++i) b(i) = rng.gaussian();
  PermElement did{{identity_perm(3), identity_perm(2)}};
  CHECK(apply(did, dp).flatten() == dp.flatten());
}

TEST_CASE("two-layer neuron swap leaves the output unchanged") {
  const Model f = Model::two_layer(activation("softplus"), 3, 2);
  const TwoLayerParams p = random_nondegenerate(3, 2, 3);
  PermElement swap{{{1, 0, 2}}};
  const Vec q = apply(swap, p).flatten();
  Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    const Vec x = random_vec(2, rng);
    CHECK(std::abs(f.forward(p.flatten(), x) - f.forward(q, x)) < 1e-12);
  }
}

TEST_CASE("hidden sign flips preserve odd-activation outputs") {
  const Model f = Model::mlp(activation("tanh"), {2, 3, 2, 1});
  Rng rng(5);
  const Vec theta = random_vec(f.param_count(), rng);
  SignElement flip{{{-1, 1, 1}, {1, -1}}};
  const Vec theta2 = apply(flip, ParamShape::of(f), theta);
  for (int k = 0; k < 100; ++k) {
    const Vec x = random_vec(2, rng);
    CHECK(std::abs(f.forward(theta, x) - f.forward(theta2, x)) < 1e-12);
  }
}

TEST_CASE("two-layer sign flip preserves odd-activation outputs") {
  const Model f = Model::two_layer(activation("tanh"), 3, 2);
  const TwoLayerParams p = random_nondegenerate(3, 2, 6);
  SignElement flip{{{-1, 1, -1}}};
  const Vec q = apply(flip, p).flatten();
  Rng rng(7);
  for (int k = 0; k < 50; ++k) {
    const Vec x = random_vec(2, rng);
    CHECK(std::abs(f.forward(p.flatten(), x) - f.forward(q, x)) < 1e-12);
  }
}

TEST_CASE("group actions are orthogonal") {
  Rng rng(8);
  const ParamShape two = ParamShape::two_layer(4, 3);
  const ParamShape deep = ParamShape::deep({2, 3, 2, 1});
  std::vector<std::pair<ParamShape, GroupElement>> cases;
  cases.push_back({two, PermElement{{{3, 2, 1, 0}}}});
  cases.push_back({two, SignElement{{{-1, 1, -1, 1}}}});
  cases.push_back({two, SignPrimeElement{{{-1, 1, 1, -1}, {-1}}}});
  cases.push_back({two, CombinedElement{{{-1, -1, 1, 1}}, {{1, 2, 3, 0}}}});
  cases.push_back({deep, PermElement{{{2, 0, 1}, {1, 0}}}});
  cases.push_back({deep, SignElement{{{-1, 1, 1}, {1, -1}}}});
  cases.push_back({deep, SignPrimeElement{{{-1, 1, 1}, {1, -1}, {-1}}}});
  cases.push_back({deep, CombinedElement{{{-1, 1, 1}, {1, -1}}, {{2, 0, 1}, {1, 0}}}});
  for (const auto& [shape, g] : cases) {
    const Vec theta = random_vec(shape.param_count(), rng);
    const Vec out = apply(g, shape, theta);
    CHECK(std::abs(out.norm() - theta.norm()) < 1e-12);
    // Signed permutations keep the multiset of magnitudes.
    Vec a = theta.cwiseAbs(), b = out.cwiseAbs();
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    CHECK(a == b);
  }
}

TEST_CASE("combined composition law") {
  Rng rng(9);
  const ParamShape shape = ParamShape::two_layer(4, 2);
  CombinedElement g1{{{-1, 1, 1, -1}}, {{2, 3, 0, 1}}};
  CombinedElement g2{{{1, -1, -1, 1}}, {{1, 0, 3, 2}}};
  const CombinedElement g12 = compose(g1, g2);
  const Vec theta = random_vec(shape.param_count(), rng);
  CHECK(apply(g12, shape, theta) == apply(g1, shape, apply(g2, shape, theta)));
}

TEST_CASE("classification examples") {
  SUBCASE("all-distinct neurons give singleton blocks") {
    const TwoLayerParams p = random_nondegenerate(3, 2, 10);
    const NeuronPartition part = classify_partition(p, PartitionMode::equality, 1e-9);
    CHECK(part.blocks.size() == 3);
    CHECK(stabilizer_order(part) == 1);
  }

  SUBCASE("tied pair in equality mode") {
    const TwoLayerParams p = params_from({1.0, 0.4, 1.0, 0.4, 2.0, -0.9}, 3, 1);
    const NeuronPartition part = classify_partition(p, PartitionMode::equality, 1e-9);
    REQUIRE(part.blocks.size() == 2);
    CHECK(part.blocks[0] == std::vector<int>{0, 1});
    CHECK(part.blocks[1] == std::vector<int>{2});
  }

  SUBCASE("antipodal pair in sign mode") {
    const TwoLayerParams p = params_from({0.8, 0.5, -0.8, -0.5}, 2, 1);
    const NeuronPartition part = classify_partition(p, PartitionMode::sign, 1e-9);
    REQUIRE(part.blocks.size() == 1);
    CHECK(part.blocks[0] == std::vector<int>{0, 1});
    CHECK(part.gamma == std::vector<int>{1, -1});
    CHECK(part.zero_block.empty());
  }

  SUBCASE("zero neurons land in the zero block") {
    const TwoLayerParams p = params_from({0.0, 0.0, 0.7, 0.2}, 2, 1);
    const NeuronPartition part = classify_partition(p, PartitionMode::sign, 1e-9);
    CHECK(part.zero_block == std::vector<int>{0});
    REQUIRE(part.blocks.size() == 1);
    CHECK(part.blocks[0] == std::vector<int>{1});
  }
}

TEST_CASE("ambiguous spacing raises") {
  const double tol = 1e-9;
  const TwoLayerParams p = params_from({1.0, 0.4, 1.0 + 1.5 * tol, 0.4}, 2, 1);
  CHECK_THROWS_AS(classify_partition(p, PartitionMode::equality, tol), AmbiguityError);
  // Near-zero norm inside the guard band trips sign mode.
  const TwoLayerParams q = params_from({1.5e-9, 0.0, 0.7, 0.2}, 2, 1);
  CHECK_THROWS_AS(classify_partition(q, PartitionMode::sign, tol), AmbiguityError);
}

TEST_CASE("stabilizer orders") {
  SUBCASE("equality, all singletons") {
    NeuronPartition p;
    p.mode = PartitionMode::equality;
    p.blocks = {{0}, {1}, {2}, {3}};
    CHECK(stabilizer_order(p) == 1);
  }
  SUBCASE("equality, one block of three") {
    NeuronPartition p;
    p.mode = PartitionMode::equality;
    p.blocks = {{0, 1, 2}};
    CHECK(stabilizer_order(p) == 6);
  }
  SUBCASE("sign mode with a zero block, checked against the exhaustive sweep") {
    // Two zero neurons plus an antipodal pair.
    const TwoLayerParams p = params_from({0, 0, 0, 0, 0.6, 0.3, -0.6, -0.3}, 4, 1);
    const NeuronPartition part = classify_partition(p, PartitionMode::sign, 1e-9);
    CHECK(part.zero_block.size() == 2);
    CHECK(part.blocks.size() == 1);
    const long long want = count_fixing_elements(p);
    CHECK(stabilizer_order(part) == want);
    CHECK(want == 16);  // 2! 2^2 from the zero block, 2! from the pair
  }
}

TEST_CASE("stabilizer order matches the exhaustive sweep on random leaves") {
  int checked = 0;
  for (int m = 2; m <= 4; ++m) {
    const auto leaves = enumerate_leaves(m, PartitionMode::sign);
    for (std::size_t k = 0; k < leaves.size(); k += 7) {
      const TwoLayerParams member = construct_leaf_member(leaves[k], 1, 900 + k);
      CHECK(stabilizer_order(leaves[k]) == count_fixing_elements(member));
      ++checked;
    }
  }
  CHECK(checked >= 10);
}

TEST_CASE("leaf enumeration counts") {
  CHECK(enumerate_leaves(2, PartitionMode::equality).size() == 2);
  CHECK(enumerate_leaves(3, PartitionMode::equality).size() == 5);
  CHECK(enumerate_leaves(4, PartitionMode::equality).size() == 15);
  CHECK(enumerate_leaves(1, PartitionMode::sign).size() == 2);
  CHECK_THROWS_AS(enumerate_leaves(7, PartitionMode::equality), BudgetError);
}

TEST_CASE("sign leaf enumeration matches the direct oracle") {
  for (int m = 1; m <= 4; ++m) {
    const auto leaves = enumerate_leaves(m, PartitionMode::sign);
    const auto oracle = sign_leaf_oracle(m);
    std::set<std::string> keys;
    for (const auto& leaf : leaves) keys.insert(leaf.canonical_key());
    CHECK(keys.size() == leaves.size());  // enumeration is duplicate-free
    CHECK(keys == oracle);
  }
}

TEST_CASE("exactly one leaf contains any parameter") {
  // Exact ties by construction (assignment, not arithmetic).
  std::vector<TwoLayerParams> cases;
  cases.push_back(random_nondegenerate(3, 2, 20));
  {
    TwoLayerParams p = random_nondegenerate(3, 2, 21);
    p.set_neuron(1, p.neuron(0));
    cases.push_back(p);
  }
  {
    TwoLayerParams p = random_nondegenerate(3, 2, 22);
    p.set_neuron(2, Vec(-p.neuron(0)));
    p.set_neuron(1, Vec::Zero(3));
    cases.push_back(p);
  }
  for (PartitionMode mode : {PartitionMode::equality, PartitionMode::sign}) {
    for (const auto& p : cases) {
      int hits = 0;
      for (const auto& leaf : enumerate_leaves(3, mode)) {
        if (leaf_contains(leaf, p)) ++hits;
      }
      CHECK(hits == 1);
      const NeuronPartition found = classify_partition(p, mode, 0.0);
      CHECK(leaf_contains(found, p));
    }
  }
}

TEST_CASE("projection and distance semantics") {
  const ParamShape shape = ParamShape::two_layer(2, 1);

  SUBCASE("equality class projects to block means") {
    NeuronPartition part;
    part.mode = PartitionMode::equality;
    part.blocks = {{0, 1}};
    const SimDescriptor sim = EqualityClass{part};
    Vec theta(4);
    theta << 1.0, 1.0, 3.0, 3.0;
    const Vec proj = project(sim, shape, theta);
    Vec want(4);
    want << 2.0, 2.0, 2.0, 2.0;
    CHECK(proj == want);
    CHECK(distance(sim, shape, proj) == 0.0);
    CHECK(distance(sim, shape, theta) == 2.0);
    CHECK(project(sim, shape, proj) == proj);  // idempotent
  }

  SUBCASE("sign class projects to gamma-weighted means") {
    NeuronPartition part;
    part.mode = PartitionMode::sign;
    part.blocks = {{0, 1}};
    part.gamma = {1, -1};
    const SimDescriptor sim = SignClass{part};
    Vec theta(4);
    theta << 1.0, 1.0, -3.0, -3.0;
    const Vec proj = project(sim, shape, theta);
    Vec want(4);
    want << 2.0, 2.0, -2.0, -2.0;
    CHECK(proj == want);
    CHECK(distance(sim, shape, proj) == 0.0);
  }

  SUBCASE("pair tie variants") {
    Vec theta(4);
    theta << 1.0, 2.0, 3.0, -4.0;
    const Vec pe = project(PairTie{0, 1, TieRelation::equal}, shape, theta);
    CHECK(pe(0) == 2.0);
    CHECK(pe(0) == pe(2));
    const Vec pn = project(PairTie{0, 1, TieRelation::negated}, shape, theta);
    CHECK(pn(0) == -pn(2));
    const Vec pm = project(PairTie{0, 1, TieRelation::even_mirror}, shape, theta);
    CHECK(pm(0) == pm(2));
    CHECK(pm(1) == -pm(3));
    CHECK(distance(PairTie{0, 1, TieRelation::even_mirror}, shape, pm) == 0.0);
  }

  SUBCASE("single differing coordinate") {
    NeuronPartition part;
    part.mode = PartitionMode::equality;
    part.blocks = {{0, 1}};
    Vec theta(4);
    theta << 1.0, 1.0, 1.0, 1.0 + 0.25;
    CHECK(distance(EqualityClass{part}, shape, theta) == 0.25);
  }

  SUBCASE("zero constraints") {
    Vec theta(4);
    theta << 0.5, -0.7, 0.2, 0.9;
    CHECK(distance(NeuronZero{0}, shape, theta) == 0.7);
    CHECK(distance(WeightZero{1}, shape, theta) == 0.9);
    CHECK(distance(OutputZero{1}, shape, theta) == 0.2);
    const Vec pz = project(NeuronZero{0}, shape, theta);
    CHECK(pz(0) == 0.0);
    CHECK(pz(1) == 0.0);
    CHECK(pz(2) == 0.2);
  }

  SUBCASE("weight tie") {
    Vec theta(4);
    theta << 0.5, 1.0, 0.2, 3.0;
    CHECK(distance(WeightTie{0, 1, 1}, shape, theta) == 2.0);
    const Vec p = project(WeightTie{0, 1, -1}, shape, theta);
    CHECK(p(1) == -p(3));
    CHECK(distance(WeightTie{0, 1, -1}, shape, p) == 0.0);
  }
}

TEST_CASE("deep-net zero structures") {
  const ParamShape shape = ParamShape::deep({2, 2, 2, 1});

  SUBCASE("row zero distance picks the largest pinned entry") {
    DeepParams p = DeepParams::zeros({2, 2, 2, 1});
    p.W[0](1, 0) = 0.3;
    const SimDescriptor sim = RowZero{0, 1};
    CHECK(distance(sim, shape, p.flatten()) == 0.3);
    CHECK(distance(sim, shape, project(sim, shape, p.flatten())) == 0.0);
  }

  SUBCASE("zero pattern frees the I_l x I_{l-1} block") {
    ZeroPattern zp;
    zp.hidden = {{1}, {0}};
    DeepParams p = DeepParams::zeros({2, 2, 2, 1});
    p.W[1](0, 1) = 4.0;  // row 0 in I_2, column 1 in I_1: free
    CHECK(distance(zp, shape, p.flatten()) == 0.0);
    p.W[1](1, 1) = 0.5;  // row 1 not in I_2, column in I_1: pinned
    CHECK(distance(zp, shape, p.flatten()) == 0.5);
    const int free_entries = manifold_dim(zp, shape);
    // Pinned: W1 row 1 (2) + b1[1]; W2 (0,0) and (1,1) + b2[0]; W3 (0,0).
    CHECK(free_entries == shape.param_count() - 7);
  }
}

TEST_CASE("fixed point sets") {
  const ParamShape shape = ParamShape::two_layer(2, 1);

  SUBCASE("swap symmetrization is exact") {
    FixedPointSet fps{{PermElement{{{1, 0}}}}};
    Vec theta(4);
    theta << 1.0, 2.0, 5.0, -2.0;
    const Vec proj = project(fps, shape, theta);
    CHECK(proj(0) == proj(2));
    CHECK(proj(1) == proj(3));
    CHECK(distance(fps, shape, proj) == 0.0);
    CHECK(manifold_dim(fps, shape) == 2);
  }

  SUBCASE("sign flip pins a neuron") {
    FixedPointSet fps{{SignElement{{{-1, 1}}}}};
    Vec theta(4);
    theta << 1.0, 2.0, 5.0, -2.0;
    const Vec proj = project(fps, shape, theta);
    CHECK(proj(0) == 0.0);
    CHECK(proj(1) == 0.0);
    CHECK(proj(2) == 5.0);
    CHECK(manifold_dim(fps, shape) == 2);
    CHECK(distance(fps, shape, theta) == 4.0);  // max |g(theta)-theta| = 2*2
  }

  SUBCASE("joint fixed points of two elements") {
    FixedPointSet fps{{PermElement{{{1, 0}}}, SignElement{{{-1, -1}}}}};
    CHECK(manifold_dim(fps, shape) == 0);  // swap-equal and negated: only 0
    Vec theta(4);
    theta << 1.0, 2.0, 3.0, 4.0;
    CHECK(project(fps, shape, theta) == Vec::Zero(4));
  }
}

TEST_CASE("descriptor JSON round trip") {
  NeuronPartition part;
  part.mode = PartitionMode::sign;
  part.blocks = {{0, 2}};
  part.zero_block = {1};
  part.gamma = {1, 1, -1};
  std::vector<SimDescriptor> sims = {
      SignClass{part},
      PairTie{0, 2, TieRelation::even_mirror},
      NeuronZero{1},
      WeightZero{0},
      OutputZero{2},
      WeightTie{0, 1, -1},
      ZeroPattern{{{0}, {1}}},
      RowZero{1, 0},
      FixedPointSet{{SignElement{{{-1, 1, 1}}}}},
      FullSpace{},
  };
  for (const auto& sim : sims) {
    const SimDescriptor back = sim_from_json(sim_to_json(sim));
    CHECK(kind_name(back) == kind_name(sim));
    CHECK(sim_to_json(back) == sim_to_json(sim));
  }
}

TEST_CASE("infinitesimal invariance of sign elements") {
  SUBCASE("tanh deep net satisfies the sign hypothesis") {
    const Model f = Model::mlp(activation("tanh"), {2, 3, 2, 1});
    SignElement flip{{{-1, 1, 1}, {1, -1}}};
    const SimDescriptor fps = FixedPointSet{{flip}};
    Rng rng(30);
    const Vec theta =
        project(fps, ParamShape::of(f), random_vec(f.param_count(), rng));
    const auto rep = check_infinitesimal_invariance(f, flip, theta, 20, 31);
    CHECK(rep.max_violation < 1e-10);
  }

  SUBCASE("coshm1 satisfies the sign-prime hypothesis") {
    const Model f = Model::mlp(activation("coshm1"), {2, 3, 2, 1});
    SignPrimeElement flip{{{-1, 1, 1}, {1, 1}, {1}}};
    const SimDescriptor fps = FixedPointSet{{flip}};
    Rng rng(32);
    const Vec theta =
        project(fps, ParamShape::of(f), random_vec(f.param_count(), rng));
    const auto rep = check_infinitesimal_invariance(f, flip, theta, 20, 33);
    CHECK(rep.max_violation < 1e-10);
  }

  SUBCASE("sigmoid violates the sign hypothesis") {
    const Model f = Model::mlp(activation("sigmoid"), {2, 3, 2, 1});
    SignElement flip{{{-1, 1, 1}, {1, -1}}};
    const SimDescriptor fps = FixedPointSet{{flip}};
    double worst = 0.0;
    for (std::uint64_t seed : {40, 41, 42}) {
      Rng rng(seed);
      const Vec theta =
          project(fps, ParamShape::of(f), random_vec(f.param_count(), rng));
      worst = std::max(worst,
                       check_infinitesimal_invariance(f, flip, theta, 20, seed).max_violation);
    }
    CHECK(worst > 1e-3);
  }

  SUBCASE("non-fixed theta is rejected") {
    const Model f = Model::mlp(activation("tanh"), {2, 3, 1});
    SignElement flip{{{-1, 1, 1}}};
    Rng rng(50);
    const Vec theta = random_vec(f.param_count(), rng);
    CHECK_THROWS_AS(check_infinitesimal_invariance(f, flip, theta, 5, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("size mismatches raise shape errors") {
  const ParamShape shape = ParamShape::two_layer(3, 1);
  PermElement bad{{{0, 1}}};
  Rng rng(60);
  CHECK_THROWS_AS(apply(bad, shape, random_vec(6, rng)), ShapeError);
  SignElement bad2{{{1, -1, 2}}};
  CHECK_THROWS_AS(apply(bad2, shape, random_vec(6, rng)), ShapeError);
}
