#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace lvpoly;

namespace {

NormalizedPatternSet wrap(const PatternMatrix& m) {
  NormalizedPatternSet n;
  n.values = m;
  n.col_min = m.colwise().minCoeff().transpose();
  n.col_max = m.colwise().maxCoeff().transpose();
  return n;
}

PatternMatrix random_points(std::size_t n, std::size_t dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PatternMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  return m;
}

// Two tight blobs around (0.1, ...) and (0.9, ...); rows alternate between them.
PatternMatrix two_blobs(std::size_t per_blob, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.01);
  PatternMatrix m(static_cast<Eigen::Index>(2 * per_blob), 5);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = (i % 2 == 0 ? 0.1 : 0.9) + g(rng);
  return m;
}

// Greedy agglomeration that recomputes every cluster-pair cost from the members.
std::vector<std::size_t> naive_partition(const PatternMatrix& x, std::size_t k, ClusterAlgorithm linkage) {
  std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) groups[static_cast<std::size_t>(i)] = {i};
  auto centroid = [&](const std::vector<Eigen::Index>& g) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(x.cols());
    for (Eigen::Index i : g) c += x.row(i);
    return Eigen::RowVectorXd(c / static_cast<double>(g.size()));
  };
  auto cost = [&](const std::vector<Eigen::Index>& a, const std::vector<Eigen::Index>& b) {
    if (linkage == ClusterAlgorithm::Ward) {
      const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
      return na * nb / (na + nb) * (centroid(a) - centroid(b)).squaredNorm();
    }
    double s = 0.0;
    for (Eigen::Index i : a)
      for (Eigen::Index j : b) s += (x.row(i) - x.row(j)).squaredNorm();
    return s / static_cast<double>(a.size() * b.size());
  };
  while (groups.size() > k) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < groups.size(); ++i)
      for (std::size_t j = i + 1; j < groups.size(); ++j) {
        const double c = cost(groups[i], groups[j]);
        if (c < best) {
          best = c;
          bi = i;
          bj = j;
        }
      }
    groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  std::vector<std::size_t> raw(static_cast<std::size_t>(x.rows()));
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (Eigen::Index i : groups[g]) raw[static_cast<std::size_t>(i)] = g;
  // canonical labels: order of first appearance
  std::vector<std::size_t> remap(groups.size(), groups.size()), out(raw.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (remap[raw[i]] == groups.size()) remap[raw[i]] = next++;
    out[i] = remap[raw[i]];
  }
  return out;
}

double spc_oracle(const PatternMatrix& x, const std::vector<std::size_t>& assignment, std::size_t k) {
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
    std::size_t n = 0;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == c) {
        mean += x.row(static_cast<Eigen::Index>(i));
        ++n;
      }
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == c) total += (x.row(static_cast<Eigen::Index>(i)) - mean).squaredNorm();
  }
  return total;
}

void check_partition_invariants(const ClusterResult& r, const PatternMatrix& x) {
  REQUIRE(r.assignment.size() == static_cast<std::size_t>(x.rows()));
  CHECK(std::accumulate(r.sizes.begin(), r.sizes.end(), std::size_t{0}) == r.total());
  for (std::size_t c = 0; c < r.k(); ++c) {
    CHECK(r.assignment[r.representatives[c]] == c);
    const double d_rep = (x.row(static_cast<Eigen::Index>(r.representatives[c])) - r.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
    for (std::size_t i = 0; i < r.total(); ++i)
      if (r.assignment[i] == c) CHECK(d_rep <= (x.row(static_cast<Eigen::Index>(i)) - r.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm());
  }
}

const NormalizedPatternSet& fixture_patterns() {
  static const NormalizedPatternSet n = [] {
    const PowerFlowSolver solver(fixture::desk());
    return normalize(build_patterns(solver, fixture::scenarios(), 108));
  }();
  return n;
}

}  // namespace

TEST_SUITE("scenario_reduction") {

TEST_CASE("min-max normalization") {
  PatternSet p;
  p.values.resize(3, 2);
  p.values << 2, 5, 4, 5, 6, 5;
  const NormalizedPatternSet n = normalize(p);
  CHECK(n.values(0, 0) == 0.0);
  CHECK(n.values(1, 0) == 0.5);
  CHECK(n.values(2, 0) == 1.0);
  for (int r = 0; r < 3; ++r) CHECK(n.values(r, 1) == 0.5);
  CHECK(n.col_min(0) == 2.0);
  CHECK(n.col_max(0) == 6.0);

  const NormalizedPatternSet& f = fixture_patterns();
  CHECK(f.values.minCoeff() >= 0.0);
  CHECK(f.values.maxCoeff() <= 1.0);
  for (Eigen::Index c = 0; c < f.values.cols(); ++c) {
    if (f.col_max(c) > f.col_min(c)) {
      CHECK(f.values.col(c).minCoeff() == 0.0);
      CHECK(f.values.col(c).maxCoeff() == 1.0);
    }
  }
}

TEST_CASE("patterns hold one zero-DG customer voltage per scenario") {
  const Feeder& f = fixture::desk();
  const PowerFlowSolver solver(f);
  std::vector<DemandScenario> two(2, fixture::scenarios()[0]);
  const PatternSet p = build_patterns(solver, two, 60);
  REQUIRE(p.values.cols() == static_cast<Eigen::Index>(f.customers.size()));
  CHECK(p.values.row(0) == p.values.row(1));

  InjectionSet in(f.customers.size());
  fixture::scenarios()[0].apply(in, 60);
  const PowerFlowSolution s = solver.solve(in);
  for (std::size_t h = 0; h < f.customers.size(); ++h)
    CHECK(std::abs(p.values(0, static_cast<Eigen::Index>(h)) - customer_voltage(solver.network(), s, h)) < 1e-14);

  auto zero_pool = std::make_shared<const DemandPool>(std::vector<std::vector<double>>{std::vector<double>(144, 0.0)}, 10);
  const PatternSet flat = build_patterns(solver, sample_scenarios(zero_pool, f, 1, 1), 0);
  const PhaseVector src = f.source_voltage_pu();
  for (std::size_t h = 0; h < f.customers.size(); ++h)
    CHECK(std::abs(flat.values(0, static_cast<Eigen::Index>(h)) - std::abs(src(static_cast<Eigen::Index>(index_of(f.customers[h].phase))))) < 1e-14);
}

TEST_CASE("k = S gives singletons and k = 1 gives the mean") {
  const PatternMatrix x = random_points(12, 4, 2);
  const NormalizedPatternSet n = wrap(x);
  for (ClusterAlgorithm a : {ClusterAlgorithm::Ward, ClusterAlgorithm::Average, ClusterAlgorithm::KMeansPP}) {
    const ClusterResult all = cluster(n, 12, a, 5);
    CHECK(all.k() == 12);
    CHECK(spc_index(n, all) == 0.0);
    for (double w : all.omegas()) CHECK(w == 1.0 / 12.0);
    const ClusterResult one = cluster(n, 1, a, 5);
    REQUIRE(one.k() == 1);
    CHECK(one.omega(0) == 1.0);
    CHECK((one.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff() < 1e-15);
  }
  CHECK_THROWS_AS(cluster(n, 13, ClusterAlgorithm::Ward), std::invalid_argument);
  CHECK_THROWS_AS(cluster(n, 0, ClusterAlgorithm::Average), std::invalid_argument);
}

TEST_CASE("two separated blobs are recovered by every algorithm") {
  const PatternMatrix x = two_blobs(20, 8);
  for (ClusterAlgorithm a : {ClusterAlgorithm::Ward, ClusterAlgorithm::Average, ClusterAlgorithm::KMeansPP}) {
    const ClusterResult r = cluster(wrap(x), 2, a, 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) CHECK(r.assignment[static_cast<std::size_t>(i)] == static_cast<std::size_t>(i % 2));
    CHECK(r.sizes == std::vector<std::size_t>{20, 20});
  }
}

TEST_CASE("SPC of a two-point cluster") {
  PatternMatrix x(2, 2);
  x << 0, 0, 1, 0;
  const NormalizedPatternSet n = wrap(x);
  const ClusterResult r = cluster(n, 1, ClusterAlgorithm::Ward);
  CHECK(spc_index(n, r) == 0.5);
  CHECK(r.centroids(0, 0) == 0.5);
  const NormalizedPatternSet other = wrap(random_points(3, 2, 1));
  CHECK_THROWS_AS(spc_index(other, r), std::invalid_argument);
}

TEST_CASE("hierarchical partitions match a brute-force agglomeration") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const PatternMatrix x = random_points(30, 3, seed);
    for (ClusterAlgorithm a : {ClusterAlgorithm::Ward, ClusterAlgorithm::Average}) {
      const Dendrogram d = Dendrogram::build(x, a);
      for (std::size_t k : {2, 5, 11}) {
        const ClusterResult r = d.cut(x, k);
        CHECK(r.assignment == naive_partition(x, k, a));
        CHECK(std::abs(spc_index(wrap(x), r) - spc_oracle(x, r.assignment, k)) < 1e-12);
        check_partition_invariants(r, x);
      }
    }
  }
  CHECK_THROWS_AS(Dendrogram::build(random_points(3, 2, 1), ClusterAlgorithm::KMeansPP), std::invalid_argument);
}

TEST_CASE("equidistant members resolve to the lowest index") {
  PatternMatrix x(4, 1);
  x << 0.0, 1.0, 0.0, 1.0;  // centroid 0.5, every member at the same distance
  const ClusterResult r = cluster(wrap(x), 1, ClusterAlgorithm::Average);
  CHECK(r.representatives == std::vector<std::size_t>{0});
  PatternMatrix y(3, 1);
  y << 1.0, 0.0, 2.0;
  CHECK(cluster(wrap(y), 1, ClusterAlgorithm::Ward).representatives == std::vector<std::size_t>{0});
}

TEST_CASE("Ward SPC does not grow with K on fixture patterns") {
  const NormalizedPatternSet& n = fixture_patterns();
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k : {2, 10, 50, 100, 200}) {
    const ClusterResult r = cluster(n, k, ClusterAlgorithm::Ward);
    const double spc = spc_index(n, r);
    CHECK(std::abs(spc - spc_oracle(n.values, r.assignment, k)) < 1e-10);
    CHECK(spc <= prev);
    prev = spc;
    double sum = 0.0;
    for (double w : r.omegas()) sum += w;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  CHECK(prev == 0.0);
}

TEST_CASE("k-means++ path is monotone and deterministic") {
  const NormalizedPatternSet& n = fixture_patterns();
  const auto path = kmeanspp_path(n.values, 25, 4);
  REQUIRE(path.size() == 25);
  for (std::size_t k = 1; k < path.size(); ++k) {
    CHECK(path[k].k() == k + 1);
    CHECK(spc_index(n, path[k]) <= spc_index(n, path[k - 1]) + 1e-9);
  }
  const auto again = kmeanspp_path(n.values, 25, 4);
  for (std::size_t k = 0; k < path.size(); ++k) CHECK(again[k].assignment == path[k].assignment);
  check_partition_invariants(path[9], n.values);
}

TEST_CASE("hierarchical clustering ignores the seed") {
  const NormalizedPatternSet& n = fixture_patterns();
  CHECK(cluster(n, 40, ClusterAlgorithm::Ward, 1).assignment == cluster(n, 40, ClusterAlgorithm::Ward, 99).assignment);
  CHECK(cluster(n, 40, ClusterAlgorithm::Average, 1).assignment ==
        cluster(n, 40, ClusterAlgorithm::Average, 99).assignment);
}

TEST_CASE("algorithm names and reports") {
  for (ClusterAlgorithm a : {ClusterAlgorithm::Ward, ClusterAlgorithm::Average, ClusterAlgorithm::KMeansPP})
    CHECK(parse_cluster_algorithm(to_string(a)) == a);
  CHECK_THROWS_AS(parse_cluster_algorithm("dbscan"), std::invalid_argument);

  const NormalizedPatternSet n = wrap(two_blobs(3, 1));
  const auto points = elbow_analysis(n, {1, 2, 6}, {ClusterAlgorithm::Ward, ClusterAlgorithm::KMeansPP});
  CHECK(points.size() == 6);
  std::stringstream e;
  write_elbow_csv(e, points);
  std::string header;
  std::getline(e, header);
  CHECK(header == "K,algorithm,spc");

  std::stringstream r;
  write_cluster_report(r, {TimestepClusters{5, cluster(n, 2, ClusterAlgorithm::Ward), 0.0}});
  std::getline(r, header);
  CHECK(header == "timestep,K,algorithm,spc,representative_scenario_ids,omegas");
  std::string row;
  std::getline(r, row);
  CHECK(row.rfind("5,2,ward,", 0) == 0);
}

}
