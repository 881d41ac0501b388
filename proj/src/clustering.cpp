#include "lvpoly/clustering.hpp"

#include "lvpoly/parallel.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace lvpoly {

std::string to_string(ClusterAlgorithm a) {
  switch (a) {
    case ClusterAlgorithm::Ward: return "ward";
    case ClusterAlgorithm::Average: return "average";
    case ClusterAlgorithm::KMeansPP: return "kmeanspp";
  }
  return "?";
}

ClusterAlgorithm parse_cluster_algorithm(const std::string& name) {
  if (name == "ward") return ClusterAlgorithm::Ward;
  if (name == "average") return ClusterAlgorithm::Average;
  if (name == "kmeanspp" || name == "kmeans++") return ClusterAlgorithm::KMeansPP;
  throw std::invalid_argument("unknown clustering algorithm '" + name + "'");
}

std::vector<double> ClusterResult::omegas() const {
  std::vector<double> w(k());
  for (std::size_t c = 0; c < k(); ++c) w[c] = omega(c);
  return w;
}

PatternSet build_patterns(const PowerFlowSolver& solver, const std::vector<DemandScenario>& scenarios,
                          std::size_t timestep, const SolverOptions& options) {
  const Network& net = solver.network();
  const std::size_t h_count = net.customer_count();
  PatternSet out;
  out.timestep = timestep;
  out.values.resize(static_cast<Eigen::Index>(scenarios.size()), static_cast<Eigen::Index>(h_count));
  parallel_for(scenarios.size(), [&](std::size_t s) {
    InjectionSet inj(h_count);
    scenarios[s].apply(inj, timestep);
    PowerFlowSolution sol;
    try {
      sol = solver.solve(inj, options);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("scenario " + std::to_string(scenarios[s].id) + ": " + e.what(), e.iterations(),
                             e.residual());
    }
    for (std::size_t h = 0; h < h_count; ++h)
      out.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(h)) = customer_voltage(net, sol, h);
  });
  return out;
}

NormalizedPatternSet normalize(const PatternSet& patterns) {
  NormalizedPatternSet out;
  out.timestep = patterns.timestep;
  const auto& v = patterns.values;
  out.values.resize(v.rows(), v.cols());
  out.col_min = v.colwise().minCoeff().transpose();
  out.col_max = v.colwise().maxCoeff().transpose();
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    const double lo = out.col_min(c), range = out.col_max(c) - lo;
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      out.values(r, c) = range > 0.0 ? std::clamp((v(r, c) - lo) / range, 0.0, 1.0) : 0.5;
  }
  return out;
}

namespace {

double sq_dist(const PatternMatrix& a, Eigen::Index i, const PatternMatrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

/// Relabels clusters by lowest member, then fills centroids, sizes and representatives.
ClusterResult finalize(const PatternMatrix& x, const std::vector<std::size_t>& labels, ClusterAlgorithm algorithm) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> remap(n, static_cast<std::size_t>(-1));
  std::size_t k = 0;
  ClusterResult r;
  r.algorithm = algorithm;
  r.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (remap[labels[i]] == static_cast<std::size_t>(-1)) remap[labels[i]] = k++;
    r.assignment[i] = remap[labels[i]];
  }
  r.sizes.assign(k, 0);
  r.centroids = PatternMatrix::Zero(static_cast<Eigen::Index>(k), x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    ++r.sizes[r.assignment[i]];
    r.centroids.row(static_cast<Eigen::Index>(r.assignment[i])) += x.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t c = 0; c < k; ++c) r.centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(r.sizes[c]);
  r.representatives.assign(k, 0);
  std::vector<double> best(k, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = r.assignment[i];
    const double d = sq_dist(x, static_cast<Eigen::Index>(i), r.centroids, static_cast<Eigen::Index>(c));
    if (d < best[c]) {  // strict: ties keep the lowest index
      best[c] = d;
      r.representatives[c] = i;
    }
  }
  return r;
}

double spc_of(const PatternMatrix& x, const ClusterResult& r) {
  double total = 0.0;
  for (std::size_t i = 0; i < r.assignment.size(); ++i)
    total += sq_dist(x, static_cast<Eigen::Index>(i), r.centroids, static_cast<Eigen::Index>(r.assignment[i]));
  return total;
}

class Condensed {
public:
  explicit Condensed(std::size_t n) : n_(n), d_(n * (n - 1) / 2) {}
  double& operator()(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return d_[i * (2 * n_ - i - 1) / 2 + (j - i - 1)];
  }

private:
  std::size_t n_;
  std::vector<double> d_;
};

}  // namespace

double spc_index(const NormalizedPatternSet& normalized, const ClusterResult& result) {
  if (result.assignment.size() != static_cast<std::size_t>(normalized.values.rows()))
    throw std::invalid_argument("cluster result does not match the pattern set");
  return spc_of(normalized.values, result);
}

Dendrogram Dendrogram::build(const PatternMatrix& x, ClusterAlgorithm linkage) {
  if (linkage == ClusterAlgorithm::KMeansPP) throw std::invalid_argument("k-means++ has no dendrogram");
  Dendrogram dg;
  dg.linkage_ = linkage;
  const std::size_t n = static_cast<std::size_t>(x.rows());
  dg.n_ = n;
  if (n < 2) return dg;

  Condensed d(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = sq_dist(x, static_cast<Eigen::Index>(i), x, static_cast<Eigen::Index>(j));

  // Nearest-neighbour chain; valid because Ward and average linkage are reducible.
  std::vector<std::size_t> size(n, 1);
  std::vector<char> active(n, 1);
  std::vector<std::size_t> chain;
  std::vector<Merge> created;
  created.reserve(n - 1);
  std::size_t remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        if (active[i]) {
          chain.push_back(i);
          break;
        }
    }
    const std::size_t a = chain.back();
    std::size_t b = static_cast<std::size_t>(-1);
    double best = std::numeric_limits<double>::infinity();
    if (chain.size() >= 2) {
      b = chain[chain.size() - 2];
      best = d(a, b);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!active[j] || j == a) continue;
      const double dj = d(a, j);
      if (dj < best) {
        best = dj;
        b = j;
      }
    }
    if (chain.size() >= 2 && b == chain[chain.size() - 2]) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t keep = std::min(a, b), drop = std::max(a, b);
      const double na = static_cast<double>(size[keep]), nb = static_cast<double>(size[drop]);
      const double dab = d(keep, drop);
      for (std::size_t k = 0; k < n; ++k) {
        if (!active[k] || k == keep || k == drop) continue;
        const double nk = static_cast<double>(size[k]);
        double& dk = d(keep, k);
        if (linkage == ClusterAlgorithm::Ward)
          dk = ((na + nk) * dk + (nb + nk) * d(drop, k) - nk * dab) / (na + nb + nk);
        else
          dk = (na * dk + nb * d(drop, k)) / (na + nb);
      }
      size[keep] += size[drop];
      active[drop] = 0;
      --remaining;
      created.push_back({keep, drop, dab});
    } else {
      chain.push_back(b);
    }
  }
  std::stable_sort(created.begin(), created.end(), [](const Merge& l, const Merge& r) { return l.height < r.height; });
  dg.merges_ = std::move(created);
  return dg;
}

ClusterResult Dendrogram::cut(const PatternMatrix& x, std::size_t k) const {
  if (static_cast<std::size_t>(x.rows()) != n_) throw std::invalid_argument("dendrogram built on a different set");
  if (k == 0 || k > n_) throw std::invalid_argument("K must be in [1, number of patterns]");
  std::vector<std::size_t> parent(n_);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (std::size_t m = 0; m < n_ - k; ++m) {
    const std::size_t ra = find(merges_[m].a), rb = find(merges_[m].b);
    parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::size_t> labels(n_);
  for (std::size_t i = 0; i < n_; ++i) labels[i] = find(i);
  return finalize(x, labels, linkage_);
}

namespace {

struct KMeansState {
  std::vector<std::size_t> labels;
  PatternMatrix centers;
};

/// Lloyd iterations from the given centres; SPC is non-increasing along the way.
void lloyd(const PatternMatrix& x, KMeansState& st, std::size_t max_iter) {
  const Eigen::Index n = x.rows(), k = st.centers.rows();
  st.labels.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::size_t best_c = st.labels[static_cast<std::size_t>(i)];
      double best = sq_dist(x, i, st.centers, static_cast<Eigen::Index>(best_c));
      for (Eigen::Index c = 0; c < k; ++c) {
        const double dc = sq_dist(x, i, st.centers, c);
        if (dc < best) {
          best = dc;
          best_c = static_cast<std::size_t>(c);
        }
      }
      if (best_c != st.labels[static_cast<std::size_t>(i)]) changed = true;
      st.labels[static_cast<std::size_t>(i)] = best_c;
      dist[static_cast<std::size_t>(i)] = best;
    }
    // Empty clusters take the point currently farthest from its centre.
    std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
    for (auto l : st.labels) ++count[l];
    for (Eigen::Index c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < dist.size(); ++i)
        if (dist[i] > dist[far] && count[st.labels[i]] > 1) far = i;
      if (count[st.labels[far]] <= 1) continue;
      --count[st.labels[far]];
      st.labels[far] = static_cast<std::size_t>(c);
      count[static_cast<std::size_t>(c)] = 1;
      dist[far] = 0.0;
      changed = true;
    }
    if (!changed) break;
    st.centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i) st.centers.row(static_cast<Eigen::Index>(st.labels[static_cast<std::size_t>(i)])) += x.row(i);
    for (Eigen::Index c = 0; c < k; ++c)
      if (count[static_cast<std::size_t>(c)] > 0) st.centers.row(c) /= static_cast<double>(count[static_cast<std::size_t>(c)]);
  }
}

PatternMatrix seed_plus_plus(const PatternMatrix& x, std::size_t k, std::mt19937_64& gen) {
  const Eigen::Index n = x.rows();
  PatternMatrix centers(static_cast<Eigen::Index>(k), x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = x.row(first(gen));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(x, i, centers, 0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(gen), acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= target && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(c % static_cast<std::size_t>(n));
    }
    centers.row(static_cast<Eigen::Index>(c)) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(x, i, centers, static_cast<Eigen::Index>(c)));
  }
  return centers;
}

}  // namespace

std::vector<ClusterResult> kmeanspp_path(const PatternMatrix& x, std::size_t k_max, std::uint64_t seed,
                                         const KMeansOptions& options) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  if (k_max == 0 || k_max > n) throw std::invalid_argument("K must be in [1, number of patterns]");
  std::vector<ClusterResult> path;
  path.push_back(finalize(x, std::vector<std::size_t>(n, 0), ClusterAlgorithm::KMeansPP));
  for (std::size_t k = 2; k <= k_max; ++k) {
    const ClusterResult& prev = path.back();
    ClusterResult best;
    double best_spc = std::numeric_limits<double>::infinity();
    auto consider = [&](KMeansState st) {
      lloyd(x, st, options.max_iter);
      ClusterResult r = finalize(x, st.labels, ClusterAlgorithm::KMeansPP);
      const double s = spc_of(x, r);
      if (r.k() == k && s < best_spc) {
        best_spc = s;
        best = std::move(r);
      }
    };

    // Split candidate: previous centres plus the worst-fitted point of the largest-SSE cluster.
    {
      std::vector<double> sse(prev.k(), 0.0);
      for (std::size_t i = 0; i < n; ++i)
        sse[prev.assignment[i]] += sq_dist(x, static_cast<Eigen::Index>(i), prev.centroids, static_cast<Eigen::Index>(prev.assignment[i]));
      const std::size_t worst = static_cast<std::size_t>(std::max_element(sse.begin(), sse.end()) - sse.begin());
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (prev.assignment[i] != worst) continue;
        const double di = sq_dist(x, static_cast<Eigen::Index>(i), prev.centroids, static_cast<Eigen::Index>(worst));
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      KMeansState st;
      st.centers.resize(static_cast<Eigen::Index>(k), x.cols());
      st.centers.topRows(static_cast<Eigen::Index>(k - 1)) = prev.centroids;
      st.centers.row(static_cast<Eigen::Index>(k - 1)) = x.row(static_cast<Eigen::Index>(far));
      consider(std::move(st));
    }
    for (std::size_t r = 0; r < options.restarts; ++r) {
      std::mt19937_64 gen(substream_seed(seed, k, r));
      KMeansState st;
      st.centers = seed_plus_plus(x, k, gen);
      consider(std::move(st));
    }
    if (best.k() != k) throw std::runtime_error("k-means++ could not form the requested number of clusters");
    path.push_back(std::move(best));
  }
  return path;
}

ClusterResult cluster(const NormalizedPatternSet& normalized, std::size_t k, ClusterAlgorithm algorithm,
                      std::uint64_t seed, const KMeansOptions& options) {
  const std::size_t n = static_cast<std::size_t>(normalized.values.rows());
  if (k == 0 || k > n) throw std::invalid_argument("K must be in [1, number of patterns]");
  if (algorithm == ClusterAlgorithm::KMeansPP) return kmeanspp_path(normalized.values, k, seed, options).back();
  return Dendrogram::build(normalized.values, algorithm).cut(normalized.values, k);
}

std::vector<ElbowPoint> elbow_analysis(const NormalizedPatternSet& normalized, const std::vector<std::size_t>& ks,
                                       const std::vector<ClusterAlgorithm>& algorithms, std::uint64_t seed,
                                       const KMeansOptions& options) {
  std::vector<ElbowPoint> out;
  if (ks.empty()) return out;
  const auto& x = normalized.values;
  for (ClusterAlgorithm alg : algorithms) {
    if (alg == ClusterAlgorithm::KMeansPP) {
      const auto path = kmeanspp_path(x, *std::max_element(ks.begin(), ks.end()), seed, options);
      for (std::size_t k : ks) out.push_back({k, alg, spc_of(x, path.at(k - 1))});
    } else {
      const auto dg = Dendrogram::build(x, alg);
      for (std::size_t k : ks) out.push_back({k, alg, spc_of(x, dg.cut(x, k))});
    }
  }
  return out;
}

void write_elbow_csv(std::ostream& out, const std::vector<ElbowPoint>& points) {
  out << "K,algorithm,spc\n";
  char buf[32];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.12g", p.spc);
    out << p.k << ',' << to_string(p.algorithm) << ',' << buf << '\n';
  }
}

void write_cluster_report(std::ostream& out, const std::vector<TimestepClusters>& rows) {
  out << "timestep,K,algorithm,spc,representative_scenario_ids,omegas\n";
  char buf[32];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%.12g", row.spc);
    out << row.timestep << ',' << row.result.k() << ',' << to_string(row.result.algorithm) << ',' << buf << ',';
    for (std::size_t c = 0; c < row.result.k(); ++c) out << (c ? ";" : "") << row.result.representatives[c];
    out << ',';
    for (std::size_t c = 0; c < row.result.k(); ++c)
      out << (c ? ";" : "") << row.result.sizes[c] << '/' << row.result.total();
    out << '\n';
  }
}

}  // namespace lvpoly
