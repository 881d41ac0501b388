#pragma once

#include "lvpoly/demand.hpp"
#include "lvpoly/powerflow.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lvpoly {

using PatternMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Customer voltage magnitudes, one row per scenario, one column per customer.
struct PatternSet {
  std::size_t timestep = 0;
  PatternMatrix values;
};

struct NormalizedPatternSet {
  std::size_t timestep = 0;
  PatternMatrix values;  // every entry in [0, 1]
  Eigen::VectorXd col_min;
  Eigen::VectorXd col_max;
};

enum class ClusterAlgorithm { Ward, Average, KMeansPP };

std::string to_string(ClusterAlgorithm a);
ClusterAlgorithm parse_cluster_algorithm(const std::string& name);

struct ClusterResult {
  ClusterAlgorithm algorithm = ClusterAlgorithm::Ward;
  std::vector<std::size_t> assignment;       // cluster of each pattern
  PatternMatrix centroids;                   // K x H, normalized space
  std::vector<std::size_t> representatives;  // pattern closest to each centroid
  std::vector<std::size_t> sizes;            // |C_k|; sums to total

  std::size_t k() const { return sizes.size(); }
  std::size_t total() const { return assignment.size(); }
  double omega(std::size_t cluster) const {
    return static_cast<double>(sizes[cluster]) / static_cast<double>(assignment.size());
  }
  std::vector<double> omegas() const;
};

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iter = 300;
};

/// Customer voltages with every DG unit at zero output, one pattern per scenario.
PatternSet build_patterns(const PowerFlowSolver& solver, const std::vector<DemandScenario>& scenarios,
                          std::size_t timestep, const SolverOptions& options = {});

/// Column-wise min-max scaling; constant columns map to 0.5.
NormalizedPatternSet normalize(const PatternSet& patterns);

/// Clusters are numbered in order of their lowest-index member.
ClusterResult cluster(const NormalizedPatternSet& normalized, std::size_t k, ClusterAlgorithm algorithm,
                      std::uint64_t seed = 0, const KMeansOptions& options = {});

/// Within-cluster sum of squared pattern-to-centroid distances.
double spc_index(const NormalizedPatternSet& normalized, const ClusterResult& result);

/// Agglomerative merge tree for Ward or average linkage on squared Euclidean distances.
class Dendrogram {
public:
  struct Merge {
    std::size_t a, b;
    double height;
  };

  static Dendrogram build(const PatternMatrix& points, ClusterAlgorithm linkage);
  ClusterResult cut(const PatternMatrix& points, std::size_t k) const;
  const std::vector<Merge>& merges() const { return merges_; }

private:
  ClusterAlgorithm linkage_ = ClusterAlgorithm::Ward;
  std::size_t n_ = 0;
  std::vector<Merge> merges_;  // sorted by height, ties in creation order
};

/// Best-of-restarts k-means++ solutions for K = 1..k_max. Each level also tries
/// splitting the largest-SSE cluster of the previous level, so SPC never grows with K.
std::vector<ClusterResult> kmeanspp_path(const PatternMatrix& points, std::size_t k_max, std::uint64_t seed,
                                         const KMeansOptions& options = {});

struct ElbowPoint {
  std::size_t k;
  ClusterAlgorithm algorithm;
  double spc;
};

std::vector<ElbowPoint> elbow_analysis(const NormalizedPatternSet& normalized, const std::vector<std::size_t>& ks,
                                       const std::vector<ClusterAlgorithm>& algorithms, std::uint64_t seed = 0,
                                       const KMeansOptions& options = {});

void write_elbow_csv(std::ostream& out, const std::vector<ElbowPoint>& points);

struct TimestepClusters {
  std::size_t timestep = 0;
  ClusterResult result;
  double spc = 0.0;
};

/// timestep,K,algorithm,spc,representative_scenario_ids,omegas (lists are ';'-separated).
void write_cluster_report(std::ostream& out, const std::vector<TimestepClusters>& rows);

}  // namespace lvpoly
