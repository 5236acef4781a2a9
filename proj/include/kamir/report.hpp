#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kamir/lora.hpp"

namespace kamir {

struct GroupedVector {
  std::string group;
  std::string doc_id;
  std::vector<float> values;
};

struct GroupProfile {
  std::string group;
  std::vector<double> mean;
  std::vector<double> stddev;  // population
  std::size_t count = 0;
};

// Per-group elementwise mean and population standard deviation; groups appear
// in first-seen input order.
std::vector<GroupProfile> group_profiles(std::span<const GroupedVector> vectors);

struct Projection2D {
  std::vector<std::array<double, 2>> points;          // input order
  std::array<double, 2> explained_variance{};         // ratios, non-increasing
  std::array<std::vector<double>, 2> components;      // orthonormal
};

// Mean-centered PCA via Jacobi eigendecomposition of the covariance; the
// first nonzero loading of each component is made positive. Needs >= 3
// vectors of equal length.
Projection2D project_2d(std::span<const GroupedVector> vectors);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

// Writes profiles.csv, projection.csv, profiles.svg, projection.svg,
// summary.txt, and dynamics_summary.csv (the last only when dynamics rows are
// present). Byte-deterministic for identical inputs.
void render_report(std::span<const GroupProfile> profiles,
                   std::span<const GroupedVector> vectors,
                   const std::optional<Projection2D>& projection,
                   std::span<const GroupSummary> dynamics, const std::string& out_dir);

}  // namespace kamir
