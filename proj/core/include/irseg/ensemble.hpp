#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "irseg/grid.hpp"

namespace irseg {

enum class VoteRule { kSoftMean, kHardMajority };

/// Pixelwise mean of the member posteriors. Values are summed in sorted order so the
/// result does not depend on member order.
ProbabilityMap vote(const std::vector<const ProbabilityMap*>& members);
std::vector<double> vote(const std::vector<std::span<const double>>& members);

/// Fraction of members whose own lambda-thresholded label is cloud.
std::vector<double> hard_vote(const std::vector<std::span<const double>>& members, std::span<const double> lambdas);

struct VotingEnsemble {
  std::vector<std::size_t> members;  // indices into the candidate list
  std::vector<std::string> names;
  double lambda = 1.0;
  double j = 0.0;
  VoteRule rule = VoteRule::kSoftMean;
};

struct SubsetScore {
  std::vector<std::size_t> members;
  double lambda = 1.0;
  double j = 0.0;
};

struct SubsetSearch {
  VotingEnsemble best;
  std::vector<SubsetScore> evaluated;  // in enumeration order (by size, then lexicographic)
};

/// Exhaustive search over every subset of at least two candidates (at most 10
/// candidates). Each subset's combined posterior gets its own tuned lambda; the best J
/// wins and ties go to the smaller subset, then the earlier one.
/// `member_lambdas` is required for the hard-majority rule only.
SubsetSearch select_subset(const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& validation_posteriors,
                           std::span<const std::uint8_t> validation_truth, VoteRule rule = VoteRule::kSoftMean,
                           std::span<const double> member_lambdas = {});

}  // namespace irseg
