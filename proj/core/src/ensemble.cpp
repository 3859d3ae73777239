#include "irseg/ensemble.hpp"

#include <algorithm>

#include "irseg/error.hpp"
#include "irseg/eval.hpp"

namespace irseg {

std::vector<double> vote(const std::vector<std::span<const double>>& members) {
  if (members.empty()) throw usage_error("vote.empty", "vote needs at least one member");
  const auto n = members.front().size();
  for (const auto& m : members) {
    if (m.size() != n) throw data_error("vote.shape", "member posteriors differ in size");
  }
  std::vector<double> out(n);
  std::vector<double> column(members.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double p = members[k][i];
      if (!(p >= 0 && p <= 1)) throw data_error("vote.range", "member posteriors must lie in [0, 1]");
      column[k] = p;
    }
    std::sort(column.begin(), column.end());
    double s = 0;
    for (double p : column) s += p;
    out[i] = std::clamp(s / static_cast<double>(members.size()), column.front(), column.back());
  }
  return out;
}

ProbabilityMap vote(const std::vector<const ProbabilityMap*>& members) {
  if (members.empty()) throw usage_error("vote.empty", "vote needs at least one member");
  std::vector<std::span<const double>> spans;
  for (const auto* m : members) {
    require_same_shape(*members.front(), *m, "vote");
    spans.push_back(m->values());
  }
  ProbabilityMap out(members.front()->width(), members.front()->height());
  const auto v = vote(spans);
  std::copy(v.begin(), v.end(), out.values().begin());
  return out;
}

std::vector<double> hard_vote(const std::vector<std::span<const double>>& members, std::span<const double> lambdas) {
  if (members.empty()) throw usage_error("vote.empty", "vote needs at least one member");
  if (lambdas.size() != members.size()) throw usage_error("vote.lambdas", "hard vote needs one lambda per member");
  const auto n = members.front().size();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (members[k].size() != n) throw data_error("vote.shape", "member posteriors differ in size");
    const double tau = lambda_threshold(lambdas[k]);
    for (std::size_t i = 0; i < n; ++i) out[i] += members[k][i] > tau ? 1.0 : 0.0;
  }
  for (auto& v : out) v /= static_cast<double>(members.size());
  return out;
}

SubsetSearch select_subset(const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& validation_posteriors,
                           std::span<const std::uint8_t> validation_truth, VoteRule rule,
                           std::span<const double> member_lambdas) {
  const auto n = validation_posteriors.size();
  if (n < 2) throw usage_error("ensemble.candidates", "subset selection needs at least 2 candidates");
  if (n > 10) throw usage_error("ensemble.candidates", "subset selection is limited to 10 candidates");
  if (names.size() != n) throw usage_error("ensemble.names", "one name per candidate required");
  if (rule == VoteRule::kHardMajority && member_lambdas.size() != n) {
    throw usage_error("vote.lambdas", "hard vote needs one lambda per member");
  }

  // Enumerate by size, then lexicographically by member indices.
  std::vector<std::vector<std::size_t>> subsets;
  for (std::size_t size = 2; size <= n; ++size) {
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(size), true);
    do {
      std::vector<std::size_t> s;
      for (std::size_t i = 0; i < n; ++i) {
        if (pick[i]) s.push_back(i);
      }
      subsets.push_back(std::move(s));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }

  SubsetSearch out;
  bool have = false;
  for (const auto& s : subsets) {
    std::vector<std::span<const double>> spans;
    std::vector<double> lambdas;
    for (auto i : s) {
      spans.emplace_back(validation_posteriors[i]);
      if (rule == VoteRule::kHardMajority) lambdas.push_back(member_lambdas[i]);
    }
    const auto combined = rule == VoteRule::kSoftMean ? vote(spans) : hard_vote(spans, lambdas);
    const auto tuned = tune_lambda(combined, validation_truth);
    out.evaluated.push_back({s, tuned.lambda, tuned.j});
    if (!have || tuned.j > out.best.j) {
      have = true;
      out.best.members = s;
      out.best.lambda = tuned.lambda;
      out.best.j = tuned.j;
    }
  }
  out.best.rule = rule;
  for (auto i : out.best.members) out.best.names.push_back(names[i]);
  return out;
}

}  // namespace irseg
