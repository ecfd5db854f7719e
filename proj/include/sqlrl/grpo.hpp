#pragma once

// Group-relative policy optimisation over scalar rewards and per-sample
// log-probabilities, plus a categorical toy policy used to exercise the
// update rule end to end at desk scale.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "sqlrl/error.hpp"
#include "sqlrl/reward_engine.hpp"

namespace sqlrl::grpo {

struct GroupSample {
  double reward = 0.0;
  double logp_new = 0.0;
  double logp_old = 0.0;
  double logp_ref = 0.0;
};

struct GrpoConfig {
  double epsilon = 0.2;
  double beta = 0.04;
  int group_size = 8;
  // Divide advantages by the group standard deviation. Off: plain mean
  // subtraction is the reference form.
  bool normalize_advantages = false;
};

struct ObjectiveResult {
  double objective = 0.0;
  double clipped_fraction = 0.0;
  double kl = 0.0;
};

/// A_i = R_i - mean(R). Optionally scaled by 1/std (skipped when std is 0).
inline std::vector<double> advantages(std::span<const double> rewards, bool normalize = false) {
  if (rewards.empty()) throw Error(ErrorKind::EmptyGroup, "advantages of an empty group");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  std::vector<double> a(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) a[i] = rewards[i] - mean;
  if (normalize) {
    double var = 0.0;
    for (double x : a) var += x * x;
    const double sd = std::sqrt(var / n);
    if (sd > 0.0)
      for (double& x : a) x /= sd;
  }
  return a;
}

/// Non-negative per-sample KL estimate exp(d) - d - 1 with d = logp_ref - logp_new.
inline double kl_k3(double logp_new, double logp_ref) {
  const double d = logp_ref - logp_new;
  return std::max(0.0, std::expm1(d) - d);
}

inline double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

/// Clipped surrogate minus beta * KL, with caller-supplied advantages.
inline ObjectiveResult grpo_objective(std::span<const GroupSample> samples, std::span<const double> adv,
                                      const GrpoConfig& cfg) {
  if (samples.empty()) throw Error(ErrorKind::EmptyGroup, "objective of an empty group");
  if (samples.size() != adv.size()) throw Error(ErrorKind::InvalidArgument, "samples and advantages differ in length");
  if (!(cfg.epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be > 0");
  if (cfg.beta < 0.0) throw Error(ErrorKind::InvalidArgument, "beta must be >= 0");
  ObjectiveResult r;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!std::isfinite(s.logp_new) || !std::isfinite(s.logp_old) || !std::isfinite(s.logp_ref))
      throw Error(ErrorKind::InvalidArgument, "log-probabilities must be finite");
    const double ratio = std::exp(s.logp_new - s.logp_old);
    const double unclipped = ratio * adv[i];
    const double clipped_term = clip(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * adv[i];
    if (clipped_term < unclipped) ++clipped;
    r.objective += std::min(unclipped, clipped_term);
    r.kl += kl_k3(s.logp_new, s.logp_ref);
  }
  const double g = static_cast<double>(samples.size());
  r.objective /= g;
  r.kl /= g;
  r.clipped_fraction = static_cast<double>(clipped) / g;
  r.objective -= cfg.beta * r.kl;
  return r;
}

/// Advantages computed from the sample rewards. The group must have
/// cfg.group_size members.
inline ObjectiveResult grpo_objective(std::span<const GroupSample> samples, const GrpoConfig& cfg) {
  if (static_cast<int>(samples.size()) != cfg.group_size)
    throw Error(ErrorKind::InvalidArgument, "group has " + std::to_string(samples.size()) + " samples, config says " +
                                                std::to_string(cfg.group_size));
  std::vector<double> rewards;
  rewards.reserve(samples.size());
  for (const auto& s : samples) rewards.push_back(s.reward);
  auto adv = advantages(rewards, cfg.normalize_advantages);
  return grpo_objective(samples, adv, cfg);
}

/// Softmax policy over a finite candidate pool.
struct ToyPolicy {
  std::vector<double> logits;

  static ToyPolicy uniform(std::size_t n) { return ToyPolicy{std::vector<double>(n, 0.0)}; }

  std::vector<double> probs() const {
    std::vector<double> p(logits.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) z += (p[k] = std::exp(logits[k] - mx));
    for (double& x : p) x /= z;
    return p;
  }

  std::vector<double> log_probs() const {
    std::vector<double> lp(logits.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < lp.size(); ++k) lp[k] = logits[k] - lse;
    return lp;
  }
};

/// KL(p || q) for two categorical policies over the same pool.
inline double exact_kl(const ToyPolicy& p, const ToyPolicy& q) {
  auto lp = p.log_probs(), lq = q.log_probs();
  double kl = 0.0;
  for (std::size_t k = 0; k < lp.size(); ++k) kl += std::exp(lp[k]) * (lp[k] - lq[k]);
  return std::max(0.0, kl);
}

/// A sampled group over a toy policy: which candidate each member drew and
/// its advantage. Old and reference policies are held fixed.
struct ToyGroup {
  std::vector<std::size_t> picks;
  std::vector<double> advantages;
};

inline std::vector<GroupSample> toy_samples(const ToyPolicy& current, const ToyPolicy& old, const ToyPolicy& ref,
                                            const ToyGroup& group) {
  auto lc = current.log_probs(), lo = old.log_probs(), lr = ref.log_probs();
  std::vector<GroupSample> s;
  s.reserve(group.picks.size());
  for (std::size_t k : group.picks) s.push_back({0.0, lc[k], lo[k], lr[k]});
  return s;
}

inline double toy_objective(const ToyPolicy& current, const ToyPolicy& old, const ToyPolicy& ref,
                            const ToyGroup& group, const GrpoConfig& cfg) {
  auto s = toy_samples(current, old, ref, group);
  return grpo_objective(s, group.advantages, cfg).objective;
}

/// Analytic gradient of toy_objective with respect to current.logits.
inline std::vector<double> toy_objective_gradient(const ToyPolicy& current, const ToyPolicy& old,
                                                  const ToyPolicy& ref, const ToyGroup& group, const GrpoConfig& cfg) {
  const auto p = current.probs();
  const auto lc = current.log_probs(), lo = old.log_probs(), lr = ref.log_probs();
  std::vector<double> grad(p.size(), 0.0);
  const double g = static_cast<double>(group.picks.size());
  for (std::size_t i = 0; i < group.picks.size(); ++i) {
    const std::size_t k = group.picks[i];
    const double a = group.advantages[i];
    const double ratio = std::exp(lc[k] - lo[k]);
    const double unclipped = ratio * a;
    const double clipped = clip(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * a;
    // d/dθ of min(...): flows through the ratio unless the clip bound binds.
    double coeff = unclipped <= clipped ? a * ratio : 0.0;
    // d/dθ of -β(exp(d) - d - 1), d = lr - lc.
    coeff -= cfg.beta * (1.0 - std::exp(lr[k] - lc[k]));
    coeff /= g;
    // ∇ log p_k = e_k - p
    for (std::size_t j = 0; j < p.size(); ++j) grad[j] -= coeff * p[j];
    grad[k] += coeff;
  }
  return grad;
}

struct SimulationConfig {
  GrpoConfig grpo;
  int steps = 200;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  int old_refresh_every = 1;  // steps between old-policy snapshots
  int updates_per_step = 1;
};

struct TrajectoryPoint {
  int step = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  std::vector<double> probs;
};

/// Trains a toy policy over `pool_size` candidates. reward_of(k) scores
/// candidate k. The reference policy is the uniform initial policy.
inline std::vector<TrajectoryPoint> simulate_training(std::size_t pool_size,
                                                      const std::function<double(std::size_t)>& reward_of,
                                                      const SimulationConfig& cfg) {
  if (pool_size == 0) throw Error(ErrorKind::EmptyGroup, "empty candidate pool");
  if (cfg.grpo.group_size < 1) throw Error(ErrorKind::InvalidArgument, "group_size must be >= 1");
  if (cfg.steps < 0 || cfg.old_refresh_every < 1 || cfg.updates_per_step < 1)
    throw Error(ErrorKind::InvalidArgument, "invalid simulation schedule");

  ToyPolicy policy = ToyPolicy::uniform(pool_size);
  const ToyPolicy ref = policy;
  ToyPolicy old = policy;
  std::mt19937_64 rng(cfg.seed);

  std::vector<TrajectoryPoint> traj;
  traj.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 1; step <= cfg.steps; ++step) {
    if ((step - 1) % cfg.old_refresh_every == 0) old = policy;
    auto p_old = old.probs();
    std::discrete_distribution<std::size_t> draw(p_old.begin(), p_old.end());

    ToyGroup group;
    std::vector<double> rewards;
    for (int i = 0; i < cfg.grpo.group_size; ++i) {
      std::size_t k = draw(rng);
      group.picks.push_back(k);
      rewards.push_back(reward_of(k));
    }
    group.advantages = advantages(rewards, cfg.grpo.normalize_advantages);

    for (int u = 0; u < cfg.updates_per_step; ++u) {
      auto grad = toy_objective_gradient(policy, old, ref, group, cfg.grpo);
      for (std::size_t j = 0; j < grad.size(); ++j) policy.logits[j] += cfg.learning_rate * grad[j];
    }

    TrajectoryPoint pt;
    pt.step = step;
    const double n = static_cast<double>(rewards.size());
    pt.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - pt.mean_reward) * (r - pt.mean_reward);
    pt.std_reward = std::sqrt(var / n);
    pt.probs = policy.probs();
    traj.push_back(std::move(pt));
  }
  return traj;
}

/// Scores each pool response once against the gold record, then trains on
/// that reward table. Scoring up front keeps trajectories deterministic even
/// though execution timings are not.
inline std::vector<TrajectoryPoint> simulate_training(const std::vector<std::string>& pool, const GoldRecord& gold,
                                                      RewardEngine& engine, const SimulationConfig& cfg,
                                                      std::vector<double>* pool_rewards = nullptr) {
  std::vector<double> table;
  table.reserve(pool.size());
  for (const auto& response : pool) table.push_back(engine.score_response(response, gold).total);
  if (pool_rewards) *pool_rewards = table;
  return simulate_training(pool.size(), [&](std::size_t k) { return table[k]; }, cfg);
}

}  // namespace sqlrl::grpo
