#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfc/environment.hpp"
#include "sfc/nn.hpp"
#include "sfc/rng.hpp"

namespace sfc {

struct AgentConfig {
  double gamma = 0.9;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_steps = 5000;
  std::size_t batch_size = 32;
  std::int64_t target_sync = 250;
  std::size_t buffer_capacity = 20000;
  std::size_t warmup = 256;  // transitions collected before learning starts
  double grad_clip = 10.0;   // gradient norm cap; 0 disables
  std::vector<int> hidden = {64};
};

AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig base = {});
nlohmann::json agent_config_to_json(const AgentConfig& c);

// Linear decay from start to end over decay_steps, then flat.
double epsilon_at(const AgentConfig& c, std::int64_t step);

struct Transition {
  Observation obs;
  std::size_t action = 0;
  double reward = 0.0;
  Observation next;
  bool done = false;
  std::vector<bool> next_mask;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_[i]; }
  // Distinct indices, uniform without replacement. n <= size().
  std::vector<std::size_t> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

// Epsilon-greedy over feasible actions; greedy ties go to the lowest index.
std::size_t select_action(const nn::Mlp& net, const Observation& obs, double epsilon, const std::vector<bool>& mask,
                          Rng& rng);

class DqnAgent {
 public:
  DqnAgent(std::size_t observation_size, std::size_t action_count, const AgentConfig& config, std::uint64_t seed);

  std::size_t act(const Observation& obs, const std::vector<bool>& mask);
  // Stores the transition, learns once the buffer is warm and syncs the
  // target network every target_sync steps.
  void observe(Transition t);

  const nn::Mlp& online() const { return online_; }
  const nn::Mlp& target() const { return target_; }
  std::int64_t steps() const { return steps_; }
  double epsilon() const { return epsilon_at(config_, steps_); }

 private:
  void learn();

  AgentConfig config_;
  nn::Mlp online_, target_;
  nn::Sgd sgd_;
  ReplayBuffer buffer_;
  Rng rng_;
  std::int64_t steps_ = 0;
};

struct EpisodeStat {
  int episode = 0;
  double total_reward = 0.0;
  std::int64_t served = 0;
  std::int64_t dropped = 0;
};

// Returns a freshly reset environment for the given episode seed.
using EnvFactory = std::function<std::unique_ptr<Environment>(std::uint64_t episode_seed)>;

struct AgentTrainResult {
  nn::Mlp network;
  std::vector<EpisodeStat> trace;
};

AgentTrainResult train_agent(const EnvFactory& factory, const AgentConfig& config, int episodes,
                             std::uint64_t seed);

// Runs one greedy episode (epsilon 0) with the given network.
EpisodeStat run_greedy_episode(Environment& env, const nn::Mlp& net);

std::string reward_trace_csv(const std::vector<EpisodeStat>& trace);

// Text format: "mlp <n> <size_0> ... <size_n-1>" then one parameter per line.
void save_network(const nn::Mlp& net, const std::filesystem::path& path);
nn::Mlp load_network(const std::filesystem::path& path);

// Two DCs, one active three-VNF service, short horizon; used for the
// learning-signal check.
EnvFactory smoke_env_factory();

}  // namespace sfc
