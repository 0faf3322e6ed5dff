#include "sfc/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sfc/error.hpp"
#include "sfc/json_io.hpp"

namespace sfc {

AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig c) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "agent section must be an object");
  try {
    c.gamma = j.value("gamma", c.gamma);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
    c.epsilon_end = j.value("epsilon_end", c.epsilon_end);
    c.epsilon_decay_steps = j.value("epsilon_decay_steps", c.epsilon_decay_steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.target_sync = j.value("target_sync", c.target_sync);
    c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
    c.warmup = j.value("warmup", c.warmup);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.hidden = j.value("hidden", c.hidden);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("bad agent section: ") + e.what());
  }
  const bool ok = c.gamma > 0 && c.gamma <= 1 && c.learning_rate > 0 && c.momentum >= 0 && c.momentum < 1 &&
                  c.epsilon_start >= 0 && c.epsilon_start <= 1 && c.epsilon_end >= 0 && c.epsilon_end <= 1 &&
                  c.epsilon_decay_steps > 0 && c.batch_size > 0 && c.target_sync > 0 &&
                  c.buffer_capacity >= c.batch_size && c.grad_clip >= 0 &&
                  std::all_of(c.hidden.begin(), c.hidden.end(), [](int h) { return h > 0; });
  if (!ok) throw Error(Errc::ConfigError, "invalid agent configuration");
  return c;
}

nlohmann::json agent_config_to_json(const AgentConfig& c) {
  return {{"gamma", c.gamma},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"epsilon_decay_steps", c.epsilon_decay_steps},
          {"batch_size", c.batch_size},
          {"target_sync", c.target_sync},
          {"buffer_capacity", c.buffer_capacity},
          {"warmup", c.warmup},
          {"grad_clip", c.grad_clip},
          {"hidden", c.hidden}};
}

double epsilon_at(const AgentConfig& c, std::int64_t step) {
  if (step >= c.epsilon_decay_steps) return c.epsilon_end;
  const double frac = static_cast<double>(step) / static_cast<double>(c.epsilon_decay_steps);
  return c.epsilon_start + (c.epsilon_end - c.epsilon_start) * frac;
}

// --------------------------------------------------------------- replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(Errc::ConfigError, "replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (n > items_.size()) throw Error(Errc::ShapeMismatch, "sample larger than the buffer");
  // Floyd's algorithm: n distinct indices with O(n) draws.
  std::vector<std::size_t> out;
  out.reserve(n);
  const std::size_t N = items_.size();
  for (std::size_t j = N - n; j < N; ++j) {
    const std::size_t t = rng.below(j + 1);
    if (std::find(out.begin(), out.end(), t) == out.end())
      out.push_back(t);
    else
      out.push_back(j);
  }
  return out;
}

// ------------------------------------------------------------- acting

std::size_t select_action(const nn::Mlp& net, const Observation& obs, double epsilon, const std::vector<bool>& mask,
                          Rng& rng) {
  std::vector<std::size_t> feasible;
  for (std::size_t a = 0; a < mask.size(); ++a)
    if (mask[a]) feasible.push_back(a);
  if (feasible.empty()) throw Error(Errc::ShapeMismatch, "no feasible action");
  if (rng.uniform() < epsilon) return feasible[rng.below(feasible.size())];
  const nn::Matrix q = net.forward(Eigen::Map<const nn::Vector>(obs.data(), static_cast<Eigen::Index>(obs.size())));
  if (static_cast<std::size_t>(q.rows()) != mask.size()) throw Error(Errc::ShapeMismatch, "mask and Q sizes differ");
  std::size_t best = feasible.front();
  for (std::size_t a : feasible)
    if (q(static_cast<Eigen::Index>(a), 0) > q(static_cast<Eigen::Index>(best), 0)) best = a;
  return best;
}

namespace {

std::vector<int> layer_sizes(std::size_t in, std::size_t out, const std::vector<int>& hidden) {
  std::vector<int> s{static_cast<int>(in)};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(static_cast<int>(out));
  return s;
}

nn::Mlp make_net(std::size_t in, std::size_t out, const AgentConfig& c, std::uint64_t seed) {
  Rng init(derive_seed(seed, {hash_tag("init")}));
  return nn::Mlp(layer_sizes(in, out, c.hidden), init);
}

}  // namespace

DqnAgent::DqnAgent(std::size_t observation_size, std::size_t action_count, const AgentConfig& config,
                   std::uint64_t seed)
    : config_(config),
      online_(make_net(observation_size, action_count, config, seed)),
      target_(online_),
      sgd_(online_.params().size(), config.learning_rate, config.momentum),
      buffer_(config.buffer_capacity),
      rng_(derive_seed(seed, {hash_tag("agent")})) {}

std::size_t DqnAgent::act(const Observation& obs, const std::vector<bool>& mask) {
  return select_action(online_, obs, epsilon(), mask, rng_);
}

void DqnAgent::observe(Transition t) {
  buffer_.push(std::move(t));
  ++steps_;
  if (buffer_.size() >= std::max(config_.warmup, config_.batch_size)) learn();
  if (steps_ % config_.target_sync == 0) target_ = online_;
}

void DqnAgent::learn() {
  const auto idx = buffer_.sample(config_.batch_size, rng_);
  const auto n_in = static_cast<Eigen::Index>(online_.input_size());
  const auto B = static_cast<Eigen::Index>(idx.size());
  nn::Matrix x(n_in, B), xn(n_in, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& t = buffer_.at(idx[b]);
    x.col(b) = Eigen::Map<const nn::Vector>(t.obs.data(), n_in);
    xn.col(b) = Eigen::Map<const nn::Vector>(t.next.data(), n_in);
  }
  const nn::Matrix qn = target_.forward(xn);
  std::vector<std::size_t> actions;
  std::vector<double> targets;
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& t = buffer_.at(idx[b]);
    double y = t.reward;
    if (!t.done) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < t.next_mask.size(); ++a)
        if (t.next_mask[a]) best = std::max(best, qn(static_cast<Eigen::Index>(a), b));
      y += config_.gamma * best;
    }
    actions.push_back(t.action);
    targets.push_back(y);
  }
  nn::Vector grad;
  const double loss = online_.td_loss_grad(x, actions, targets, grad);
  if (!std::isfinite(loss)) throw Error(Errc::InvariantViolation, "Q-values diverged");
  if (config_.grad_clip > 0) {
    const double norm = grad.norm();
    if (norm > config_.grad_clip) grad *= config_.grad_clip / norm;
  }
  sgd_.step(online_.params(), grad);
  if (!online_.params().allFinite()) throw Error(Errc::InvariantViolation, "agent parameters diverged");
}

// ------------------------------------------------------------ training

AgentTrainResult train_agent(const EnvFactory& factory, const AgentConfig& config, int episodes,
                             std::uint64_t seed) {
  if (episodes < 1) throw Error(Errc::ConfigError, "episodes must be at least 1");
  AgentTrainResult result;
  std::unique_ptr<DqnAgent> agent;
  for (int ep = 1; ep <= episodes; ++ep) {
    auto env = factory(derive_seed(seed, {hash_tag("episode"), static_cast<std::uint64_t>(ep)}));
    if (!agent) agent = std::make_unique<DqnAgent>(env->observation_size(), env->action_count(), config, seed);
    EpisodeStat stat;
    stat.episode = ep;
    Observation obs = env->observe();
    std::vector<bool> mask = env->feasible_mask();
    while (!env->done()) {
      const std::size_t a = agent->act(obs, mask);
      StepOutcome out = env->step(env->action_at(a));
      stat.total_reward += out.reward;
      std::vector<bool> next_mask = out.done ? std::vector<bool>(mask.size(), false) : env->feasible_mask();
      agent->observe({std::move(obs), a, out.reward, out.observation, out.done, next_mask});
      obs = std::move(out.observation);
      mask = std::move(next_mask);
    }
    stat.served = env->info().served;
    stat.dropped = env->info().dropped;
    result.trace.push_back(stat);
  }
  result.network = agent->online();
  return result;
}

EpisodeStat run_greedy_episode(Environment& env, const nn::Mlp& net) {
  EpisodeStat stat;
  Rng unused(0);
  while (!env.done()) {
    const std::size_t a = select_action(net, env.observe(), 0.0, env.feasible_mask(), unused);
    stat.total_reward += env.step(env.action_at(a)).reward;
  }
  stat.served = env.info().served;
  stat.dropped = env.info().dropped;
  return stat;
}

std::string reward_trace_csv(const std::vector<EpisodeStat>& trace) {
  std::string out = "episode,total_reward,served,dropped\n";
  char buf[128];
  for (const auto& s : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%lld,%lld\n", s.episode, s.total_reward,
                  static_cast<long long>(s.served), static_cast<long long>(s.dropped));
    out += buf;
  }
  return out;
}

void save_network(const nn::Mlp& net, const std::filesystem::path& path) {
  std::string out = "mlp " + std::to_string(net.sizes().size());
  for (int s : net.sizes()) out += " " + std::to_string(s);
  out += "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < net.params().size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g\n", net.params()(i));
    out += buf;
  }
  write_text(path, out);
}

nn::Mlp load_network(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string tag;
  std::size_t n = 0;
  if (!(in >> tag >> n) || tag != "mlp" || n < 2) throw Error(Errc::ParseError, "bad network header");
  std::vector<int> sizes(n);
  for (auto& s : sizes)
    if (!(in >> s) || s <= 0) throw Error(Errc::ParseError, "bad layer size");
  Rng rng(0);
  nn::Mlp net(sizes, rng);
  std::string tok;
  for (Eigen::Index i = 0; i < net.params().size(); ++i) {
    if (!(in >> tok)) throw Error(Errc::ShapeMismatch, "network file has too few parameters");
    net.params()(i) = std::strtod(tok.c_str(), nullptr);
  }
  if (in >> tok) throw Error(Errc::ShapeMismatch, "network file has too many parameters");
  return net;
}

EnvFactory smoke_env_factory() {
  auto topo = Topology::build({{0, 6e9, 12.0}, {1, 6e9, 12.0}}, {{0, 1, 1000.0, 30000.0}});
  std::vector<VnfType> vnfs = {{0, "a", 2e9, 4.0, 0.001}, {1, "b", 2e9, 4.0, 0.001}, {2, "c", 2e9, 4.0, 0.001}};
  std::vector<ServiceType> services;
  for (ServiceClass s : kServiceClasses) services.push_back({s, {0, 1, 2}, 1.0, 0.02, 1, 0.0});
  services[0].arrival_probability = 0.15;
  Catalog catalog(vnfs, services);
  EnvConfig cfg;
  cfg.auto_install = false;
  cfg.idle_timeout = 0;
  cfg.horizon = 100;
  return [topo, catalog, cfg](std::uint64_t seed) {
    auto env = std::make_unique<Environment>(topo, catalog, cfg);
    env->reset(generate_requests(catalog, topo.ids(), cfg.horizon, seed), seed);
    return env;
  };
}

}  // namespace sfc
