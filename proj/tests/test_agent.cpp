#include <cmath>
#include <filesystem>
#include <set>

#include "helpers.hpp"
#include "sfc/agent.hpp"

using namespace sfc;

namespace {

nn::Mlp hand_net() {
  Rng rng(0);
  nn::Mlp net({2, 2, 1}, rng);
  net.params() << 1, 2, -1, 0, 0, -1, 1, 3, 0.5;
  return net;
}

}  // namespace

TEST_CASE("mlp forward by hand") {
  const auto net = hand_net();
  nn::Matrix x(2, 1);
  x << 1, 2;
  CHECK(net.forward(x)(0, 0) == 3.5);

  Rng rng(1);
  nn::Mlp zero({4, 8, 3}, rng);
  zero.params().setZero();
  CHECK(zero.forward(nn::Matrix::Random(4, 5)).cwiseAbs().maxCoeff() == 0.0);
  testing::check_error(Errc::ShapeMismatch, [&] { zero.forward(nn::Matrix::Zero(3, 1)); });
}

TEST_CASE("td loss gradient matches finite differences") {
  Rng rng(2);
  nn::Mlp net({5, 7, 6, 4}, rng);
  nn::Matrix x(5, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  const std::vector<std::size_t> actions{0, 3, 1, 1, 2, 3};
  const std::vector<double> targets{0.5, -1, 2, 0, 1, -0.3};
  nn::Vector grad, unused;
  net.td_loss_grad(x, actions, targets, grad);
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double h = 1e-6, p = net.params()[i];
    net.params()[i] = p + h;
    const double up = net.td_loss_grad(x, actions, targets, unused);
    net.params()[i] = p - h;
    const double down = net.td_loss_grad(x, actions, targets, unused);
    net.params()[i] = p;
    CHECK(grad[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5).scale(1e-4));
  }
}

TEST_CASE("duplicated samples leave the td loss and gradient unchanged") {
  Rng rng(3);
  nn::Mlp net({3, 4, 2}, rng);
  nn::Matrix one(3, 1);
  one << 0.2, -0.4, 0.9;
  nn::Matrix two(3, 2);
  two << one, one;
  nn::Vector g1, g2;
  const double l1 = net.td_loss_grad(one, {1}, {0.7}, g1);
  const double l2 = net.td_loss_grad(two, {1, 1}, {0.7, 0.7}, g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-14));
  CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("epsilon schedule") {
  AgentConfig c;
  c.epsilon_decay_steps = 100;
  CHECK(epsilon_at(c, 0) == 1.0);
  CHECK(epsilon_at(c, 50) == doctest::Approx(0.525));
  CHECK(epsilon_at(c, 100) == doctest::Approx(0.05));
  CHECK(epsilon_at(c, 10000) == doctest::Approx(0.05));
}

TEST_CASE("action selection") {
  const auto net = hand_net();
  Rng rng(4);
  CHECK(select_action(net, {1, 2}, 0.0, {true}, rng) == 0);

  Rng r2(5);
  nn::Mlp wide({2, 6}, r2);
  wide.params().setZero();
  const std::vector<bool> only_wait{true, false, false, false, false, false};
  for (int i = 0; i < 100; ++i) CHECK(select_action(wide, {0, 0}, 1.0, only_wait, rng) == 0);
  const std::vector<bool> all(6, true);
  CHECK(select_action(wide, {0, 0}, 0.0, all, rng) == 0);

  // Uniform exploration: chi-square over 6 actions, 5 dof, p = 0.001 cut 20.52.
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[select_action(wide, {0, 0}, 1.0, all, rng)];
  double chi = 0;
  for (int c : counts) chi += (c - n / 6.0) * (c - n / 6.0) / (n / 6.0);
  CHECK(chi < 20.52);
}

TEST_CASE("replay buffer") {
  ReplayBuffer b(4);
  for (int i = 0; i < 6; ++i) b.push({{static_cast<double>(i)}, 0, 0.0, {}, false, {}});
  CHECK(b.size() == 4);
  std::multiset<double> kept;
  for (std::size_t i = 0; i < b.size(); ++i) kept.insert(b.at(i).obs[0]);
  CHECK(kept == std::multiset<double>{2, 3, 4, 5});

  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto idx = b.sample(1 + rng.below(4), rng);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == idx.size());
    for (auto i : idx) CHECK(i < 4);
  }
  testing::check_error(Errc::ShapeMismatch, [&] { b.sample(5, rng); });
}

TEST_CASE("target network syncs on schedule") {
  AgentConfig c;
  c.warmup = 4;
  c.batch_size = 4;
  c.target_sync = 10;
  DqnAgent agent(3, 2, c, 7);
  Rng rng(8);
  for (int s = 1; s <= 10; ++s) {
    Transition t{{rng.uniform(), rng.uniform(), rng.uniform()}, rng.below(2), rng.uniform(),
                 {rng.uniform(), rng.uniform(), rng.uniform()}, false, {true, true}};
    agent.observe(t);
    if (s == 9) CHECK(agent.target().params() != agent.online().params());
  }
  CHECK(agent.steps() == 10);
  CHECK(agent.target().params() == agent.online().params());
}

TEST_CASE("training is deterministic") {
  AgentConfig c;
  c.warmup = 32;
  const auto factory = smoke_env_factory();
  const auto a = train_agent(factory, c, 3, 11);
  const auto b = train_agent(factory, c, 3, 11);
  CHECK(reward_trace_csv(a.trace) == reward_trace_csv(b.trace));
  CHECK(a.network.params() == b.network.params());
  CHECK(reward_trace_csv(a.trace).rfind("episode,total_reward,served,dropped\n", 0) == 0);

  auto env = factory(99);
  const auto stat = run_greedy_episode(*env, a.network);
  CHECK(env->done());
  CHECK(stat.served + stat.dropped == env->info().served + env->info().dropped);

  const auto path = std::filesystem::temp_directory_path() / "sfc_net_test.txt";
  save_network(a.network, path);
  const auto back = load_network(path);
  CHECK(back.sizes() == a.network.sizes());
  CHECK(back.params() == a.network.params());
  std::filesystem::remove(path);
}

TEST_CASE("agent config json") {
  AgentConfig c;
  c.hidden = {8, 8};
  c.gamma = 0.5;
  const auto back = agent_config_from_json(agent_config_to_json(c));
  CHECK(back.hidden == c.hidden);
  CHECK(back.gamma == 0.5);
  testing::check_error(Errc::ConfigError, [] { agent_config_from_json({{"gamma", 1.5}}); });
}

namespace {

std::pair<double, double> decile_means(const std::vector<EpisodeStat>& trace) {
  const std::size_t d = trace.size() / 10;
  double first = 0, last = 0;
  for (std::size_t i = 0; i < d; ++i) {
    first += trace[i].total_reward;
    last += trace[trace.size() - d + i].total_reward;
  }
  return {first / static_cast<double>(d), last / static_cast<double>(d)};
}

}  // namespace

TEST_CASE("a linear Q-function learns on the smoke environment") {
  AgentConfig c;
  c.hidden = {};
  c.epsilon_decay_steps = 3000;
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [first, last] = decile_means(train_agent(smoke_env_factory(), c, 100, seed).trace);
    improved += last > first;
  }
  CHECK(improved >= 8);
}

TEST_CASE("exploration pinned at one leaves the reward trace flat") {
  AgentConfig c;
  c.epsilon_start = c.epsilon_end = 1.0;
  std::vector<double> diffs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [first, last] = decile_means(train_agent(smoke_env_factory(), c, 100, seed).trace);
    diffs.push_back(last - first);
  }
  double mean = 0, var = 0;
  for (double d : diffs) mean += d / 10;
  for (double d : diffs) var += (d - mean) * (d - mean) / 9;
  // Mean first-to-last change within three standard errors of zero.
  CHECK(std::abs(mean) < 3 * std::sqrt(var / 10));
}
