#include "adherelane/qcore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace adherelane::qcore {

void FiniteMDP::validate() const {
  if (num_states <= 0 || num_actions <= 0) {
    throw std::invalid_argument("mdp: state and action counts must be positive");
  }
  const auto sa = static_cast<std::size_t>(num_states) * num_actions;
  if (rewards.size() != sa) throw std::invalid_argument("mdp: reward table has wrong size");
  if (transitions.size() != sa * num_states) {
    throw std::invalid_argument("mdp: transition table has wrong size");
  }
  if (baseline.size() != static_cast<std::size_t>(num_states)) {
    throw std::invalid_argument("mdp: baseline needs one action per state");
  }
  for (int b : baseline) {
    if (b < 0 || b >= num_actions) throw std::invalid_argument("mdp: baseline action out of range");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("mdp: gamma must be in (0, 1)");
  for (int x = 0; x < num_states; ++x) {
    for (int u = 0; u < num_actions; ++u) {
      double sum = 0.0;
      for (int xn = 0; xn < num_states; ++xn) {
        const double pr = p(x, u, xn);
        if (!(pr >= 0.0)) throw std::invalid_argument("mdp: negative transition probability");
        sum += pr;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("mdp: transition row (" + std::to_string(x) +
                                    ", " + std::to_string(u) + ") is not stochastic");
      }
    }
  }
}

QTable::QTable(int num_states, int num_actions, double fill)
    : num_states_(num_states),
      num_actions_(num_actions),
      values_(static_cast<std::size_t>(num_states) * num_actions, fill) {}

double QTable::max(int x) const { return (*this)(x, argmax(x)); }

int QTable::argmax(int x) const {
  int best = 0;
  for (int u = 1; u < num_actions_; ++u) {
    if ((*this)(x, u) > (*this)(x, best)) best = u;
  }
  return best;
}

double sup_norm_distance(const QTable& a, const QTable& b) {
  if (a.values().size() != b.values().size()) {
    throw std::invalid_argument("sup_norm_distance: shape mismatch");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  }
  return d;
}

double adherence_target(const QTable& q, const Sample& s, double theta_hat,
                        const FiniteMDP& mdp) {
  const double comply = s.r + mdp.gamma * q.max(s.x_next);
  const double defy = s.r + mdp.gamma * q(s.x_next, mdp.baseline[s.x_next]);
  return theta_hat * comply + (1.0 - theta_hat) * defy;
}

void adherence_q_update(QTable& q, const Sample& s, double theta_hat,
                        double alpha, const FiniteMDP& mdp) {
  const auto valid_state = [&](int x) { return x >= 0 && x < mdp.num_states; };
  if (!valid_state(s.x) || !valid_state(s.x_next) || s.u < 0 ||
      s.u >= mdp.num_actions) {
    throw std::out_of_range("adherence_q_update: index out of range");
  }
  const double target = adherence_target(q, s, theta_hat, mdp);
  q(s.x, s.u) += alpha * (target - q(s.x, s.u));
}

QTable adherence_bellman(const FiniteMDP& mdp, const QTable& q, double theta) {
  std::vector<double> v(mdp.num_states);
  for (int xn = 0; xn < mdp.num_states; ++xn) {
    v[xn] = theta * q.max(xn) + (1.0 - theta) * q(xn, mdp.baseline[xn]);
  }
  QTable out(mdp.num_states, mdp.num_actions);
  for (int x = 0; x < mdp.num_states; ++x) {
    for (int u = 0; u < mdp.num_actions; ++u) {
      double expected = 0.0;
      for (int xn = 0; xn < mdp.num_states; ++xn) expected += mdp.p(x, u, xn) * v[xn];
      out(x, u) = mdp.r(x, u) + mdp.gamma * expected;
    }
  }
  return out;
}

IterationResult adherence_value_iteration(const FiniteMDP& mdp, double theta,
                                          double tol, int max_sweeps) {
  mdp.validate();
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw std::invalid_argument("adherence_value_iteration: theta must be in [0, 1]");
  }
  IterationResult res{QTable(mdp.num_states, mdp.num_actions), 0};
  while (res.sweeps < max_sweeps) {
    QTable next = adherence_bellman(mdp, res.q, theta);
    ++res.sweeps;
    const double change = sup_norm_distance(next, res.q);
    res.q = std::move(next);
    if (change < tol) break;
  }
  return res;
}

IterationResult value_iteration(const FiniteMDP& mdp, double tol, int max_sweeps) {
  mdp.validate();
  IterationResult res{QTable(mdp.num_states, mdp.num_actions), 0};
  std::vector<double> v(mdp.num_states, 0.0);
  while (res.sweeps < max_sweeps) {
    QTable next(mdp.num_states, mdp.num_actions);
    std::vector<double> v_next(mdp.num_states, -std::numeric_limits<double>::infinity());
    for (int x = 0; x < mdp.num_states; ++x) {
      for (int u = 0; u < mdp.num_actions; ++u) {
        double q = mdp.r(x, u);
        for (int xn = 0; xn < mdp.num_states; ++xn) {
          q += mdp.gamma * mdp.p(x, u, xn) * v[xn];
        }
        next(x, u) = q;
        v_next[x] = std::max(v_next[x], q);
      }
    }
    ++res.sweeps;
    const double change = sup_norm_distance(next, res.q);
    res.q = std::move(next);
    v = std::move(v_next);
    if (change < tol) break;
  }
  return res;
}

TabularResult train_tabular(const FiniteMDP& mdp, double theta_true,
                            const TabularTrainConfig& cfg) {
  mdp.validate();
  if (cfg.episodes <= 0 || cfg.episode_length <= 0) {
    throw std::invalid_argument("train_tabular: episodes and episode_length must be > 0");
  }
  Rng rng(cfg.seed);
  ComplianceModel compliance(theta_true, rng());
  std::uniform_int_distribution<int> pick_state(0, mdp.num_states - 1);
  std::uniform_int_distribution<int> pick_action(0, mdp.num_actions - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TabularResult res{QTable(mdp.num_states, mdp.num_actions),
                    AdherenceEstimator(cfg.theta_init), 0};
  std::vector<double> row(mdp.num_states);
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    int x = pick_state(rng);
    for (int k = 0; k < cfg.episode_length; ++k) {
      const int recommended =
          unit(rng) < cfg.epsilon ? pick_action(rng) : res.q.argmax(x);
      const bool complied = compliance.draw();
      const int u = complied ? recommended : mdp.baseline[x];
      res.estimator.update(complied);

      for (int xn = 0; xn < mdp.num_states; ++xn) row[xn] = mdp.p(x, u, xn);
      std::discrete_distribution<int> next_state(row.begin(), row.end());
      const int xn = next_state(rng);

      const double alpha =
          cfg.alpha0 / (1.0 + static_cast<double>(res.steps) / cfg.alpha_tau);
      adherence_q_update(res.q, {x, u, mdp.r(x, u), xn},
                         res.estimator.theta_hat(), alpha, mdp);
      ++res.steps;
      x = xn;
    }
  }
  return res;
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok.front() == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw std::invalid_argument("mdp file: unexpected end of input");
}

void expect_keyword(std::istream& in, const std::string& kw) {
  const std::string tok = next_token(in);
  if (tok != kw) {
    throw std::invalid_argument("mdp file: expected '" + kw + "', found '" + tok + "'");
  }
}

double next_number(std::istream& in) {
  const std::string tok = next_token(in);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size()) {
    throw std::invalid_argument("mdp file: expected a number, found '" + tok + "'");
  }
  return value;
}

int next_int(std::istream& in) {
  const double v = next_number(in);
  if (v != std::floor(v)) throw std::invalid_argument("mdp file: expected an integer");
  return static_cast<int>(v);
}

}  // namespace

FiniteMDP read_finite_mdp(std::istream& in) {
  FiniteMDP mdp;
  expect_keyword(in, "states");
  mdp.num_states = next_int(in);
  expect_keyword(in, "actions");
  mdp.num_actions = next_int(in);
  if (mdp.num_states <= 0 || mdp.num_actions <= 0) {
    throw std::invalid_argument("mdp file: state and action counts must be positive");
  }
  expect_keyword(in, "gamma");
  mdp.gamma = next_number(in);
  expect_keyword(in, "baseline");
  for (int x = 0; x < mdp.num_states; ++x) mdp.baseline.push_back(next_int(in));
  expect_keyword(in, "rewards");
  const auto sa = static_cast<std::size_t>(mdp.num_states) * mdp.num_actions;
  for (std::size_t i = 0; i < sa; ++i) mdp.rewards.push_back(next_number(in));
  expect_keyword(in, "transitions");
  for (std::size_t i = 0; i < sa * mdp.num_states; ++i) {
    mdp.transitions.push_back(next_number(in));
  }
  mdp.validate();
  return mdp;
}

FiniteMDP load_finite_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mdp file " + path.string());
  return read_finite_mdp(in);
}

void write_finite_mdp(std::ostream& out, const FiniteMDP& mdp) {
  out << std::setprecision(17);
  out << "states " << mdp.num_states << "\nactions " << mdp.num_actions
      << "\ngamma " << mdp.gamma << "\nbaseline";
  for (int b : mdp.baseline) out << ' ' << b;
  out << "\nrewards\n";
  for (int x = 0; x < mdp.num_states; ++x) {
    for (int u = 0; u < mdp.num_actions; ++u) out << (u ? " " : "") << mdp.r(x, u);
    out << '\n';
  }
  out << "transitions\n";
  for (int x = 0; x < mdp.num_states; ++x) {
    for (int u = 0; u < mdp.num_actions; ++u) {
      for (int xn = 0; xn < mdp.num_states; ++xn) {
        out << (xn ? " " : "") << mdp.p(x, u, xn);
      }
      out << '\n';
    }
  }
}

}  // namespace adherelane::qcore
