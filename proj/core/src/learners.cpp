#include "fairaudit/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fairaudit/errors.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit {

namespace {

constexpr const char* kModule = "learners";

double softplus(double u) {
  if (u > 35.0) return u;
  if (u < -35.0) return std::exp(u);
  return std::log1p(std::exp(u));
}

double clamp01_open(double p) {
  const double eps = 1e-12;
  return std::min(1.0 - eps, std::max(eps, p));
}

}  // namespace

void CostPair::validate() const {
  if (!(c_neg > 0.0) || !(c_pos > 0.0))
    throw ConfigError(kModule, "costs must be positive");
}

json CostPair::to_json() const { return json{{"c_neg", c_neg}, {"c_pos", c_pos}}; }

CostPair CostPair::from_json(const json& j) {
  CostPair c;
  if (j.is_array()) {
    // shorthand [c_neg, c_pos]
    c.c_neg = j.at(0).get<double>();
    c.c_pos = j.at(1).get<double>();
  } else {
    c.c_neg = j.at("c_neg").get<double>();
    c.c_pos = j.at("c_pos").get<double>();
  }
  c.validate();
  return c;
}

double cost_threshold(const CostPair& costs) {
  costs.validate();
  return costs.c_neg / (costs.c_neg + costs.c_pos);
}

std::string to_string(LearnerFamily family) {
  switch (family) {
    case LearnerFamily::kLogistic: return "logistic";
    case LearnerFamily::kTree: return "tree";
    case LearnerFamily::kForest: return "forest";
    case LearnerFamily::kGbStumps: return "gb_stumps";
  }
  throw ConfigError(kModule, "unknown learner family");
}

LearnerFamily learner_family_from_string(const std::string& s) {
  if (s == "logistic") return LearnerFamily::kLogistic;
  if (s == "tree") return LearnerFamily::kTree;
  if (s == "forest") return LearnerFamily::kForest;
  if (s == "gb_stumps") return LearnerFamily::kGbStumps;
  throw ConfigError(kModule, "unknown learner family: " + s);
}

void LearnerSpec::validate() const {
  costs.validate();
  if (max_depth <= 0) throw ConfigError(kModule, "max_depth must be positive");
  if (n_trees <= 0) throw ConfigError(kModule, "n_trees must be positive");
  if (n_rounds <= 0) throw ConfigError(kModule, "n_rounds must be positive");
  if (!(shrinkage > 0.0)) throw ConfigError(kModule, "shrinkage must be positive");
  if (l2 < 0.0) throw ConfigError(kModule, "l2 must be non-negative");
  if (threshold_override && !(*threshold_override > 0.0 && *threshold_override < 1.0))
    throw ConfigError(kModule, "decision threshold must lie in (0,1)");
}

json LearnerSpec::to_json() const {
  json j;
  j["family"] = to_string(family);
  j["costs"] = costs.to_json();
  j["seed"] = seed;
  j["max_depth"] = max_depth;
  j["n_trees"] = n_trees;
  j["n_rounds"] = n_rounds;
  j["shrinkage"] = shrinkage;
  j["l2"] = l2;
  j["threshold_override"] = threshold_override ? json(*threshold_override) : json(nullptr);
  return j;
}

LearnerSpec LearnerSpec::from_json(const json& j) {
  LearnerSpec s;
  s.family = learner_family_from_string(j.at("family").get<std::string>());
  if (j.contains("costs")) s.costs = CostPair::from_json(j["costs"]);
  s.seed = j.value("seed", 0ULL);
  s.max_depth = j.value("max_depth", 20);
  s.n_trees = j.value("n_trees", 200);
  s.n_rounds = j.value("n_rounds", 200);
  s.shrinkage = j.value("shrinkage", 0.1);
  s.l2 = j.value("l2", 1e-4);
  if (j.contains("threshold_override") && !j["threshold_override"].is_null())
    s.threshold_override = j["threshold_override"].get<double>();
  s.validate();
  return s;
}

DesignOptions TrainOptions::design() const {
  DesignOptions d;
  d.include_sensitive = include_sensitive;
  d.exclude_columns = exclude_columns;
  d.restrict_columns = restrict_columns;
  return d;
}

json TrainOptions::to_json() const {
  return json{{"include_sensitive", include_sensitive},
              {"exclude_columns", exclude_columns},
              {"restrict_columns", restrict_columns}};
}

TrainOptions TrainOptions::from_json(const json& j) {
  TrainOptions o;
  o.include_sensitive = j.value("include_sensitive", true);
  o.exclude_columns = j.value("exclude_columns", std::vector<std::string>{});
  o.restrict_columns = j.value("restrict_columns", std::vector<std::string>{});
  return o;
}

double Tree::predict_row(const double* x, int p) const {
  int i = 0;
  while (nodes[static_cast<size_t>(i)].feature >= 0) {
    const TreeNode& nd = nodes[static_cast<size_t>(i)];
    if (nd.feature >= p) throw DataError(kModule, "schema mismatch: tree feature out of range");
    i = x[nd.feature] < nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<size_t>(i)].value;
}

int Tree::depth() const {
  // iterative: depth of node = depth of parent + 1
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& nd = nodes[i];
    if (nd.feature < 0) {
      best = std::max(best, d[i]);
    } else {
      d[static_cast<size_t>(nd.left)] = d[i] + 1;
      d[static_cast<size_t>(nd.right)] = d[i] + 1;
    }
  }
  return best;
}

std::vector<double> instance_weights(const std::vector<int>& y, const CostPair& costs) {
  costs.validate();
  std::vector<double> w(y.size());
  for (size_t i = 0; i < y.size(); ++i) w[i] = y[i] ? costs.c_pos : costs.c_neg;
  return w;
}

// ---------------------------------------------------------------------------
// logistic core
// ---------------------------------------------------------------------------

namespace {

double linear_score(const double* xi, int p, const std::vector<double>& beta) {
  double t = beta[static_cast<size_t>(p)];
  for (int j = 0; j < p; ++j) t += beta[static_cast<size_t>(j)] * xi[j];
  return t;
}

}  // namespace

double logistic_loss(const std::vector<double>& x, int n, int p, const std::vector<int>& y,
                     const std::vector<double>& w, const std::vector<double>& beta, double l2) {
  double total_w = 0.0;
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double t = linear_score(&x[static_cast<size_t>(i) * p], p, beta);
    double ce = y[static_cast<size_t>(i)] ? softplus(-t) : softplus(t);
    loss += w[static_cast<size_t>(i)] * ce;
    total_w += w[static_cast<size_t>(i)];
  }
  loss /= total_w;
  for (int j = 0; j < p; ++j) loss += 0.5 * l2 * beta[static_cast<size_t>(j)] * beta[static_cast<size_t>(j)];
  return loss;
}

std::vector<double> logistic_gradient(const std::vector<double>& x, int n, int p,
                                      const std::vector<int>& y, const std::vector<double>& w,
                                      const std::vector<double>& beta, double l2) {
  std::vector<double> g(static_cast<size_t>(p) + 1, 0.0);
  double total_w = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* xi = &x[static_cast<size_t>(i) * p];
    double t = linear_score(xi, p, beta);
    double resid = w[static_cast<size_t>(i)] * (sigmoid(t) - y[static_cast<size_t>(i)]);
    for (int j = 0; j < p; ++j) g[static_cast<size_t>(j)] += resid * xi[j];
    g[static_cast<size_t>(p)] += resid;
    total_w += w[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= total_w;
  for (int j = 0; j < p; ++j) g[static_cast<size_t>(j)] += l2 * beta[static_cast<size_t>(j)];
  return g;
}

namespace {

double max_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double t : v) m = std::max(m, std::fabs(t));
  return m;
}

double weighted_log_odds(const std::vector<int>& y, const std::vector<double>& w) {
  double pos = 0.0, total = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    if (y[i]) pos += w[i];
    total += w[i];
  }
  double pbar = clamp01_open(pos / total);
  return std::log(pbar / (1.0 - pbar));
}

}  // namespace

LogisticFit fit_logistic(const std::vector<double>& x, int n, int p, const std::vector<int>& y,
                         const std::vector<double>& w, double l2, int max_iter, double tol) {
  LogisticFit fit;
  fit.beta.assign(static_cast<size_t>(p) + 1, 0.0);
  fit.beta[static_cast<size_t>(p)] = weighted_log_odds(y, w);

  double loss = logistic_loss(x, n, p, y, w, fit.beta, l2);
  double step = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> g = logistic_gradient(x, n, p, y, w, fit.beta, l2);
    if (max_norm(g) < tol) {
      fit.converged = true;
      fit.iterations = it;
      return fit;
    }
    double g2 = 0.0;
    for (double v : g) g2 += v * v;
    std::vector<double> trial(fit.beta.size());
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (size_t j = 0; j < trial.size(); ++j) trial[j] = fit.beta[j] - step * g[j];
      double trial_loss = logistic_loss(x, n, p, y, w, trial, l2);
      if (trial_loss <= loss - 1e-4 * step * g2) {
        fit.beta = trial;
        loss = trial_loss;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      fit.iterations = it + 1;
      return fit;  // line search exhausted; gradient scale is below progress
    }
    step = std::min(step * 2.0, 1e6);
    fit.iterations = it + 1;
  }
  return fit;
}

LogisticFit fit_logistic_newton(const std::vector<double>& x, int n, int p,
                                const std::vector<int>& y, const std::vector<double>& w,
                                double l2, int max_iter, double tol) {
  const int d = p + 1;
  LogisticFit fit;
  fit.beta.assign(static_cast<size_t>(d), 0.0);
  fit.beta[static_cast<size_t>(p)] = weighted_log_odds(y, w);

  double total_w = std::accumulate(w.begin(), w.end(), 0.0);
  double loss = logistic_loss(x, n, p, y, w, fit.beta, l2);

  std::vector<double> h(static_cast<size_t>(d) * d);
  std::vector<double> chol(static_cast<size_t>(d) * d);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> g = logistic_gradient(x, n, p, y, w, fit.beta, l2);
    if (max_norm(g) < tol) {
      fit.converged = true;
      fit.iterations = it;
      return fit;
    }

    std::fill(h.begin(), h.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double* xi = &x[static_cast<size_t>(i) * p];
      double t = linear_score(xi, p, fit.beta);
      double s = sigmoid(t);
      double c = w[static_cast<size_t>(i)] * s * (1.0 - s) / total_w;
      if (c == 0.0) continue;
      for (int a = 0; a < p; ++a) {
        double ca = c * xi[a];
        for (int b = a; b < p; ++b) h[static_cast<size_t>(a) * d + b] += ca * xi[b];
        h[static_cast<size_t>(a) * d + p] += ca;
      }
      h[static_cast<size_t>(p) * d + p] += c;
    }
    for (int a = 0; a < p; ++a) h[static_cast<size_t>(a) * d + a] += l2;

    // solve H step = g by Cholesky, jittering the diagonal on failure
    std::vector<double> stepv;
    double jitter = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      chol = h;
      if (jitter > 0.0)
        for (int a = 0; a < d; ++a) chol[static_cast<size_t>(a) * d + a] += jitter;
      bool ok = true;
      for (int a = 0; a < d && ok; ++a) {
        for (int b = a; b < d; ++b) {
          double sum = chol[static_cast<size_t>(a) * d + b];
          for (int k = 0; k < a; ++k)
            sum -= chol[static_cast<size_t>(k) * d + a] * chol[static_cast<size_t>(k) * d + b];
          if (a == b) {
            if (sum <= 0.0) {
              ok = false;
              break;
            }
            chol[static_cast<size_t>(a) * d + b] = std::sqrt(sum);
          } else {
            chol[static_cast<size_t>(a) * d + b] = sum / chol[static_cast<size_t>(a) * d + a];
          }
        }
      }
      if (!ok) {
        jitter = jitter == 0.0 ? 1e-10 : jitter * 100.0;
        continue;
      }
      stepv.assign(static_cast<size_t>(d), 0.0);
      // forward solve L^T stored in upper triangle: chol[a*d+b] = L[b][a] for b >= a
      for (int a = 0; a < d; ++a) {
        double sum = g[static_cast<size_t>(a)];
        for (int k = 0; k < a; ++k) sum -= chol[static_cast<size_t>(k) * d + a] * stepv[static_cast<size_t>(k)];
        stepv[static_cast<size_t>(a)] = sum / chol[static_cast<size_t>(a) * d + a];
      }
      for (int a = d - 1; a >= 0; --a) {
        double sum = stepv[static_cast<size_t>(a)];
        for (int k = a + 1; k < d; ++k) sum -= chol[static_cast<size_t>(a) * d + k] * stepv[static_cast<size_t>(k)];
        stepv[static_cast<size_t>(a)] = sum / chol[static_cast<size_t>(a) * d + a];
      }
      break;
    }
    if (stepv.empty()) {
      fit.iterations = it + 1;
      return fit;
    }

    double scale = 1.0;
    bool accepted = false;
    std::vector<double> trial(fit.beta.size());
    for (int bt = 0; bt < 60; ++bt) {
      for (size_t j = 0; j < trial.size(); ++j) trial[j] = fit.beta[j] - scale * stepv[j];
      double trial_loss = logistic_loss(x, n, p, y, w, trial, l2);
      if (trial_loss < loss + 1e-14) {
        fit.beta = trial;
        loss = trial_loss;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    fit.iterations = it + 1;
    if (!accepted) return fit;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// CART
// ---------------------------------------------------------------------------

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();
};

double gini2(double w_pos, double w_total) {
  if (w_total <= 0.0) return 0.0;
  double q = w_pos / w_total;
  return 2.0 * q * (1.0 - q) * w_total;
}

// Builds a classification tree over the node's rows. mtry <= 0 scans all
// features; otherwise each split samples ceil(sqrt(p)) distinct features.
class CartBuilder {
 public:
  CartBuilder(const DesignMatrix& dm, const std::vector<int>& y, const std::vector<double>& w,
              int max_depth, int mtry, Rng* rng)
      : dm_(dm), y_(y), w_(w), max_depth_(max_depth), mtry_(mtry), rng_(rng) {}

  Tree build(std::vector<int> rows) {
    Tree tree;
    struct Item {
      std::vector<int> rows;
      int depth;
      int slot;
    };
    std::vector<Item> stack;
    tree.nodes.emplace_back();
    stack.push_back({std::move(rows), 0, 0});
    while (!stack.empty()) {
      Item item = std::move(stack.back());
      stack.pop_back();
      TreeNode& node = tree.nodes[static_cast<size_t>(item.slot)];

      double w_pos = 0.0, w_total = 0.0;
      for (int r : item.rows) {
        w_total += w_[static_cast<size_t>(r)];
        if (y_[static_cast<size_t>(r)]) w_pos += w_[static_cast<size_t>(r)];
      }
      node.value = w_total > 0.0 ? w_pos / w_total : 0.0;

      bool pure = w_pos == 0.0 || w_pos == w_total;
      if (pure || static_cast<int>(item.rows.size()) < 2 || item.depth >= max_depth_) continue;

      SplitChoice best = find_split(item.rows);
      if (best.feature < 0) continue;

      std::vector<int> left_rows, right_rows;
      for (int r : item.rows) {
        if (dm_.at(r, best.feature) < best.threshold) left_rows.push_back(r);
        else right_rows.push_back(r);
      }
      if (left_rows.empty() || right_rows.empty()) continue;

      int li = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      int ri = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      TreeNode& node2 = tree.nodes[static_cast<size_t>(item.slot)];  // revalidate after growth
      node2.feature = best.feature;
      node2.threshold = best.threshold;
      node2.left = li;
      node2.right = ri;
      stack.push_back({std::move(right_rows), item.depth + 1, ri});
      stack.push_back({std::move(left_rows), item.depth + 1, li});
    }
    return tree;
  }

 private:
  std::vector<int> candidate_features() {
    int p = dm_.p;
    if (mtry_ <= 0 || mtry_ >= p) {
      std::vector<int> all(p);
      for (int j = 0; j < p; ++j) all[j] = j;
      return all;
    }
    // sample mtry distinct features, then sort for order-independent ties
    std::vector<int> perm = rng_->permutation(p);
    perm.resize(static_cast<size_t>(mtry_));
    std::sort(perm.begin(), perm.end());
    return perm;
  }

  SplitChoice find_split(const std::vector<int>& rows) {
    SplitChoice best;
    std::vector<int> feats = candidate_features();
    std::vector<std::pair<double, int>> vals;
    vals.reserve(rows.size());
    for (int j : feats) {
      vals.clear();
      for (int r : rows) vals.emplace_back(dm_.at(r, j), r);
      std::sort(vals.begin(), vals.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (vals.front().first == vals.back().first) continue;

      double w_pos_total = 0.0, w_total = 0.0;
      for (int r : rows) {
        w_total += w_[static_cast<size_t>(r)];
        if (y_[static_cast<size_t>(r)]) w_pos_total += w_[static_cast<size_t>(r)];
      }
      double wl = 0.0, wl_pos = 0.0;
      for (size_t i = 0; i + 1 < vals.size(); ++i) {
        int r = vals[i].second;
        wl += w_[static_cast<size_t>(r)];
        if (y_[static_cast<size_t>(r)]) wl_pos += w_[static_cast<size_t>(r)];
        if (vals[i].first == vals[i + 1].first) continue;
        double imp = gini2(wl_pos, wl) + gini2(w_pos_total - wl_pos, w_total - wl);
        if (imp < best.impurity) {
          best.impurity = imp;
          best.feature = j;
          best.threshold = vals[i].first + 0.5 * (vals[i + 1].first - vals[i].first);
        }
      }
    }
    return best;
  }

  const DesignMatrix& dm_;
  const std::vector<int>& y_;
  const std::vector<double>& w_;
  int max_depth_;
  int mtry_;
  Rng* rng_;
};

}  // namespace

// ---------------------------------------------------------------------------
// training entry points
// ---------------------------------------------------------------------------

namespace {

void check_trainable(const Dataset& data, const std::vector<int>& y) {
  if (data.rows() == 0) throw DataError(kModule, "empty training dataset");
  int pos = 0;
  for (int v : y) pos += v;
  if (pos == 0 || pos == static_cast<int>(y.size()))
    throw DataError(kModule, "single-class training data");
}

void train_logistic_family(TrainedModel& model, const DesignMatrix& dm, const std::vector<int>& y,
                           const std::vector<double>& w) {
  LogisticFit fit = fit_logistic(dm.values, dm.n, dm.p, y, w, model.spec.l2, 500, 1e-6);
  model.coef.assign(fit.beta.begin(), fit.beta.end() - 1);
  model.intercept = fit.beta.back();
  model.converged = fit.converged;
  model.iterations = fit.iterations;
}

void train_tree_family(TrainedModel& model, const DesignMatrix& dm, const std::vector<int>& y,
                       const std::vector<double>& w) {
  std::vector<int> rows(static_cast<size_t>(dm.n));
  for (int i = 0; i < dm.n; ++i) rows[static_cast<size_t>(i)] = i;
  CartBuilder builder(dm, y, w, model.spec.max_depth, 0, nullptr);
  model.trees.push_back(builder.build(std::move(rows)));
}

void train_forest_family(TrainedModel& model, const DesignMatrix& dm, const std::vector<int>& y,
                         const std::vector<double>& w) {
  int mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dm.p))));
  model.trees.resize(static_cast<size_t>(model.spec.n_trees));
  for (int t = 0; t < model.spec.n_trees; ++t) {
    Rng rng(derive_seed(model.spec.seed, "forest", static_cast<uint64_t>(t)));
    std::vector<int> rows(static_cast<size_t>(dm.n));
    for (int i = 0; i < dm.n; ++i)
      rows[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(dm.n)));
    CartBuilder builder(dm, y, w, std::numeric_limits<int>::max(), mtry, &rng);
    model.trees[static_cast<size_t>(t)] = builder.build(std::move(rows));
  }
}

// depth-1 weighted least-squares stump on residuals; leaves carry Newton
// steps refined against the actual training loss
void train_gb_family(TrainedModel& model, const DesignMatrix& dm, const std::vector<int>& y,
                     const std::vector<double>& w) {
  const int n = dm.n;
  const int p = dm.p;
  double total_w = std::accumulate(w.begin(), w.end(), 0.0);

  // presort row order per feature once
  std::vector<std::vector<int>> order(static_cast<size_t>(p));
  for (int j = 0; j < p; ++j) {
    auto& ord = order[static_cast<size_t>(j)];
    ord.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ord[static_cast<size_t>(i)] = i;
    std::stable_sort(ord.begin(), ord.end(),
                     [&](int a, int b) { return dm.at(a, j) < dm.at(b, j); });
  }

  model.init_score = weighted_log_odds(y, w);
  std::vector<double> score(static_cast<size_t>(n), model.init_score);

  auto current_loss = [&]() {
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      double ce = y[static_cast<size_t>(i)] ? softplus(-score[static_cast<size_t>(i)])
                                            : softplus(score[static_cast<size_t>(i)]);
      loss += w[static_cast<size_t>(i)] * ce;
    }
    return loss / total_w;
  };

  double loss = current_loss();
  std::vector<double> resid(static_cast<size_t>(n));
  std::vector<double> prob(static_cast<size_t>(n));
  for (int round = 0; round < model.spec.n_rounds; ++round) {
    for (int i = 0; i < n; ++i) {
      prob[static_cast<size_t>(i)] = sigmoid(score[static_cast<size_t>(i)]);
      resid[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] - prob[static_cast<size_t>(i)];
    }

    // best squared-error split of the residuals
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = -std::numeric_limits<double>::infinity();
    double s_all = 0.0;
    for (int i = 0; i < n; ++i) s_all += w[static_cast<size_t>(i)] * resid[static_cast<size_t>(i)];
    for (int j = 0; j < p; ++j) {
      const auto& ord = order[static_cast<size_t>(j)];
      double wl = 0.0, sl = 0.0;
      for (int k = 0; k + 1 < n; ++k) {
        int r = ord[static_cast<size_t>(k)];
        wl += w[static_cast<size_t>(r)];
        sl += w[static_cast<size_t>(r)] * resid[static_cast<size_t>(r)];
        double xv = dm.at(r, j);
        double xn = dm.at(ord[static_cast<size_t>(k) + 1], j);
        if (xv == xn) continue;
        double wr = total_w - wl;
        double sr = s_all - sl;
        double gain = sl * sl / wl + sr * sr / wr;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = j;
          best_threshold = xv + 0.5 * (xn - xv);
        }
      }
    }

    // Newton leaf values on the chosen partition (whole sample if no split)
    double num_l = 0.0, den_l = 0.0, num_r = 0.0, den_r = 0.0;
    for (int i = 0; i < n; ++i) {
      bool left = best_feature < 0 || dm.at(i, best_feature) < best_threshold;
      double g = w[static_cast<size_t>(i)] * resid[static_cast<size_t>(i)];
      double h = w[static_cast<size_t>(i)] * prob[static_cast<size_t>(i)] *
                 (1.0 - prob[static_cast<size_t>(i)]);
      if (left) {
        num_l += g;
        den_l += h;
      } else {
        num_r += g;
        den_r += h;
      }
    }
    double gamma_l = den_l > 1e-12 ? num_l / den_l : 0.0;
    double gamma_r = den_r > 1e-12 ? num_r / den_r : 0.0;

    // halve the step until the training loss is non-increasing
    double vl = model.spec.shrinkage * gamma_l;
    double vr = model.spec.shrinkage * gamma_r;
    std::vector<double> trial(score);
    double trial_loss = loss;
    bool ok = false;
    for (int bt = 0; bt < 40 && (vl != 0.0 || vr != 0.0); ++bt) {
      for (int i = 0; i < n; ++i) {
        bool left = best_feature < 0 || dm.at(i, best_feature) < best_threshold;
        trial[static_cast<size_t>(i)] = score[static_cast<size_t>(i)] + (left ? vl : vr);
      }
      double cand = 0.0;
      for (int i = 0; i < n; ++i) {
        double ce = y[static_cast<size_t>(i)] ? softplus(-trial[static_cast<size_t>(i)])
                                              : softplus(trial[static_cast<size_t>(i)]);
        cand += w[static_cast<size_t>(i)] * ce;
      }
      cand /= total_w;
      if (cand <= loss + 1e-15) {
        trial_loss = cand;
        ok = true;
        break;
      }
      vl *= 0.5;
      vr *= 0.5;
    }
    if (!ok) {
      vl = 0.0;
      vr = 0.0;
      trial = score;
      trial_loss = loss;
    }

    Tree stump;
    if (best_feature < 0) {
      stump.nodes.push_back({-1, 0.0, -1, -1, vl});
    } else {
      stump.nodes.push_back({best_feature, best_threshold, 1, 2, 0.0});
      stump.nodes.push_back({-1, 0.0, -1, -1, vl});
      stump.nodes.push_back({-1, 0.0, -1, -1, vr});
    }
    model.trees.push_back(std::move(stump));
    score = std::move(trial);
    loss = trial_loss;
  }
}

}  // namespace

TrainedModel train(const LearnerSpec& spec, const Dataset& data, const TrainOptions& options) {
  spec.validate();
  std::vector<int> y = data.labels();
  check_trainable(data, y);
  std::vector<double> w = instance_weights(y, spec.costs);
  DesignMatrix dm = build_design(data, options.design());

  TrainedModel model;
  model.spec = spec;
  model.options = options;
  model.features = dm.features;
  model.decision_threshold = spec.threshold_override ? *spec.threshold_override : 0.5;

  switch (spec.family) {
    case LearnerFamily::kLogistic: train_logistic_family(model, dm, y, w); break;
    case LearnerFamily::kTree: train_tree_family(model, dm, y, w); break;
    case LearnerFamily::kForest: train_forest_family(model, dm, y, w); break;
    case LearnerFamily::kGbStumps: train_gb_family(model, dm, y, w); break;
  }
  return model;
}

TrainedModel train(const LearnerSpec& spec, const Dataset& data, bool include_sensitive) {
  TrainOptions options;
  options.include_sensitive = include_sensitive;
  return train(spec, data, options);
}

std::vector<double> predict_design(const TrainedModel& model, const DesignMatrix& dm) {
  if (static_cast<size_t>(dm.p) != model.features.size())
    throw DataError(kModule, "schema mismatch: design has " + std::to_string(dm.p) +
                                 " features, model expects " +
                                 std::to_string(model.features.size()));
  for (size_t j = 0; j < model.features.size(); ++j) {
    if (dm.features[j].name != model.features[j].name)
      throw DataError(kModule, "schema mismatch at feature " + dm.features[j].name +
                                   ", model expects " + model.features[j].name);
  }

  std::vector<double> p_hat(static_cast<size_t>(dm.n));
  switch (model.spec.family) {
    case LearnerFamily::kLogistic: {
      for (int i = 0; i < dm.n; ++i) {
        double t = model.intercept;
        for (int j = 0; j < dm.p; ++j)
          t += model.coef[static_cast<size_t>(j)] * dm.at(i, j);
        p_hat[static_cast<size_t>(i)] = sigmoid(t);
      }
      break;
    }
    case LearnerFamily::kTree: {
      const Tree& tree = model.trees.front();
      for (int i = 0; i < dm.n; ++i)
        p_hat[static_cast<size_t>(i)] =
            tree.predict_row(&dm.values[static_cast<size_t>(i) * dm.p], dm.p);
      break;
    }
    case LearnerFamily::kForest: {
      for (int i = 0; i < dm.n; ++i) {
        double sum = 0.0;
        for (const Tree& tree : model.trees)
          sum += tree.predict_row(&dm.values[static_cast<size_t>(i) * dm.p], dm.p);
        p_hat[static_cast<size_t>(i)] = sum / static_cast<double>(model.trees.size());
      }
      break;
    }
    case LearnerFamily::kGbStumps: {
      for (int i = 0; i < dm.n; ++i) {
        double score = model.init_score;
        for (const Tree& tree : model.trees)
          score += tree.predict_row(&dm.values[static_cast<size_t>(i) * dm.p], dm.p);
        p_hat[static_cast<size_t>(i)] = sigmoid(score);
      }
      break;
    }
  }
  return p_hat;
}

PredictionVector predict_proba(const TrainedModel& model, const Dataset& data) {
  DesignMatrix dm = build_design(data, model.options.design());
  PredictionVector pv;
  pv.p_hat = predict_design(model, dm);
  pv.y_hat.resize(pv.p_hat.size());
  for (size_t i = 0; i < pv.p_hat.size(); ++i)
    pv.y_hat[i] = pv.p_hat[i] >= model.decision_threshold ? 1 : 0;
  return pv;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

json tree_to_json(const Tree& tree) {
  json nodes = json::array();
  for (const TreeNode& nd : tree.nodes) {
    nodes.push_back(json{{"feature", nd.feature},
                         {"threshold", nd.threshold},
                         {"left", nd.left},
                         {"right", nd.right},
                         {"value", nd.value}});
  }
  return nodes;
}

Tree tree_from_json(const json& j) {
  Tree tree;
  for (const auto& nd : j) {
    tree.nodes.push_back({nd.at("feature").get<int>(), nd.at("threshold").get<double>(),
                          nd.at("left").get<int>(), nd.at("right").get<int>(),
                          nd.at("value").get<double>()});
  }
  return tree;
}

}  // namespace

std::vector<std::string> TrainedModel::feature_names() const {
  std::vector<std::string> names;
  names.reserve(features.size());
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

json TrainedModel::to_json() const {
  json j;
  j["format_version"] = 1;
  j["family"] = to_string(spec.family);
  j["spec"] = spec.to_json();
  j["options"] = options.to_json();
  json feats = json::array();
  for (const auto& f : features) feats.push_back(f.to_json());
  j["features"] = feats;
  j["decision_threshold"] = decision_threshold;
  json params;
  switch (spec.family) {
    case LearnerFamily::kLogistic:
      params["coef"] = coef;
      params["intercept"] = intercept;
      params["converged"] = converged;
      params["iterations"] = iterations;
      break;
    case LearnerFamily::kTree:
    case LearnerFamily::kForest: {
      json trees_j = json::array();
      for (const Tree& t : trees) trees_j.push_back(tree_to_json(t));
      params["trees"] = trees_j;
      break;
    }
    case LearnerFamily::kGbStumps: {
      json trees_j = json::array();
      for (const Tree& t : trees) trees_j.push_back(tree_to_json(t));
      params["trees"] = trees_j;
      params["init_score"] = init_score;
      break;
    }
  }
  j["parameters"] = params;
  return j;
}

TrainedModel TrainedModel::from_json(const json& j) {
  if (j.value("format_version", 0) != 1)
    throw ConfigError(kModule, "unsupported model format version");
  TrainedModel m;
  m.spec = LearnerSpec::from_json(j.at("spec"));
  m.options = TrainOptions::from_json(j.at("options"));
  for (const auto& f : j.at("features")) m.features.push_back(FeatureInfo::from_json(f));
  m.decision_threshold = j.at("decision_threshold").get<double>();
  const json& params = j.at("parameters");
  switch (m.spec.family) {
    case LearnerFamily::kLogistic:
      m.coef = params.at("coef").get<std::vector<double>>();
      m.intercept = params.at("intercept").get<double>();
      m.converged = params.value("converged", false);
      m.iterations = params.value("iterations", 0);
      break;
    case LearnerFamily::kTree:
    case LearnerFamily::kForest:
      for (const auto& t : params.at("trees")) m.trees.push_back(tree_from_json(t));
      break;
    case LearnerFamily::kGbStumps:
      for (const auto& t : params.at("trees")) m.trees.push_back(tree_from_json(t));
      m.init_score = params.at("init_score").get<double>();
      break;
  }
  return m;
}

}  // namespace fairaudit
