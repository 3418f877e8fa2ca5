#pragma once

// Bagged decision-tree ensemble for binary classification with weighted
// Gini splits over per-feature histogram bins.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace hnu {

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 10;
  std::size_t max_features = 0;  // 0: ceil(sqrt(d))
  bool bootstrap = true;
  double class1_weight = 2.0;
  std::size_t max_bins = 64;
  std::size_t min_leaf_weight = 1;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double p1 = 0;  // weighted class-1 fraction of the training samples here
};

class DecisionTree {
 public:
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& nodes() { return nodes_; }

  const TreeNode& leaf(const std::vector<double>& x) const {
    int i = 0;
    while (nodes_[i].feature >= 0) i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
    return nodes_[i];
  }

  int vote(const std::vector<double>& x) const { return leaf(x).p1 >= 0.5 ? 1 : 0; }

  std::size_t depth() const {
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    std::size_t best = 0;
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (nodes_[i].feature >= 0) {
        stack.push_back({nodes_[i].left, d + 1});
        stack.push_back({nodes_[i].right, d + 1});
      }
    }
    return best;
  }

 private:
  std::vector<TreeNode> nodes_;
};

namespace detail {

// Per-feature cut points and the binned training matrix (column major).
struct BinnedData {
  std::size_t n = 0, d = 0;
  std::vector<std::vector<double>> cuts;
  std::vector<std::vector<std::uint16_t>> bins;
};

inline BinnedData bin_features(const std::vector<std::vector<double>>& x, std::size_t max_bins) {
  BinnedData b;
  b.n = x.size();
  b.d = x.empty() ? 0 : x.front().size();
  b.cuts.resize(b.d);
  b.bins.assign(b.d, std::vector<std::uint16_t>(b.n));
  for (std::size_t f = 0; f < b.d; ++f) {
    std::vector<double> v(b.n);
    for (std::size_t i = 0; i < b.n; ++i) v[i] = x[i][f];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    auto& cuts = b.cuts[f];
    if (v.size() <= max_bins) {
      for (std::size_t i = 0; i + 1 < v.size(); ++i) cuts.push_back((v[i] + v[i + 1]) / 2);
    } else {
      for (std::size_t k = 1; k < max_bins; ++k) {
        std::size_t at = k * v.size() / max_bins;
        cuts.push_back((v[at - 1] + v[at]) / 2);
      }
      cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    }
    for (std::size_t i = 0; i < b.n; ++i)
      b.bins[f][i] = static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), x[i][f]) - cuts.begin());
  }
  return b;
}

inline double gini(double w0, double w1) {
  double w = w0 + w1;
  if (w <= 0) return 0;
  double p0 = w0 / w, p1 = w1 / w;
  return 1 - p0 * p0 - p1 * p1;
}

class TreeBuilder {
 public:
  TreeBuilder(const BinnedData& data, const std::vector<int>& y, const std::vector<double>& weight,
              const ForestParams& params, std::uint64_t seed)
      : data_(data), y_(y), weight_(weight), params_(params), rng_(seed) {
    mtry_ = params.max_features ? params.max_features
                                : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(data.d))));
    mtry_ = std::clamp<std::size_t>(mtry_, 1, std::max<std::size_t>(data.d, 1));
  }

  DecisionTree build() {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data_.n; ++i)
      if (weight_[i] > 0) idx.push_back(i);
    grow(idx, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t>& idx, std::size_t depth) {
    double w0 = 0, w1 = 0;
    for (std::size_t i : idx) (y_[i] ? w1 : w0) += weight_[i];
    const int me = static_cast<int>(tree_.nodes().size());
    tree_.nodes().push_back(TreeNode{-1, 0, -1, -1, w0 + w1 > 0 ? w1 / (w0 + w1) : 0});
    if (depth >= params_.max_depth || w0 == 0 || w1 == 0 || idx.size() < 2 * params_.min_leaf_weight) return me;

    std::vector<std::size_t> features(data_.d);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t k = 0; k < mtry_; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, data_.d - 1);
      std::swap(features[k], features[pick(rng_)]);
    }
    const double parent = gini(w0, w1);
    double best_gain = 1e-12;
    int best_f = -1;
    std::size_t best_bin = 0;
    std::vector<double> h0, h1;
    for (std::size_t k = 0; k < mtry_; ++k) {
      const std::size_t f = features[k];
      const std::size_t nb = data_.cuts[f].size() + 1;
      if (nb < 2) continue;
      h0.assign(nb, 0);
      h1.assign(nb, 0);
      for (std::size_t i : idx) (y_[i] ? h1 : h0)[data_.bins[f][i]] += weight_[i];
      double l0 = 0, l1 = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        l0 += h0[b];
        l1 += h1[b];
        const double r0 = w0 - l0, r1 = w1 - l1;
        if (l0 + l1 <= 0 || r0 + r1 <= 0) continue;
        const double child = ((l0 + l1) * gini(l0, l1) + (r0 + r1) * gini(r0, r1)) / (w0 + w1);
        const double gain = parent - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_bin = b;
        }
      }
    }
    if (best_f < 0) return me;
    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) (data_.bins[best_f][i] <= best_bin ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    tree_.nodes()[me].feature = best_f;
    tree_.nodes()[me].threshold = data_.cuts[best_f][best_bin];
    int l = grow(left, depth + 1);
    int r = grow(right, depth + 1);
    tree_.nodes()[me].left = l;
    tree_.nodes()[me].right = r;
    return me;
  }

  const BinnedData& data_;
  const std::vector<int>& y_;
  const std::vector<double>& weight_;
  const ForestParams& params_;
  std::mt19937_64 rng_;
  std::size_t mtry_ = 1;
  DecisionTree tree_;
};

}  // namespace detail

class RandomForest {
 public:
  /// Trains on rows `x` with labels in {0, 1}. Throws if only one class is
  /// present. Results depend only on the data, its order and params.seed.
  static RandomForest fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                          const ForestParams& params = {}) {
    if (x.size() != y.size()) throw std::invalid_argument("feature and label counts differ");
    if (x.empty()) throw std::invalid_argument("empty training set");
    const std::size_t d = x.front().size();
    for (const auto& row : x)
      if (row.size() != d) throw std::invalid_argument("ragged feature matrix");
    bool has0 = false, has1 = false;
    for (int v : y) (v ? has1 : has0) = true;
    if (!has0 || !has1) throw std::invalid_argument("training set has a single class");

    RandomForest rf;
    rf.params_ = params;
    rf.n_features_ = d;
    const detail::BinnedData data = detail::bin_features(x, std::clamp<std::size_t>(params.max_bins, 2, 65535));
    auto build_one = [&](std::size_t t) {
      const std::uint64_t seed = splitmix64(params.seed * 0x100000001b3ULL + t);
      std::mt19937_64 rng(seed);
      std::vector<double> w(x.size(), 0.0);
      if (params.bootstrap) {
        std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
        for (std::size_t k = 0; k < x.size(); ++k) w[pick(rng)] += 1;
      } else {
        std::fill(w.begin(), w.end(), 1.0);
      }
      for (std::size_t i = 0; i < x.size(); ++i)
        if (y[i]) w[i] *= params.class1_weight;
      return detail::TreeBuilder(data, y, w, params, rng()).build();
    };
    rf.trees_.resize(params.n_trees);
    if (params.threads <= 1) {
      for (std::size_t t = 0; t < params.n_trees; ++t) rf.trees_[t] = build_one(t);
    } else {
      std::vector<std::future<void>> jobs;
      for (unsigned k = 0; k < params.threads; ++k)
        jobs.push_back(std::async(std::launch::async, [&, k] {
          for (std::size_t t = k; t < params.n_trees; t += params.threads) rf.trees_[t] = build_one(t);
        }));
      for (auto& j : jobs) j.get();
    }
    return rf;
  }

  /// Fraction of trees voting class 1.
  double score(const std::vector<double>& x) const {
    if (x.size() != n_features_) throw std::invalid_argument("feature vector has the wrong length");
    if (trees_.empty()) return 0;
    std::size_t votes = 0;
    for (const DecisionTree& t : trees_) votes += static_cast<std::size_t>(t.vote(x));
    return static_cast<double>(votes) / static_cast<double>(trees_.size());
  }

  std::size_t n_features() const { return n_features_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_features"] = n_features_;
    j["params"] = {{"n_trees", params_.n_trees},     {"max_depth", params_.max_depth},
                   {"max_features", params_.max_features}, {"bootstrap", params_.bootstrap},
                   {"class1_weight", params_.class1_weight}, {"max_bins", params_.max_bins},
                   {"min_leaf_weight", params_.min_leaf_weight}, {"seed", params_.seed}};
    j["trees"] = nlohmann::json::array();
    for (const DecisionTree& t : trees_) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const TreeNode& n : t.nodes()) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.p1});
      j["trees"].push_back(std::move(nodes));
    }
    return j;
  }

  static RandomForest from_json(const nlohmann::json& j) {
    RandomForest rf;
    rf.n_features_ = j.at("n_features").get<std::size_t>();
    const auto& p = j.at("params");
    rf.params_.n_trees = p.at("n_trees").get<std::size_t>();
    rf.params_.max_depth = p.at("max_depth").get<std::size_t>();
    rf.params_.max_features = p.at("max_features").get<std::size_t>();
    rf.params_.bootstrap = p.at("bootstrap").get<bool>();
    rf.params_.class1_weight = p.at("class1_weight").get<double>();
    rf.params_.max_bins = p.at("max_bins").get<std::size_t>();
    rf.params_.min_leaf_weight = p.at("min_leaf_weight").get<std::size_t>();
    rf.params_.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("trees")) {
      DecisionTree tree;
      for (const auto& n : t)
        tree.nodes().push_back(TreeNode{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                                        n.at(3).get<int>(), n.at(4).get<double>()});
      rf.trees_.push_back(std::move(tree));
    }
    return rf;
  }

 private:
  ForestParams params_;
  std::size_t n_features_ = 0;
  std::vector<DecisionTree> trees_;
};

}  // namespace hnu
