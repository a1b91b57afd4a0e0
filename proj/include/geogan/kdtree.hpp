#pragma once

// Exact Euclidean k-NN over dense vectors. Median-split KD-tree with
// branch-and-bound search; ties broken by point index so results are fully
// deterministic and comparable against a linear scan.

#include <algorithm>
#include <queue>

#include "geogan/tensor.hpp"

namespace geogan {

class KdTree {
 public:
  struct Hit {
    int index = -1;
    double dist = 0.0;  // Euclidean
  };

  KdTree(std::vector<float> flat_points, int dim)
      : points_(std::move(flat_points)), dim_(dim) {
    if (dim_ <= 0) throw ValidationError("kdtree: dimension must be positive");
    if (points_.size() % static_cast<std::size_t>(dim_) != 0)
      throw ValidationError("kdtree: flat buffer not a multiple of dim");
    n_ = static_cast<int>(points_.size() / static_cast<std::size_t>(dim_));
    if (n_ == 0) throw ValidationError("kdtree: empty point set");
    order_.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) order_[static_cast<std::size_t>(i)] = i;
    nodes_.reserve(static_cast<std::size_t>(2 * n_ / kLeafSize + 4));
    root_ = build(0, n_);
  }

  int size() const { return n_; }
  int dim() const { return dim_; }

  std::vector<Hit> knn(const float* q, int k) const {
    if (k < 1 || k > n_) throw ValidationError("kdtree: k out of range");
    Best best(k);
    search(root_, q, best);
    std::vector<Hit> hits;
    hits.reserve(static_cast<std::size_t>(k));
    while (!best.heap.empty()) {
      hits.push_back({best.heap.top().second, std::sqrt(best.heap.top().first)});
      best.heap.pop();
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      return a.dist != b.dist ? a.dist < b.dist : a.index < b.index;
    });
    return hits;
  }

  std::vector<Hit> knn(const std::vector<float>& q, int k) const {
    if (static_cast<int>(q.size()) != dim_)
      throw ValidationError("kdtree: query dimension mismatch");
    return knn(q.data(), k);
  }

  // Oracle path: exhaustive scan with identical ordering semantics.
  std::vector<Hit> linear_scan(const std::vector<float>& q, int k) const {
    if (static_cast<int>(q.size()) != dim_)
      throw ValidationError("kdtree: query dimension mismatch");
    if (k < 1 || k > n_) throw ValidationError("kdtree: k out of range");
    std::vector<std::pair<double, int>> all;
    all.reserve(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) all.emplace_back(dist_sq(q.data(), i), i);
    std::sort(all.begin(), all.end());
    std::vector<Hit> hits;
    for (int i = 0; i < k; ++i)
      hits.push_back({all[static_cast<std::size_t>(i)].second,
                      std::sqrt(all[static_cast<std::size_t>(i)].first)});
    return hits;
  }

 private:
  static constexpr int kLeafSize = 8;

  struct Node {
    int split_dim = -1;  // -1: leaf
    float split_val = 0.0f;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  // Max-heap of (dist_sq, index); worse = larger dist, then larger index.
  struct Best {
    explicit Best(int k) : k(k) {}
    int k;
    std::priority_queue<std::pair<double, int>> heap;
    bool full() const { return static_cast<int>(heap.size()) == k; }
    double worst() const { return heap.top().first; }
    void offer(double d, int idx) {
      if (!full()) {
        heap.emplace(d, idx);
      } else if (d < heap.top().first ||
                 (d == heap.top().first && idx < heap.top().second)) {
        heap.pop();
        heap.emplace(d, idx);
      }
    }
  };

  const float* point(int i) const {
    return points_.data() + static_cast<std::size_t>(i) * dim_;
  }

  double dist_sq(const float* q, int i) const {
    const float* p = point(i);
    double acc = 0.0;
    for (int d = 0; d < dim_; ++d) {
      double diff = static_cast<double>(q[d]) - static_cast<double>(p[d]);
      acc += diff * diff;
    }
    return acc;
  }

  int build(int begin, int end) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    // Split along the dimension with the largest spread in this range.
    int best_dim = 0;
    float best_spread = -1.0f;
    for (int d = 0; d < dim_; ++d) {
      float lo = point(order_[static_cast<std::size_t>(begin)])[d];
      float hi = lo;
      for (int i = begin + 1; i < end; ++i) {
        float v = point(order_[static_cast<std::size_t>(i)])[d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = d;
      }
    }
    if (best_spread <= 0.0f) {  // all points identical in range
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid,
                     order_.begin() + end, [&](int a, int b) {
                       float va = point(a)[best_dim], vb = point(b)[best_dim];
                       return va != vb ? va < vb : a < b;
                     });
    node.split_dim = best_dim;
    node.split_val = point(order_[static_cast<std::size_t>(mid)])[best_dim];
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[static_cast<std::size_t>(self)].left = left;
    nodes_[static_cast<std::size_t>(self)].right = right;
    return self;
  }

  void search(int node_id, const float* q, Best& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.split_dim < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        int idx = order_[static_cast<std::size_t>(i)];
        best.offer(dist_sq(q, idx), idx);
      }
      return;
    }
    double delta = static_cast<double>(q[node.split_dim]) -
                   static_cast<double>(node.split_val);
    int near = delta <= 0.0 ? node.left : node.right;
    int far = delta <= 0.0 ? node.right : node.left;
    search(near, q, best);
    if (!best.full() || delta * delta <= best.worst()) search(far, q, best);
  }

  std::vector<float> points_;
  int dim_ = 0;
  int n_ = 0;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace geogan
