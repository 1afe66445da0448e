#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace pushgrad::objective {

// One labelled example: 5-dimensional input (generic dim supported) with a
// binary label.
struct Instance {
  std::vector<double> input;
  int label = 0;
};

using Dataset = std::vector<Instance>;

// A batch is a multiset of indices into the training set (mini-batches are
// drawn with replacement, so duplicates are legitimate).
using Batch = std::span<const int>;

// Client cost pair: inner training cost g(x, lambda; batch) and outer
// validation cost f(x). Batch costs are the batch MEAN of the per-instance
// loss plus the regularizer applied once, so the full batch equals the
// empirical expectation and mini-batches are unbiased estimates of it.
// All operations are pure; costs are immutable after construction.
class ClientCost {
 public:
  virtual ~ClientCost() = default;

  int x_dim() const { return x_dim_; }
  int lambda_dim() const { return lambda_dim_; }
  const Dataset& train() const { return train_; }
  const Dataset& validation() const { return validation_; }

  // Indices 0..N-1 (the deterministic full batch).
  Batch full_batch() const { return full_batch_; }

  virtual double inner_value(std::span<const double> x, std::span<const double> lambda,
                             Batch batch) const = 0;
  virtual void inner_grad(std::span<const double> x, std::span<const double> lambda, Batch batch,
                          std::span<double> out) const = 0;
  // out = (d2g/dx2) u
  virtual void hessian_vec(std::span<const double> x, std::span<const double> lambda, Batch batch,
                           std::span<const double> u, std::span<double> out) const = 0;
  // out = (d2g/dx dlambda) u, shape lambda_dim
  virtual void cross_jacobian_vec(std::span<const double> x, std::span<const double> lambda,
                                  Batch batch, std::span<const double> u,
                                  std::span<double> out) const = 0;
  virtual double outer_value(std::span<const double> x, std::span<const double> lambda) const = 0;
  virtual void outer_grads(std::span<const double> x, std::span<const double> lambda,
                           std::span<double> gx, std::span<double> glambda) const = 0;

 protected:
  // x_dim is taken from the first training instance; derived constructors set
  // lambda_dim_ once they know their parameter shape.
  ClientCost(Dataset train, Dataset validation);

  void require_shapes(std::span<const double> x, std::span<const double> lambda) const;

  Dataset train_;
  Dataset validation_;
  int x_dim_ = 0;
  int lambda_dim_ = 0;
  std::vector<int> full_batch_;
};

// Feature-major copy of a dataset so batch reductions run on contiguous
// arrays: col(a) holds feature a of every instance.
struct FeatureMatrix {
  int dim = 0;
  int count = 0;
  std::vector<double> cols;
  std::vector<double> labels;

  FeatureMatrix() = default;
  explicit FeatureMatrix(const Dataset& data);

  std::span<const double> col(int a) const {
    return {cols.data() + static_cast<std::size_t>(a) * count, static_cast<std::size_t>(count)};
  }
  // margins[j] = x . instance_j for every instance
  void margins(std::span<const double> x, std::span<double> margins_out) const;
};

// Logistic loss with per-coordinate quadratic regularization:
//   g(x, lambda; batch) = mean_batch bce(label, input . x) + (1/2) x' diag(lambda) x
//   f(x) = sum over validation of bce(label, input . x)
// lambda must be elementwise positive (strong convexity); violations throw.
class RegularizedLogisticCost final : public ClientCost {
 public:
  RegularizedLogisticCost(Dataset train, Dataset validation);

  double inner_value(std::span<const double> x, std::span<const double> lambda,
                     Batch batch) const override;
  void inner_grad(std::span<const double> x, std::span<const double> lambda, Batch batch,
                  std::span<double> out) const override;
  void hessian_vec(std::span<const double> x, std::span<const double> lambda, Batch batch,
                   std::span<const double> u, std::span<double> out) const override;
  void cross_jacobian_vec(std::span<const double> x, std::span<const double> lambda, Batch batch,
                          std::span<const double> u, std::span<double> out) const override;
  double outer_value(std::span<const double> x, std::span<const double> lambda) const override;
  void outer_grads(std::span<const double> x, std::span<const double> lambda, std::span<double> gx,
                   std::span<double> glambda) const override;

 private:
  FeatureMatrix train_feat_;
  FeatureMatrix val_feat_;
};

// Per-instance mask weights:
//   g(x, lambda; batch) = mean_batch lambda_k * bce(label_k, input_k . x)
//                         + (ridge/2) ||x||^2
//   f(x) = sum over validation of bce(label, input . x)
// lambda_dim equals the training-set size; entry k weights instance k. The
// ridge is fixed (default 1e-3) and not masked, keeping the cost strongly
// convex even with mask entries at zero.
class InstanceMaskCost final : public ClientCost {
 public:
  InstanceMaskCost(Dataset train, Dataset validation, double ridge = 1e-3);

  double ridge() const { return ridge_; }

  double inner_value(std::span<const double> x, std::span<const double> lambda,
                     Batch batch) const override;
  void inner_grad(std::span<const double> x, std::span<const double> lambda, Batch batch,
                  std::span<double> out) const override;
  void hessian_vec(std::span<const double> x, std::span<const double> lambda, Batch batch,
                   std::span<const double> u, std::span<double> out) const override;
  void cross_jacobian_vec(std::span<const double> x, std::span<const double> lambda, Batch batch,
                          std::span<const double> u, std::span<double> out) const override;
  double outer_value(std::span<const double> x, std::span<const double> lambda) const override;
  void outer_grads(std::span<const double> x, std::span<const double> lambda, std::span<double> gx,
                   std::span<double> glambda) const override;

 private:
  FeatureMatrix train_feat_;
  FeatureMatrix val_feat_;
  double ridge_ = 1e-3;
};

// Uniform-with-replacement mini-batch stream for one client.
class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, int data_size);
  void sample(std::span<int> out);

 private:
  std::mt19937_64 rng_;
  int data_size_;
};

// Numerically safe logistic pieces shared across the project.
double sigmoid(double t);
double bce_loss(int label, double margin);  // -log p(label | margin)

}  // namespace pushgrad::objective
