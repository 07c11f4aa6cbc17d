/*
 * Copyright 2026 The Florinet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FLORINET_TRAINERS_HPP_
#define FLORINET_TRAINERS_HPP_

#include <cstdint>
#include <memory>

#include "florinet/client.hpp"

namespace florinet::trainers {

/// Returns a delta of the model's length with every element set to `value`.
client::Trainer constant_trainer(double value);
inline client::Trainer ones_trainer() { return constant_trainer(1.0); }
inline client::Trainer zeros_trainer() { return constant_trainer(0.0); }

/// Two-class Gaussian blobs. Class y has mean (2y - 1) * separation * v for
/// a seeded unit direction v, unit within-class spread, and every feature is
/// then multiplied by `feature_scale`.
struct BlobConfig {
  int dim = 20;
  double separation = 2.2;
  double feature_scale = 30.0;
  int shards = 100;
  int shard_size = 100;
  int test_size = 2000;
  std::uint64_t seed = 1;
};

struct BlobDataset {
  BlobConfig config;
  Eigen::MatrixXd x_train;  // rows are samples
  Eigen::VectorXd y_train;  // 0 or 1
  Eigen::MatrixXd x_test;
  Eigen::VectorXd y_test;

  int dim() const { return config.dim; }
  /// Model length: one weight per feature plus a bias.
  int model_length() const { return config.dim + 1; }
};

BlobDataset make_blobs(const BlobConfig& config);

/// Logistic model layout: weights in [0, dim), bias at dim.
double predict_logit(const ModelVector& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);
double accuracy(const ModelVector& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
double log_loss(const ModelVector& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
/// Gradient of the mean log loss.
ModelVector log_loss_gradient(const ModelVector& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct LogisticConfig {
  /// Fraction of the sampled shard used in one round.
  double fraction = 0.2;
  int local_epochs = 10;
  double learning_rate = 1.0 / 900.0;
  /// FedProx proximal weight; 0 is plain FedAvg local training.
  double mu_prox = 0.0;
};

/// Each round the client draws one shard uniformly, trains full-batch
/// gradient descent on a random `fraction` of it, and returns trained minus
/// received weights. Draws depend only on (seed, client_id, round).
client::Trainer logistic_trainer(std::shared_ptr<const BlobDataset> data, LogisticConfig config,
                                 std::uint64_t seed);

/// Maximum-likelihood fit on the full training split by Newton's method.
/// A tiny ridge keeps the Hessian invertible on separable draws.
ModelVector fit_centralized(const BlobDataset& data, int iterations = 50, double ridge = 1e-8);

}  // namespace florinet::trainers

#endif  // FLORINET_TRAINERS_HPP_
