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

#include "florinet/trainers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <random>

#include "florinet/error.hpp"

namespace florinet::trainers {
namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

Eigen::VectorXd logits(const ModelVector& m, const Eigen::MatrixXd& x) {
  const auto d = x.cols();
  if (m.size() != d + 1) throw Error("length_mismatch", "model length does not match the feature count");
  return (x * m.head(d)).array() + m[d];
}

}  // namespace

client::Trainer constant_trainer(double value) {
  return [value](ByteView model, const client::TrainContext&) {
    const auto n = decode_model(model).size();
    client::TrainResult r;
    r.delta.assign(static_cast<std::size_t>(n), value);
    r.loss = 0.0;
    return r;
  };
}

BlobDataset make_blobs(const BlobConfig& config) {
  if (config.dim < 1 || config.shards < 1 || config.shard_size < 1 || config.test_size < 0) {
    throw Error("invalid_argument", "blob dimensions must be positive");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(config.dim);
  for (auto& e : v) e = normal(rng);
  v.normalize();

  auto draw = [&](int n, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
    std::bernoulli_distribution label;
    x.resize(n, config.dim);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
      y[i] = label(rng) ? 1.0 : 0.0;
      for (int j = 0; j < config.dim; ++j) x(i, j) = normal(rng);
      x.row(i) += ((2.0 * y[i] - 1.0) * config.separation) * v.transpose();
    }
    x *= config.feature_scale;
  };
  BlobDataset data;
  data.config = config;
  draw(config.shards * config.shard_size, data.x_train, data.y_train);
  draw(config.test_size, data.x_test, data.y_test);
  return data;
}

double predict_logit(const ModelVector& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const auto d = x.size();
  return x.dot(model.head(d)) + model[d];
}

double accuracy(const ModelVector& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() == 0) return 0.0;
  const auto z = logits(model, x);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) hits += ((z[i] > 0) == (y[i] > 0.5)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

double log_loss(const ModelVector& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto z = logits(model, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    // log(1 + e^z) - y z, evaluated without overflow.
    total += std::max(z[i], 0.0) + std::log1p(std::exp(-std::abs(z[i]))) - y[i] * z[i];
  }
  return x.rows() ? total / static_cast<double>(x.rows()) : 0.0;
}

ModelVector log_loss_gradient(const ModelVector& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto z = logits(model, x);
  Eigen::VectorXd r(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) r[i] = sigmoid(z[i]) - y[i];
  const auto d = x.cols();
  ModelVector g(d + 1);
  const double n = static_cast<double>(std::max<Eigen::Index>(x.rows(), 1));
  g.head(d) = x.transpose() * r / n;
  g[d] = r.sum() / n;
  return g;
}

client::Trainer logistic_trainer(std::shared_ptr<const BlobDataset> data, LogisticConfig config,
                                 std::uint64_t seed) {
  if (!data) throw Error("invalid_argument", "logistic trainer needs a dataset");
  if (config.fraction <= 0 || config.fraction > 1) throw Error("invalid_argument", "fraction must be in (0, 1]");
  return [data = std::move(data), config, seed](ByteView payload, const client::TrainContext& ctx) {
    const ModelVector global = decode_model(payload);
    if (global.size() != data->model_length()) {
      throw Error("length_mismatch", "model does not match the dataset dimension");
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(std::hash<std::string>{}(ctx.client_id)),
                      static_cast<std::uint32_t>(ctx.round), static_cast<std::uint32_t>(ctx.round >> 32)};
    std::mt19937_64 rng(seq);
    const int shard_size = data->config.shard_size;
    const int shard = std::uniform_int_distribution<int>(0, data->config.shards - 1)(rng);
    std::vector<int> rows(static_cast<std::size_t>(shard_size));
    std::iota(rows.begin(), rows.end(), shard * shard_size);
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(config.fraction * shard_size + 0.5));
    rows.resize(take);

    Eigen::MatrixXd x(static_cast<Eigen::Index>(take), data->dim());
    Eigen::VectorXd y(static_cast<Eigen::Index>(take));
    for (std::size_t i = 0; i < take; ++i) {
      x.row(static_cast<Eigen::Index>(i)) = data->x_train.row(rows[i]);
      y[static_cast<Eigen::Index>(i)] = data->y_train[rows[i]];
    }

    client::TrainResult result;
    result.loss = log_loss(global, x, y);
    ModelVector w = global;
    for (int e = 0; e < config.local_epochs; ++e) {
      ModelVector g = log_loss_gradient(w, x, y);
      if (config.mu_prox > 0) g += client::fedprox_penalty(w, global, config.mu_prox).gradient;
      w -= config.learning_rate * g;
    }
    const ModelVector delta = w - global;
    result.delta.assign(delta.data(), delta.data() + delta.size());
    result.num_samples = static_cast<double>(take);
    if (ctx.evaluate) result.eval["accuracy"] = accuracy(w, data->x_test, data->y_test);
    return result;
  };
}

ModelVector fit_centralized(const BlobDataset& data, int iterations, double ridge) {
  const auto n = data.x_train.rows();
  const auto d = data.dim();
  Eigen::MatrixXd a(n, d + 1);
  a.leftCols(d) = data.x_train;
  a.col(d).setOnes();
  ModelVector w = ModelVector::Zero(d + 1);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd z = a * w;
    Eigen::VectorXd p(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(z[i]);
      s[i] = p[i] * (1.0 - p[i]);
    }
    const Eigen::VectorXd grad = a.transpose() * (p - data.y_train) + ridge * w;
    Eigen::MatrixXd h = a.transpose() * s.asDiagonal() * a;
    h.diagonal().array() += ridge;
    const ModelVector step = h.ldlt().solve(grad);
    w -= step;
    if (step.norm() < 1e-12 * (1.0 + w.norm())) break;
  }
  return w;
}

}  // namespace florinet::trainers
