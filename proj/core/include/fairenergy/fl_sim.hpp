#pragma once

// Desk-scale synchronous federated training: a multinomial logistic
// regression model trained on a synthetic Gaussian-mixture task, split
// across clients with a label-skewed Dirichlet partition.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fairenergy/rng.hpp"

namespace fairenergy {

/// Dense row-major samples with integer labels in [0, classes).
struct Dataset {
  std::size_t feature_dim = 0;
  int classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
};

struct TaskConfig {
  int classes = 10;
  std::size_t feature_dim = 20;
  std::size_t train_size = 5000;
  std::size_t test_size = 2000;
  /// Class centers are drawn from N(0, center_scale^2 I).
  double center_scale = 0.35;
  double noise_sigma = 0.5;

  void validate() const;
};

struct SyntheticTask {
  int classes = 0;
  std::size_t feature_dim = 0;
  /// classes x feature_dim, row-major.
  std::vector<double> class_centers;
  double noise_sigma = 0.0;
  Dataset train;
  Dataset test;
};

SyntheticTask make_synthetic_task(const TaskConfig& config, Rng& rng);

/// Reads a whitespace-separated numeric file:
///
///   # optional comment lines
///   <sample_count> <feature_dim> <classes>
///   <label> <x_1> ... <x_d>        (sample_count rows)
Dataset load_dataset(const std::filesystem::path& path);

/// Deterministically splits off the last `test_fraction` of a shuffled copy.
void split_train_test(const Dataset& all, double test_fraction, Rng& rng, Dataset& train,
                      Dataset& test);

struct ClientDataset {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> label_histogram;
};

/// Label-skewed split: for every class, client shares ~ Dir(beta, ..., beta).
/// Empty clients receive one sample from the currently largest client.
std::vector<ClientDataset> dirichlet_partition(std::span<const int> labels, int classes,
                                               std::size_t n_clients, double beta,
                                               Rng& rng);

/// Linear softmax classifier. Parameters are laid out per class as
/// [w_k(0..d-1), b_k], so the vector has (d + 1) * K entries.
struct ModelState {
  int classes = 0;
  std::size_t feature_dim = 0;
  std::vector<double> params;

  std::size_t parameter_count() const noexcept { return params.size(); }
};

ModelState make_model(int classes, std::size_t feature_dim, double init_scale, Rng& rng);

/// Mean cross-entropy of the model over the given sample indices.
double mean_loss(const ModelState& model, const Dataset& data,
                 std::span<const std::size_t> indices);

/// Mean cross-entropy gradient over the given sample indices.
std::vector<double> mean_gradient(const ModelState& model, const Dataset& data,
                                  std::span<const std::size_t> indices);

struct LocalTrainConfig {
  int epochs = 1;
  double lr = 0.01;
  std::size_t batch_size = 32;
};

struct LocalUpdate {
  /// w_local - w_global.
  std::vector<double> update;
  /// Client loss before training and after each epoch.
  std::vector<double> loss_trace;
};

/// Mini-batch SGD from the global model. Throws NumericError if the loss or
/// parameters become non-finite.
LocalUpdate local_update(const ModelState& model, const Dataset& data,
                         std::span<const std::size_t> indices,
                         const LocalTrainConfig& config, Rng& rng,
                         bool track_loss = false);

double l2_norm(std::span<const double> v);

struct SparseUpdate {
  std::size_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::vector<double> to_dense() const;
};

/// Keeps the ceil(gamma * n) largest-magnitude entries; ties at the cutoff go
/// to the lower index.
SparseUpdate sparsify_topk(std::span<const double> u, double gamma);

/// Weighted sum of sparse updates. Empty input yields a zero vector.
std::vector<double> aggregate(std::span<const SparseUpdate> updates,
                              std::span<const double> weights, std::size_t dim);

void apply_delta(ModelState& model, std::span<const double> delta);

/// Fraction of samples whose arg-max prediction matches the label; ties in
/// the logits go to the lowest class index.
double evaluate(const ModelState& model, const Dataset& data);

}  // namespace fairenergy
