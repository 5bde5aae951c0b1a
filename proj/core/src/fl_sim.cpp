#include "fairenergy/fl_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "fairenergy/errors.hpp"

namespace fairenergy {

void TaskConfig::validate() const {
  if (classes < 2) throw ConfigError("task.classes must be >= 2");
  if (feature_dim < 1) throw ConfigError("task.feature_dim must be >= 1");
  if (train_size < 1 || test_size < 1) {
    throw ConfigError("task.train_size and task.test_size must be >= 1");
  }
  if (!(center_scale > 0.0)) throw ConfigError("task.center_scale must be > 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("task.noise_sigma must be >= 0");
}

namespace {

void fill_samples(Dataset& out, std::size_t count, const SyntheticTask& task, Rng& rng) {
  out.feature_dim = task.feature_dim;
  out.classes = task.classes;
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.labels[i] = static_cast<int>(i % static_cast<std::size_t>(task.classes));
  }
  std::shuffle(out.labels.begin(), out.labels.end(), rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  out.features.resize(count * task.feature_dim);
  for (std::size_t i = 0; i < count; ++i) {
    const auto c = static_cast<std::size_t>(out.labels[i]);
    for (std::size_t j = 0; j < task.feature_dim; ++j) {
      out.features[i * task.feature_dim + j] =
          task.class_centers[c * task.feature_dim + j] + task.noise_sigma * noise(rng);
    }
  }
}

}  // namespace

SyntheticTask make_synthetic_task(const TaskConfig& config, Rng& rng) {
  config.validate();
  SyntheticTask task;
  task.classes = config.classes;
  task.feature_dim = config.feature_dim;
  task.noise_sigma = config.noise_sigma;
  std::normal_distribution<double> center(0.0, config.center_scale);
  task.class_centers.resize(static_cast<std::size_t>(config.classes) * config.feature_dim);
  for (double& c : task.class_centers) c = center(rng);
  fill_samples(task.train, config.train_size, task, rng);
  fill_samples(task.test, config.test_size, task, rng);
  return task;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open dataset file '{}'", path.string()));

  std::string line;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      const auto first = out.find_first_not_of(" \t\r");
      if (first == std::string::npos || out[first] == '#') continue;
      return true;
    }
    return false;
  };

  if (!next_line(line)) throw IoError(fmt::format("'{}': missing header", path.string()));
  std::istringstream header(line);
  long long count = 0;
  long long dim = 0;
  int classes = 0;
  if (!(header >> count >> dim >> classes) || count < 1 || dim < 1 || classes < 2) {
    throw IoError(fmt::format(
        "'{}': header must be '<sample_count> <feature_dim> <classes>' with positive "
        "sizes and >= 2 classes",
        path.string()));
  }

  Dataset d;
  d.feature_dim = static_cast<std::size_t>(dim);
  d.classes = classes;
  d.labels.reserve(static_cast<std::size_t>(count));
  d.features.reserve(static_cast<std::size_t>(count * dim));
  for (long long i = 0; i < count; ++i) {
    if (!next_line(line)) {
      throw IoError(fmt::format("'{}': expected {} samples, found {}", path.string(),
                                count, i));
    }
    std::istringstream row(line);
    int label = -1;
    if (!(row >> label) || label < 0 || label >= classes) {
      throw IoError(fmt::format("'{}': sample {} has an invalid label", path.string(), i));
    }
    d.labels.push_back(label);
    for (long long j = 0; j < dim; ++j) {
      double v = 0.0;
      if (!(row >> v) || !std::isfinite(v)) {
        throw IoError(fmt::format("'{}': sample {} feature {} is missing or non-finite",
                                  path.string(), i, j));
      }
      d.features.push_back(v);
    }
  }
  return d;
}

void split_train_test(const Dataset& all, double test_fraction, Rng& rng, Dataset& train,
                      Dataset& test) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(all.size()))));
  if (n_test >= all.size()) throw ConfigError("dataset too small to split");

  auto take = [&](Dataset& out, std::size_t begin, std::size_t end) {
    out.feature_dim = all.feature_dim;
    out.classes = all.classes;
    out.labels.clear();
    out.features.clear();
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = order[k];
      out.labels.push_back(all.labels[i]);
      const auto r = all.row(i);
      out.features.insert(out.features.end(), r.begin(), r.end());
    }
  };
  take(train, 0, all.size() - n_test);
  take(test, all.size() - n_test, all.size());
}

std::vector<ClientDataset> dirichlet_partition(std::span<const int> labels, int classes,
                                               std::size_t n_clients, double beta,
                                               Rng& rng) {
  if (!(beta > 0.0)) throw ConfigError(fmt::format("beta must be > 0 (got {})", beta));
  if (n_clients < 1) throw ConfigError("need at least one client");
  if (labels.size() < n_clients) {
    throw ConfigError(fmt::format("{} samples cannot cover {} clients", labels.size(),
                                  n_clients));
  }

  const auto k = static_cast<std::size_t>(classes);
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
  }

  std::vector<ClientDataset> clients(n_clients);
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<double> share(n_clients);
  for (std::size_t c = 0; c < k; ++c) {
    auto& members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);

    double total = 0.0;
    for (double& s : share) {
      s = gamma(rng);
      total += s;
    }
    if (!(total > 0.0)) {
      // All draws underflowed; fall back to a uniform split for this class.
      std::fill(share.begin(), share.end(), 1.0);
      total = static_cast<double>(n_clients);
    }

    // Cumulative split keeps the assignment exact and order-stable.
    double cumulative = 0.0;
    std::size_t start = 0;
    const auto m = static_cast<double>(members.size());
    for (std::size_t j = 0; j < n_clients; ++j) {
      cumulative += share[j] / total;
      std::size_t end = j + 1 == n_clients
                            ? members.size()
                            : std::min(members.size(),
                                       static_cast<std::size_t>(std::floor(cumulative * m + 0.5)));
      end = std::max(end, start);
      for (std::size_t p = start; p < end; ++p) clients[j].indices.push_back(members[p]);
      start = end;
    }
  }

  for (std::size_t j = 0; j < n_clients; ++j) {
    if (!clients[j].indices.empty()) continue;
    std::size_t largest = 0;
    for (std::size_t q = 1; q < n_clients; ++q) {
      if (clients[q].indices.size() > clients[largest].indices.size()) largest = q;
    }
    clients[j].indices.push_back(clients[largest].indices.back());
    clients[largest].indices.pop_back();
  }

  for (auto& client : clients) {
    std::sort(client.indices.begin(), client.indices.end());
    client.label_histogram.assign(k, 0);
    for (std::size_t i : client.indices) {
      ++client.label_histogram[static_cast<std::size_t>(labels[i])];
    }
  }
  return clients;
}

ModelState make_model(int classes, std::size_t feature_dim, double init_scale, Rng& rng) {
  ModelState m;
  m.classes = classes;
  m.feature_dim = feature_dim;
  m.params.assign(static_cast<std::size_t>(classes) * (feature_dim + 1), 0.0);
  if (init_scale > 0.0) {
    std::normal_distribution<double> init(0.0, init_scale);
    for (double& p : m.params) p = init(rng);
  }
  return m;
}

namespace {

// Softmax probabilities into `probs`; returns the log-sum-exp of the logits.
double softmax(const ModelState& m, std::span<const double> x, std::vector<double>& probs) {
  const std::size_t d = m.feature_dim;
  const auto k = static_cast<std::size_t>(m.classes);
  probs.resize(k);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double* w = m.params.data() + c * (d + 1);
    double z = w[d];
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
    probs[c] = z;
    max_logit = std::max(max_logit, z);
  }
  double sum = 0.0;
  for (double& p : probs) {
    p = std::exp(p - max_logit);
    sum += p;
  }
  for (double& p : probs) p /= sum;
  return max_logit + std::log(sum);
}

void accumulate_gradient(const ModelState& m, const Dataset& data,
                         std::span<const std::size_t> indices, std::vector<double>& grad,
                         std::vector<double>& probs) {
  const std::size_t d = m.feature_dim;
  const auto k = static_cast<std::size_t>(m.classes);
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t i : indices) {
    const auto x = data.row(i);
    softmax(m, x, probs);
    probs[static_cast<std::size_t>(data.labels[i])] -= 1.0;
    for (std::size_t c = 0; c < k; ++c) {
      double* g = grad.data() + c * (d + 1);
      const double r = probs[c];
      for (std::size_t j = 0; j < d; ++j) g[j] += r * x[j];
      g[d] += r;
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (double& g : grad) g *= inv;
}

}  // namespace

double mean_loss(const ModelState& model, const Dataset& data,
                 std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  std::vector<double> probs;
  double total = 0.0;
  for (std::size_t i : indices) {
    const double lse = softmax(model, data.row(i), probs);
    const std::size_t d = model.feature_dim;
    const double* w =
        model.params.data() + static_cast<std::size_t>(data.labels[i]) * (d + 1);
    double z = w[d];
    const auto x = data.row(i);
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
    total += lse - z;
  }
  return total / static_cast<double>(indices.size());
}

std::vector<double> mean_gradient(const ModelState& model, const Dataset& data,
                                  std::span<const std::size_t> indices) {
  std::vector<double> grad(model.parameter_count(), 0.0);
  if (indices.empty()) return grad;
  std::vector<double> probs;
  accumulate_gradient(model, data, indices, grad, probs);
  return grad;
}

LocalUpdate local_update(const ModelState& model, const Dataset& data,
                         std::span<const std::size_t> indices,
                         const LocalTrainConfig& config, Rng& rng, bool track_loss) {
  if (!(config.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");

  LocalUpdate out;
  ModelState local = model;
  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::vector<double> grad(model.parameter_count());
  std::vector<double> probs;

  auto check_loss = [&](int epoch) {
    const double l = mean_loss(local, data, order);
    if (!std::isfinite(l)) {
      throw NumericError(fmt::format("non-finite local loss after epoch {}", epoch));
    }
    out.loss_trace.push_back(l);
  };
  if (track_loss) check_loss(0);

  for (int e = 0; e < config.epochs && !order.empty(); ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      accumulate_gradient(local, data,
                          std::span<const std::size_t>(order.data() + start, end - start),
                          grad, probs);
      for (std::size_t p = 0; p < grad.size(); ++p) local.params[p] -= config.lr * grad[p];
    }
    if (track_loss) check_loss(e + 1);
  }

  out.update.resize(model.parameter_count());
  for (std::size_t p = 0; p < out.update.size(); ++p) {
    out.update[p] = local.params[p] - model.params[p];
    if (!std::isfinite(out.update[p])) {
      throw NumericError("local training produced a non-finite update");
    }
  }
  return out;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> SparseUpdate::to_dense() const {
  std::vector<double> dense(dim, 0.0);
  for (std::size_t k = 0; k < indices.size(); ++k) dense[indices[k]] = values[k];
  return dense;
}

SparseUpdate sparsify_topk(std::span<const double> u, double gamma) {
  SparseUpdate s;
  s.dim = u.size();
  if (u.empty()) return s;
  const double raw = gamma * static_cast<double>(u.size());
  // Absorb representation error so that e.g. (2/3) * 3 keeps exactly 2.
  auto keep = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  keep = std::clamp<std::size_t>(keep, 1, u.size());

  std::vector<std::uint32_t> order(u.size());
  std::iota(order.begin(), order.end(), std::uint32_t{0});
  auto before = [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::fabs(u[a]);
    const double mb = std::fabs(u[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
  if (keep < u.size()) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                     order.end(), before);
    order.resize(keep);
  }
  std::sort(order.begin(), order.end());
  s.indices = std::move(order);
  s.values.reserve(s.indices.size());
  for (std::uint32_t i : s.indices) s.values.push_back(u[i]);
  return s;
}

std::vector<double> aggregate(std::span<const SparseUpdate> updates,
                              std::span<const double> weights, std::size_t dim) {
  if (updates.size() != weights.size()) {
    throw ConfigError("aggregate: one weight per update required");
  }
  std::vector<double> delta(dim, 0.0);
  for (std::size_t k = 0; k < updates.size(); ++k) {
    const auto& s = updates[k];
    for (std::size_t j = 0; j < s.indices.size(); ++j) {
      delta[s.indices[j]] += weights[k] * s.values[j];
    }
  }
  return delta;
}

void apply_delta(ModelState& model, std::span<const double> delta) {
  for (std::size_t p = 0; p < model.params.size(); ++p) model.params[p] += delta[p];
}

double evaluate(const ModelState& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const std::size_t d = model.feature_dim;
  const auto k = static_cast<std::size_t>(model.classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    std::size_t best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double* w = model.params.data() + c * (d + 1);
      double z = w[d];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    if (static_cast<int>(best) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace fairenergy
