#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eapo/data.hpp"

namespace eapo {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModelKind { logistic, mlp };

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind kind);

/// Activations kept from a batched forward pass for the matching backward.
struct ForwardCache {
  std::vector<RowMatrix> inputs;  // input to each layer (inputs[0] is the batch)
  std::vector<RowMatrix> pre;     // pre-activation of each hidden layer
};

/// Feed-forward binary classifier producing a scalar logit.
///
/// Parameters live in one flat vector. For each layer, in order, the weight
/// matrix is stored row-major with shape (fan_out x fan_in), followed by the
/// fan_out biases. Hidden layers use a rectifier (derivative 0 at 0); the
/// output layer is a single identity unit. A logistic model is the case with
/// no hidden layers, so its parameters are the d weights then the bias.
class Classifier {
public:
  Classifier() = default;

  static Classifier init(ModelKind kind, std::size_t dim, std::vector<std::size_t> hidden,
                         std::uint64_t seed);
  static Classifier from_parameters(ModelKind kind, std::size_t dim,
                                    std::vector<std::size_t> hidden,
                                    std::vector<double> parameters, std::uint64_t seed = 0);
  static std::size_t parameter_count(std::size_t dim, std::span<const std::size_t> hidden);

  ModelKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t num_parameters() const { return params_.size(); }
  const std::vector<double>& parameters() const { return params_; }
  std::vector<double>& mutable_parameters() { return params_; }

  double forward(std::span<const double> x) const;

  /// Gradient of upstream * f(x) with respect to every parameter.
  std::vector<double> backward(std::span<const double> x, double upstream) const;

  /// Row-wise logits for a batch. Inputs are trusted to be finite.
  Eigen::VectorXd forward_batch(const RowMatrix& x, ForwardCache* cache = nullptr) const;

  /// Adds sum_i upstream[i] * d f(x_i) / d theta into `grad`.
  void backward_batch(const ForwardCache& cache, const Eigen::VectorXd& upstream,
                      std::span<double> grad) const;

  bool operator==(const Classifier&) const = default;

private:
  struct Layer {
    std::size_t fan_in;
    std::size_t fan_out;
    std::size_t offset;  // start of the weight block in params_
  };
  std::vector<Layer> layers() const;
  void check_input(std::span<const double> x) const;

  ModelKind kind_ = ModelKind::logistic;
  std::size_t dim_ = 0;
  std::vector<std::size_t> hidden_;
  std::vector<double> params_;
  std::uint64_t seed_ = 0;
};

/// Frozen snapshot of a classifier used as the preference anchor.
class ReferencePolicy {
public:
  explicit ReferencePolicy(Classifier snapshot) : snapshot_(std::move(snapshot)) {}

  const Classifier& snapshot() const { return snapshot_; }
  double logit(std::span<const double> x) const { return snapshot_.forward(x); }
  double probability(std::span<const double> x) const;

private:
  Classifier snapshot_;
};

ReferencePolicy freeze_reference(const Classifier& c);

/// Gathers record features into a batch matrix.
RowMatrix to_matrix(std::span<const Record> records);
std::vector<double> predict_logits(const Classifier& c, const Dataset& ds);
std::vector<double> predict_probabilities(const Classifier& c, const Dataset& ds);

/// Self-describing JSON checkpoint. Doubles are written in shortest
/// round-trip form, so loading reproduces bit-identical logits.
std::string to_checkpoint(const Classifier& c);
Classifier from_checkpoint(const std::string& text);
void save_checkpoint(const Classifier& c, const std::filesystem::path& path);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace eapo
