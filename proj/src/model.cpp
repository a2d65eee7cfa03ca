#include "eapo/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eapo/error.hpp"
#include "eapo/objectives.hpp"

namespace eapo {

namespace {

using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

void check_shape(ModelKind kind, std::size_t dim, const std::vector<std::size_t>& hidden) {
  if (dim == 0) throw InvalidArgument("model input dimension must be positive");
  if (kind == ModelKind::logistic && !hidden.empty()) {
    throw InvalidArgument("a logistic model has no hidden layers");
  }
  if (kind == ModelKind::mlp && hidden.empty()) {
    throw InvalidArgument("an mlp needs at least one hidden layer");
  }
  for (auto w : hidden) {
    if (w == 0) throw InvalidArgument("hidden layer widths must be positive");
  }
}

}  // namespace

ModelKind parse_model_kind(std::string_view name) {
  if (name == "logistic") return ModelKind::logistic;
  if (name == "mlp") return ModelKind::mlp;
  throw InvalidArgument("unknown model kind '" + std::string(name) + "'");
}

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::logistic ? "logistic" : "mlp";
}

std::size_t Classifier::parameter_count(std::size_t dim, std::span<const std::size_t> hidden) {
  std::size_t count = 0;
  std::size_t fan_in = dim;
  for (auto w : hidden) {
    count += fan_in * w + w;
    fan_in = w;
  }
  return count + fan_in + 1;
}

std::vector<Classifier::Layer> Classifier::layers() const {
  std::vector<Layer> out;
  std::size_t fan_in = dim_;
  std::size_t offset = 0;
  for (auto w : hidden_) {
    out.push_back({fan_in, w, offset});
    offset += fan_in * w + w;
    fan_in = w;
  }
  out.push_back({fan_in, 1, offset});
  return out;
}

Classifier Classifier::init(ModelKind kind, std::size_t dim, std::vector<std::size_t> hidden,
                            std::uint64_t seed) {
  check_shape(kind, dim, hidden);
  Classifier c;
  c.kind_ = kind;
  c.dim_ = dim;
  c.hidden_ = std::move(hidden);
  c.seed_ = seed;
  c.params_.assign(parameter_count(dim, c.hidden_), 0.0);
  std::mt19937_64 rng(seed);
  for (const auto& layer : c.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.fan_in + layer.fan_out));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (std::size_t i = 0; i < layer.fan_in * layer.fan_out; ++i) {
      c.params_[layer.offset + i] = uni(rng);
    }
  }
  return c;
}

Classifier Classifier::from_parameters(ModelKind kind, std::size_t dim,
                                       std::vector<std::size_t> hidden,
                                       std::vector<double> parameters, std::uint64_t seed) {
  check_shape(kind, dim, hidden);
  if (parameters.size() != parameter_count(dim, hidden)) {
    throw InvalidArgument("parameter vector length does not match the model layout");
  }
  for (double p : parameters) {
    if (!std::isfinite(p)) throw InvalidArgument("model parameters must be finite");
  }
  Classifier c;
  c.kind_ = kind;
  c.dim_ = dim;
  c.hidden_ = std::move(hidden);
  c.params_ = std::move(parameters);
  c.seed_ = seed;
  return c;
}

void Classifier::check_input(std::span<const double> x) const {
  if (x.size() != dim_) throw InvalidArgument("input dimension does not match the model");
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidArgument("model input must be finite");
  }
}

Eigen::VectorXd Classifier::forward_batch(const RowMatrix& x, ForwardCache* cache) const {
  if (static_cast<std::size_t>(x.cols()) != dim_) {
    throw InvalidArgument("batch dimension does not match the model");
  }
  const auto ls = layers();
  if (cache) {
    cache->inputs.resize(ls.size());
    cache->pre.resize(ls.size() - 1);
  }
  RowMatrix a = x;
  RowMatrix z;
  for (std::size_t l = 0; l < ls.size(); ++l) {
    const auto& layer = ls[l];
    // Vectorized kernels can change summation order with operand alignment,
    // so weights go through owned (aligned) copies to keep results
    // bit-reproducible.
    const RowMatrix w = ConstMatrixMap(params_.data() + layer.offset,
                                       static_cast<Eigen::Index>(layer.fan_out),
                                       static_cast<Eigen::Index>(layer.fan_in));
    const Eigen::VectorXd b = ConstVectorMap(params_.data() + layer.offset + layer.fan_in * layer.fan_out,
                                             static_cast<Eigen::Index>(layer.fan_out));
    z.resize(a.rows(), static_cast<Eigen::Index>(layer.fan_out));
    z.noalias() = a * w.transpose();
    z.rowwise() += b.transpose();
    if (cache) cache->inputs[l] = a;
    if (l + 1 == ls.size()) break;
    if (cache) cache->pre[l] = z;
    a = z.cwiseMax(0.0);
  }
  return z.col(0);
}

void Classifier::backward_batch(const ForwardCache& cache, const Eigen::VectorXd& upstream,
                                std::span<double> grad) const {
  if (grad.size() != params_.size()) throw InvalidArgument("gradient buffer has the wrong length");
  const auto ls = layers();
  if (cache.inputs.size() != ls.size()) throw InvalidArgument("forward cache does not match model");
  RowMatrix dz = upstream;  // n x 1
  for (std::size_t l = ls.size(); l-- > 0;) {
    const auto& layer = ls[l];
    const auto out = static_cast<Eigen::Index>(layer.fan_out);
    const auto in = static_cast<Eigen::Index>(layer.fan_in);
    MatrixMap dw(grad.data() + layer.offset, out, in);
    VectorMap db(grad.data() + layer.offset + layer.fan_in * layer.fan_out, out);
    const RowMatrix gw = dz.transpose() * cache.inputs[l];
    const Eigen::VectorXd gb = dz.colwise().sum().transpose();
    dw += gw;
    db += gb;
    if (l == 0) break;
    const RowMatrix w = ConstMatrixMap(params_.data() + layer.offset, out, in);
    RowMatrix da = dz * w;
    const auto& pre = cache.pre[l - 1];
    dz = (pre.array() > 0.0).select(da, 0.0);
  }
}

double Classifier::forward(std::span<const double> x) const {
  check_input(x);
  RowMatrix row(1, static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < dim_; ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  return forward_batch(row)(0);
}

std::vector<double> Classifier::backward(std::span<const double> x, double upstream) const {
  check_input(x);
  if (!std::isfinite(upstream)) throw InvalidArgument("upstream gradient must be finite");
  RowMatrix row(1, static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < dim_; ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  ForwardCache cache;
  forward_batch(row, &cache);
  std::vector<double> grad(params_.size(), 0.0);
  Eigen::VectorXd up(1);
  up(0) = upstream;
  backward_batch(cache, up, grad);
  return grad;
}

double ReferencePolicy::probability(std::span<const double> x) const {
  return sigmoid(logit(x));
}

ReferencePolicy freeze_reference(const Classifier& c) {
  return ReferencePolicy(c);
}

RowMatrix to_matrix(std::span<const Record> records) {
  if (records.empty()) return RowMatrix(0, 0);
  const auto d = static_cast<Eigen::Index>(records.front().features.size());
  RowMatrix m(static_cast<Eigen::Index>(records.size()), d);
  for (std::size_t i = 0; i < records.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(records[i].features.data(), d);
  }
  return m;
}

std::vector<double> predict_logits(const Classifier& c, const Dataset& ds) {
  if (ds.dim() != c.dim()) throw InvalidArgument("dataset dimension does not match the model");
  std::vector<double> out;
  out.reserve(ds.size());
  constexpr std::size_t chunk = 1024;
  const auto& recs = ds.records();
  for (std::size_t start = 0; start < recs.size(); start += chunk) {
    const auto len = std::min(chunk, recs.size() - start);
    auto logits = c.forward_batch(to_matrix(std::span(recs).subspan(start, len)));
    out.insert(out.end(), logits.begin(), logits.end());
  }
  return out;
}

std::vector<double> predict_probabilities(const Classifier& c, const Dataset& ds) {
  auto out = predict_logits(c, ds);
  for (auto& v : out) v = sigmoid(v);
  return out;
}

std::string to_checkpoint(const Classifier& c) {
  nlohmann::ordered_json j;
  j["format"] = "eapo-checkpoint";
  j["version"] = 1;
  j["kind"] = std::string(to_string(c.kind()));
  j["dim"] = c.dim();
  j["hidden"] = c.hidden();
  j["seed"] = c.seed();
  j["parameters"] = c.parameters();
  return j.dump(1) + "\n";
}

Classifier from_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "eapo-checkpoint") {
      throw Error("not an eapo checkpoint");
    }
    if (j.at("version").get<int>() != 1) throw Error("unsupported checkpoint version");
    return Classifier::from_parameters(parse_model_kind(j.at("kind").get<std::string>()),
                                       j.at("dim").get<std::size_t>(),
                                       j.at("hidden").get<std::vector<std::size_t>>(),
                                       j.at("parameters").get<std::vector<double>>(),
                                       j.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Classifier& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out << to_checkpoint(c);
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_checkpoint(buf.str());
}

}  // namespace eapo
