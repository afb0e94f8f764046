#include "numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <utility>

#include "error.hpp"

namespace lpcsm {

void ParameterStore::add(std::string name, Tensor value, bool trainable) {
  require(!contains(name), ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
  require(value.all_finite(), ErrorCode::kNumeric, "non-finite initial value for " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(value), trainable});
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.find(std::string(name)) != index_.end();
}

const ParameterStore::Entry& ParameterStore::entry(std::string_view name) const {
  auto it = index_.find(std::string(name));
  require(it != index_.end(), ErrorCode::kMissingParameter,
          "missing parameter " + std::string(name));
  return entries_[it->second];
}

Tensor& ParameterStore::value(std::string_view name) {
  return const_cast<Entry&>(std::as_const(*this).entry(name)).value;
}

const Tensor& ParameterStore::value(std::string_view name) const { return entry(name).value; }

void ParameterStore::set_trainable(std::string_view name, bool trainable) {
  const_cast<Entry&>(std::as_const(*this).entry(name)).trainable = trainable;
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

bool ParameterStore::bit_equal(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!entries_[i].value.bit_equal(other.entries_[i].value)) return false;
  }
  return true;
}

ad::Var ParamBinder::get(std::string_view name) {
  std::string key(name);
  auto it = bound_.find(key);
  if (it != bound_.end()) return it->second;
  const auto& e = store_.entry(name);
  ad::Var v = tape_.parameter(key, e.value, e.trainable);
  bound_.emplace(std::move(key), v);
  return v;
}

ad::Var rmsnorm(ad::Var x, ad::Var gain, double eps) {
  require(x.cols() > 0, ErrorCode::kShapeMismatch, "rmsnorm: empty last axis");
  require(gain.value().numel() == x.cols(), ErrorCode::kShapeMismatch,
          "rmsnorm: gain length " + std::to_string(gain.value().numel()) +
              " differs from width " + std::to_string(x.cols()));
  require(eps >= 0.0, ErrorCode::kInvalidArgument, "rmsnorm: eps must be non-negative");
  ad::Var inv_rms = ad::reciprocal(ad::sqrt(ad::add_scalar(ad::row_mean(ad::square(x)), eps)));
  return ad::mul(ad::mul(x, inv_rms), gain);
}

double evaluate_loss(const LossBuilder& loss, const ParameterStore& params) {
  ad::Tape tape;
  return loss(tape, params).item();
}

GradReport grad_check(const LossBuilder& loss, const ParameterStore& params,
                      const GradCheckOptions& options) {
  require(options.eps > 0.0 && options.eps <= 1e-2, ErrorCode::kInvalidArgument,
          "grad_check: eps must lie in (0, 1e-2]");
  require(options.tol > 0.0, ErrorCode::kInvalidArgument, "grad_check: tol must be positive");

  ad::GradMap analytic;
  double base = 0.0;
  {
    ad::Tape tape;
    ad::Var root = loss(tape, params);
    base = root.item();
    analytic = tape.backward(root);
  }
  const double again = evaluate_loss(loss, params);
  require(std::memcmp(&base, &again, sizeof(double)) == 0, ErrorCode::kNumeric,
          "grad_check: loss function is not deterministic");

  GradReport report;
  report.epsilon = options.eps;
  std::mt19937_64 rng(options.seed);
  ParameterStore work = params;
  for (auto& e : work.entries()) {
    if (!e.trainable) continue;
    const std::size_t n = e.value.numel();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (options.max_coords_per_tensor > 0 && n > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto it = analytic.find(e.name);
    double worst = 0.0;
    for (std::size_t i : coords) {
      const double saved = e.value[i];
      e.value[i] = saved + options.eps;
      const double up = evaluate_loss(loss, work);
      e.value[i] = saved - options.eps;
      const double down = evaluate_loss(loss, work);
      e.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
      ++report.coordinates_checked;
    }
    report.per_parameter.emplace_back(e.name, worst);
    if (worst >= report.max_rel_error) {
      report.max_rel_error = worst;
      report.worst_parameter = e.name;
    }
  }
  report.pass = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace lpcsm
