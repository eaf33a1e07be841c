// SPDX-License-Identifier: Apache-2.0
#include "plbert/optim.hpp"

#include <cmath>

#include "plbert/errors.hpp"

namespace plbert {

void OptimConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError("lr must be finite and >= 0");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("betas must be in [0, 1)");
  if (!(eps > 0.0)) throw UsageError("eps must be > 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw UsageError("warmup fraction must be in [0, 1]");
  if (total_steps == 0) throw UsageError("total_steps must be >= 1");
}

double learning_rate(const OptimConfig& c, std::uint64_t step) {
  const auto total = static_cast<std::uint64_t>(c.total_steps);
  if (step >= total) return 0.0;
  const auto warmup = static_cast<std::uint64_t>(std::ceil(c.warmup_fraction * static_cast<double>(total)));
  if (step < warmup) return c.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  return c.lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

template <class T>
AdamState<T> make_adam_state(const EncoderParams<T>& params) {
  AdamState<T> s;
  s.m.config = params.config;
  s.v.config = params.config;
  const auto& fields = EncoderParams<T>::fields();
  for (const auto& f : fields) {
    const Matrix<T>& p = params.*f.member;
    if (p.empty()) continue;
    s.m.*f.member = Matrix<T>(p.rows(), p.cols());
    s.v.*f.member = Matrix<T>(p.rows(), p.cols());
  }
  return s;
}

double global_norm(const ParamGrads& grads) {
  double sq = 0.0;
  grads.for_each([&](const auto&, const Matrix<double>& g) {
    for (double v : g.values()) sq += v * v;
  });
  return std::sqrt(sq);
}

double clip_global_norm(ParamGrads& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each([&](const auto&, Matrix<double>& g) {
      for (double& v : g.values()) v *= scale;
    });
  }
  return norm;
}

template <class T>
void adamw_update(EncoderParams<T>& params, AdamState<T>& state, const ParamGrads& grads, const OptimConfig& c,
                  std::uint64_t step, double lr) {
  const double t = static_cast<double>(step + 1);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const auto& fields = EncoderParams<T>::fields();
  const auto& grad_fields = ParamGrads::fields();
  for (std::size_t f = 0; f < fields.size(); ++f) {
    Matrix<T>& p = params.*fields[f].member;
    if (p.empty()) continue;
    const Matrix<double>& g = grads.*grad_fields[f].member;
    Matrix<T>& m = state.m.*fields[f].member;
    Matrix<T>& v = state.v.*fields[f].member;
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw UsageError("optimizer state does not match the parameters");
    }
    const bool decay = fields[f].kind == TensorKind::embedding || fields[f].kind == TensorKind::weight;
    const double wd = decay ? c.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.data()[i];
      const double mi = c.beta1 * static_cast<double>(m.data()[i]) + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * static_cast<double>(v.data()[i]) + (1.0 - c.beta2) * gi * gi;
      m.data()[i] = static_cast<T>(mi);
      v.data()[i] = static_cast<T>(vi);
      const double pi = static_cast<double>(p.data()[i]);
      const double update = (mi / correction1) / (std::sqrt(vi / correction2) + c.eps) + wd * pi;
      p.data()[i] = static_cast<T>(pi - lr * update);
    }
  }
}

template AdamState<float> make_adam_state<float>(const EncoderParams<float>&);
template AdamState<double> make_adam_state<double>(const EncoderParams<double>&);
template void adamw_update<float>(EncoderParams<float>&, AdamState<float>&, const ParamGrads&, const OptimConfig&,
                                  std::uint64_t, double);
template void adamw_update<double>(EncoderParams<double>&, AdamState<double>&, const ParamGrads&,
                                   const OptimConfig&, std::uint64_t, double);

}  // namespace plbert
