#include "aldk/losses.hpp"

#include <cmath>

#include "aldk/errors.hpp"
#include "aldk/ops.hpp"

namespace aldk {

void validate(const LossWeights& w) {
  if (!(w.gamma >= 0.0f && w.gamma <= 1.0f)) throw ConfigError("gamma must lie in [0,1]");
  if (!(w.beta >= 0.0f && w.beta <= 1.0f)) throw ConfigError("beta must lie in [0,1]");
  if (!(w.lambda >= 0.0f)) throw ConfigError("lambda must be >= 0");
}

namespace {

double mean_of(const Tensor& t) { return sum(t) / static_cast<double>(t.numel()); }

}  // namespace

// Evaluated in centered form, which equals the raw-moment expression exactly
// in real arithmetic and is exactly zero for constant images in floating point.
Var covariance(const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    throw ShapeError("covariance: extent mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  if (a.numel() < 2) throw ShapeError("covariance needs at least two voxels");
  const double ma = mean_of(a.value()), mb = mean_of(b.value());
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += (a.value()[i] - ma) * (b.value()[i] - mb);
  const double n = static_cast<double>(a.numel());
  return record(
      Tensor::exact_scalar(acc / n), "covariance", {a, b},
      [n](const BackwardArgs& ctx) {
        // d/da_i = (b_i - mean b) / n
        auto centered_over_n = [n](const Tensor& t, float g) {
          const double m = mean_of(t);
          Tensor out(t.shape());
          for (std::int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<float>(g * (t[i] - m) / n);
          return Var::constant(std::move(out));
        };
        const float g = ctx.grad.item();
        std::vector<Var> grads(2);
        if (ctx.needs[0]) grads[0] = centered_over_n(ctx.inputs[1].value(), g);
        if (ctx.needs[1]) grads[1] = centered_over_n(ctx.inputs[0].value(), g);
        return grads;
      },
      /*differentiable_backward=*/false);
}

Var corrcoef(const Var& a, const Var& b) {
  const Var vaa = covariance(a, a);
  const Var vbb = covariance(b, b);
  if (vaa.item() <= 0.0f || vbb.item() <= 0.0f)
    throw DegenerateImageError("correlation undefined for a constant image");
  return div(covariance(a, b), sqrt(mul(vaa, vbb)));
}

Var rec_loss(const Var& warped, const Var& fixed) { return affine(corrcoef(warped, fixed), -1.0f, 1.0f); }

Var joint_deformation(const Var& teacher, const Var& student, float beta) {
  if (teacher.shape() != student.shape())
    throw ShapeError("joint_deformation: extent mismatch " + to_string(teacher.shape()) + " vs " +
                     to_string(student.shape()));
  return add(scale(teacher, beta), scale(student, 1.0f - beta));
}

Var gradient_penalty(const Var& mixed, const std::function<Var(const Var&)>& critic) {
  const Var x = mixed.requires_grad() ? mixed : Var::leaf(mixed.value());
  const Var g = input_gradient(critic(x), x);
  return square(affine(l2_norm(g), 1.0f, -1.0f));
}

// The gradient is taken at the critic's input resolution.
Var gradient_penalty(const Var& mixed, const ParameterCollection& theta, const DiscriminatorConfig& config) {
  const Var x = mixed.requires_grad() ? mixed : Var::leaf(mixed.value());
  return gradient_penalty(resample_field(x, config.extent),
                          [&](const Var& at_extent) { return critic_score(at_extent, theta, config); });
}

Var feature_term(const Var& student, const Var& teacher, const ParameterCollection& theta,
                 const DiscriminatorConfig& config) {
  if (student.shape() != teacher.shape())
    throw ShapeError("student field " + to_string(student.shape()) + " vs teacher " + to_string(teacher.shape()));
  return square(sub(discriminator_forward(student, theta, config), discriminator_forward(teacher, theta, config)));
}

Var dis_loss(const Var& student, const Var& teacher, const ParameterCollection& theta,
             const DiscriminatorConfig& config, float beta, float lambda) {
  const Var feature = feature_term(student, teacher, theta, config);
  if (lambda == 0.0f) return feature;
  return add(feature, scale(gradient_penalty(joint_deformation(teacher, student, beta), theta, config), lambda));
}

Var adv_loss(const Var& rec, const Var& dis, float gamma) {
  if (!(gamma >= 0.0f && gamma <= 1.0f)) throw ConfigError("gamma must lie in [0,1]");
  return add(scale(rec, gamma), scale(dis, 1.0f - gamma));
}

Var critic_loss(const Var& student, const Var& teacher, const ParameterCollection& theta,
                const DiscriminatorConfig& config, float beta, float lambda) {
  const Var s = student.detach();
  const Var t = teacher.detach();
  const Var adversarial = neg(feature_term(s, t, theta, config));
  if (lambda == 0.0f) return adversarial;
  return add(adversarial, scale(gradient_penalty(joint_deformation(t, s, beta), theta, config), lambda));
}

Var batch_mean(std::span<const Var> losses) {
  if (losses.empty()) throw ConfigError("batch_mean of an empty batch");
  Var total = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
  return scale(total, 1.0f / static_cast<float>(losses.size()));
}

}  // namespace aldk
