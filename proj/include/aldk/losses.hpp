#pragma once

#include <functional>
#include <span>

#include "aldk/autodiff.hpp"
#include "aldk/networks.hpp"

namespace aldk {

struct LossWeights {
  float gamma = 0.5f;   // reconstruction vs. discrimination mix
  float beta = 0.1f;    // teacher share of the joint deformation
  float lambda = 1.0f;  // gradient-penalty weight
};

void validate(const LossWeights& w);

/// (1/|w|) sum I1 I2 - (1/|w|^2) sum I1 sum I2, accumulated in double.
Var covariance(const Var& a, const Var& b);
/// Pearson correlation; throws DegenerateImageError on a constant input.
Var corrcoef(const Var& a, const Var& b);
/// 1 - corrcoef(warped, fixed).
Var rec_loss(const Var& warped, const Var& fixed);

/// beta * teacher + (1 - beta) * student.
Var joint_deformation(const Var& teacher, const Var& student, float beta);

/// (||d D(x)/dx||_2 - 1)^2 evaluated at `mixed`, differentiable in theta
/// (and in `mixed` when it carries history).
Var gradient_penalty(const Var& mixed, const ParameterCollection& theta, const DiscriminatorConfig& config);
/// Same penalty for an arbitrary scalar critic of the field.
Var gradient_penalty(const Var& mixed, const std::function<Var(const Var&)>& critic);

/// (D(student) - D(teacher))^2.
Var feature_term(const Var& student, const Var& teacher, const ParameterCollection& theta,
                 const DiscriminatorConfig& config);

/// Per-sample discrimination loss: feature term + lambda * penalty at the joint deformation.
Var dis_loss(const Var& student, const Var& teacher, const ParameterCollection& theta,
             const DiscriminatorConfig& config, float beta, float lambda);

/// gamma * rec + (1 - gamma) * dis.
Var adv_loss(const Var& rec, const Var& dis, float gamma);

/// Critic objective, minimized over theta with the student field detached:
/// -(D(student) - D(teacher))^2 + lambda * penalty at the joint deformation.
Var critic_loss(const Var& student, const Var& teacher, const ParameterCollection& theta,
                const DiscriminatorConfig& config, float beta, float lambda);

/// Arithmetic mean of per-sample scalar losses.
Var batch_mean(std::span<const Var> losses);

}  // namespace aldk
