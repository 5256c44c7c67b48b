#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "aldk/dataset.hpp"
#include "aldk/losses.hpp"
#include "aldk/networks.hpp"
#include "aldk/optim.hpp"

namespace aldk {

struct TrainConfig {
  int batch = 4;
  int n_gen = 3;
  LossWeights weights;
  double learning_rate = 1e-4;
  /// Critic step size; unset means `learning_rate`.
  std::optional<double> critic_learning_rate;
  std::int64_t iterations = 1;
  std::uint64_t seed = 0;
  std::int64_t extent = 32;
  StudentConfig student;
  DiscriminatorConfig discriminator;
  /// false: reconstruction-only baseline (no critic, L_adv = l_rec).
  bool adversarial = true;
  /// Let the gradient penalty also back-propagate into the student.
  bool penalty_to_student = false;
};

void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  TrainConfig config;
  ParameterCollection student;
  ParameterCollection critic;
  AdamState student_opt;
  AdamState critic_opt;
  std::int64_t iteration = 0;
  /// Batch-sampler cursor: number of training samples drawn so far.
  std::uint64_t samples_drawn = 0;
};

TrainState initial_state(const TrainConfig& config);

struct LossRecord {
  std::int64_t iteration = 0;
  double rec = 0.0;      // mean l_rec over the generator phases
  double adv_rec = 0.0;  // l_rec of the adversarial phase batch
  double dis = 0.0;      // (D(phi_s) - D(phi_t))^2, batch mean
  double adv = 0.0;      // L_adv
  double critic = 0.0;   // critic objective

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

nlohmann::json to_json(const std::vector<LossRecord>& log);
std::vector<LossRecord> loss_log_from_json(const nlohmann::json& j);

/// Reversed-role adversarial training: per outer iteration, n_gen
/// reconstruction steps on the student, then one critic step on theta and one
/// adversarial step on the student.
class Trainer {
 public:
  Trainer(TrainState state, const Dataset& dataset, const TeacherProvider& teacher);

  LossRecord step();
  /// Runs until `state().iteration == until`.
  std::vector<LossRecord> run_until(std::int64_t until, const std::function<void(const LossRecord&)>& on_step = {});

  const TrainState& state() const noexcept { return state_; }
  TrainState& state() noexcept { return state_; }

  /// Next b dataset indices: without replacement within an epoch, reshuffled
  /// per epoch from the run seed. Advances the sampler cursor.
  std::vector<std::size_t> next_batch();

 private:
  const std::vector<std::size_t>& epoch_order(std::uint64_t epoch);

  TrainState state_;
  const Dataset& dataset_;
  std::vector<Var> moving_, fixed_, teacher_;
  std::uint64_t cached_epoch_ = ~0ULL;
  std::vector<std::size_t> order_;
};

struct TrainResult {
  TrainState state;
  std::vector<LossRecord> log;
};

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TeacherProvider& teacher,
                  const std::function<void(const LossRecord&)>& on_step = {});

}  // namespace aldk
