#include "aldk/training.hpp"

#include <cmath>
#include <numeric>

#include "aldk/errors.hpp"
#include "aldk/ops.hpp"
#include "aldk/rng.hpp"

namespace aldk {

using nlohmann::json;

namespace {

constexpr std::uint64_t kStudentStream = 1, kCriticStream = 2, kShuffleStream = 3;

void require_finite(const Var& loss, std::int64_t iteration, const char* what) {
  if (!std::isfinite(loss.item())) throw NonFiniteLossError(iteration, what);
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.batch < 1) throw ConfigError("batch size must be >= 1");
  if (c.n_gen < 1) throw ConfigError("n_gen must be >= 1");
  if (c.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (c.critic_learning_rate && !(*c.critic_learning_rate > 0.0))
    throw ConfigError("critic learning rate must be positive");
  validate(c.weights);
  validate(c.student);
  validate(c.discriminator);
  std::int64_t factor = 1;
  for (int l = 0; l < c.student.levels; ++l) factor *= c.student.stride;
  if (c.extent < 16 || (c.extent & (c.extent - 1)) || c.extent % factor)
    throw ConfigError("extent " + std::to_string(c.extent) + " incompatible with the student");
}

json to_json(const TrainConfig& c) {
  json j = {{"batch", c.batch},
          {"n_gen", c.n_gen},
          {"gamma", c.weights.gamma},
          {"beta", c.weights.beta},
          {"lambda", c.weights.lambda},
          {"learning_rate", c.learning_rate},
          {"iterations", c.iterations},
          {"seed", c.seed},
          {"extent", c.extent},
          {"cascades", c.student.cascades},
          {"base_channels", c.student.base_channels},
          {"levels", c.student.levels},
          {"kernel", c.student.kernel},
          {"stride", c.student.stride},
          {"discriminator_extent", c.discriminator.extent},
          {"discriminator_channels", c.discriminator.channels},
          {"adversarial", c.adversarial},
          {"penalty_to_student", c.penalty_to_student}};
  j["critic_learning_rate"] = c.critic_learning_rate ? json(*c.critic_learning_rate) : json(nullptr);
  return j;
}

// Missing keys keep their defaults so hand-written config files can be partial.
TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.batch = j.value("batch", c.batch);
    c.n_gen = j.value("n_gen", c.n_gen);
    c.weights.gamma = j.value("gamma", c.weights.gamma);
    c.weights.beta = j.value("beta", c.weights.beta);
    c.weights.lambda = j.value("lambda", c.weights.lambda);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.iterations = j.value("iterations", c.iterations);
    c.seed = j.value("seed", c.seed);
    c.extent = j.value("extent", c.extent);
    c.student.cascades = j.value("cascades", c.student.cascades);
    c.student.base_channels = j.value("base_channels", c.student.base_channels);
    c.student.levels = j.value("levels", c.student.levels);
    c.student.kernel = j.value("kernel", c.student.kernel);
    c.student.stride = j.value("stride", c.student.stride);
    c.discriminator.extent = j.value("discriminator_extent", c.discriminator.extent);
    c.discriminator.channels = j.value("discriminator_channels", c.discriminator.channels);
    c.adversarial = j.value("adversarial", c.adversarial);
    c.penalty_to_student = j.value("penalty_to_student", c.penalty_to_student);
    if (j.contains("critic_learning_rate") && !j.at("critic_learning_rate").is_null())
      c.critic_learning_rate = j.at("critic_learning_rate").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  return c;
}

TrainState initial_state(const TrainConfig& config) {
  validate(config);
  TrainState s;
  s.config = config;
  s.student = init_student(config.student, child_seed(config.seed, kStudentStream));
  s.critic = init_discriminator(config.discriminator, child_seed(config.seed, kCriticStream));
  s.student_opt = AdamState::for_params(s.student);
  s.critic_opt = AdamState::for_params(s.critic);
  return s;
}

json to_json(const std::vector<LossRecord>& log) {
  json a = json::array();
  for (const auto& r : log)
    a.push_back({{"iteration", r.iteration},
                 {"rec", r.rec},
                 {"adv_rec", r.adv_rec},
                 {"dis", r.dis},
                 {"adv", r.adv},
                 {"critic", r.critic}});
  return a;
}

std::vector<LossRecord> loss_log_from_json(const json& j) {
  std::vector<LossRecord> log;
  for (const auto& r : j)
    log.push_back({r.at("iteration").get<std::int64_t>(), r.at("rec").get<double>(), r.at("adv_rec").get<double>(),
                   r.at("dis").get<double>(), r.at("adv").get<double>(), r.at("critic").get<double>()});
  return log;
}

Trainer::Trainer(TrainState state, const Dataset& dataset, const TeacherProvider& teacher)
    : state_(std::move(state)), dataset_(dataset) {
  validate(state_.config);
  if (dataset.size() == 0) throw ConfigError("training dataset is empty");
  if (teacher.size() != dataset.size())
    throw ConfigError("teacher provider has " + std::to_string(teacher.size()) + " fields for " +
                      std::to_string(dataset.size()) + " pairs");
  const std::int64_t e = state_.config.extent;
  const Shape expected{e, e, e};
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& p = dataset.pairs[i];
    if (p.moving.spatial() != expected)
      throw ShapeError("pair " + std::to_string(i) + " extents " + to_string(p.moving.spatial()) +
                       " do not match configured extent " + std::to_string(e));
    if (teacher.teacher(i).spatial() != expected)
      throw ShapeError("teacher field " + std::to_string(i) + " extents " + to_string(teacher.teacher(i).spatial()) +
                       " do not match the pair");
    moving_.push_back(Var::constant(p.moving.grid()));
    fixed_.push_back(Var::constant(p.fixed.grid()));
    teacher_.push_back(Var::constant(teacher.teacher(i).u()));
  }
}

const std::vector<std::size_t>& Trainer::epoch_order(std::uint64_t epoch) {
  if (epoch != cached_epoch_) {
    order_.resize(dataset_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    SplitMix64 rng(child_seed(child_seed(state_.config.seed, kShuffleStream), epoch));
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
    cached_epoch_ = epoch;
  }
  return order_;
}

std::vector<std::size_t> Trainer::next_batch() {
  std::vector<std::size_t> batch;
  const std::uint64_t n = dataset_.size();
  for (int i = 0; i < state_.config.batch; ++i) {
    const std::uint64_t k = state_.samples_drawn++;
    batch.push_back(epoch_order(k / n)[k % n]);
  }
  return batch;
}

LossRecord Trainer::step() {
  const TrainConfig& cfg = state_.config;
  const std::int64_t it = state_.iteration;
  LossRecord record;
  record.iteration = it;

  double rec_total = 0.0;
  for (int t = 0; t < cfg.n_gen; ++t) {
    std::vector<Var> losses;
    for (std::size_t i : next_batch()) {
      const auto out = cascade_forward(moving_[i], fixed_[i], state_.student, cfg.student);
      losses.push_back(rec_loss(out.warped, fixed_[i]));
    }
    const Var loss = batch_mean(losses);
    require_finite(loss, it, "reconstruction loss");
    state_.student.zero_grad();
    backward(loss, state_.student);
    adam_step(state_.student, state_.student_opt, cfg.learning_rate);
    rec_total += loss.item();
  }
  record.rec = rec_total / cfg.n_gen;

  const auto batch = next_batch();
  std::vector<Var> fields, recs, teachers;
  for (std::size_t i : batch) {
    const auto out = cascade_forward(moving_[i], fixed_[i], state_.student, cfg.student);
    fields.push_back(out.total);
    recs.push_back(rec_loss(out.warped, fixed_[i]));
    teachers.push_back(teacher_[i]);
  }
  const Var l_rec = batch_mean(recs);
  record.adv_rec = l_rec.item();
  const float beta = cfg.weights.beta, lambda = cfg.weights.lambda;

  Var l_adv;
  if (cfg.adversarial) {
    std::vector<Var> critic_terms;
    for (std::size_t b = 0; b < batch.size(); ++b)
      critic_terms.push_back(critic_loss(fields[b], teachers[b], state_.critic, cfg.discriminator, beta, lambda));
    const Var c_loss = batch_mean(critic_terms);
    require_finite(c_loss, it, "critic loss");
    state_.critic.zero_grad();
    backward(c_loss, state_.critic);
    adam_step(state_.critic, state_.critic_opt, cfg.critic_learning_rate.value_or(cfg.learning_rate));
    record.critic = c_loss.item();

    const ParameterCollection frozen = state_.critic.detached();
    std::vector<Var> dis_terms, feature_terms;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Var feature = feature_term(fields[b], teachers[b], frozen, cfg.discriminator);
      feature_terms.push_back(feature);
      if (cfg.penalty_to_student && lambda != 0.0f)
        feature = add(feature, scale(gradient_penalty(joint_deformation(teachers[b], fields[b], beta), frozen,
                                                      cfg.discriminator),
                                     lambda));
      dis_terms.push_back(feature);
    }
    record.dis = batch_mean(feature_terms).item();
    l_adv = adv_loss(l_rec, batch_mean(dis_terms), cfg.weights.gamma);
  } else {
    l_adv = l_rec;
  }
  require_finite(l_adv, it, "adversarial loss");
  record.adv = l_adv.item();
  state_.student.zero_grad();
  backward(l_adv, state_.student);
  adam_step(state_.student, state_.student_opt, cfg.learning_rate);

  ++state_.iteration;
  return record;
}

std::vector<LossRecord> Trainer::run_until(std::int64_t until, const std::function<void(const LossRecord&)>& on_step) {
  std::vector<LossRecord> log;
  while (state_.iteration < until) {
    log.push_back(step());
    if (on_step) on_step(log.back());
  }
  return log;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TeacherProvider& teacher,
                  const std::function<void(const LossRecord&)>& on_step) {
  Trainer trainer(initial_state(config), dataset, teacher);
  auto log = trainer.run_until(config.iterations, on_step);
  return {std::move(trainer.state()), std::move(log)};
}

}  // namespace aldk
