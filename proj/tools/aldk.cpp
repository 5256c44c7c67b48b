// aldk: command-line front end. Every subcommand prints a JSON document on
// stdout; exit 0 on success, 1 on invalid input, 2 on an internal failure.

#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "aldk/checkpoint.hpp"
#include "aldk/dataset.hpp"
#include "aldk/errors.hpp"
#include "aldk/evaluate.hpp"
#include "aldk/gradcheck_suite.hpp"
#include "aldk/training.hpp"
#include "aldk/vol_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw aldk::IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw aldk::IoError("failed writing '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw aldk::IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw aldk::FormatError(aldk::FormatError::Kind::Schema, path.string() + ": " + e.what());
  }
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

struct GenDataArgs {
  aldk::PhantomSpec phantom;
  aldk::FieldSpec field;
  std::size_t count = 64;
  std::uint64_t seed = 0;
  std::string out_dir;
};

void add_gen_data(CLI::App& app, GenDataArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("gen-data", "Generate synthetic phantom pairs with ground-truth fields");
  c->add_option("--extent", a.phantom.extent, "Volume extent (power of two, >= 16)")->capture_default_str();
  c->add_option("--blobs", a.phantom.blob_count, "Gaussian blobs per phantom")->capture_default_str();
  c->add_option("--organ-axis-min", a.phantom.organ_axis_min)->capture_default_str();
  c->add_option("--organ-axis-max", a.phantom.organ_axis_max)->capture_default_str();
  c->add_option("--amplitude", a.field.amplitude, "Max displacement a, voxels")->capture_default_str();
  c->add_option("--control-extent", a.field.control_extent)->capture_default_str();
  c->add_option("--max-derivative", a.field.max_derivative)->capture_default_str();
  c->add_option("--count", a.count, "Number of pairs")->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--out-dir", a.out_dir)->required();
  c->callback([&] {
    run = [&] {
      const auto m = aldk::write_dataset(a.phantom, a.field, a.count, a.seed, a.out_dir);
      emit({{"manifest", (fs::path(a.out_dir) / "manifest.json").string()},
            {"count", m.records.size()},
            {"seed", m.seed},
            {"phantom", aldk::to_json(m.phantom)},
            {"field", aldk::to_json(m.field)}});
    };
  });
}

struct TrainArgs {
  std::string config, manifest, teacher = "ground-truth", checkpoint_out, loss_log_out, resume;
  std::int64_t iterations = 0;
  int batch = 0, n_gen = 0, cascades = 0, base_channels = 0;
  double lr = 0, critic_lr = 0, gamma = 0, beta = 0, lambda = 0;
  std::uint64_t seed = 0;
  std::int64_t disc_extent = 0;
  std::vector<int> disc_channels;
  bool rec_only = false, penalty_to_student = false;
};

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("train", "Train a student (reconstruction-only or adversarial)");
  c->add_option("--config", a.config, "JSON training config; flags below override it")->check(CLI::ExistingFile);
  c->add_option("--manifest", a.manifest)->required()->check(CLI::ExistingFile);
  c->add_option("--teacher", a.teacher, "Teacher source")->check(CLI::IsMember({"ground-truth", "files"}))
      ->capture_default_str();
  c->add_option("--checkpoint-out", a.checkpoint_out)->required();
  c->add_option("--loss-log-out", a.loss_log_out);
  c->add_option("--resume", a.resume, "Continue from a checkpoint up to --iterations")->check(CLI::ExistingFile);
  auto* it = c->add_option("--iterations", a.iterations);
  auto* b = c->add_option("--batch", a.batch);
  auto* ng = c->add_option("--n-gen", a.n_gen);
  auto* casc = c->add_option("--cascades", a.cascades);
  auto* bc = c->add_option("--base-channels", a.base_channels);
  auto* lr = c->add_option("--lr", a.lr);
  auto* clr = c->add_option("--critic-lr", a.critic_lr, "Critic step size (default: --lr)");
  auto* g = c->add_option("--gamma", a.gamma);
  auto* be = c->add_option("--beta", a.beta);
  auto* la = c->add_option("--lambda", a.lambda);
  auto* sd = c->add_option("--seed", a.seed);
  auto* de = c->add_option("--disc-extent", a.disc_extent);
  auto* dc = c->add_option("--disc-channels", a.disc_channels)->delimiter(',');
  c->add_flag("--rec-only", a.rec_only, "Reconstruction-only baseline (no critic)");
  c->add_flag("--penalty-to-student", a.penalty_to_student);

  c->callback([=, &a, &run] {
    run = [=, &a] {
      const auto manifest = aldk::read_manifest(a.manifest);
      const auto data = aldk::load_dataset(manifest);
      const auto teacher =
          a.teacher == "files" ? aldk::teacher_from_files(manifest) : aldk::teacher_from_ground_truth(data);

      aldk::TrainState state;
      if (!a.resume.empty()) {
        state = aldk::load_checkpoint(a.resume);
        if (*it) state.config.iterations = a.iterations;
      } else {
        aldk::TrainConfig cfg = a.config.empty() ? aldk::TrainConfig{} : aldk::train_config_from_json(read_json(a.config));
        if (a.config.empty()) cfg.extent = data.spatial()[0];
        if (*it) cfg.iterations = a.iterations;
        if (*b) cfg.batch = a.batch;
        if (*ng) cfg.n_gen = a.n_gen;
        if (*casc) cfg.student.cascades = a.cascades;
        if (*bc) cfg.student.base_channels = a.base_channels;
        if (*lr) cfg.learning_rate = a.lr;
        if (*clr) cfg.critic_learning_rate = a.critic_lr;
        if (*g) cfg.weights.gamma = static_cast<float>(a.gamma);
        if (*be) cfg.weights.beta = static_cast<float>(a.beta);
        if (*la) cfg.weights.lambda = static_cast<float>(a.lambda);
        if (*sd) cfg.seed = a.seed;
        if (*de) cfg.discriminator.extent = a.disc_extent;
        if (*dc) cfg.discriminator.channels = a.disc_channels;
        if (a.rec_only) cfg.adversarial = false;
        if (a.penalty_to_student) cfg.penalty_to_student = true;
        state = aldk::initial_state(cfg);
      }
      const std::int64_t until = state.config.iterations;
      if (state.iteration > until)
        throw aldk::ConfigError("checkpoint is at iteration " + std::to_string(state.iteration) +
                                ", past --iterations " + std::to_string(until));

      aldk::Trainer trainer(std::move(state), data, *teacher);
      const auto t0 = std::chrono::steady_clock::now();
      const auto log = trainer.run_until(until, [](const aldk::LossRecord& r) {
        if (r.iteration % 50 == 0)
          std::cerr << "iter " << r.iteration << " rec " << r.rec << " dis " << r.dis << " critic " << r.critic << '\n';
      });
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      aldk::save_checkpoint(a.checkpoint_out, trainer.state());
      const json log_doc = {{"schema", 1}, {"config", aldk::to_json(trainer.state().config)}, {"log", aldk::to_json(log)}};
      if (!a.loss_log_out.empty()) write_json(a.loss_log_out, log_doc);
      emit({{"checkpoint", a.checkpoint_out},
            {"iteration", trainer.state().iteration},
            {"iterations_run", log.size()},
            {"seconds", seconds},
            {"final", log.empty() ? json(nullptr) : aldk::to_json(std::vector{log.back()})[0]}});
    };
  });
}

struct RegisterArgs {
  std::string checkpoint, moving, fixed, field_out, warped_out;
};

void add_register(CLI::App& app, RegisterArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("register", "Register one moving/fixed pair with a trained student");
  c->add_option("--checkpoint", a.checkpoint)->required()->check(CLI::ExistingFile);
  c->add_option("--moving", a.moving)->required()->check(CLI::ExistingFile);
  c->add_option("--fixed", a.fixed)->required()->check(CLI::ExistingFile);
  c->add_option("--field-out", a.field_out)->required();
  c->add_option("--warped-out", a.warped_out);
  c->callback([&] {
    run = [&] {
      const auto state = aldk::load_checkpoint(a.checkpoint);
      const auto moving = aldk::read_volume(a.moving);
      const auto fixed = aldk::read_volume(a.fixed);
      if (moving.spatial() != fixed.spatial())
        throw aldk::ShapeError("moving " + aldk::to_string(moving.spatial()) + " and fixed " +
                               aldk::to_string(fixed.spatial()) + " extents differ");
      const auto r = aldk::register_pair(moving, fixed, state.student, state.config.student);
      aldk::write_vol(a.field_out, r.field);
      if (!a.warped_out.empty()) aldk::write_vol(a.warped_out, r.warped);
      emit({{"field", a.field_out}, {"folding_count", aldk::folding_count(r.field)}});
    };
  });
}

struct EvaluateArgs {
  std::string checkpoint, manifest, report_out;
  std::size_t count = 0;
  int repetitions = 5;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("evaluate", "Dice/Jacc/folding/latency report over a manifest");
  c->add_option("--checkpoint", a.checkpoint)->required()->check(CLI::ExistingFile);
  c->add_option("--manifest", a.manifest)->required()->check(CLI::ExistingFile);
  c->add_option("--report-out", a.report_out);
  c->add_option("--count", a.count, "Evaluate only the first n pairs (0 = all)");
  c->add_option("--repetitions", a.repetitions, "Timed registrations per pair")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->callback([&] {
    run = [&] {
      const auto state = aldk::load_checkpoint(a.checkpoint);
      auto manifest = aldk::read_manifest(a.manifest);
      if (a.count > 0 && a.count < manifest.records.size()) manifest.records.resize(a.count);
      const auto data = aldk::load_dataset(manifest);
      if (data.spatial()[0] != state.config.extent)
        throw aldk::ShapeError("checkpoint was trained at extent " + std::to_string(state.config.extent) +
                               ", manifest has " + aldk::to_string(data.spatial()));
      auto report = aldk::evaluate(state.student, state.config.student, data, {.warmup = 1, .repetitions = a.repetitions});
      report.config["train"] = aldk::to_json(state.config);
      const json j = aldk::to_json(report);
      if (!a.report_out.empty()) write_json(a.report_out, j);
      emit(j);
    };
  });
}

void add_gradcheck(CLI::App& app, int& seeds, std::function<void()>& run, int& status) {
  auto* c = app.add_subcommand("gradcheck", "Finite-difference checks of every differentiable op");
  c->add_option("--seeds", seeds)->check(CLI::PositiveNumber)->capture_default_str();
  c->callback([&] {
    run = [&] {
      const auto t0 = std::chrono::steady_clock::now();
      const auto results = aldk::run_gradcheck_suite(seeds);
      json cases = json::array();
      bool ok = true;
      for (const auto& r : results) {
        ok = ok && r.report.passed;
        cases.push_back({{"name", r.name}, {"seed", r.seed}, {"max_rel_error", r.report.max_rel_error},
                         {"passed", r.report.passed}});
      }
      emit({{"passed", ok},
            {"cases", cases},
            {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}});
      status = ok ? 0 : 1;
    };
  });
}

struct BenchArgs {
  aldk::StudentConfig student;
  std::int64_t extent = 32;
  int repetitions = 5;
  std::uint64_t seed = 0;
};

void add_bench(CLI::App& app, BenchArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("bench", "Parameter count and median registration latency");
  c->add_option("--cascades", a.student.cascades)->capture_default_str();
  c->add_option("--base-channels", a.student.base_channels)->capture_default_str();
  c->add_option("--extent", a.extent)->capture_default_str();
  c->add_option("--repetitions", a.repetitions)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->callback([&] {
    run = [&] {
      aldk::validate(a.student);
      if (!aldk::valid_registration_extents({a.extent, a.extent, a.extent}))
        throw aldk::ConfigError("--extent must be a power of two >= 16");
      emit(aldk::to_json(aldk::bench(a.student, a.extent, a.repetitions, a.seed)));
    };
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light-weight deformable registration with adversarial distillation"};
  app.require_subcommand(1);
  std::function<void()> run;
  int status = 0;

  GenDataArgs gen;
  TrainArgs train;
  RegisterArgs reg;
  EvaluateArgs eval;
  int seeds = 5;
  BenchArgs bench;
  add_gen_data(app, gen, run);
  add_train(app, train, run);
  add_register(app, reg, run);
  add_evaluate(app, eval, run);
  add_gradcheck(app, seeds, run, status);
  add_bench(app, bench, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    run();
    return status;
  } catch (const aldk::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
