#include <cstdio>
#include <exception>
#include <string>

#include <unistd.h>

#include "CLI11.hpp"
#include "bridgekd/config.hpp"
#include "bridgekd/eval.hpp"
#include "bridgekd/pipeline.hpp"

namespace {

// Exact path of this binary, so grid can re-invoke it for cell processes.
std::string self_path(const char* argv0) {
  char buf[4096];
  ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n > 0) {
    buf[n] = '\0';
    return buf;
  }
  return argv0;
}

struct Options {
  std::string config_path;
  std::string seed;
  std::string mode;
  std::string teacher;
  int resolution = 0;
  int jobs = 1;
  bool ablation = false;
};

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config_path, "config file with 'section.key = value' lines");
  sub->add_option("--seed", opt.seed, "override run.seed");
  sub->add_option("--mode", opt.mode, "override distill.mode (c, s, dc, sc)");
  sub->add_option("--teacher", opt.teacher, "override distill.teacher (O, V, C, E)");
  sub->add_option("--resolution", opt.resolution, "override distill.resolution");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Low-resolution face recognition via two-stage distillation: dataset synthesis, teacher "
      "and adapter training, student distillation, evaluation and cost measurement."};
  app.require_subcommand(1);
  app.footer("configuration keys (defaults shown):\n" + bridgekd::config_help());

  Options opt;
  CLI::App* gen = app.add_subcommand("gen-data", "synthesize the dataset");
  CLI::App* teach = app.add_subcommand("train-teacher", "train the teacher trunks");
  CLI::App* adapt =
      app.add_subcommand("adapt", "fine-tune the public head and train the adapter");
  CLI::App* distill = app.add_subcommand("distill", "train the low-resolution student");
  CLI::App* eval = app.add_subcommand("eval", "verification and identification of the student");
  CLI::App* bench = app.add_subcommand("bench", "analytic cost and measured throughput");
  CLI::App* grid = app.add_subcommand("grid", "sweep resolutions, modes, teachers and seeds");
  for (CLI::App* sub : {gen, teach, adapt, distill, eval, bench, grid}) add_common(sub, opt);
  adapt->add_flag("--ablation", opt.ablation, "run the four-case compression study instead");
  grid->add_option("--jobs", opt.jobs, "cell processes to run in parallel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    bridgekd::RunConfig config;
    if (!opt.config_path.empty()) config = bridgekd::load_config_file(opt.config_path);
    if (!opt.seed.empty()) bridgekd::apply_override(config, "run.seed", opt.seed);
    if (!opt.mode.empty()) bridgekd::apply_override(config, "distill.mode", opt.mode);
    if (!opt.teacher.empty()) bridgekd::apply_override(config, "distill.teacher", opt.teacher);
    if (opt.resolution > 0) {
      bridgekd::apply_override(config, "distill.resolution", std::to_string(opt.resolution));
    }

    if (gen->parsed()) {
      bridgekd::DatasetIndex index = bridgekd::cmd_gen_data(config);
      std::printf("gen-data: %s (%zu entries)\n", config.dataset_dir.c_str(),
                  index.entries().size());
    } else if (teach->parsed()) {
      bridgekd::cmd_train_teacher(config);
      std::printf("train-teacher: checkpoints in %s\n", config.out_dir.c_str());
    } else if (adapt->parsed()) {
      if (opt.ablation) {
        bridgekd::AblationReport report = bridgekd::cmd_ablation(config);
        std::fputs(report.to_text().c_str(), stdout);
      } else {
        bridgekd::cmd_adapt(config);
        std::printf("adapt: teacher %s adapted in %s\n", config.distill_teacher.c_str(),
                    config.out_dir.c_str());
      }
    } else if (distill->parsed()) {
      bridgekd::cmd_distill(config);
      std::printf("distill: student checkpoint in %s\n", config.out_dir.c_str());
    } else if (eval->parsed()) {
      bridgekd::ResultRow row = bridgekd::cmd_eval(config);
      std::printf("%s\n", bridgekd::result_line(row).c_str());
    } else if (bench->parsed()) {
      bridgekd::BenchReport report = bridgekd::cmd_bench(config);
      std::fputs(report.to_text().c_str(), stdout);
    } else if (grid->parsed()) {
      bridgekd::GridOutcome outcome = bridgekd::cmd_grid(config, self_path(argv[0]), opt.jobs);
      std::printf("grid: %zu cells, %zu failed\n", outcome.cells.size(), outcome.failed.size());
      if (!outcome.failed.empty()) {
        for (const auto& name : outcome.failed) {
          std::fprintf(stderr, "bridgekd: cell %s failed, see logs\n", name.c_str());
        }
        return 1;
      }
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bridgekd: %s\n", e.what());
    return 1;
  }
}
