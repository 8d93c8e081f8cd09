// glab: command-line driver for the genericity probes.
//
//   glab validate --config run.json      check the config, write nothing
//   glab synth    --config run.json      dataset or corpus
//   glab train    --config run.json      model, from persisted synth output
//   glab score    --config run.json      samples + measurements, from the persisted model
//   glab report   --config run.json      report, from persisted artifacts
//   glab probe    --config run.json      all stages
//
// Artifacts go to <output_dir>/<config hash>/.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "glab/config.hpp"
#include "glab/probes.hpp"

namespace fs = std::filesystem;
using namespace glab;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string output;
  int jobs = 1;
  bool verbose = false;
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument: return 2;
    case ErrorKind::io: return 3;
    case ErrorKind::numeric: return 4;
    case ErrorKind::capacity: return 5;
  }
  return 1;
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

/// Wall-clock bookkeeping; kept out of report.json so reports stay byte-stable.
class Runtime {
 public:
  explicit Runtime(std::string command) : command_(std::move(command)), start_(std::chrono::system_clock::now()) {
    mark_ = std::chrono::steady_clock::now();
  }

  void stage(const std::string& name) {
    close_stage();
    current_ = name;
  }

  void write(const fs::path& run_dir, int jobs) {
    close_stage();
    const auto end = std::chrono::system_clock::now();
    json j = {{"command", command_},
              {"jobs", jobs},
              {"started", utc_timestamp(start_)},
              {"finished", utc_timestamp(end)},
              {"duration_seconds", std::chrono::duration<double>(end - start_).count()},
              {"stages", stages_}};
    probes::detail::write_text(run_dir / "runtime.json", j.dump(2) + "\n");
  }

 private:
  void close_stage() {
    const auto now = std::chrono::steady_clock::now();
    if (!current_.empty()) stages_[current_] = std::chrono::duration<double>(now - mark_).count();
    mark_ = now;
    current_.clear();
  }

  std::string command_;
  std::chrono::system_clock::time_point start_;
  std::chrono::steady_clock::time_point mark_;
  std::string current_;
  json stages_ = json::object();
};

void print_summary(const probes::GenericityReport& r) {
  const json j = probes::to_json(r);
  if (j.contains("histograms")) {
    std::cout << "train histogram:     " << j["histograms"]["train"]["bins"].dump() << "\n";
    std::cout << "generated histogram: " << j["histograms"]["generated"]["bins"].dump() << "\n";
    std::cout << "KL(train||gen) = " << r.divergences->kl_train_generated
              << "  TV = " << r.divergences->total_variation << "\n";
  }
  for (const auto& c : r.completions) {
    std::cout << std::left << std::setw(28) << c.idiom << " -> " << std::setw(10) << c.target
              << " completion_prob = " << std::fixed << std::setprecision(4) << c.completion_prob
              << "  greedy = " << c.greedy_completion << "\n";
    std::cout.unsetf(std::ios::floatfield);
  }
  if (r.kind == probes::ProbeKind::inpainting) {
    const auto& s = r.scores.front();
    std::cout << "fill rate = " << s.score << "  95% CI [" << s.interval.lo << ", " << s.interval.hi << "]\n";
  }
  if (r.correlation) {
    if (r.correlation->rho) {
      std::cout << "spearman rho = " << *r.correlation->rho << "\n";
    } else {
      std::cout << "spearman rho: tie-degenerate\n";
    }
  }
}

int run(const std::string& command, const Options& opt) {
  RunConfig cfg = load_config(opt.config);
  if (!opt.output.empty()) cfg.output_dir = opt.output;
  if (opt.jobs < 1) throw_config("--jobs must be >= 1");
  const auto& pc = cfg.probe;

  if (command == "validate") {
    std::cout << to_json(cfg).dump(2) << "\n";
    std::cout << "config ok; run directory would be " << cfg.run_dir().string() << "\n";
    return 0;
  }

  const fs::path dir = cfg.run_dir();
  Runtime runtime(command);
  probes::RunOptions ro;
  ro.jobs = opt.jobs;
  ro.run_dir = dir;
  ro.on_stage = [&](const std::string& name) {
    runtime.stage(name);
    if (opt.verbose) std::cerr << "[glab] stage " << name << "\n";
  };
  if (opt.verbose) {
    ro.on_epoch = [](int epoch, double loss) {
      if (epoch % 10 == 0) std::cerr << "[glab]   epoch " << epoch << " loss " << loss << "\n";
    };
  }

  if (command == "probe") {
    const auto report = probes::run_probe(pc, ro);
    runtime.write(dir, opt.jobs);
    print_summary(report);
    std::cout << "report: " << (dir / "report.json").string() << "\n";
    return 0;
  }

  pc.validate();
  probes::save_config(dir, pc);
  if (command == "synth") {
    probes::run_stage("synth", ro, [&] {
      probes::save_synth(dir, pc, probes::synthesize(pc));
      return 0;
    });
  } else if (command == "train") {
    const auto synth = probes::run_stage("train", ro, [&] { return probes::load_synth(dir, pc); });
    probes::run_stage("train", ro, [&] {
      probes::save_model(dir, probes::train_models(pc, synth, ro.on_epoch));
      return 0;
    });
  } else if (command == "score") {
    probes::run_stage("generate", ro, [&] {
      const auto model = probes::load_model(dir, pc);
      const auto g = probes::generate(pc, model, opt.jobs);
      probes::save_generations(dir, pc, g, probes::measure(pc, g.images));
      return 0;
    });
    if (!pc.uses_images()) std::cout << "text probes have nothing to sample; scores are computed by 'report'\n";
  } else if (command == "report") {
    const auto report = probes::run_stage("report", ro, [&] {
      const auto synth = probes::load_synth(dir, pc);
      const auto model = probes::load_model(dir, pc);
      const auto measured = probes::load_measurements(dir, pc);
      auto r = probes::build_report(pc, synth, model, measured);
      probes::save_report(dir, r);
      return r;
    });
    print_summary(report);
  }
  runtime.write(dir, opt.jobs);
  std::cout << "run directory: " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glab: genericity probes on synthetic circle scenes and idiom corpora"};
  app.require_subcommand(1, 1);
  Options opt;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "generate the training dataset or corpus"},
      {"train", "train the model on persisted synth output"},
      {"score", "sample or inpaint from the persisted model and measure"},
      {"report", "build report.json and CSV tables from persisted artifacts"},
      {"probe", "run every stage"},
      {"validate", "check a config without writing anything"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "run config (JSON)")->required();
    sub->add_option("--output", opt.output, "override output_dir");
    sub->add_option("--jobs", opt.jobs, "worker threads within a stage")->default_val(1);
    sub->add_flag("--verbose", opt.verbose, "progress on stderr");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, opt);
  } catch (const Error& e) {
    std::cerr << "glab " << command << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    std::cerr << "glab " << command << ": capacity-error: out of memory\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "glab " << command << ": internal error: " << e.what() << "\n";
    return 1;
  }
}
