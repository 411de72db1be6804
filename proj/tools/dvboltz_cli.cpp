#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "dvboltz/dvboltz.h"

namespace {

int run(const std::string& sub, const std::string& config_path, const std::string& out, int threads, bool quiet) {
  std::string text;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error: cannot read config " << config_path << "\n";
      return 2;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  const auto t0 = std::chrono::steady_clock::now();
  char* summary = nullptr;
  int passed = 0;
  dvb_status st = dvb_run_experiment(sub.c_str(), text.empty() ? nullptr : text.c_str(),
                                     out.empty() ? nullptr : out.c_str(), threads, &summary, &passed);
  if (st != DVB_OK) {
    std::cerr << "error: " << dvb_last_error_message() << "\n";
    return st == DVB_ERR_INADMISSIBLE_FORCE ? 3 : 2;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!quiet && summary) std::cout << summary << "\n";
  dvb_string_free(summary);
  std::fprintf(stderr, "%s: %s (%.1f s)\n", sub.c_str(), passed ? "all criteria hold" : "some criteria fail", secs);
  return passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dvboltz: discrete-velocity Boltzmann simulator"};
  app.set_version_flag("--version", std::string(dvb_version()));
  app.require_subcommand(1);
  std::string config, out;
  int threads = 0;
  bool quiet = false;
  const char* subs[][2] = {{"sweep", "eps-sweep toward the linearized limit"},
                           {"conservation", "conservation laws, entropy inequality and dissipation equality"},
                           {"operators", "collision operator checks"},
                           {"validate-force", "admissibility of the configured force"}};
  for (auto& s : subs) {
    auto* c = app.add_subcommand(s[0], s[1]);
    c->add_option("--config", config, "JSON run configuration (defaults when omitted)")->check(CLI::ExistingFile);
    c->add_option("--out", out, "output directory (overrides output_dir)");
    c->add_option("--threads", threads, "worker threads (overrides threads)")->check(CLI::PositiveNumber);
    c->add_flag("-q,--quiet", quiet, "do not print the summary");
  }
  CLI11_PARSE(app, argc, argv);
  return run(app.get_subcommands().front()->get_name(), config, out, threads, quiet);
}
