// Runs the experiment suites on the shipped configs and prints one PASS/FAIL line per criterion.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>

#include "error.hpp"
#include "experiment_harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Runner {
  fs::path out;
  std::map<std::string, json> cache;

  const json& run(const std::string& sub, const std::string& config, const std::string& tag = "") {
    const std::string key = sub + ":" + config + ":" + tag;
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    const fs::path dir = out / (config + (tag.empty() ? "" : "_" + tag));
    std::fprintf(stderr, "running %s on %s.json\n", sub.c_str(), config.c_str());
    json j;
    try {
      const auto cfg = dvb::load_config(fs::path(DVB_CONFIG_DIR) / (config + ".json"));
      j = json::parse(dvb::run_subcommand(sub, cfg, dir).summary_json);
      j["__dir"] = dir.string();
    } catch (const std::exception& e) {
      j = {{"__error", e.what()}};
    }
    return cache.emplace(key, j).first->second;
  }
};

bool criterion(const json& s, const char* name) {
  return s.contains("criteria") && s["criteria"].contains(name) && s["criteria"][name].get<bool>();
}

std::string num(const json& s, const char* key) {
  if (!s.contains(key) || s[key].is_null()) return "n/a";
  std::ostringstream os;
  os.precision(3);
  os << s[key].get<double>();
  return os.str();
}

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string error_of(const json& s) { return s.contains("__error") ? s["__error"].get<std::string>() : ""; }

}  // namespace

int main(int argc, char** argv) {
  Runner r{argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out"), {}};
  fs::create_directories(r.out);

  {
    const json& s = r.run("operators", "operators");
    std::string d = error_of(s);
    if (d.empty()) {
      std::ostringstream os;
      os.precision(3);
      os << "|v|^2 residual " << s["null_space"]["|v|^2"].get<double>();
      if (s.contains("null_space_refined")) os << " -> " << s["null_space_refined"]["|v|^2"].get<double>();
      os << ", self-adjoint " << s["self_adjoint_gap_relative"].get<double>() << ", classical identity "
         << s["classical_identity_gap_relative"].get<double>() << ", dense oracle "
         << s["dense_oracle_gap_relative"].get<double>();
      d = os.str();
    }
    report("operator_suite", s.value("passed", false), d);
  }
  {
    const json& v = r.run("validate-force", "default");
    const json& c = r.run("conservation", "conservation_magnetic");
    const bool ok = v.value("admissible", false) && criterion(c, "equilibrium");
    std::string d = error_of(v) + error_of(c);
    if (d.empty())
      d = "validators " + std::string(v["message"].get<std::string>()) + ", G=1 L1 drift " +
          num(c, "equilibrium_l1_drift");
    report("equilibrium_and_admissibility", ok, d);
  }
  {
    const json& c = r.run("conservation", "conservation_magnetic");
    std::string d = error_of(c);
    if (d.empty())
      d = "mass drift " + num(c, "mass_drift_per_time") + ", energy drift " + num(c, "energy_drift_per_time") +
          ", momentum law " + num(c, "momentum_law_max");
    report("conservation", criterion(c, "conservation"), d);
  }
  {
    const json& c = r.run("conservation", "entropy_magnetic");
    std::string d = error_of(c);
    if (d.empty())
      d = "slack/H_in " + num(c, "entropy_slack_relative") + ", ratio at dt/2 " + num(c, "entropy_slack_ratio");
    report("entropy_inequality", criterion(c, "entropy_inequality"), d);
  }
  {
    const json& c = r.run("conservation", "conservation_magnetic");
    std::string d = error_of(c);
    if (d.empty())
      d = "relative residual " + num(c, "dissipation_residual_relative") + ", ratio at dt/2 " +
          num(c, "dissipation_residual_ratio");
    report("dissipation_equality", criterion(c, "dissipation_equality"), d);
  }
  {
    const json& s = r.run("sweep", "default");
    std::string d = error_of(s);
    if (d.empty()) {
      std::ostringstream os;
      os.precision(3);
      for (const auto& e : s["snapshots"]) {
        auto slope = [&](const char* k) { return e[k].is_null() ? std::string("n/a") : std::to_string(e[k].get<double>()).substr(0, 5); };
        os << "t=" << e["t"].get<double>() << " slopes " << slope("slope_entropic_metric") << "/"
           << slope("slope_l1_gap") << (e["passed"].get<bool>() ? "" : " (fails)") << "; ";
      }
      d = os.str();
    }
    report("strong_linearized_limit", criterion(s, "strong_linearized_limit"), d);
    std::string d2 = error_of(s);
    if (d2.empty()) d2 = "t=0 metric " + s["initial"]["entropic_metric"].dump();
    report("initial_data_clipping", criterion(s, "initial_data_clipping"), d2);
  }
  {
    const json& a = r.run("sweep", "determinism_mini", "a");
    const json& b = r.run("sweep", "determinism_mini", "b");
    bool ok = false;
    std::string d = error_of(a) + error_of(b);
    if (d.empty()) {
      const std::string ca = slurp(fs::path(a["__dir"].get<std::string>()) / "sweep.csv");
      const std::string cb = slurp(fs::path(b["__dir"].get<std::string>()) / "sweep.csv");
      ok = !ca.empty() && ca == cb;
      d = "sweep.csv fnv1a " + a["sweep_csv_fnv1a"].get<std::string>() + " vs " +
          b["sweep_csv_fnv1a"].get<std::string>();
    }
    report("determinism", ok, d);
  }
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
