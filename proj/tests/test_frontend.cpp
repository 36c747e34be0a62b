#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pis/cli.hpp"

using namespace pis;

namespace {

const std::string source_dir = PIS_SOURCE_DIR;
const std::string cli_path = PIS_CLI_PATH;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  static int counter = 0;
  auto tmp = std::filesystem::temp_directory_path() / ("pis_frontend_" + std::to_string(::getpid()) + "_" +
                                                       std::to_string(counter++) + ".out");
  std::string cmd = "'" + cli_path + "' " + args + " > '" + tmp.string() + "' 2>&1";
  int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(tmp.string());
  std::filesystem::remove(tmp);
  return r;
}

std::string config(const std::string& name) { return "--config '" + source_dir + "/configs/" + name + "'"; }

std::string write_temp(const std::string& name, const std::string& text) {
  auto path = std::filesystem::temp_directory_path() / ("pis_frontend_" + std::to_string(::getpid()) + "_" + name);
  std::ofstream(path) << text;
  return path.string();
}

}  // namespace

TEST(Registry, KnownNamesBuildAndUnknownAreRejected) {
  for (const auto& name : registry_names()) EXPECT_EQ(registry(name, {}).name, name);
  EXPECT_THROW(registry("pendulum", {}), ConstructionError);
  EXPECT_THROW(registry("canonical", {{"genus", {1}}}), ConstructionError);
  EXPECT_THROW(registry("canonical", {{"k", {1.5}}}), ConstructionError);
  EXPECT_THROW(registry("canonical", {{"k", {2}}, {"dim", {3}}}), ConstructionError);
  EXPECT_THROW(registry("oscillator_chain", {{"n", {2}}, {"omega", {1, -1}}}), ConstructionError);
}

TEST(Registry, UntwistedSystemReducesToOscillators) {
  auto tw = twisted({1.0, 2.0}, 0.0);
  auto osc = oscillator_chain(2, 2, {1.0, 2.0});
  for (const auto& p : sample(osc.domain, 20, 31)) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
    x.head(4) = p.coords();
    x[5] = 0.3;
    for (std::size_t j = 0; j < 2; ++j) {
      Eigen::VectorXd a = tw.algebra.generators[j + 1](x), b = osc.algebra.generators[j](p);
      EXPECT_LT((a.head(4) - b).cwiseAbs().maxCoeff(), 1e-14);
      EXPECT_EQ(a.tail(2).cwiseAbs().maxCoeff(), 0.0);
    }
    Eigen::VectorXd translation = tw.algebra.generators[0](x);
    EXPECT_EQ(translation, (Eigen::VectorXd(6) << 0, 0, 0, 0, 1, 0).finished());
  }
}

TEST(Config, DefaultsComeFromThePublishedSchema) {
  json published = json::parse(slurp(source_dir + "/docs/config.schema.json"));
  EXPECT_EQ(published, config_schema());
  json d = default_config();
  EXPECT_EQ(d["kam_sweep"]["horizon"], 1000.0);
  EXPECT_EQ(d["measure"]["samples"], 10000);
  EXPECT_EQ(d["seed"], 7);
  EXPECT_FALSE(d.contains("system"));
}

TEST(Config, SchemaViolationsAreRejected) {
  json ok = {{"system", {{"registry", "canonical"}}}};
  EXPECT_NO_THROW(effective_config(ok));
  EXPECT_THROW(effective_config(json::object()), ConfigError);
  EXPECT_THROW(effective_config(json::array()), ConfigError);
  auto with = [&](const json& patch) {
    json c = ok;
    c.merge_patch(patch);
    return c;
  };
  EXPECT_THROW(effective_config(with({{"seed", -1}})), ConfigError);
  EXPECT_THROW(effective_config(with({{"tolerance", 0}})), ConfigError);
  EXPECT_THROW(effective_config(with({{"kam_sweep", {{"horizon", "long"}}}})), ConfigError);
  EXPECT_THROW(effective_config(with({{"kam_sweep", {{"horizn", 10}}}})), ConfigError);
  EXPECT_THROW(effective_config(with({{"measure", {{"sampling", "sobol"}}}})), ConfigError);
  EXPECT_THROW(effective_config(with({{"measure", {{"box", {{1, 2, 3}}}}}})), ConfigError);
  EXPECT_THROW(effective_config(with({{"colour", 1}})), ConfigError);
}

TEST(Config, SystemsFromRegistryAndCustomDescriptions) {
  auto s = build_system({{"registry", "oscillator_chain"}, {"params", {{"n", 3}, {"k", 2}, {"omega", {1, 2, 3}}}}});
  EXPECT_EQ(s.domain.dim(), 6u);
  EXPECT_EQ(s.algebra.k(), 2u);
  EXPECT_THROW(build_system({{"registry", "canonical"}, {"params", {{"k", "two"}}}}), ConfigError);
  EXPECT_THROW(build_system({{"registry", "canonical"}, {"perturbation", "cos(phi1)"}}), ConfigError);
  EXPECT_THROW(build_system(json::object()), ConfigError);

  json custom = json::parse(slurp(source_dir + "/configs/validate_base_block.json"))["system"];
  auto c = build_system(custom);
  EXPECT_EQ(c.domain.coordinate_names(), (std::vector<std::string>{"J", "z", "phi"}));
  EXPECT_DOUBLE_EQ(c.default_point[0], 1.25);
  custom["custom"]["poisson"].push_back({"J", "bogus", "1"});
  EXPECT_THROW(build_system(custom), Error);
}

TEST(Config, HashTracksContent) {
  json a = effective_config({{"system", {{"registry", "canonical"}}}});
  json b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["seed"] = 8;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).rfind("fnv1a64:", 0), 0u);
}

TEST(Cli, ValidateCanonicalPasses) {
  auto r = run("validate " + config("validate_canonical.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  json j = json::parse(r.out);
  EXPECT_EQ(j["pis"], true);
  EXPECT_EQ(j["provenance"]["tool"], "pis");
  EXPECT_EQ(j["provenance"]["seed"], 7);
  EXPECT_TRUE(j["provenance"]["config"].contains("integrator"));
}

TEST(Cli, BaseBlockConfigFailsWithNamedConstraint) {
  auto r = run("validate " + config("validate_base_block.json"));
  EXPECT_EQ(r.code, 1) << r.out;
  json j = json::parse(r.out);
  EXPECT_EQ(j["passed"], false);
  ASSERT_FALSE(j["block_form"]["violations"].empty());
  EXPECT_NE(j["block_form"]["violations"][0].get<std::string>().find("base-base block W^{AB}"), std::string::npos);
}

TEST(Cli, ConditionBFailureIsAVerdict) {
  auto r = run("validate " + config("validate_oscillator_chain.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.out)["condition_b"]["ok"], false);
}

TEST(Cli, UnperturbedSweepSurvivesEverywhere) {
  auto r = run("kam-sweep " + config("kam_sweep_unperturbed.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(r.out);
  std::string line, header;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) {
      header = line;
      EXPECT_EQ(header.rfind("cell_index,", 0), 0u);
      continue;
    }
    ++rows;
    EXPECT_NE(line.find(",true,false"), std::string::npos) << line;  // survived, failed
  }
  EXPECT_EQ(rows, 16u);
  EXPECT_NE(r.out.find("# survival_fraction eps=0:1"), std::string::npos);
}

TEST(Cli, UsageAndConfigErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("validate").code, 2);
  EXPECT_EQ(run("frobnicate --config x").code, 2);
  EXPECT_EQ(run("validate --config /nonexistent.json").code, 2);
  EXPECT_EQ(run("validate --config '" + write_temp("broken.json", "{\"system\": ") + "'").code, 2);
  EXPECT_EQ(run("validate --config '" + write_temp("nosystem.json", "{}") + "'").code, 2);
  auto bad_expr = write_temp("badexpr.json", R"j({"system": {"custom": {"domain": {"dim_base": 1, "k": 1, "m": 1,
      "bounds": [[0.5, 2]], "names": ["J", "phi"]}, "poisson": [["J", "phi", "sin(bogus)"]], "hamiltonians": ["J"]}}})j");
  auto r = run("validate --config '" + bad_expr + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("bogus"), std::string::npos);
  EXPECT_EQ(run("validate " + config("validate_canonical.json") + " --tol -1").code, 2);
}

TEST(Cli, VersionDefaultsAndSchema) {
  auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(tool_version), std::string::npos);
  auto d = run("defaults");
  EXPECT_EQ(d.code, 0);
  EXPECT_EQ(json::parse(d.out), default_config());
  auto s = run("schema");
  EXPECT_EQ(s.code, 0);
  EXPECT_EQ(json::parse(s.out), config_schema());
}

TEST(Cli, SeedOverrideAndOutputFile) {
  auto out = std::filesystem::temp_directory_path() / ("pis_frontend_" + std::to_string(::getpid()) + "_seed.json");
  auto r = run("validate " + config("validate_canonical.json") + " --seed 11 --out '" + out.string() + "'");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  json j = json::parse(slurp(out.string()));
  EXPECT_EQ(j["provenance"]["seed"], 11);
  std::filesystem::remove(out);
}

TEST(Cli, RecursionReportsTorsionDichotomy) {
  auto bent = json::parse(run("recursion " + config("recursion_block_poisson.json")).out);
  auto flat = json::parse(run("recursion " + config("recursion_block_poisson_flat.json")).out);
  EXPECT_GT(bent["torsion"]["max"].get<double>(), 1e-3);
  EXPECT_EQ(bent["torsion"]["vanishes"], false);
  EXPECT_LT(flat["torsion"]["max"].get<double>(), 1e-9);
  EXPECT_EQ(flat["torsion"]["vanishes"], true);
}

TEST(Cli, MeasureCsvHasProvenanceAndRows) {
  auto r = run("measure " + config("measure_unit_square.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("# tool=pis version=", 0), 0u);
  EXPECT_NE(r.out.find("\ngamma,fraction\n"), std::string::npos);
  EXPECT_NE(r.out.find("# config_hash=fnv1a64:"), std::string::npos);
}
