// End-to-end tests for the command-line tool: subcommand wiring, output
// formats, the exit-code contract, and byte-level reproducibility.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <multicause/multicause.hpp>

#include <nlohmann/json.hpp>

namespace mc = multicause;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& stem) {
  static int counter = 0;
  return "/tmp/multicause_cli_" + stem + "_" + std::to_string(::getpid()) + "_" +
         std::to_string(counter++);
}

CliResult run_cli(const std::string& args) {
  const std::string out_path = temp_path("stdout");
  const std::string err_path = temp_path("stderr");
  const std::string cmd =
      std::string(MULTICAUSE_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return result;
}

nlohmann::json parse_json(const std::string& text) {
  return nlohmann::json::parse(text);
}

}  // namespace

TEST_CASE("simulate writes a loadable CSV and is deterministic") {
  const std::string path_a = temp_path("sim_a") + ".csv";
  const std::string path_b = temp_path("sim_b") + ".csv";
  REQUIRE(run_cli("simulate --scenario fig1 --n 500 --seed 21 --out " + path_a).exit_code == 0);
  REQUIRE(run_cli("simulate --scenario fig1 --n 500 --seed 21 --out " + path_b).exit_code == 0);
  CHECK(slurp(path_a) == slurp(path_b));

  const mc::Dataset data = mc::load_csv(path_a);
  CHECK(data.n == 500);
  CHECK(data.m == 3);
  CHECK(data.has_oracle_latent());
  CHECK_FALSE(data.has_instrument());

  // stdout output matches the file output byte for byte
  const CliResult piped = run_cli("simulate --scenario fig1 --n 500 --seed 21");
  CHECK(piped.exit_code == 0);
  CHECK(piped.out == slurp(path_a));

  std::remove(path_a.c_str());
  std::remove(path_b.c_str());
}

TEST_CASE("simulate accepts a scenario TOML config with overrides") {
  const std::string config = temp_path("scenario") + ".toml";
  {
    std::ofstream f(config);
    f << "[scenario]\nid = \"fig1\"\nn = 200\nseed = 9\nnoise_sd = 0.5\n";
  }
  const std::string out = temp_path("sim_cfg") + ".csv";
  REQUIRE(run_cli("simulate --config " + config + " --out " + out).exit_code == 0);
  const mc::Dataset data = mc::load_csv(out);
  CHECK(data.n == 200);
  CHECK(data.m == 3);

  // --n overrides the config value
  const std::string out2 = temp_path("sim_cfg2") + ".csv";
  REQUIRE(run_cli("simulate --config " + config + " --n 77 --out " + out2).exit_code == 0);
  CHECK(mc::load_csv(out2).n == 77);

  std::remove(config.c_str());
  std::remove(out.c_str());
  std::remove(out2.c_str());
}

TEST_CASE("fit emits a model JSON that reloads") {
  const std::string csv = temp_path("fit_data") + ".csv";
  REQUIRE(run_cli("simulate --scenario fig1 --n 2000 --seed 5 --out " + csv).exit_code == 0);

  const CliResult fit = run_cli("fit --data " + csv + " --k 2 --restarts 4 --seed 3");
  REQUIRE(fit.exit_code == 0);
  const mc::LatentClassModel model = mc::model_from_json(parse_json(fit.out));
  CHECK(model.k == 2);
  CHECK(model.m == 3);
  double prior_sum = 0.0;
  for (double p : model.prior) prior_sum += p;
  CHECK(prior_sum == Catch::Approx(1.0).margin(1e-12));

  std::remove(csv.c_str());
}

TEST_CASE("fit then estimate with a saved model recovers the contrast") {
  const std::string csv = temp_path("pipe_data") + ".csv";
  const std::string model = temp_path("pipe_model") + ".json";
  REQUIRE(run_cli("simulate --scenario fig1 --n 8000 --seed 31 --out " + csv).exit_code == 0);
  REQUIRE(run_cli("fit --data " + csv + " --k 2 --restarts 6 --seed 2 --out " + model).exit_code ==
          0);

  const CliResult est = run_cli("estimate --data " + csv + " --method deconfounder --model " +
                                model + " --contrast 111:000 --bootstrap 60 --seed 8");
  REQUIRE(est.exit_code == 0);
  const nlohmann::json j = parse_json(est.out);
  CHECK(j.at("method") == "deconfounder");
  CHECK(j.at("contrast") == "111 vs 000");
  CHECK(std::abs(j.at("estimate").get<double>() - 6.0) < 0.5);
  CHECK(j.at("se").get<double>() > 0.0);
  CHECK(j.at("bootstrap_replicates") == 60);

  std::remove(csv.c_str());
  std::remove(model.c_str());
}

TEST_CASE("estimate runs every method end to end") {
  const std::string fig1 = temp_path("all_fig1") + ".csv";
  const std::string iv = temp_path("all_iv") + ".csv";
  const std::string cf = temp_path("all_cf") + ".csv";
  REQUIRE(run_cli("simulate --scenario fig1 --n 4000 --seed 13 --out " + fig1).exit_code == 0);
  REQUIRE(run_cli("simulate --scenario iv_binary --n 6000 --seed 13 --out " + iv).exit_code == 0);
  REQUIRE(run_cli("simulate --scenario cf_triangular --n 6000 --seed 13 --out " + cf).exit_code ==
          0);

  SECTION("naive") {
    const CliResult r =
        run_cli("estimate --data " + fig1 + " --method naive --contrast 111:000 --bootstrap 40");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json j = parse_json(r.out);
    // confounding biases the naive contrast above the structural value 6
    CHECK(j.at("estimate").get<double>() > 6.0);
    CHECK(j.at("beta").size() == 3);
  }
  SECTION("parametric") {
    const CliResult r = run_cli("estimate --data " + fig1 +
                                " --method parametric --contrast 111:000 --bootstrap 40 --seed 4 "
                                "--restarts 4");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json j = parse_json(r.out);
    CHECK(std::abs(j.at("estimate").get<double>() - 6.0) < 0.7);
    CHECK(j.at("rank_full").get<bool>());
    CHECK(j.at("sigma_was_known").get<bool>() == false);
  }
  SECTION("parametric with fixed sigma") {
    const CliResult r = run_cli("estimate --data " + fig1 +
                                " --method parametric --contrast 111:000 --sigma-known 2.0 "
                                "--bootstrap 20 --seed 4 --restarts 4");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json j = parse_json(r.out);
    CHECK(j.at("sigma_was_known").get<bool>());
    CHECK(j.at("sigma_hat").get<double>() == 2.0);
  }
  SECTION("si posterior weights") {
    const CliResult r = run_cli("estimate --data " + fig1 +
                                " --method si --p1 prod:0.8,0.8,0.8 --p0 prod:0.2,0.2,0.2 "
                                "--weights posterior --bootstrap 40 --seed 4 --restarts 4");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json j = parse_json(r.out);
    CHECK(std::abs(j.at("estimate").get<double>() - 3.6) < 1.0);
    CHECK(j.at("diagnostics").at("support_pass").get<double>() == 1.0);
  }
  SECTION("si oracle weights") {
    const CliResult r = run_cli("estimate --data " + fig1 +
                                " --method si --p1 prod:0.8,0.8,0.8 --p0 prod:0.2,0.2,0.2 "
                                "--weights oracle --bootstrap 40 --seed 4 --restarts 4");
    REQUIRE(r.exit_code == 0);
    CHECK(std::abs(parse_json(r.out).at("estimate").get<double>() - 3.6) < 1.0);
  }
  SECTION("iv") {
    const CliResult r =
        run_cli("estimate --data " + iv + " --method iv --contrast 11:00 --bootstrap 40 --seed 4");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json j = parse_json(r.out);
    CHECK(j.at("rank_verdict") == "full rank");
    CHECK(j.at("q").size() == 4);
    CHECK(std::abs(j.at("estimate").get<double>() - 2.0) < 0.5);
  }
  SECTION("cf") {
    const CliResult r = run_cli("estimate --data " + cf +
                                " --method cf --cf-a1 1 --cf-a0 0 --bootstrap 40 --seed 4");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json j = parse_json(r.out);
    CHECK(std::abs(j.at("estimate").get<double>() - 1.0) < 0.3);
    CHECK(j.at("coef_names").size() == 6);
    CHECK(j.at("overlap_pass").get<bool>());
  }

  std::remove(fig1.c_str());
  std::remove(iv.c_str());
  std::remove(cf.c_str());
}

TEST_CASE("diagnose emits a well-formed report") {
  const std::string csv = temp_path("diag_data") + ".csv";
  REQUIRE(run_cli("simulate --scenario fig1 --n 1500 --seed 7 --out " + csv).exit_code == 0);
  const CliResult r =
      run_cli("diagnose --data " + csv + " --k 2 --restarts 4 --bootstrap 29 --seed 11");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = parse_json(r.out);
  const double gof_p = j.at("gof_p").get<double>();
  CHECK(gof_p >= 0.0);
  CHECK(gof_p <= 1.0);
  CHECK(j.at("treatment_p").size() == 3);
  CHECK(j.at("gof_bootstrap") == 29);
  CHECK(j.at("alpha") == 0.05);
  std::remove(csv.c_str());
}

TEST_CASE("mc runs a config file and is byte-identical across runs and parallelism") {
  const std::string config = temp_path("exp") + ".toml";
  {
    std::ofstream f(config);
    f << "[experiment]\n"
         "replicates = 3\n"
         "base_seed = 41\n"
         "format = \"json\"\n"
         "\n"
         "[scenario]\n"
         "id = \"fig1\"\n"
         "n = 800\n"
         "\n"
         "[fit]\n"
         "restarts = 3\n"
         "\n"
         "[[estimator]]\n"
         "method = \"naive\"\n"
         "contrast = \"111:000\"\n"
         "\n"
         "[[estimator]]\n"
         "method = \"deconfounder\"\n"
         "contrast = \"111:000\"\n";
  }

  const std::string out_a = temp_path("mc_a") + ".json";
  const std::string out_b = temp_path("mc_b") + ".json";
  const std::string out_c = temp_path("mc_c") + ".json";
  REQUIRE(run_cli("mc --config " + config + " --out " + out_a).exit_code == 0);
  REQUIRE(run_cli("mc --config " + config + " --out " + out_b).exit_code == 0);
  REQUIRE(run_cli("mc --config " + config + " --parallelism 4 --out " + out_c).exit_code == 0);
  const std::string body = slurp(out_a);
  CHECK(body == slurp(out_b));
  CHECK(body == slurp(out_c));

  const mc::MCSummary summary = mc::summary_from_json(nlohmann::json::parse(body));
  CHECK(summary.rows.size() == 6);
  CHECK(summary.failure_count == 0);

  // csv format override: header plus replicates x estimators rows
  const std::string out_csv = temp_path("mc_csv") + ".csv";
  REQUIRE(run_cli("mc --config " + config + " --format csv --out " + out_csv).exit_code == 0);
  const std::string csv_body = slurp(out_csv);
  CHECK(csv_body.rfind("replicate,seed,estimator,estimate,se,oracle,failed,error,diagnostic_p",
                       0) == 0);
  CHECK(std::count(csv_body.begin(), csv_body.end(), '\n') == 7);

  // --seed override changes the result
  const CliResult reseeded = run_cli("mc --config " + config + " --seed 99");
  REQUIRE(reseeded.exit_code == 0);
  CHECK(reseeded.out != body);

  std::remove(config.c_str());
  std::remove(out_a.c_str());
  std::remove(out_b.c_str());
  std::remove(out_c.c_str());
  std::remove(out_csv.c_str());
}

TEST_CASE("exit codes distinguish usage, config, and identification failures") {
  SECTION("no subcommand is a usage error") {
    CHECK(run_cli("").exit_code == 1);
  }
  SECTION("unknown subcommand") {
    CHECK(run_cli("frobnicate").exit_code == 1);
  }
  SECTION("help exits zero") {
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("estimate --help").exit_code == 0);
  }
  SECTION("missing required option") {
    CHECK(run_cli("fit").exit_code == 1);
    CHECK(run_cli("estimate --data /tmp/nope.csv").exit_code == 1);
  }
  SECTION("unknown scenario name") {
    const CliResult r = run_cli("simulate --scenario nosuch");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("nosuch") != std::string::npos);
  }
  SECTION("missing config file") {
    CHECK(run_cli("mc --config /tmp/definitely_missing_multicause.toml").exit_code == 1);
  }
  SECTION("malformed config reports the line") {
    const std::string config = temp_path("bad") + ".toml";
    {
      std::ofstream f(config);
      f << "[scenario\nid = \"fig1\"\n";
    }
    const CliResult r = run_cli("simulate --config " + config);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("line 1") != std::string::npos);
    std::remove(config.c_str());
  }
  SECTION("unwritable output path") {
    CHECK(run_cli("simulate --scenario fig1 --n 50 --out /nonexistent_dir_zz/x.csv").exit_code ==
          1);
  }
  SECTION("identification failure exits 2") {
    // Two treatments but a binary instrument: 2 levels < 2^2 patterns, so the
    // linear system is under-determined and the solver must refuse.
    const std::string csv = temp_path("underdet") + ".csv";
    {
      std::ofstream f(csv);
      f << "A1,A2,Y,W\n";
      f << "0,0,1.0,0\n0,1,2.0,0\n1,0,3.0,0\n1,1,4.0,0\n";
      f << "0,0,1.5,1\n0,1,2.5,1\n1,0,3.5,1\n1,1,4.5,1\n";
    }
    const CliResult r = run_cli("estimate --data " + csv + " --method iv --bootstrap 0");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("under-determined") != std::string::npos);
    std::remove(csv.c_str());
  }
  SECTION("dataset without an instrument is a config error, exit 1") {
    const std::string csv = temp_path("no_w") + ".csv";
    REQUIRE(run_cli("simulate --scenario fig1 --n 100 --seed 3 --out " + csv).exit_code == 0);
    const CliResult r = run_cli("estimate --data " + csv + " --method iv");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("instrument") != std::string::npos);
    std::remove(csv.c_str());
  }
}
