#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "doctest.h"
#include "rfusion/container.hpp"
#include "rfusion/experiment.hpp"
#include "rfusion/persist.hpp"

using namespace rfusion;
namespace fs = std::filesystem;

namespace {

// Small enough that a full simulate/train/evaluate round takes a second or two.
constexpr const char* kSmall = R"([run]
seed = 4

[scenario]
modalities = 3
classes = 3
obs_dims = 6, 5, 7
latent_dim = 4
n_train = 120
n_test = 60

[model]
hidden_dim = 4
feature_dim = 3
gen_width = 8
gen_layers = 2
critic_width = 8
critic_layers = 2

[train]
epochs = 2
batch_size = 16

[failure]
tree_points = 100
calibration_samples = 30
calibration_snr = 10, 0

[evaluate]
snr_grid = inf, 0
damaged = each
threads = 1

[concat]
epochs = 3
)";

struct Run {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t line_count(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Scratch directory removed on scope exit.
struct Scratch {
  fs::path dir;
  Scratch() {
    static int counter = 0;
    dir = fs::temp_directory_path() /
          ("rfusion_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  Scratch(const Scratch&) = delete;
  Scratch& operator=(const Scratch&) = delete;

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }

  Run run(const std::string& args) const {
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string(RFUSION_CLI) + " " + args + " > " + (dir / "stdout.txt").string() +
                            " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
  }

  std::string p(const std::string& name) const { return (dir / name).string(); }
};

std::string with(std::string base, const std::string& section, const std::string& line) {
  const auto at = base.find("[" + section + "]\n");
  REQUIRE(at != std::string::npos);
  base.insert(at + section.size() + 3, line + "\n");
  return base;
}

}  // namespace

TEST_CASE("cli: usage and configuration errors exit 2") {
  Scratch s;
  CHECK(s.run("").code == 2);
  CHECK(s.run("frobnicate").code == 2);
  CHECK(s.run("simulate --out " + s.p("o")).code == 2);  // no config

  const auto unknown = s.write("unknown.ini", with(kSmall, "train", "learning_speed = 3"));
  auto r = s.run("simulate --config " + unknown.string() + " --out " + s.p("o"));
  CHECK(r.code == 2);
  CHECK(r.err.find("learning_speed") != std::string::npos);

  const auto missing = s.write("missing.ini", "[scenario]\nmodalities = 3\n");
  r = s.run("simulate --config " + missing.string() + " --out " + s.p("o"));
  CHECK(r.code == 2);
  CHECK(r.err.find("classes") != std::string::npos);

  const auto single = s.write("single.ini", "[scenario]\nmodalities = 1\nclasses = 3\n");
  r = s.run("simulate --config " + single.string() + " --out " + s.p("o"));
  CHECK(r.code == 2);
  CHECK(r.err.find("modalities") != std::string::npos);

  const auto cfg = s.write("small.ini", kSmall);
  r = s.run("train --config " + cfg.string() + " --out " + s.p("o"));
  CHECK(r.code == 2);
  CHECK(r.err.find("--dataset") != std::string::npos);
}

TEST_CASE("cli: data and shape errors exit 3") {
  Scratch s;
  const auto cfg = s.write("small.ini", kSmall);
  auto r = s.run("train --config " + cfg.string() + " --dataset " + s.p("nope.bin") + " --out " + s.p("t"));
  CHECK(r.code == 3);

  const auto junk = s.write("junk.bin", "not a container");
  r = s.run("train --config " + cfg.string() + " --dataset " + junk.string() + " --out " + s.p("t"));
  CHECK(r.code == 3);

  // A checkpoint for one dataset evaluated against a dataset of other shape.
  REQUIRE(s.run("simulate --config " + cfg.string() + " --out " + s.p("sim")).code == 0);
  REQUIRE(s.run("train --config " + cfg.string() + " --dataset " + s.p("sim/dataset.bin") + " --out " +
                s.p("train"))
              .code == 0);
  std::string other = kSmall;
  other.replace(other.find("obs_dims = 6, 5, 7"), 18, "obs_dims = 6, 5, 9");
  const auto other_cfg = s.write("other.ini", other);
  REQUIRE(s.run("simulate --config " + other_cfg.string() + " --out " + s.p("sim2")).code == 0);
  r = s.run("evaluate --config " + other_cfg.string() + " --checkpoint " + s.p("train/checkpoint.bin") +
            " --dataset " + s.p("sim2/dataset.bin") + " --out " + s.p("ev"));
  CHECK(r.code == 3);
  CHECK(r.err.find("modality 3") != std::string::npos);
}

TEST_CASE("cli: divergent training exits 4 and keeps the last good state") {
  Scratch s;
  const auto cfg = s.write("hot.ini", with(with(kSmall, "train", "mu_g = 1e12"), "train", "gamma2 = 1e6"));
  REQUIRE(s.run("simulate --config " + cfg.string() + " --out " + s.p("sim")).code == 0);
  const auto r =
      s.run("train --config " + cfg.string() + " --dataset " + s.p("sim/dataset.bin") + " --out " + s.p("t"));
  CHECK(r.code == 4);
  CHECK(fs::exists(s.dir / "t" / "checkpoint.bin"));
  CHECK(fs::exists(s.dir / "t" / "losses.csv"));
  CHECK_NOTHROW(load_checkpoint(s.dir / "t" / "checkpoint.bin"));
}

TEST_CASE("cli: full pipeline, headers and determinism") {
  Scratch s;
  const auto cfg = s.write("small.ini", kSmall);
  const std::string c = " --config " + cfg.string();
  REQUIRE(s.run("simulate" + c + " --out " + s.p("sim")).code == 0);
  REQUIRE(s.run("simulate" + c + " --out " + s.p("sim_again")).code == 0);
  CHECK(slurp(s.dir / "sim" / "dataset.bin") == slurp(s.dir / "sim_again" / "dataset.bin"));
  CHECK(first_line(s.dir / "sim" / "resolved_config.ini") == "# csv schema 1");

  const std::string data = " --dataset " + s.p("sim/dataset.bin");
  REQUIRE(s.run("train" + c + data + " --out " + s.p("train")).code == 0);
  REQUIRE(s.run("evaluate" + c + data + " --checkpoint " + s.p("train/checkpoint.bin") + " --out " + s.p("ev"))
              .code == 0);
  REQUIRE(s.run("calibrate" + c + data + " --checkpoint " + s.p("train/checkpoint.bin") + " --out " + s.p("cal"))
              .code == 0);

  CHECK(first_line(s.dir / "train" / "losses.csv") ==
        "epoch,wasserstein,commutation,linf1,xent,pairwise_dist_sum,acc_modality_1,acc_modality_2,acc_modality_3");
  CHECK(line_count(s.dir / "train" / "losses.csv") == 3);
  CHECK(first_line(s.dir / "ev" / "eval.csv") ==
        "method,snr_db,damaged,accuracy,mean_doc_f,detection_tpr,detection_fpr,seed");
  // 2 SNRs x 3 sets x (6 fused or joint methods + 3 single-modality rows).
  CHECK(line_count(s.dir / "ev" / "eval.csv") == 1 + 2 * 3 * 9);
  CHECK(first_line(s.dir / "ev" / "assessments.csv") ==
        "snr_db,damaged,sample,detector,threshold,p_d_1,p_d_2,p_d_3,flag_1,flag_2,flag_3,outcome");
  CHECK(line_count(s.dir / "ev" / "assessments.csv") == 1 + 2 * 3 * 60);
  CHECK(first_line(s.dir / "cal" / "calibration.csv") ==
        "snr_db,snr_estimate,clustering_threshold,clustering_j,clustering_tpr,clustering_fpr,"
        "clustering_low_confidence,tracking_threshold,tracking_j,tracking_tpr,tracking_fpr,tracking_low_confidence");
  CHECK(fs::exists(s.dir / "train" / "losses.svg"));
  CHECK(fs::exists(s.dir / "ev" / "accuracy_vs_snr.svg"));

  // Same inputs, same bytes.
  REQUIRE(s.run("train" + c + data + " --out " + s.p("train2")).code == 0);
  CHECK(slurp(s.dir / "train" / "checkpoint.bin") == slurp(s.dir / "train2" / "checkpoint.bin"));
  CHECK(slurp(s.dir / "train" / "losses.csv") == slurp(s.dir / "train2" / "losses.csv"));
  REQUIRE(s.run("evaluate" + c + data + " --checkpoint " + s.p("train2/checkpoint.bin") + " --out " + s.p("ev2"))
              .code == 0);
  CHECK(slurp(s.dir / "ev" / "eval.csv") == slurp(s.dir / "ev2" / "eval.csv"));
  CHECK(slurp(s.dir / "ev" / "assessments.csv") == slurp(s.dir / "ev2" / "assessments.csv"));

  // --seed overrides the file.
  REQUIRE(s.run("simulate" + c + " --seed 9 --out " + s.p("sim9")).code == 0);
  CHECK(slurp(s.dir / "sim" / "dataset.bin") != slurp(s.dir / "sim9" / "dataset.bin"));
}

TEST_CASE("cli: resuming equals training straight through") {
  Scratch s;
  const auto two = s.write("two.ini", kSmall);
  std::string one_text = kSmall;
  one_text.replace(one_text.find("epochs = 2"), 10, "epochs = 1");
  const auto one = s.write("one.ini", one_text);
  REQUIRE(s.run("simulate --config " + two.string() + " --out " + s.p("sim")).code == 0);
  const std::string data = " --dataset " + s.p("sim/dataset.bin");
  REQUIRE(s.run("train --config " + two.string() + data + " --out " + s.p("straight")).code == 0);
  REQUIRE(s.run("train --config " + one.string() + data + " --out " + s.p("first")).code == 0);
  REQUIRE(s.run("train --config " + one.string() + data + " --checkpoint " + s.p("first/checkpoint.bin") +
                " --out " + s.p("second"))
              .code == 0);
  CHECK(slurp(s.dir / "straight" / "checkpoint.bin") == slurp(s.dir / "second" / "checkpoint.bin"));
}

TEST_CASE("cli: zero epochs writes the initial parameters") {
  Scratch s;
  std::string text = kSmall;
  text.replace(text.find("epochs = 2"), 10, "epochs = 0");
  const auto cfg_path = s.write("zero.ini", text);
  REQUIRE(s.run("simulate --config " + cfg_path.string() + " --out " + s.p("sim")).code == 0);
  REQUIRE(s.run("train --config " + cfg_path.string() + " --dataset " + s.p("sim/dataset.bin") + " --out " +
                s.p("t"))
              .code == 0);
  const RunConfig cfg = parse_config(text);
  const ModelBundle init = init_params(cfg.arch, cfg.seed, cfg.weights);
  const ModelBundle got = load_checkpoint(s.dir / "t" / "checkpoint.bin");
  const auto a = init.named_parameters(), b = got.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].second.to_vector() == b[i].second.to_vector());
  CHECK(line_count(s.dir / "t" / "losses.csv") == 1);
}

TEST_CASE("cli: an empty sweep writes header-only files") {
  Scratch s;
  const auto cfg = s.write("small.ini", kSmall);
  std::string text = kSmall;
  text.replace(text.find("damaged = each"), 14, "damaged = none");
  const auto none = s.write("none.ini", text);
  REQUIRE(s.run("simulate --config " + cfg.string() + " --out " + s.p("sim")).code == 0);
  const std::string data = " --dataset " + s.p("sim/dataset.bin");
  REQUIRE(s.run("train --config " + cfg.string() + data + " --out " + s.p("t")).code == 0);
  REQUIRE(s.run("evaluate --config " + none.string() + data + " --checkpoint " + s.p("t/checkpoint.bin") +
                " --out " + s.p("ev"))
              .code == 0);
  CHECK(line_count(s.dir / "ev" / "eval.csv") == 1);
  CHECK(line_count(s.dir / "ev" / "assessments.csv") == 1);
}

TEST_CASE("cli: adam state survives a checkpoint round trip") {
  Scratch s;
  const auto cfg = s.write("adam.ini", with(kSmall, "train", "optimizer = adam"));
  REQUIRE(s.run("simulate --config " + cfg.string() + " --out " + s.p("sim")).code == 0);
  REQUIRE(s.run("train --config " + cfg.string() + " --dataset " + s.p("sim/dataset.bin") + " --out " + s.p("t"))
              .code == 0);
  const ModelBundle b = load_checkpoint(s.dir / "t" / "checkpoint.bin");
  CHECK(b.weights.optimizer == Optimizer::adam);
  CHECK(b.adam.size() == b.named_parameters().size());
  CHECK(encode_container(checkpoint_container(b)) == slurp(s.dir / "t" / "checkpoint.bin"));
}
