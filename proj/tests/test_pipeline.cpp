#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lssl/checkpoint.hpp"
#include "lssl/pipeline.hpp"
#include "lssl/stats.hpp"
#include "lssl/tensor.hpp"

using namespace lssl;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string f;
  while (std::getline(is, f, ',')) out.push_back(f);
  return out;
}

// Unique scratch dir per case; removed on destruction.
struct TempDir {
  std::string path;
  explicit TempDir(const std::string& name) : path("/tmp/lssl_pipe_" + name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

ExperimentConfig tiny_cfg(const std::string& out, int n_subjects, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.n_subjects = n_subjects;
  cfg.seed = seed;
  cfg.out_dir = out;
  cfg.pretrain_epochs = 3;
  cfg.finetune_epochs = 2;
  return cfg;
}

}  // namespace

TEST_CASE("generate writes files whose manifest matches the counting oracles") {
  TempDir a("gen_a"), b("gen_b");
  ExperimentConfig cfg = tiny_cfg(a.path, 100, 5);
  GenerateResult gen = cmd_generate(cfg);

  REQUIRE(std::filesystem::exists(gen.cohort_base + ".jsonl"));
  REQUIRE(std::filesystem::exists(gen.cohort_base + ".meta.json"));
  REQUIRE(std::filesystem::exists(gen.splits_path));
  REQUIRE(std::filesystem::exists(gen.manifest_path));

  const auto manifest = nlohmann::json::parse(slurp(gen.manifest_path));
  CHECK(manifest.at("seed").get<std::uint64_t>() == 5);
  CHECK(manifest.at("config_hash").get<std::string>() == config_hash(cfg));
  CHECK(manifest.at("subjects").at("total").get<int>() == 100);

  std::size_t visits = 0, adjacent = 0;
  for (const auto& sub : gen.cohort.subjects) {
    visits += sub.visits.size();
    adjacent += sub.visits.size() - 1;
  }
  CHECK(manifest.at("visits").at("total").get<std::size_t>() == visits);
  CHECK(manifest.at("pairs_all").at("total").get<std::size_t>() == adjacent);

  const PairDataset changed = make_pair_dataset(gen.cohort, true);
  CHECK(manifest.at("pairs_grade_change").at("train").get<std::size_t>() == changed.train.size());
  CHECK(manifest.at("pairs_grade_change").at("val").get<std::size_t>() == changed.val.size());
  CHECK(manifest.at("pairs_grade_change").at("test").get<std::size_t>() == changed.test.size());

  const SequenceDataset seqs = make_sequence_dataset(gen.cohort);
  CHECK(manifest.at("sequences").at("total").get<std::size_t>() ==
        seqs.train.size() + seqs.val.size() + seqs.test.size());

  // The split listing partitions the id range.
  const auto splits = nlohmann::json::parse(slurp(gen.splits_path));
  std::vector<bool> seen(100, false);
  for (const char* key : {"train", "val", "test"})
    for (const auto& id : splits.at(key)) {
      CHECK_FALSE(seen.at(id.get<std::size_t>()));
      seen.at(id.get<std::size_t>()) = true;
    }
  for (bool s : seen) CHECK(s);

  // Same config elsewhere: byte-identical files.
  ExperimentConfig cfg_b = cfg;
  cfg_b.out_dir = b.path;
  GenerateResult gen_b = cmd_generate(cfg_b);
  CHECK(slurp(gen.cohort_base + ".jsonl") == slurp(gen_b.cohort_base + ".jsonl"));
  CHECK(slurp(gen.cohort_base + ".meta.json") == slurp(gen_b.cohort_base + ".meta.json"));
  CHECK(slurp(gen.splits_path) == slurp(gen_b.splits_path));
  CHECK(slurp(gen.manifest_path) == slurp(gen_b.manifest_path));
}

TEST_CASE("pretraining logs per-epoch losses and keeps best and last checkpoints") {
  TempDir a("pre_a"), b("pre_b");
  ExperimentConfig cfg = tiny_cfg(a.path, 80, 2);
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);
  const PretrainResult res = cmd_pretrain(cfg, cohort);

  CHECK(res.epochs_run == 3);
  const auto log_lines = lines_of(slurp(res.log_path));
  REQUIRE(log_lines.size() == 4);
  CHECK(log_lines[0] ==
        "epoch,train_total,train_recon,train_dir,val_total,val_recon,val_dir,lr");
  double min_val = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < log_lines.size(); ++k) {
    const auto f = fields_of(log_lines[k]);
    REQUIRE(f.size() == 8);
    CHECK(f[0] == std::to_string(k - 1));
    CHECK(std::isfinite(std::stod(f[4])));
    min_val = std::min(min_val, std::stod(f[4]));
  }
  CHECK(res.best_val_total == min_val);
  CHECK(std::stod(fields_of(log_lines.back())[4]) == res.last_val_total);

  const Checkpoint best = load_checkpoint(res.best_path);
  CHECK(best.mode == "lssl");
  CHECK(best.config.at("epoch") == std::to_string(res.best_epoch));
  CHECK(best.config.at("config_hash") == config_hash(cfg));
  ModelBundle fresh = init_bundle(Mode::LSSL, 12345);
  CHECK_NOTHROW(load_into_bundle(fresh, load_checkpoint(res.last_path)));

  // Bit-for-bit repeatable.
  ExperimentConfig cfg_b = cfg;
  cfg_b.out_dir = b.path;
  const PretrainResult res_b = cmd_pretrain(cfg_b, cohort);
  CHECK(slurp(res.best_path) == slurp(res_b.best_path));
  CHECK(slurp(res.last_path) == slurp(res_b.last_path));
  CHECK(slurp(res.log_path) == slurp(res_b.log_path));
}

TEST_CASE("autoencoder pretraining logs a zero direction column") {
  TempDir a("pre_ae");
  ExperimentConfig cfg = tiny_cfg(a.path, 80, 2);
  cfg.mode = "ae";
  cfg.lambda_dir = 0.0;
  cfg.pretrain_epochs = 2;
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);
  const PretrainResult res = cmd_pretrain(cfg, cohort);
  const auto log_lines = lines_of(slurp(res.log_path));
  REQUIRE(log_lines.size() == 3);
  for (std::size_t k = 1; k < log_lines.size(); ++k) {
    const auto f = fields_of(log_lines[k]);
    CHECK(f[3] == "0");
    CHECK(f[6] == "0");
  }
}

TEST_CASE("training loss drops over a short run") {
  TempDir a("pre_drop");
  ExperimentConfig cfg = tiny_cfg(a.path, 80, 2);
  cfg.pretrain_epochs = 5;
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);
  const PretrainResult res = cmd_pretrain(cfg, cohort);
  const auto log_lines = lines_of(slurp(res.log_path));
  const double first = std::stod(fields_of(log_lines[1])[1]);
  CHECK(res.last_train_total < first);
}

TEST_CASE("interrupted pretraining resumes deterministically") {
  TempDir part("res_part"), c("res_c"), d("res_d"), full("res_full");
  ExperimentConfig cfg = tiny_cfg(part.path, 80, 2);
  cfg.pretrain_epochs = 4;
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);

  const PretrainResult head = cmd_pretrain(cfg, cohort, "", 2);
  CHECK(head.epochs_run == 2);
  CHECK(load_checkpoint(head.last_path).config.at("epoch") == "1");

  ExperimentConfig cfg_c = cfg;
  cfg_c.out_dir = c.path;
  ExperimentConfig cfg_d = cfg;
  cfg_d.out_dir = d.path;
  const PretrainResult tail_c = cmd_pretrain(cfg_c, cohort, head.last_path);
  const PretrainResult tail_d = cmd_pretrain(cfg_d, cohort, head.last_path);
  CHECK(tail_c.epochs_run == 2);
  CHECK(load_checkpoint(tail_c.last_path).config.at("epoch") == "3");
  CHECK(tail_c.last_train_total == tail_d.last_train_total);
  CHECK(tail_c.last_val_total == tail_d.last_val_total);
  CHECK(slurp(tail_c.last_path) == slurp(tail_d.last_path));
  CHECK(slurp(tail_c.log_path) == slurp(tail_d.log_path));

  SUBCASE("a config change invalidates the checkpoint") {
    ExperimentConfig other = cfg_c;
    other.pretrain_epochs = 5;
    CHECK_THROWS_AS(cmd_pretrain(other, cohort, head.last_path), std::invalid_argument);
  }
  SUBCASE("a finished run does not resume") {
    ExperimentConfig cfg_full = cfg;
    cfg_full.out_dir = full.path;
    const PretrainResult done = cmd_pretrain(cfg_full, cohort);
    CHECK_THROWS_AS(cmd_pretrain(cfg_full, cohort, done.last_path), std::invalid_argument);
  }
}

TEST_CASE("a non-finite loss aborts and retains the last good checkpoint") {
  TempDir a("nan_abort");
  ExperimentConfig cfg = tiny_cfg(a.path, 80, 2);
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);

  const PretrainResult head = cmd_pretrain(cfg, cohort, "", 1);
  const std::string good_ckpt = slurp(head.last_path);
  const std::string good_log = slurp(head.log_path);

  // Poison one training observation so the next epoch's forward pass blows up.
  Cohort poisoned = cohort;
  const PairDataset pairs = make_pair_dataset(poisoned, true);
  REQUIRE_FALSE(pairs.train.empty());
  SubjectRecord& victim = poisoned.subjects.at(pairs.train.front().subject);
  victim.visits.front().x.front() = std::numeric_limits<double>::infinity();

  CHECK_THROWS_AS(cmd_pretrain(cfg, poisoned, head.last_path), NumericsError);
  CHECK(slurp(head.last_path) == good_ckpt);
  CHECK(slurp(head.log_path) == good_log);
}

TEST_CASE("evaluate stamps rows with the checkpoint provenance") {
  TempDir a("eval_rows");
  ExperimentConfig cfg = tiny_cfg(a.path, 100, 3);
  cfg.pretrain_epochs = 2;
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);
  const PretrainResult pre = cmd_pretrain(cfg, cohort);

  const EvaluateResult fine = cmd_evaluate(cfg, cohort, "age", pre.best_path);
  REQUIRE(fine.rows.size() == 1);
  CHECK(fine.rows[0].mode == "lssl");
  CHECK(fine.rows[0].lambda_dir == 1.0);
  CHECK(fine.rows[0].lambda_recon == 1.0);
  CHECK_FALSE(fine.rows[0].node);
  CHECK(fine.rows[0].metric == "mse_age");
  CHECK(std::isfinite(fine.rows[0].value));
  CHECK(fine.rows[0].value >= 0.0);
  CHECK(fine.rows[0].config_hash == config_hash(cfg));

  const EvaluateResult scratch = cmd_evaluate(cfg, cohort, "age", "");
  REQUIRE(scratch.rows.size() == 1);
  CHECK(scratch.rows[0].mode == "scratch");
  CHECK(scratch.rows[0].lambda_dir == 0.0);
  CHECK(scratch.rows[0].lambda_recon == 0.0);

  const auto csv = lines_of(slurp(fine.results_path));
  REQUIRE(csv.size() == 3);
  CHECK(csv[0] == "mode,lambda_dir,lambda_recon,node,task,metric,value,seed,config_hash");
  CHECK(fields_of(csv[1])[0] == "lssl");
  CHECK(fields_of(csv[2])[0] == "scratch");

  SUBCASE("unknown task is refused") {
    CHECK_THROWS_AS(cmd_evaluate(cfg, cohort, "calibration", ""), std::invalid_argument);
  }
}

TEST_CASE("score dumps reproduce the reported AUC") {
  TempDir a("eval_scores");
  ExperimentConfig cfg = tiny_cfg(a.path, 160, 11);
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);

  const EvaluateResult ev = cmd_evaluate(cfg, cohort, "next_visit", "");
  REQUIRE(ev.rows.size() == 3);
  REQUIRE(ev.score_paths.size() == 1);

  const auto score_lines = lines_of(slurp(ev.score_paths[0]));
  REQUIRE(score_lines.size() > 1);
  std::vector<double> severe;
  std::vector<int> hit;
  for (std::size_t k = 1; k < score_lines.size(); ++k) {
    const auto f = fields_of(score_lines[k]);
    REQUIRE(f.size() == 4);
    hit.push_back(std::stoi(f[0]) >= 3 ? 1 : 0);
    severe.push_back(std::stod(f[3]));
  }
  const double reported = ev.rows[2].value;
  const bool one_class =
      std::all_of(hit.begin(), hit.end(), [](int h) { return h == 0; }) ||
      std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; });
  if (one_class) {
    CHECK(std::isnan(reported));
  } else {
    CHECK(reported == doctest::Approx(auc(severe, hit)).epsilon(1e-12));
  }
}

TEST_CASE("flow classification needs flow-equipped weights") {
  TempDir a("eval_flow");
  ExperimentConfig cfg = tiny_cfg(a.path, 80, 2);
  cfg.pretrain_epochs = 1;
  cfg.finetune_epochs = 1;
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);

  ExperimentConfig cfg_ae = cfg;
  cfg_ae.mode = "ae";
  cfg_ae.lambda_dir = 0.0;
  const PretrainResult pre = cmd_pretrain(cfg_ae, cohort);
  CHECK_THROWS_AS(cmd_evaluate(cfg, cohort, "node_cls", pre.best_path), std::invalid_argument);

  // Fresh weights include a flow field, so the from-scratch row works.
  const EvaluateResult ev = cmd_evaluate(cfg, cohort, "node_cls", "");
  CHECK(ev.rows.size() == 3);
  CHECK(ev.score_paths.size() == 1);
}

TEST_CASE("norm analysis summarizes test pairs by speed group") {
  TempDir a("eval_norms");
  ExperimentConfig cfg = tiny_cfg(a.path, 100, 3);
  const Cohort cohort = generate_cohort(cfg.n_subjects, cfg.seed);

  const EvaluateResult ev = cmd_evaluate(cfg, cohort, "norms", "");
  REQUIRE(ev.rows.size() == 8);
  auto value_of = [&](const std::string& metric) {
    for (const auto& r : ev.rows)
      if (r.metric == metric) return r.value;
    return std::numeric_limits<double>::quiet_NaN();
  };
  const PairDataset pairs = make_pair_dataset(cohort, false);
  CHECK(value_of("norm_count_fast") + value_of("norm_count_slow") ==
        static_cast<double>(pairs.test.size()));
  CHECK(value_of("norm_mean_fast") > 0.0);
  CHECK(value_of("norm_mean_slow") > 0.0);
  CHECK(value_of("norm_p") >= 0.0);
  CHECK(value_of("norm_p") <= 1.0);
}

TEST_CASE("reproduce emits the full grid byte-identically across runs and jobs") {
  TempDir a("repro_a"), b("repro_b");
  ExperimentConfig cfg = tiny_cfg(a.path, 80, 0);
  cfg.pretrain_epochs = 2;
  cfg.finetune_epochs = 1;
  const ReproduceResult ra = cmd_reproduce(cfg, 1);

  const auto csv = lines_of(slurp(ra.results_path));
  // 7 weight rows x (1 age + 3 next-visit + 8 norms), 4 node_cls rows x 3 auc,
  // 3 flow-equipped rows x 4 flow diagnostics, plus header.
  CHECK(csv.size() == 109);
  const std::string summary = slurp(ra.summary_path);
  for (const char* label :
       {"scratch", "ae", "ae_node", "lssl", "lssl_node", "s_lssl", "s_lssl_node"})
    CHECK(summary.find("| " + std::string(label) + " |") != std::string::npos);
  const bool flagged = summary.find("PASS") != std::string::npos ||
                       summary.find("FAIL") != std::string::npos;
  CHECK(flagged);

  ExperimentConfig cfg_b = cfg;
  cfg_b.out_dir = b.path;
  const ReproduceResult rb = cmd_reproduce(cfg_b, 2);
  CHECK(slurp(ra.results_path) == slurp(rb.results_path));
  CHECK(slurp(ra.summary_path) == slurp(rb.summary_path));
}
