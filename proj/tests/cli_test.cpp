#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cake_cli.hpp"
#include "test_util.hpp"

namespace cake {
namespace {

using test::slurp;
using test::temp_path;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cake_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kSmallSynth = {"--dim",         "16",        "--train-counts", "120,80,60",
                                              "--test-counts", "40,30,20", "--seed",         "3"};

// Writes a small synthetic pair once per binary and returns {train, test}.
std::pair<std::string, std::string> small_files() {
  static const auto paths = [] {
    const std::string tr = temp_path("small_train.cakefeat"), te = temp_path("small_test.cakefeat");
    std::vector<std::string> args = {"synth", "--out", tr, "--out-test", te};
    args.insert(args.end(), kSmallSynth.begin(), kSmallSynth.end());
    const auto r = cake_run(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return std::pair{tr, te};
  }();
  return paths;
}

Outcome train_small(const std::string& out, std::vector<std::string> extra = {}) {
  const auto [tr, te] = small_files();
  std::vector<std::string> args = {"train", "--variant", "cake", "--k",      "3",      "--data",      tr,
                                   "--test", te,          "--seed", "7",   "--epochs", "6", "--out", out};
  args.insert(args.end(), extra.begin(), extra.end());
  return cake_run(args);
}

TEST(Cli, SynthMatchesLibrary) {
  const auto [tr, te] = small_files();
  SynthConfig sc;
  sc.dim = 16;
  sc.train_counts = {120, 80, 60};
  sc.test_counts = {40, 30, 20};
  sc.seed = 3;
  const auto corpus = synth_generate(sc);
  EXPECT_EQ(slurp(tr), encode_feature_file(corpus.train));
  EXPECT_EQ(slurp(te), encode_feature_file(corpus.test));
}

TEST(Cli, TrainTwiceGivesIdenticalCheckpoints) {
  const std::string a = temp_path("det_a.cakeckpt"), b = temp_path("det_b.cakeckpt");
  const std::string ha = temp_path("det_a.csv"), hb = temp_path("det_b.csv");
  const auto ra = train_small(a, {"--history", ha});
  const auto rb = train_small(b, {"--history", hb});
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_FALSE(slurp(a).empty());
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(slurp(ha), slurp(hb));
  EXPECT_EQ(ra.out, rb.out);
  EXPECT_NE(ra.out.find("best weighted F1"), std::string::npos);
}

TEST(Cli, TrainMatchesLibrary) {
  const auto [tr, te] = small_files();
  const std::string path = temp_path("lib.cakeckpt");
  ASSERT_EQ(train_small(path).code, 0);
  const auto train_set = load_feature_file(tr, Split::train);
  const auto test_set = load_feature_file(te, Split::test);
  TrainConfig cfg = cli::TrainFlags{}.to_config(train_set, 7);
  cfg.max_epochs = 6;
  const auto res = train(train_set, test_set, cfg);
  EXPECT_EQ(slurp(path), encode_checkpoint(Checkpoint{cfg.model, res.params, res.optimizer}));
}

TEST(Cli, EvalAndCrossEvalMatchLibrary) {
  const auto [tr, te] = small_files();
  const std::string model = temp_path("ev.cakeckpt"), csv = temp_path("ev.csv"), mat = temp_path("ev_cross.csv");
  ASSERT_EQ(train_small(model).code, 0);
  ASSERT_EQ(cake_run({"eval", "--model", model, "--test", te, "--out", csv}).code, 0);
  ASSERT_EQ(cake_run({"cross-eval", "--model", model, "--test", te, "--out", mat}).code, 0);

  const auto ck = load_checkpoint(model);
  const auto test_set = load_feature_file(te, Split::test);
  const auto rep = evaluate(ck.params, ck.config, test_set);
  std::ostringstream want;
  write_scores_csv(want, rep.scores, rep.weighted_f1);
  EXPECT_EQ(slurp(csv), want.str());

  std::ostringstream want_m;
  write_matrix_csv(want_m, cross_evaluate(ck.params, ck.config, test_set), test_set.domains);
  EXPECT_EQ(slurp(mat), want_m.str());

  // Without --out the matrix goes to stdout.
  EXPECT_EQ(cake_run({"cross-eval", "--model", model, "--test", te}).out, want_m.str());
  const auto text = cake_run({"eval", "--model", model, "--test", te, "--confusion"});
  EXPECT_EQ(text.code, 0);
  EXPECT_NE(text.out.find("happiness"), std::string::npos);
}

TEST(Cli, RecallModeOptions) {
  const auto [tr, te] = small_files();
  const std::string model = temp_path("rm.cakeckpt");
  ASSERT_EQ(train_small(model).code, 0);
  const std::string a = temp_path("rm_present.csv"), b = temp_path("rm_all.csv");
  ASSERT_EQ(cake_run({"eval", "--model", model, "--test", te, "--out", a}).code, 0);
  ASSERT_EQ(cake_run({"eval", "--model", model, "--test", te, "--out", b, "--recall-mode", "all"}).code, 0);
  // All seven classes are present in the synthetic test split, so both modes agree.
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(cake_run({"eval", "--model", model, "--test", te, "--recall-mode", "some"}).code, 1);
}

TEST(Cli, AvkWithoutArousalValenceIsRuntimeError) {
  const auto [tr, te] = small_files();
  auto bundle = load_feature_file(tr);
  for (auto& r : bundle.records) r.av.reset();
  const std::string no_av = temp_path("no_av.cakefeat");
  write_feature_file(bundle, no_av);
  const auto r = cake_run({"train", "--variant", "avk", "--k", "1", "--data", no_av, "--test", te, "--seed", "7",
                           "--epochs", "1", "--out", temp_path("avk.cakeckpt")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("AV missing"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrorsExitOne) {
  auto r = cake_run({});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("synth"), std::string::npos);
  r = cake_run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  r = cake_run({"train", "--variant", "cake"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--data"), std::string::npos);
  r = cake_run({"vizmap", "--model", "m", "--resolution", "1", "--out-ppm", "x.ppm"});
  EXPECT_EQ(r.code, 1);
  r = cake_run({"vizmap", "--model", "m"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--out-ppm"), std::string::npos);
}

TEST(Cli, HelpExitsZero) {
  const auto r = cake_run({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--variant"), std::string::npos);
}

TEST(Cli, SeedIsRequired) {
  const auto [tr, te] = small_files();
  auto r = cake_run({"synth", "--out", temp_path("x.cakefeat"), "--out-test", temp_path("y.cakefeat")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--seed is required"), std::string::npos);
  r = cake_run({"train", "--data", tr, "--test", te, "--out", temp_path("z.cakeckpt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--seed is required"), std::string::npos);
  r = cake_run({"sweep", "--data", tr, "--test", te});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--seed is required"), std::string::npos);
}

TEST(Cli, MissingInputIsRuntimeError) {
  const auto r = cake_run({"eval", "--model", temp_path("nope.cakeckpt"), "--test", temp_path("nope.cakefeat")});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, ConfigFileValuesYieldToFlags) {
  const std::string cfg = temp_path("train.conf");
  {
    std::ofstream f(cfg);
    f << "# small run\n\nvariant = cake\nk = 2\nepochs = 6\nseed = 7\n";
  }
  const std::string from_file = temp_path("cfg_file.cakeckpt"), from_flags = temp_path("cfg_flags.cakeckpt");
  const std::string overridden = temp_path("cfg_over.cakeckpt");
  const auto [tr, te] = small_files();
  ASSERT_EQ(cake_run({"train", "--config", cfg, "--data", tr, "--test", te, "--out", from_file}).code, 0);
  ASSERT_EQ(cake_run({"train", "--variant", "cake", "--k", "2", "--epochs", "6", "--seed", "7", "--data", tr,
                      "--test", te, "--out", from_flags})
                .code,
            0);
  EXPECT_EQ(slurp(from_file), slurp(from_flags));

  ASSERT_EQ(cake_run({"train", "--config", cfg, "--k", "3", "--data", tr, "--test", te, "--out", overridden}).code, 0);
  EXPECT_EQ(load_checkpoint(overridden).config.k, 3u);
  ASSERT_EQ(train_small(temp_path("cfg_ref.cakeckpt")).code, 0);
  EXPECT_EQ(slurp(overridden), slurp(temp_path("cfg_ref.cakeckpt")));
}

TEST(Cli, ConfigFileErrors) {
  const std::string bad = temp_path("bad.conf");
  {
    std::ofstream f(bad);
    f << "k 3\n";
  }
  EXPECT_EQ(cake_run({"train", "--config", bad}).code, 1);
  EXPECT_EQ(cake_run({"train", "--config", temp_path("absent.conf")}).code, 2);
  EXPECT_EQ(cake_run({"train", "--config"}).code, 1);
}

TEST(Cli, SweepMatchesLibrary) {
  const auto [tr, te] = small_files();
  const std::string csv = temp_path("sweep.csv");
  ASSERT_EQ(cake_run({"sweep", "--ks", "2,3", "--epochs", "4", "--seed", "7", "--data", tr, "--test", te, "--out", csv})
                .code,
            0);
  const auto train_set = load_feature_file(tr, Split::train);
  const auto test_set = load_feature_file(te, Split::test);
  TrainConfig base = cli::TrainFlags{}.to_config(train_set, 7);
  base.max_epochs = 4;
  const std::vector<std::uint32_t> ks = {2, 3};
  std::ostringstream want;
  write_sweep_csv(want, sweep_representation_size(ks, Variant::cake, train_set, test_set, base));
  EXPECT_EQ(slurp(csv), want.str());
}

TEST(Cli, VizmapAndScatterAreDeterministic) {
  const auto [tr, te] = small_files();
  const std::string model = temp_path("viz.cakeckpt");
  ASSERT_EQ(cake_run({"train", "--k", "2", "--data", tr, "--test", te, "--seed", "7", "--epochs", "4", "--out", model})
                .code,
            0);
  for (const char* tag : {"a", "b"}) {
    const std::string p = temp_path(std::string("viz_") + tag + ".ppm"), s = temp_path(std::string("viz_") + tag + ".svg");
    const auto r = cake_run({"vizmap", "--model", model, "--test", te, "--resolution", "40", "--out-ppm", p, "--out-svg", s});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(temp_path("viz_a.ppm")), slurp(temp_path("viz_b.ppm")));
  EXPECT_EQ(slurp(temp_path("viz_a.svg")), slurp(temp_path("viz_b.svg")));
  EXPECT_EQ(slurp(temp_path("viz_a.ppm")).rfind("P6\n40 40\n255\n", 0), 0u);

  const std::string sc = temp_path("scatter.svg");
  ASSERT_EQ(cake_run({"scatter", "--data", tr, "--out", sc}).code, 0);
  EXPECT_EQ(slurp(sc), encode_av_scatter(load_feature_file(tr)));

  // A 3-d plain CAKE model has no map.
  const std::string k3 = temp_path("viz_k3.cakeckpt");
  ASSERT_EQ(train_small(k3).code, 0);
  EXPECT_EQ(cake_run({"vizmap", "--model", k3, "--out-ppm", temp_path("k3.ppm")}).code, 2);
}

TEST(Cli, GradcheckPasses) {
  const auto r = cake_run({"gradcheck", "--trials", "10", "--seed", "2"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("worst relative error"), std::string::npos);
  EXPECT_EQ(r.out.find(" FAIL"), std::string::npos);
}

}  // namespace
}  // namespace cake
