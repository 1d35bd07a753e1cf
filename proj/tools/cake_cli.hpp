#pragma once

// The `cake` command line. Exit codes: 0 success, 1 usage error, 2 runtime
// or data error.
//
// Every subcommand accepts --config FILE: flat `key=value` lines (blank
// lines and lines starting with '#' are ignored) where each key is a long
// flag name without the dashes. Config values are applied first, so flags
// given on the command line override them.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cake/cake.hpp"

namespace cake::cli {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  for (const auto& tok : split(s, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(t, &used)));
      } else {
        const long long v = std::stoll(t, &used);
        if (v < 0) throw std::invalid_argument("negative");
        out.push_back(static_cast<T>(v));
      }
      if (used != t.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UsageError(std::string("bad value '") + t + "' in " + what);
    }
  }
  return out;
}

// "a,b,c|d,e,f" -> {{a,b,c},{d,e,f}}
inline std::vector<Vec64> parse_groups(const std::string& s, const char* what) {
  std::vector<Vec64> out;
  if (trim(s).empty()) return out;
  for (const auto& g : split(s, '|')) out.push_back(parse_list<double>(g, what));
  return out;
}

// Moves `--config FILE` out of args and splices the file's key=value pairs
// in as flags ahead of the remaining arguments.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file argument");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return rest;
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cli: cannot open config file '" + config_path + "'");
  std::vector<std::string> out;
  if (!rest.empty()) out.push_back(rest.front());  // subcommand stays first
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(config_path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value == "false") continue;
    out.push_back("--" + key);
    if (value != "true") out.push_back(value);
  }
  out.insert(out.end(), rest.begin() + (rest.empty() ? 0 : 1), rest.end());
  return out;
}

struct TrainFlags {
  std::string variant = "cake";
  std::uint32_t k = 3;
  std::size_t batch_size = 64;
  std::uint32_t epochs = 200;
  std::uint32_t patience = 20;
  std::uint32_t eval_every = 1;
  double dropout = 0.5;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::string av_source = "regressor";
  std::uint32_t av_epochs = 2000;
  double av_lr = 1e-4;
  double log_base = std::numbers::e;

  void add_to(CLI::App* app, bool with_k) {
    app->add_option("--variant", variant, "cake | av | avk | cake-norm")->capture_default_str();
    if (with_k) app->add_option("--k", k, "learned embedding dimensions (0 for av)")->capture_default_str();
    app->add_option("--batch-size", batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--epochs", epochs, "maximum epochs")->capture_default_str();
    app->add_option("--patience", patience, "evaluations without improvement before stopping")->capture_default_str();
    app->add_option("--eval-every", eval_every)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--dropout", dropout, "dropout rate on input features")->capture_default_str();
    app->add_option("--lr", lr)->capture_default_str();
    app->add_option("--beta1", beta1)->capture_default_str();
    app->add_option("--beta2", beta2)->capture_default_str();
    app->add_option("--eps", eps)->capture_default_str();
    app->add_option("--av-source", av_source, "record | regressor")->capture_default_str();
    app->add_option("--av-epochs", av_epochs, "Adam refinement epochs of the AV head")->capture_default_str();
    app->add_option("--av-lr", av_lr, "learning rate of the AV head refinement")->capture_default_str();
    app->add_option("--log-base", log_base, "logarithm base of the dataset weight")->capture_default_str();
  }

  TrainConfig to_config(const DatasetBundle& train_set, std::uint64_t seed) const {
    TrainConfig c;
    c.model.variant = parse_variant(variant);
    c.model.k = c.model.variant == Variant::av ? 0 : k;
    c.model.dim = train_set.dim;
    c.model.n_domains = static_cast<std::uint32_t>(train_set.domains.size());
    c.model.n_classes = kNumEmotions;
    c.model.dropout_rate = dropout;
    c.model.seed = seed;
    c.model.av_source = parse_av_source(av_source);
    c.batch_size = batch_size;
    c.max_epochs = epochs;
    c.patience = patience;
    c.eval_every = eval_every;
    c.seed = seed;
    c.adam = AdamHyper{lr, beta1, beta2, eps};
    c.av_epochs = av_epochs;
    c.av_adam.lr = av_lr;
    c.log_base = log_base;
    return c;
  }
};

inline void write_text_file(const std::string& path, const std::string& text) {
  detail::write_file(path, text, "cli");
}

inline EvalReport eval_report(const Checkpoint& ck, const DatasetBundle& test) {
  return evaluate(ck.params, ck.config, test);
}

inline int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compact emotion embeddings: training, evaluation and emotion maps", "cake"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1, 1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic multi-domain corpus");
  SynthConfig sc;
  std::optional<std::uint64_t> seed;
  std::string out_path, out_test, prototypes, imbalance, train_counts = "1200,550,250", test_counts = "350,200,150";
  synth->add_option("--seed", seed, "random seed (required)");
  synth->add_option("--out", out_path, "training feature file")->required();
  synth->add_option("--out-test", out_test, "test feature file")->required();
  synth->add_option("--domains", sc.n_domains)->capture_default_str();
  synth->add_option("--classes", sc.n_classes)->capture_default_str();
  synth->add_option("--dim", sc.dim, "feature dimension D")->capture_default_str();
  synth->add_option("--latent-dim", sc.latent_dim)->capture_default_str();
  synth->add_option("--noise", sc.noise_sigma, "latent noise sigma")->capture_default_str();
  synth->add_option("--shift", sc.shift_sigma, "domain shift sigma")->capture_default_str();
  synth->add_option("--av-noise", sc.av_noise)->capture_default_str();
  synth->add_option("--prototype-scale", sc.prototype_scale)->capture_default_str();
  synth->add_option("--prototypes", prototypes, "class prototypes, e.g. '0,0,0|1.5,0,0|...'");
  synth->add_option("--imbalance", imbalance, "per-domain class ratios, e.g. '9,1|1,1'");
  synth->add_option("--train-counts", train_counts, "per-domain training sizes")->capture_default_str();
  synth->add_option("--test-counts", test_counts, "per-domain test sizes")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  TrainFlags tf;
  std::string data_path, test_path, history_path;
  tf.add_to(train_cmd, true);
  train_cmd->add_option("--seed", seed, "random seed (required)");
  train_cmd->add_option("--data", data_path, "training feature file")->required();
  train_cmd->add_option("--test", test_path, "test feature file")->required();
  train_cmd->add_option("--out", out_path, "checkpoint path")->required();
  train_cmd->add_option("--history", history_path, "per-epoch history CSV");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a feature file");
  std::string model_path, recall_mode = "present";
  bool show_confusion = false;
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--test", test_path)->required();
  eval_cmd->add_option("--out", out_path, "metrics CSV (text report to stdout otherwise)");
  eval_cmd->add_option("--recall-mode", recall_mode, "present | all: classes entering mean recall")->capture_default_str();
  eval_cmd->add_flag("--confusion", show_confusion, "print confusion matrices");

  // cross-eval
  auto* cross_cmd = app.add_subcommand("cross-eval", "F1 of every head on every domain");
  cross_cmd->add_option("--model", model_path)->required();
  cross_cmd->add_option("--test", test_path)->required();
  cross_cmd->add_option("--out", out_path, "matrix CSV (stdout otherwise)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "representation-size sweep");
  TrainFlags sf;
  std::string ks = "2,3,4,6";
  std::uint32_t runs = 1, jobs = 1;
  sf.add_to(sweep_cmd, false);
  sweep_cmd->add_option("--ks", ks, "comma-separated k values")->capture_default_str();
  sweep_cmd->add_option("--runs", runs, "runs per k (seeds seed..seed+runs-1)")->capture_default_str()->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--jobs", jobs, "parallel training jobs")->capture_default_str()->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", seed, "random seed (required)");
  sweep_cmd->add_option("--data", data_path)->required();
  sweep_cmd->add_option("--test", test_path)->required();
  sweep_cmd->add_option("--out", out_path, "sweep CSV (stdout otherwise)");

  // vizmap
  auto* viz_cmd = app.add_subcommand("vizmap", "dense emotion map of a 2-d or spherical model");
  std::uint32_t domain = 0;
  std::size_t resolution = 200;
  std::string out_ppm, out_svg;
  viz_cmd->add_option("--model", model_path)->required();
  viz_cmd->add_option("--domain", domain, "classifier head to draw")->capture_default_str();
  viz_cmd->add_option("--test", test_path, "feature file for axis ranges and the F1 overlay");
  viz_cmd->add_option("--resolution", resolution)->capture_default_str()->check(CLI::Range(2, 4096));
  viz_cmd->add_option("--out-ppm", out_ppm, "raster output (binary PPM)");
  viz_cmd->add_option("--out-svg", out_svg, "vector output (SVG)");

  // scatter
  auto* scatter_cmd = app.add_subcommand("scatter", "arousal-valence scatter plot (SVG)");
  scatter_cmd->add_option("--data", data_path)->required();
  scatter_cmd->add_option("--out", out_path)->required();

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  std::uint32_t trials = 20;
  double fd_eps = 1e-5, tol = 1e-4;
  std::uint64_t grad_seed = 0;
  grad_cmd->add_option("--trials", trials)->capture_default_str();
  grad_cmd->add_option("--seed", grad_seed)->capture_default_str();
  grad_cmd->add_option("--eps", fd_eps)->capture_default_str();
  grad_cmd->add_option("--tol", tol, "max relative error")->capture_default_str();

  for (auto* sub : app.get_subcommands({})) {
    sub->add_option("--config", "key=value file; command-line flags take precedence");
  }

  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const UsageError& e) {
    err << "cake: " << e.what() << "\n" << app.help();
    return 1;
  } catch (const std::exception& e) {
    err << "cake: " << e.what() << "\n";
    return 2;
  }
  std::vector<const char*> argv = {"cake"};
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "cake: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    auto need_seed = [&] {
      if (!seed) throw UsageError("--seed is required for '" + name + "'");
      return *seed;
    };

    if (cmd == synth) {
      sc.seed = need_seed();
      sc.train_counts = parse_list<std::uint64_t>(train_counts, "--train-counts");
      sc.test_counts = parse_list<std::uint64_t>(test_counts, "--test-counts");
      sc.prototypes = parse_groups(prototypes, "--prototypes");
      sc.imbalance = parse_groups(imbalance, "--imbalance");
      const auto corpus = synth_generate(sc);
      write_feature_file(corpus.train, out_path);
      write_feature_file(corpus.test, out_test);
      out << "wrote " << corpus.train.records.size() << " training and " << corpus.test.records.size()
          << " test records\n";
    } else if (cmd == train_cmd) {
      const auto s = need_seed();
      const auto train_set = load_feature_file(data_path, Split::train);
      const auto test_set = load_feature_file(test_path, Split::test);
      const TrainConfig cfg = tf.to_config(train_set, s);
      const TrainResult res = train(train_set, test_set, cfg);
      for (auto [j, c] : res.weights.empty_classes) {
        err << "cake train: warning: domain '" << train_set.domains[j].name << "' has no '"
            << emotion_name(static_cast<EmotionClass>(c)) << "' samples; class weight set to 0\n";
      }
      save_checkpoint(Checkpoint{cfg.model, res.params, res.optimizer}, out_path);
      if (!history_path.empty()) {
        std::ostringstream h;
        write_history_csv(h, res.history, train_set.domains.size());
        write_text_file(history_path, h.str());
      }
      out << "best weighted F1 " << format_double(res.best_weighted_f1) << " at epoch " << res.best_epoch << " ("
          << res.history.epochs.size() << " epochs run)\n";
    } else if (cmd == eval_cmd) {
      const auto ck = load_checkpoint(model_path);
      const auto test_set = load_feature_file(test_path, Split::test);
      RecallSupport mode;
      if (recall_mode == "present") mode = RecallSupport::present_only;
      else if (recall_mode == "all") mode = RecallSupport::all_classes;
      else throw UsageError("--recall-mode must be 'present' or 'all'");
      EvalReport rep = eval_report(ck, test_set);
      for (std::size_t j = 0; j < rep.scores.size(); ++j) {
        if (rep.confusion[j].total()) rep.scores[j].mean_recall = mean_class_recall(rep.confusion[j], mode);
      }
      std::ostringstream os;
      if (!out_path.empty()) {
        write_scores_csv(os, rep.scores, rep.weighted_f1);
        write_text_file(out_path, os.str());
      } else {
        write_scores_text(out, rep.scores, rep.weighted_f1);
      }
      if (show_confusion) {
        for (std::size_t j = 0; j < rep.confusion.size(); ++j) {
          out << "\n" << rep.scores[j].domain << "\n";
          write_confusion_text(out, rep.confusion[j]);
        }
      }
    } else if (cmd == cross_cmd) {
      const auto ck = load_checkpoint(model_path);
      const auto test_set = load_feature_file(test_path, Split::test);
      const Mat64 m = cross_evaluate(ck.params, ck.config, test_set);
      std::ostringstream os;
      write_matrix_csv(os, m, test_set.domains);
      if (out_path.empty()) out << os.str();
      else write_text_file(out_path, os.str());
    } else if (cmd == sweep_cmd) {
      const auto s = need_seed();
      const auto train_set = load_feature_file(data_path, Split::train);
      const auto test_set = load_feature_file(test_path, Split::test);
      const TrainConfig base = sf.to_config(train_set, s);
      const auto k_list = parse_list<std::uint32_t>(ks, "--ks");
      const auto rows = sweep_representation_size(k_list, base.model.variant, train_set, test_set, base, runs, jobs);
      std::ostringstream os;
      write_sweep_csv(os, rows);
      if (out_path.empty()) out << os.str();
      else write_text_file(out_path, os.str());
    } else if (cmd == viz_cmd) {
      if (out_ppm.empty() && out_svg.empty()) throw UsageError("vizmap needs --out-ppm and/or --out-svg");
      const auto ck = load_checkpoint(model_path);
      std::optional<DatasetBundle> test_set;
      std::vector<Vec64> observed;
      if (!test_path.empty()) {
        test_set = load_feature_file(test_path, Split::test);
        if (supports_plane(ck.config)) {
          for (const auto& r : test_set->records) observed.push_back(embed(ck.params, ck.config, r));
        }
      }
      std::optional<std::span<const Vec64>> obs;
      if (!observed.empty()) obs = std::span<const Vec64>(observed);
      const GridSpec grid = plan_grid(ck.config, obs, resolution);
      const EmotionMap map = render_emotion_map(ck.params, ck.config, grid, domain, test_set ? &*test_set : nullptr);
      if (!out_ppm.empty()) emit_map_image(map, out_ppm, ImageFormat::raster);
      if (!out_svg.empty()) emit_map_image(map, out_svg, ImageFormat::vector);
    } else if (cmd == scatter_cmd) {
      scatter_av(load_feature_file(data_path), out_path);
    } else if (cmd == grad_cmd) {
      // Cycles the variants: cake-2, cake-3, av, avk-1, cake-norm-3, with
      // D in {8, 32}, batch in {1, 4, 16} and dropout off/on.
      SeededRng rng(grad_seed);
      struct Shape {
        Variant v;
        std::uint32_t k;
      };
      const Shape shapes[] = {{Variant::cake, 2}, {Variant::cake, 3}, {Variant::av, 0}, {Variant::avk, 1},
                              {Variant::cake_norm, 3}};
      const std::uint32_t dims[] = {8, 32};
      const std::size_t batches[] = {1, 4, 16};
      double worst = 0.0;
      for (std::uint32_t t = 0; t < trials; ++t) {
        const Shape& sh = shapes[t % 5];
        const auto c = make_gradcheck_case(rng, sh.v, sh.k, dims[t % 2], batches[t % 3], (t / 5) % 2 == 1);
        const auto r = check_gradients(c, fd_eps);
        worst = std::max(worst, r.max_rel_error);
        out << "trial " << t << " variant=" << variant_name(sh.v) << " k=" << c.cfg.k << " D=" << c.cfg.dim
            << " batch=" << c.records.size() << " dropout=" << (c.masks.empty() ? "off" : "on")
            << " max_rel_err=" << r.max_rel_error << (r.max_rel_error <= tol ? " ok" : " FAIL") << "\n";
      }
      out << "worst relative error " << worst << " (tolerance " << tol << ")\n";
      if (worst > tol) {
        err << "cake gradcheck: model: analytic gradient disagrees with finite differences\n";
        return 2;
      }
    }
  } catch (const UsageError& e) {
    err << "cake " << name << ": " << e.what() << "\n" << cmd->help();
    return 1;
  } catch (const Error& e) {
    err << "cake " << name << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "cake " << name << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace cake::cli
