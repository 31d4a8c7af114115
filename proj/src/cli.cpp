#include "mtq/cli.hpp"

#include "mtq/audio_io.hpp"
#include "mtq/checkpoint.hpp"
#include "mtq/corpus.hpp"
#include "mtq/errors.hpp"
#include "mtq/evaluate.hpp"
#include "mtq/experiments.hpp"
#include "mtq/pseudo_labels.hpp"
#include "mtq/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

namespace mtq::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : Error {
  using Error::Error;
};

struct ModelOptions {
  std::string preset = "desk";
  std::vector<std::size_t> conv_channels;
  std::optional<std::size_t> blstm_hidden;
  std::optional<std::size_t> fc_width;
  std::vector<std::string> features;
  std::size_t emb_dim = 0;

  MtqNetConfig build() const {
    MtqNetConfig c;
    if (preset == "desk") {
      c = MtqNetConfig::desk();
    } else if (preset != "full") {
      throw UsageError("unknown preset " + preset + " (expected desk or full)");
    }
    if (!conv_channels.empty()) c.conv_channels = conv_channels;
    if (blstm_hidden) c.blstm_hidden = *blstm_hidden;
    if (fc_width) c.head_fc_width = *fc_width;
    if (!features.empty()) {
      c.features = {false, false, false};
      for (const auto& f : features) {
        if (f == "stft") c.features.stft = true;
        else if (f == "lfb") c.features.lfb = true;
        else if (f == "ssl") c.features.ssl = true;
        else throw UsageError("unknown feature stream " + f);
      }
    }
    c.emb_dim = emb_dim;
    return c;
  }
};

struct TrainOptions {
  std::string loss = "huber";
  double delta = 1.0;
  double alpha = 1.0;
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  double valid_fraction = 0.1;
  std::optional<double> target_train_loss;
  bool no_holdout = false;

  train::LossConfig loss_config() const {
    train::LossConfig c;
    c.kind = train::loss_kind_from_name(loss);
    c.delta = delta;
    c.frame_weight.fill(alpha);
    return c;
  }
  train::TrainConfig train_config() const {
    train::TrainConfig t;
    t.lr = lr;
    t.max_epochs = epochs;
    t.patience = patience;
    t.seed = seed;
    t.valid_fraction = valid_fraction;
    t.target_train_loss = target_train_loss;
    t.hold_out_validation = !no_holdout;
    return t;
  }
};

void add_model_options(CLI::App* sub, ModelOptions& m) {
  sub->add_option("--preset", m.preset, "model size preset: desk or full")
      ->check(CLI::IsMember({"desk", "full"}));
  sub->add_option("--conv-channels", m.conv_channels, "channels per conv layer");
  sub->add_option("--blstm-hidden", m.blstm_hidden, "BLSTM hidden size per direction");
  sub->add_option("--fc-width", m.fc_width, "head hidden width");
  sub->add_option("--features", m.features, "feature streams: stft lfb ssl");
  sub->add_option("--emb-dim", m.emb_dim, "SSL embedding dimension");
}

void add_train_options(CLI::App* sub, TrainOptions& t, const std::string& default_loss) {
  t.loss = default_loss;
  sub->add_option("--loss", t.loss, "huber, mse or mae")
      ->check(CLI::IsMember({"huber", "mse", "mae"}));
  sub->add_option("--delta", t.delta, "Huber delta")->check(CLI::PositiveNumber);
  sub->add_option("--alpha", t.alpha, "frame-level loss weight")->check(CLI::NonNegativeNumber);
  sub->add_option("--lr", t.lr, "learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--epochs", t.epochs, "maximum epochs")->check(CLI::PositiveNumber);
  sub->add_option("--patience", t.patience, "early-stopping patience");
  sub->add_option("--seed", t.seed, "random seed");
  sub->add_option("--valid-fraction", t.valid_fraction, "validation fraction")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--target-train-loss", t.target_train_loss,
                  "stop once the mean training loss drops below this");
  sub->add_flag("--no-holdout", t.no_holdout, "train on every entry, validate on the same set");
}

fs::path output_dir(const std::string& flag, const std::string& subcommand) {
  if (!flag.empty()) return flag;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return fs::path(root) / subcommand;
  }
  throw UsageError("--out is required (or set " + std::string(kOutputRootEnv) + ")");
}

void write_run_config(const CLI::App* sub, const fs::path& dir) {
  nlohmann::ordered_json j;
  j["subcommand"] = sub->get_name();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (opt->get_type_size_max() == 0) {
        j[name] = true;
      } else if (res.size() == 1 && opt->get_items_expected_max() <= 1) {
        j[name] = res.front();
      } else {
        j[name] = res;
      }
    } else {
      j[name] = opt->get_default_str();
    }
  }
  fs::create_directories(dir);
  std::ofstream out(dir / "run-config.json", std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write run-config.json in " + dir.string());
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

std::function<void(const train::EpochRecord&)> progress(std::ostream& err, int verbosity,
                                                        const std::string& label) {
  if (verbosity <= 0) return {};
  return [&err, label](const train::EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "[%s] epoch %zu train O=%.5f superv=%.5f valid superv=%.5f semi=%.5f%s\n",
                  label.c_str(), r.epoch, r.train.objective, r.train.superv, r.valid.superv,
                  r.valid.semi, r.best_so_far ? " *" : "");
    err << buf << std::flush;
  };
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task speech quality assessment toolkit", "mtq"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "print progress to stderr");

  std::function<void()> action;
  std::string out_flag;

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "synthesize a train/test corpus");
  corpus::CorpusConfig ccfg;
  std::vector<std::string> noises, enhancers;
  bool no_clean = false;
  corpus_cmd->add_option("--out", out_flag, "output directory");
  corpus_cmd->add_option("--n-train", ccfg.num_train, "training utterances");
  corpus_cmd->add_option("--n-test", ccfg.num_test, "test utterances");
  corpus_cmd->add_option("--seed", ccfg.seed, "corpus seed");
  corpus_cmd->add_option("--duration", ccfg.duration_s, "seconds per utterance");
  corpus_cmd->add_option("--noise", noises, "white pink modulated-tonal");
  corpus_cmd->add_option("--snr", ccfg.snr_db_grid, "SNR grid in dB");
  corpus_cmd->add_option("--enhancer", enhancers,
                         "none spectral-subtraction wiener-gain hard-clip lowpass");
  corpus_cmd->add_flag("--no-clean", no_clean, "omit the unprocessed clean condition");
  corpus_cmd->set_config("--config");
  corpus_cmd->callback([&] {
    action = [&] {
      if (!noises.empty()) {
        ccfg.noise_types.clear();
        for (const auto& n : noises) ccfg.noise_types.push_back(corpus::noise_from_name(n));
      }
      if (!enhancers.empty()) {
        ccfg.enhancers.clear();
        for (const auto& e : enhancers) ccfg.enhancers.push_back(corpus::enhancer_from_name(e));
      }
      ccfg.include_clean = !no_clean;
      const fs::path dir = output_dir(out_flag, "corpus");
      fs::create_directories(dir);
      const auto paths = corpus::build_corpus(ccfg, dir);
      write_run_config(corpus_cmd, dir);
      out << paths.train_manifest.string() << '\n' << paths.test_manifest.string() << '\n';
    };
  });

  // labels
  auto* labels_cmd = app.add_subcommand("labels", "compute pseudo labels from paired audio");
  std::string manifest_in, manifest_out;
  labels_cmd->add_option("--manifest", manifest_in, "input manifest")->required();
  labels_cmd->add_option("--out", manifest_out, "output manifest path")->required();
  labels_cmd->set_config("--config");
  int labels_status = kExitOk;
  labels_cmd->callback([&] {
    action = [&] {
      const fs::path out_path(manifest_out);
      if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
      // The output is a single manifest, usually next to the corpus's own
      // run-config.json, so no echo is written here.
      const auto report = oracle::compute_pseudo_labels(manifest_in, out_path);
      out << "computed " << report.computed << ", preserved " << report.preserved << ", failed "
          << report.errors.size() << '\n';
      for (const auto& e : report.errors) err << "error: " << e.id << ": " << e.message << '\n';
      if (!report.ok()) labels_status = kExitFailure;
    };
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model (scratch, kt, mpl or teacher)");
  ModelOptions model_opts;
  TrainOptions train_opts;
  std::string mode = "mpl", init, train_manifest;
  train_cmd->add_option("--manifest", train_manifest, "training manifest")->required();
  train_cmd->add_option("--out", out_flag, "output directory");
  train_cmd->add_option("--mode", mode, "scratch, kt, mpl or teacher")
      ->check(CLI::IsMember({"scratch", "kt", "mpl", "teacher"}));
  train_cmd->add_option("--init", init, "initial checkpoint (the teacher for kt/mpl)");
  add_model_options(train_cmd, model_opts);
  add_train_options(train_cmd, train_opts, "huber");
  train_cmd->set_config("--config");
  train_cmd->callback([&] {
    if (mode == "kt" && init.empty()) throw CLI::ValidationError("--init", "mode kt requires --init");
    action = [&] {
      const fs::path dir = output_dir(out_flag, "train");
      train::TrainConfig tc = train_opts.train_config();
      tc.mode = train::mode_from_name(mode);
      if (!init.empty()) tc.init_checkpoint = init;
      tc.on_epoch = progress(err, verbosity, mode);
      const auto result = train::train(model_opts.build(), read_manifest(train_manifest),
                                       train_opts.loss_config(), tc);
      const auto ckpt = train::write_training_outputs(result, dir);
      write_run_config(train_cmd, dir);
      out << ckpt.string() << " (best epoch " << result.best_epoch << " of "
          << result.history.size() << ")\n";
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a labeled manifest");
  std::string ckpt_path, eval_manifest, format = "json";
  eval_cmd->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "test manifest")->required();
  eval_cmd->add_option("--out", out_flag, "directory for report.json");
  eval_cmd->add_option("--format", format, "stdout format: json or table")
      ->check(CLI::IsMember({"json", "table"}));
  eval_cmd->set_config("--config");
  eval_cmd->callback([&] {
    action = [&] {
      const auto report = eval::evaluate(ckpt_path, eval_manifest);
      const auto j = eval::to_json(report);
      if (!out_flag.empty()) {
        fs::create_directories(out_flag);
        write_json(fs::path(out_flag) / "report.json", j);
        write_run_config(eval_cmd, out_flag);
      }
      if (format == "table") out << eval::to_table(report);
      else out << j.dump(2) << '\n';
    };
  });

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "score one degraded WAV");
  std::string wav_path, emb_path;
  predict_cmd->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  predict_cmd->add_option("--wav", wav_path, "16 kHz mono PCM16 WAV")->required();
  predict_cmd->add_option("--emb", emb_path, "embedding sidecar (.mtqe)");
  predict_cmd->callback([&] {
    action = [&] {
      const MtqNet model = load_model(ckpt_path);
      std::optional<fs::path> emb;
      if (!emb_path.empty()) {
        if (!model.config().features.ssl) {
          throw ConfigError("--emb given but the model does not consume embeddings");
        }
        emb = fs::path(emb_path);
      } else if (model.config().features.ssl) {
        emb = fs::path(wav_path).replace_extension(".mtqe");
      }
      const PrimaryScores s = predict(model, io::read_wav(wav_path), emb);
      char buf[96];
      std::snprintf(buf, sizeof(buf), "smos=%.4f nmos=%.4f gmos=%.4f\n", s.smos, s.nmos, s.gmos);
      out << buf;
    };
  });

  // sweep-delta and compare-modes share their options
  std::string train_path, test_path;
  std::vector<double> deltas = experiments::kDeltaGrid;
  auto* sweep_cmd = app.add_subcommand("sweep-delta", "MPL runs over a grid of Huber deltas");
  auto* compare_cmd = app.add_subcommand("compare-modes", "teacher, then scratch, KT and MPL");
  ModelOptions sweep_model, compare_model;
  TrainOptions sweep_train, compare_train;
  for (auto [cmd, m, t, loss] :
       {std::tuple{sweep_cmd, &sweep_model, &sweep_train, "huber"},
        std::tuple{compare_cmd, &compare_model, &compare_train, "mse"}}) {
    cmd->add_option("--train", train_path, "training manifest")->required();
    cmd->add_option("--test", test_path, "test manifest")->required();
    cmd->add_option("--out", out_flag, "output directory");
    add_model_options(cmd, *m);
    add_train_options(cmd, *t, loss);
    cmd->set_config("--config");
  }
  sweep_cmd->add_option("--deltas", deltas, "delta grid");
  sweep_cmd->callback([&] {
    action = [&] {
      const fs::path dir = output_dir(out_flag, "sweep-delta");
      experiments::RunSpec spec{sweep_model.build(), sweep_train.loss_config(),
                                sweep_train.train_config()};
      spec.train.on_epoch = progress(err, verbosity, "sweep");
      fs::create_directories(dir);
      write_run_config(sweep_cmd, dir);
      const auto rows = experiments::sweep_delta(read_manifest(train_path), read_manifest(test_path),
                                                 spec, deltas, dir);
      out << experiments::sweep_csv(rows);
    };
  });
  compare_cmd->callback([&] {
    action = [&] {
      const fs::path dir = output_dir(out_flag, "compare-modes");
      experiments::RunSpec spec{compare_model.build(), compare_train.loss_config(),
                                compare_train.train_config()};
      spec.train.on_epoch = progress(err, verbosity, "compare");
      fs::create_directories(dir);
      write_run_config(compare_cmd, dir);
      const auto report = experiments::compare_modes(read_manifest(train_path),
                                                     read_manifest(test_path), spec, dir);
      out << report.dump(2) << '\n';
    };
  });

  std::vector<const char*> argv{"mtq"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  try {
    if (action) action();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return labels_status;
}

}  // namespace mtq::cli
