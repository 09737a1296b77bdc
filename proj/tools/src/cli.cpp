#include "hman_cli/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hman/checkpoint.hpp"
#include "hman/data_io.hpp"
#include "hman/errors.hpp"
#include "hman/gradcheck.hpp"
#include "hman/metrics.hpp"
#include "hman/raster.hpp"
#include "hman/synthetic.hpp"
#include "hman/trainer.hpp"
#include "json_config.hpp"

namespace hman::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03zu.hman", epoch);
  return buf;
}

// Placeholder so --config appears in help; the file is expanded before parsing.
void add_config_option(CLI::App* sub) {
  static std::string ignored;
  sub->add_option("--config", ignored, "JSON file of option values; command-line flags take precedence");
}

// ---------------------------------------------------------------- gen-synth

struct GenSynthArgs {
  SyntheticSpec spec;
  std::string out;
};

void setup_gen_synth(CLI::App& app, GenSynthArgs& a, std::function<int()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("gen-synth", "Generate a synthetic hierarchical-sequence dataset");
  add_config_option(sub);
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--classes", a.spec.classes, "Number of classes")->capture_default_str();
  sub->add_option("--vocab", a.spec.vocab, "Sub-action vocabulary size")->capture_default_str();
  sub->add_option("--segments", a.spec.segments, "Sub-actions per clip")->capture_default_str();
  sub->add_option("--min-length", a.spec.min_length, "Shortest segment in frames")->capture_default_str();
  sub->add_option("--max-length", a.spec.max_length, "Longest segment in frames")->capture_default_str();
  sub->add_option("--grid", a.spec.grid, "Grid side K")->capture_default_str();
  sub->add_option("--depth", a.spec.depth, "Feature depth D")->capture_default_str();
  sub->add_option("--noise", a.spec.noise, "Gaussian noise standard deviation")->capture_default_str();
  sub->add_option("--clips-per-class", a.spec.clips_per_class, "Clips generated per class")->capture_default_str();
  sub->add_option("--test-fraction", a.spec.test_fraction, "Share of each class held out")->capture_default_str();
  sub->add_option("--seed", a.spec.seed, "Generator seed")->capture_default_str();
  sub->callback([&a, &action, &out] {
    action = [&a, &out] {
      const SyntheticDataset ds = gen_synthetic(a.spec);
      write_dataset(a.out, ds.data);
      nlohmann::ordered_json task;
      task["class_tokens"] = ds.task.class_tokens;
      task["token_location"] = ds.task.token_location;
      write_text(fs::path(a.out) / "task.json", task.dump(2) + "\n");
      const auto train = ds.data.indices(Split::Train).size();
      out << "wrote " << ds.data.samples.size() << " clips (" << train << " train, "
          << ds.data.samples.size() - train << " test) to " << a.out << "\n";
      return kSuccess;
    };
  });
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string attention = "soft";
  std::string sampling = "window";
  std::string eval_boundary = "noise-free";
  ModelConfig model;
  TrainConfig train;
  bool eval_test = false;
};

nlohmann::ordered_json run_config_json(const TrainArgs& a) {
  nlohmann::ordered_json j;
  j["data"] = a.data;
  j["out"] = a.out;
  j["attention"] = a.attention;
  j["layers"] = a.model.layers;
  j["hidden"] = a.model.hidden;
  j["literal-eq3"] = a.model.literal_eq3;
  j["eval-boundary"] = a.eval_boundary;
  j["force-boundaries"] = a.model.force_boundaries;
  j["boundary-tau"] = a.model.boundary_tau;
  j["attention-tau"] = a.model.attention_tau;
  j["epochs"] = a.train.epochs;
  j["batch"] = a.train.batch;
  j["steps"] = a.train.steps;
  j["lr"] = a.train.lr;
  j["lr-late"] = a.train.lr_late;
  j["lr-drop-after"] = a.train.lr_drop_after;
  j["beta1"] = a.train.beta1;
  j["beta2"] = a.train.beta2;
  j["adam-eps"] = a.train.eps;
  j["lambda"] = a.train.lambda;
  j["clip-norm"] = a.train.clip_norm;
  j["sampling"] = a.sampling;
  j["mc-samples"] = a.train.mc_samples;
  j["seed"] = a.train.seed;
  j["eval-test"] = a.eval_test;
  return j;
}

int do_train(TrainArgs& a, std::ostream& out) {
  a.model.attention = parse_attention_mode(a.attention);
  a.train.sampling = parse_frame_sampling(a.sampling);
  if (a.eval_boundary == "noise-free") a.model.eval_boundary = EvalBoundary::NoiseFree;
  else if (a.eval_boundary == "sampled") a.model.eval_boundary = EvalBoundary::Sampled;
  else throw ConfigError("--eval-boundary must be noise-free or sampled");
  a.train.validate();
  if (!fs::is_directory(a.data)) throw ConfigError("data directory '" + a.data + "' does not exist");

  const Dataset data = load_dataset(a.data);
  const auto train_idx = data.indices(Split::Train);
  const auto test_idx = data.indices(Split::Test);
  if (train_idx.empty()) throw ConfigError("dataset has no training samples");
  a.model.grid = data.samples.front().grid;
  a.model.depth = data.samples.front().features.dim(2);
  a.model.classes = data.classes();
  a.model.validate();

  HmanModel model(a.model, a.train.seed);
  Trainer trainer(model, a.train);

  const fs::path dir(a.out);
  fs::create_directories(dir / "checkpoints");
  write_text(dir / "run.json", run_config_json(a).dump(2) + "\n");
  std::string metrics = metrics_csv_header(a.model.layers);
  std::string eval_csv = "epoch,test_accuracy\n";
  const bool adaptive = a.model.attention == AttentionMode::GumbelAdaptive;
  std::ofstream tau_file;
  if (adaptive) {
    tau_file.open(dir / "tau.csv", std::ios::trunc);
    tau_file << "iteration,step,tau_min,tau_mean,tau_max\n";
  }
  std::size_t tau_written = 0;
  for (std::size_t e = 1; e <= a.train.epochs; ++e) {
    const EpochMetrics m = trainer.train_epoch(data, train_idx);
    metrics += metrics_csv_row(m);
    write_text(dir / "metrics.csv", metrics);
    if (adaptive) {
      const auto& log = trainer.tau_log();
      for (; tau_written < log.size(); ++tau_written) {
        const TauRecord& r = log[tau_written];
        tau_file << r.iteration << "," << r.step << "," << fmt(r.min, "%.17g") << "," << fmt(r.mean, "%.17g")
                 << "," << fmt(r.max, "%.17g") << "\n";
      }
      tau_file.flush();
    }
    save_checkpoint(dir / "checkpoints" / epoch_name(e), make_checkpoint(model, trainer.state()));
    out << "epoch " << e << " iter " << m.iteration << " loss " << fmt(m.loss) << " acc " << fmt(m.accuracy, "%.4f")
        << " lr " << fmt(m.lr, "%g");
    for (std::size_t l = 0; l < m.update_rates.size(); ++l) out << " u" << l + 1 << " " << fmt(m.update_rates[l], "%.3f");
    if (a.eval_test && !test_idx.empty()) {
      const double acc = evaluate(model, data, test_idx, a.train.steps).accuracy();
      eval_csv += std::to_string(e) + "," + fmt(acc, "%.17g") + "\n";
      write_text(dir / "eval.csv", eval_csv);
      out << " test " << fmt(acc, "%.4f");
    }
    out << "\n";
  }
  return kSuccess;
}

void setup_train(CLI::App& app, TrainArgs& a, std::function<int()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("train", "Train a model and write per-epoch checkpoints and metrics");
  add_config_option(sub);
  sub->add_option("--data", a.data, "Dataset directory containing manifest.json")->required();
  sub->add_option("--out", a.out, "Run directory")->required();
  sub->add_option("--attention", a.attention, "soft | reinforce | gumbel-constant | gumbel-adaptive")
      ->capture_default_str();
  sub->add_option("--layers", a.model.layers, "HM-RNN layers")->capture_default_str();
  sub->add_option("--hidden", a.model.hidden, "Hidden units per layer")->capture_default_str();
  sub->add_flag("--literal-eq3", a.model.literal_eq3, "Use h = o * c instead of o * tanh(c)");
  sub->add_option("--eval-boundary", a.eval_boundary, "noise-free | sampled")->capture_default_str();
  sub->add_flag("--force-boundaries", a.model.force_boundaries, "Hold every boundary at 1");
  sub->add_option("--boundary-tau", a.model.boundary_tau, "Boundary detector temperature")->capture_default_str();
  sub->add_option("--attention-tau", a.model.attention_tau, "Constant hard-attention temperature")
      ->capture_default_str();
  sub->add_option("--epochs", a.train.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--batch", a.train.batch, "Mini-batch size")->capture_default_str();
  sub->add_option("--steps", a.train.steps, "Frames per training clip and evaluation block")->capture_default_str();
  sub->add_option("--lr", a.train.lr, "Initial learning rate")->capture_default_str();
  sub->add_option("--lr-late", a.train.lr_late, "Learning rate after the drop")->capture_default_str();
  sub->add_option("--lr-drop-after", a.train.lr_drop_after, "Iterations before the drop")->capture_default_str();
  sub->add_option("--beta1", a.train.beta1, "Adam beta1")->capture_default_str();
  sub->add_option("--beta2", a.train.beta2, "Adam beta2")->capture_default_str();
  sub->add_option("--adam-eps", a.train.eps, "Adam epsilon")->capture_default_str();
  sub->add_option("--lambda", a.train.lambda, "REINFORCE weight")->capture_default_str();
  sub->add_option("--clip-norm", a.train.clip_norm, "Global gradient-norm clip")->capture_default_str();
  sub->add_option("--sampling", a.sampling, "window | random frame selection")->capture_default_str();
  sub->add_option("--mc-samples", a.train.mc_samples, "REINFORCE samples per clip")->capture_default_str();
  sub->add_option("--seed", a.train.seed, "Seed for initialization, shuffling and noise")->capture_default_str();
  sub->add_flag("--eval-test", a.eval_test, "Evaluate on the test split after every epoch");
  sub->callback([&a, &action, &out] { action = [&a, &out] { return do_train(a, out); }; });
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::size_t steps = 60;
  std::string out;
  bool ap = false;
};

int do_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  if (!fs::is_directory(a.data)) throw ConfigError("data directory '" + a.data + "' does not exist");
  const Dataset data = load_dataset(a.data);
  if (data.classes() != ck.config.classes) {
    throw ConfigError("checkpoint has " + std::to_string(ck.config.classes) + " classes but the manifest lists " +
                      std::to_string(data.classes()));
  }
  if (!data.samples.empty() && (data.samples.front().grid != ck.config.grid ||
                                data.samples.front().features.dim(2) != ck.config.depth)) {
    throw ConfigError("dataset grid/depth do not match the checkpoint");
  }
  const HmanModel model = restore_model(ck);
  const auto idx = data.indices(parse_split(a.split));
  if (idx.empty()) throw ConfigError("split '" + a.split + "' is empty");
  const EvalReport report = evaluate(model, data, idx, a.steps);
  const auto confusion = confusion_matrix(report.labels, report.predicted, data.classes());
  const auto per_class = per_class_accuracy(confusion);

  std::vector<double> ap(data.classes(), 0.0);
  if (a.ap) {
    for (std::size_t c = 0; c < data.classes(); ++c) {
      std::vector<double> scores;
      std::vector<bool> positive;
      for (std::size_t i = 0; i < report.labels.size(); ++i) {
        scores.push_back(report.probs[i][c]);
        positive.push_back(report.labels[i] == c);
      }
      ap[c] = average_precision(scores, positive);
    }
  }

  out << "accuracy " << fmt(report.accuracy(), "%.4f") << " (" << idx.size() << " " << a.split << " clips)\n";
  double map = 0.0;
  for (std::size_t c = 0; c < data.classes(); ++c) {
    out << "  " << data.manifest.classes[c] << " accuracy " << fmt(per_class[c], "%.4f");
    if (a.ap) out << " ap " << fmt(ap[c], "%.4f");
    out << "\n";
    map += ap[c];
  }
  if (a.ap) out << "mAP " << fmt(map / static_cast<double>(data.classes()), "%.4f") << "\n";

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    std::string cm;
    for (const auto& row : confusion) {
      for (std::size_t j = 0; j < row.size(); ++j) cm += (j ? "," : "") + std::to_string(row[j]);
      cm += "\n";
    }
    write_text(dir / "confusion.csv", cm);
    std::string pc = a.ap ? "class,accuracy,ap\n" : "class,accuracy\n";
    for (std::size_t c = 0; c < data.classes(); ++c) {
      pc += data.manifest.classes[c] + "," + fmt(per_class[c], "%.17g");
      if (a.ap) pc += "," + fmt(ap[c], "%.17g");
      pc += "\n";
    }
    write_text(dir / "per_class.csv", pc);
  }
  return kSuccess;
}

void setup_eval(CLI::App& app, EvalArgs& a, std::function<int()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("eval", "Evaluate a checkpoint: accuracy, per-class accuracy, confusion matrix");
  add_config_option(sub);
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  sub->add_option("--data", a.data, "Dataset directory")->required();
  sub->add_option("--split", a.split, "train | test")->capture_default_str();
  sub->add_option("--steps", a.steps, "Frames per evaluation block")->capture_default_str();
  sub->add_option("--out", a.out, "Directory for confusion.csv and per_class.csv");
  sub->add_flag("--ap", a.ap, "Also report per-class average precision");
  sub->callback([&a, &action, &out] { action = [&a, &out] { return do_eval(a, out); }; });
}

// ---------------------------------------------------------------- viz

struct VizArgs {
  std::string checkpoint;
  std::string data;
  std::string sample;
  std::string out;
  std::size_t tolerance = 1;
};

int do_viz(const VizArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  if (!fs::is_directory(a.data)) throw ConfigError("data directory '" + a.data + "' does not exist");
  const Dataset data = load_dataset(a.data);
  std::size_t index = data.samples.size();
  if (a.sample.empty()) {
    const auto test = data.indices(Split::Test);
    index = test.empty() ? 0 : test.front();
  } else {
    for (std::size_t i = 0; i < data.samples.size(); ++i)
      if (data.samples[i].id == a.sample) index = i;
  }
  if (index >= data.samples.size()) throw ConfigError("sample '" + a.sample + "' not found");
  const VideoSample& s = data.samples[index];
  const HmanModel model = restore_model(ck);

  NoGradGuard no_grad;
  Rng rng(0);
  const ForwardResult r = model.forward_sequence(s.features, rng, Phase::Eval);
  const fs::path dir(a.out);
  std::vector<std::vector<double>> weights;
  for (std::size_t t = 0; t < r.steps.size(); ++t) {
    const auto w = r.steps[t].attention.weights.values();
    weights.emplace_back(w.begin(), w.end());
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.pgm", t);
    write_pgm(dir / "attention" / name, attention_image(w, ck.config.grid));
  }
  write_text(dir / "attention.csv", csv_rows(weights));

  const auto raster = boundary_raster(r, 0);
  std::string csv;
  for (std::size_t l = 0; l < raster.size(); ++l) {
    write_pgm(dir / "boundaries" / ("layer_" + std::to_string(l + 1) + ".pgm"), boundary_strip(raster[l]));
    for (std::size_t t = 0; t < raster[l].size(); ++t) csv += (t ? "," : "") + std::to_string(raster[l][t]);
    csv += "\n";
  }
  write_text(dir / "boundaries.csv", csv);
  out << "sample " << s.id << ": " << r.steps.size() << " frames written to " << a.out << "\n";

  if (s.boundaries) {
    std::string align = "layer,matched,predicted,truth,precision,recall,f1\n";
    for (std::size_t l = 0; l < raster.size(); ++l) {
      std::vector<std::size_t> pred;
      for (std::size_t t = 0; t < raster[l].size(); ++t)
        if (raster[l][t]) pred.push_back(t);
      const BoundaryScore sc = match_boundaries(pred, *s.boundaries, a.tolerance);
      align += std::to_string(l + 1) + "," + std::to_string(sc.matched) + "," + std::to_string(sc.predicted) + "," +
               std::to_string(sc.truth) + "," + fmt(sc.precision(), "%.17g") + "," + fmt(sc.recall(), "%.17g") +
               "," + fmt(sc.f1(), "%.17g") + "\n";
      out << "  layer " << l + 1 << " boundary F1 " << fmt(sc.f1(), "%.3f") << "\n";
    }
    write_text(dir / "alignment.csv", align);
  }
  return kSuccess;
}

void setup_viz(CLI::App& app, VizArgs& a, std::function<int()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("viz", "Export attention maps and boundary rasters for one clip");
  add_config_option(sub);
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  sub->add_option("--data", a.data, "Dataset directory")->required();
  sub->add_option("--sample", a.sample, "Sample id (default: first test clip)");
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--tolerance", a.tolerance, "Boundary matching tolerance in frames")->capture_default_str();
  sub->callback([&a, &action, &out] { action = [&a, &out] { return do_viz(a, out); }; });
}

// ---------------------------------------------------------------- grad-check

void setup_grad_check(CLI::App& app, GradCheckOptions& o, std::function<int()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("grad-check", "Finite-difference check of every differentiable path");
  add_config_option(sub);
  sub->add_option("--fixed-noise-seed", o.noise_seed, "Seed of the frozen noise and inputs")->capture_default_str();
  sub->add_option("--tolerance", o.tolerance, "Maximum relative error")->capture_default_str();
  sub->add_flag("--corrupt-gradient", o.corrupt, "Perturb analytic gradients (negative control)")->group("");
  sub->callback([&o, &action, &out] {
    action = [&o, &out] {
      bool ok = true;
      for (const auto& r : run_grad_checks(o)) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-26s %6zu  max rel err %.3e  %s\n", r.name.c_str(), r.elements,
                      r.max_rel_error, r.passed ? "ok" : "FAIL");
        out << line;
        ok = ok && r.passed;
      }
      out << (ok ? "all checks passed\n" : "gradient check failed\n");
      return ok ? kSuccess : kInternalError;
    };
  });
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Boundary-aware recurrent attention models for video classification", "hman"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::function<int()> action;
  GenSynthArgs gen;
  TrainArgs train;
  EvalArgs eval;
  VizArgs viz;
  GradCheckOptions grad;
  setup_gen_synth(app, gen, action, out);
  setup_train(app, train, action, out);
  setup_eval(app, eval, action, out);
  setup_viz(app, viz, action, out);
  setup_grad_check(app, grad, action, out);

  try {
    const std::vector<std::string> expanded = expand_config(args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUserError;
  }

  try {
    return action ? action() : kUserError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const NumericError& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  } catch (const DimensionError& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  } catch (const ContractError& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kUserError;
}

}  // namespace hman::cli
