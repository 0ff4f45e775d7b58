// Command-line driver for the battery cycle-life pipeline: synthetic corpus
// generation, attribute ranking, model training/evaluation and chart export.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cyclelife/datapipe.hpp"
#include "cyclelife/io.hpp"
#include "cyclelife/model.hpp"
#include "cyclelife/svg.hpp"
#include "cyclelife/synthgen.hpp"
#include "cyclelife/trainer.hpp"

namespace fs = std::filesystem;
using namespace cyclelife;

namespace {

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_')
      out += c;
    else if (c == '(')
      out += '_';
    // ')' and other punctuation dropped
  }
  return out;
}

std::vector<data::BatteryRecord> load_or_die(const std::string& dir) {
  auto records = data::load_dataset(dir);
  if (records.empty()) throw std::runtime_error("no batteries found in " + dir);
  return records;
}

std::vector<data::BatteryRecord> pick_by_id(const std::vector<data::BatteryRecord>& records,
                                            const std::vector<std::string>& ids) {
  std::map<std::string, const data::BatteryRecord*> index;
  for (const auto& r : records) index[r.id] = &r;
  std::vector<data::BatteryRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw std::runtime_error("battery " + id + " not present in dataset");
    out.push_back(*it->second);
  }
  return out;
}

std::vector<data::BatteryRecord> gather(const std::vector<data::BatteryRecord>& records,
                                        const std::vector<std::size_t>& idx) {
  std::vector<data::BatteryRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(records[i]);
  return out;
}

std::vector<std::string> ids_of(const std::vector<data::BatteryRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.id);
  return out;
}

const char* metric_name(data::Task task) {
  return task == data::Task::classify ? "accuracy (%)" : "MAPE (%)";
}

// ---- synth ----

struct SynthArgs {
  std::string out;
  synth::SynthConfig config;
};

void run_synth(const SynthArgs& a) {
  const auto corpus = synth::generate_corpus(a.config);
  io::write_corpus(a.out, corpus);
  std::cout << "wrote " << corpus.size() << " batteries to " << a.out << "\n";
}

// ---- rank ----

struct RankArgs {
  std::string data;
  std::string out = "ranks.csv";
  bool clean = false;
};

void run_rank(const RankArgs& a) {
  auto records = load_or_die(a.data);
  if (a.clean)
    for (auto& r : records) r = data::clean_record(r);
  const auto ranking = data::rank_attributes(records);

  std::string text = "attribute,score,tier\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const char* tier = i < 3 ? "top" : (i < 15 ? "middle" : "low");
    text += io::csv_line({ranking[i].name, io::fmt_double(ranking[i].score), tier});
  }
  const fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  io::write_text_atomic(out_path, text);

  // One scatter file per attribute: the quantity behind each ranking score.
  std::vector<int> lives;
  lives.reserve(records.size());
  for (const auto& r : records) lives.push_back(data::effective_cycle_life(r));
  const fs::path dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  const auto& names = data::attribute_names();
  std::vector<std::array<double, data::kAttributeCount>> deltas;
  for (const auto& r : records) {
    const auto at10 = data::reduce_cycle(r.cycles[9]);
    const auto at100 = data::reduce_cycle(r.cycles[99]);
    std::array<double, data::kAttributeCount> d{};
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = at100[j] - at10[j];
    deltas.push_back(d);
  }
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::string scatter = "delta,cycle_life\n";
    for (std::size_t b = 0; b < records.size(); ++b)
      scatter += io::csv_line({io::fmt_double(deltas[b][j]), std::to_string(lives[b])});
    io::write_text_atomic(dir / ("scatter_" + sanitize(names[j]) + ".csv"), scatter);
  }
  std::cout << "wrote " << ranking.size() << " attribute scores to " << a.out << "\n";
}

// ---- train ----

struct TrainArgs {
  std::string task = "classify";
  std::string data;
  std::string out = "run";
  std::uint64_t split_seed = 0;
  bool attention = false;
  training::TrainConfig config;
  bool lr_given = false;
};

void run_train(const TrainArgs& a) {
  const data::Task task = a.task == "classify" ? data::Task::classify : data::Task::predict;
  training::TrainConfig config = a.config;
  // The regression head must travel hundreds of cycles from a small-weight
  // start; the default step that suits the classifier is too timid here.
  if (!a.lr_given) config.learning_rate = task == data::Task::classify ? 1e-3 : 1e-2;

  const auto records = load_or_die(a.data);
  const auto parts = training::split(records.size(), {79, 25, 20, a.split_seed});
  const auto train_recs = gather(records, parts.train);
  const auto val_recs = gather(records, parts.val);
  const auto test_recs = gather(records, parts.test);

  const auto selected = data::select_features();
  const auto train_feat = data::build_features(train_recs, task, selected);
  const auto val_feat = data::build_features(val_recs, task, selected, &train_feat.stats);
  const auto test_feat = data::build_features(test_recs, task, selected, &train_feat.stats);

  const int f = static_cast<int>(selected.size());
  nn::Model model = task == data::Task::classify
                        ? nn::build_classifier(f, a.attention, config.seed)
                        : nn::build_predictor(f, config.seed);

  const auto report = training::train(model, train_feat, val_feat, &test_feat, config, task);

  fs::create_directories(a.out);
  io::Pipeline pipeline{task, selected, train_feat.stats, report.target, data::kDefaultThreshold};
  io::save_checkpoint(fs::path(a.out) / "checkpoint.json", model, pipeline);
  io::RunEcho echo{task,   config,           a.split_seed,      a.attention,
                   a.data, ids_of(train_recs), ids_of(val_recs), ids_of(test_recs)};
  io::save_report(fs::path(a.out) / "report.json", report, echo);
  io::save_history_csv(fs::path(a.out) / "history.csv", report);

  std::cout << "task: " << a.task << "\n";
  std::cout << "split: " << parts.train.size() << "/" << parts.val.size() << "/"
            << parts.test.size() << "\n";
  std::cout << "epochs run: " << report.history.size() << "\n";
  std::cout << "best epoch: " << report.best_epoch << "\n";
  if (report.diverged) std::cout << "warning: training diverged; kept last finite epoch\n";
  std::cout << "train " << metric_name(task) << ": "
            << training::format_metric(report.final_train.metric) << "\n";
  std::cout << "val " << metric_name(task) << ": "
            << training::format_metric(report.final_val.metric) << "\n";
}

// ---- eval ----

struct EvalArgs {
  std::string run;
  std::string split = "test";
  std::string data;  // optional override of the dir echoed in the report
  std::string out;   // optional output dir, defaults to the run dir
};

void run_eval(const EvalArgs& a) {
  const fs::path run_dir(a.run);
  auto checkpoint = io::load_checkpoint(run_dir / "checkpoint.json");
  const auto loaded = io::load_report(run_dir / "report.json");

  const std::vector<std::string>* ids = nullptr;
  if (a.split == "train")
    ids = &loaded.echo.train_ids;
  else if (a.split == "val")
    ids = &loaded.echo.val_ids;
  else if (a.split == "test")
    ids = &loaded.echo.test_ids;
  else
    throw std::runtime_error("unknown split: " + a.split);
  if (ids->empty()) throw std::runtime_error("split " + a.split + " is empty in this run");

  const std::string data_dir = a.data.empty() ? loaded.echo.data_dir : a.data;
  const auto records = pick_by_id(load_or_die(data_dir), *ids);
  const auto& pipe = checkpoint.pipeline;
  const auto features =
      data::build_features(records, pipe.task, pipe.features, &pipe.stats, pipe.threshold);

  const auto result = training::evaluate(checkpoint.model, features, pipe.task, pipe.target);
  std::cout << a.split << " " << metric_name(pipe.task) << ": "
            << training::format_metric(result.metric) << "\n";

  const fs::path out_dir = a.out.empty() ? run_dir : fs::path(a.out);
  fs::create_directories(out_dir);

  const bool classify = pipe.task == data::Task::classify;
  std::string preds = classify ? "battery_id,truth,prediction,correct\n"
                               : "battery_id,truth,prediction,abs_pct_error\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double p = result.predictions[i];
    const double y = features.y[i];
    std::string last;
    if (classify)
      last = ((p > 0.5 ? 1.0 : 0.0) == y) ? "1" : "0";
    else
      last = io::fmt_double(100.0 * std::abs(p - y) / y);
    preds += io::csv_line({records[i].id, io::fmt_double(y), io::fmt_double(p), last});
  }
  io::write_text_atomic(out_dir / "predictions.csv", preds);

  nlohmann::ordered_json metrics;
  metrics["format"] = io::kFormatVersion;
  metrics["kind"] = "metrics";
  metrics["task"] = classify ? "classify" : "predict";
  metrics["split"] = a.split;
  metrics["n"] = records.size();
  metrics["loss"] = result.loss;
  metrics["metric_pct"] = result.metric;
  io::write_text_atomic(out_dir / "metrics.json", metrics.dump(1));

  if (classify) {
    // Fade curves with the predicted class, for capacity-vs-cycle plots.
    std::string fade = "battery_id,cycle,max_qd,cycle_life,predicted_good\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
      const char* cls = result.predictions[i] > 0.5 ? "1" : "0";
      const int life = data::effective_cycle_life(records[i]);
      for (std::size_t c = 0; c < records[i].cycles.size(); ++c) {
        const auto& qd = records[i].cycles[c].Qd;
        const double mx = *std::max_element(qd.begin(), qd.end());
        fade += io::csv_line({records[i].id, std::to_string(c + 1), io::fmt_double(mx),
                              std::to_string(life), cls});
      }
    }
    io::write_text_atomic(out_dir / "fade_curves.csv", fade);
  }
}

// ---- plot ----

struct PlotArgs {
  std::string in;
  std::string out;
  std::string kind = "scatter";
  std::string title;
};

void run_plot(const PlotArgs& a) {
  const auto csv = io::parse_numeric_csv(io::read_text(a.in));
  if (csv.rows.empty()) throw std::runtime_error("no data rows in " + a.in);
  if (csv.header.size() < 2) throw std::runtime_error("need at least two columns to plot");

  std::vector<svg::Series> series;
  for (std::size_t col = 1; col < csv.header.size(); ++col) {
    svg::Series s;
    s.label = csv.header[col];
    for (const auto& row : csv.rows) s.points.emplace_back(row[0], row[col]);
    series.push_back(std::move(s));
    if (a.kind == "scatter") break;  // scatter uses the first two columns only
  }
  const std::string title = a.title.empty() ? fs::path(a.in).stem().string() : a.title;
  const auto kind = a.kind == "line" ? svg::ChartKind::line : svg::ChartKind::scatter;
  const std::string doc = svg::render_chart(kind, series, title, csv.header[0],
                                            a.kind == "scatter" ? csv.header[1] : "");
  const fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  io::write_text_atomic(out_path, doc);
  std::cout << "wrote " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery cycle-life models: data generation, ranking, training, evaluation"};
  app.require_subcommand(1);
  app.set_config("--config");

  SynthArgs synth_args;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic battery corpus");
  cmd_synth->add_option("--out", synth_args.out, "Output directory")->required();
  cmd_synth->add_option("--n", synth_args.config.n_batteries, "Number of batteries")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_synth->add_option("--seed", synth_args.config.seed, "RNG seed")
      ->envname("CYCLELIFE_SEED")
      ->capture_default_str();
  cmd_synth->add_option("--noise", synth_args.config.noise_sigma, "Relative noise level")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd_synth->add_option("--points", synth_args.config.points_per_cycle, "Points per cycle")
      ->capture_default_str();
  cmd_synth
      ->add_option("--stored-cycles", synth_args.config.max_stored_cycles,
                   "Cycles stored per battery (0 = through end of life)")
      ->capture_default_str();
  cmd_synth->add_option("--life-min", synth_args.config.life_min, "Minimum cycle life")
      ->capture_default_str();
  cmd_synth->add_option("--life-max", synth_args.config.life_max, "Maximum cycle life")
      ->capture_default_str();
  cmd_synth
      ->add_option("--nominal", synth_args.config.nominal_capacity, "Nominal capacity (Ah)")
      ->capture_default_str();
  cmd_synth->add_option("--knee", synth_args.config.knee_sharpness, "Fade exponent")
      ->capture_default_str();

  RankArgs rank_args;
  auto* cmd_rank = app.add_subcommand("rank", "Rank attributes by cycle-life correlation");
  cmd_rank->add_option("--data", rank_args.data, "Corpus directory")->required();
  cmd_rank->add_option("--out", rank_args.out, "Ranking CSV path")->capture_default_str();
  cmd_rank->add_flag("--clean", rank_args.clean, "Apply outlier removal before ranking");

  TrainArgs train_args;
  auto* cmd_train = app.add_subcommand("train", "Train a classifier or cycle-life predictor");
  cmd_train->add_option("--task", train_args.task, "classify | predict")
      ->check(CLI::IsMember({"classify", "predict"}))
      ->capture_default_str();
  cmd_train->add_option("--data", train_args.data, "Corpus directory")->required();
  cmd_train->add_option("--out", train_args.out, "Run output directory")->capture_default_str();
  cmd_train->add_option("--split-seed", train_args.split_seed, "Partition seed")
      ->envname("CYCLELIFE_SEED")
      ->capture_default_str();
  cmd_train->add_option("--seed", train_args.config.seed, "Init/dropout seed")
      ->envname("CYCLELIFE_SEED")
      ->capture_default_str();
  cmd_train->add_option("--epochs", train_args.config.epochs, "Training epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* attention_opt =
      cmd_train->add_option("--attention", "Attention readout after the LSTM: on | off")
          ->check(CLI::IsMember({"on", "off"}))
          ->default_str("off");
  auto* lr_opt = cmd_train->add_option("--lr", train_args.config.learning_rate,
                                       "Learning rate (default 1e-3 classify, 1e-2 predict)");
  cmd_train->add_option("--batch-size", train_args.config.batch_size, "0 = full batch")
      ->capture_default_str();
  cmd_train->add_option("--clip", train_args.config.grad_clip_norm,
                        "Gradient clip norm (<= 0 disables)")
      ->capture_default_str();
  cmd_train->add_option("--patience", train_args.config.early_stop_patience,
                        "Early-stop patience in epochs (0 = off)")
      ->capture_default_str();
  cmd_train->add_flag("--log-target", train_args.config.log_target,
                      "Regress on log10 cycle life");

  EvalArgs eval_args;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a saved run on one split");
  cmd_eval->add_option("--run", eval_args.run, "Run directory (checkpoint + report)")->required();
  cmd_eval->add_option("--split", eval_args.split, "train | val | test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  cmd_eval->add_option("--data", eval_args.data, "Corpus directory override");
  cmd_eval->add_option("--out", eval_args.out, "Output directory (defaults to the run dir)");

  PlotArgs plot_args;
  auto* cmd_plot = app.add_subcommand("plot", "Render a CSV as an SVG chart");
  cmd_plot->add_option("--in", plot_args.in, "Input CSV")->required();
  cmd_plot->add_option("--out", plot_args.out, "Output SVG")->required();
  cmd_plot->add_option("--kind", plot_args.kind, "scatter | line")
      ->check(CLI::IsMember({"scatter", "line"}))
      ->capture_default_str();
  cmd_plot->add_option("--title", plot_args.title, "Chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // 2 for any usage error, 0 for --help
  }

  try {
    if (app.got_subcommand(cmd_synth)) {
      run_synth(synth_args);
    } else if (app.got_subcommand(cmd_rank)) {
      run_rank(rank_args);
    } else if (app.got_subcommand(cmd_train)) {
      train_args.lr_given = lr_opt->count() > 0;
      train_args.attention = attention_opt->count() > 0 && attention_opt->as<std::string>() == "on";
      run_train(train_args);
    } else if (app.got_subcommand(cmd_eval)) {
      run_eval(eval_args);
    } else if (app.got_subcommand(cmd_plot)) {
      run_plot(plot_args);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
