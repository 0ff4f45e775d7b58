#include "cyclelife/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <json.hpp>

namespace cyclelife::io {

using json = nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---- corpus ----

namespace {

json series_json(const std::vector<double>& v) { return json(v); }

std::vector<double> require_series(const json& cycle, const char* field, const std::string& battery,
                                   std::size_t index) {
  if (!cycle.contains(field) || !cycle[field].is_array() || cycle[field].empty())
    throw std::runtime_error("battery " + battery + ": cycle " + std::to_string(index + 1) +
                             " is missing series " + field);
  return cycle[field].get<std::vector<double>>();
}

}  // namespace

std::string battery_to_json(const data::BatteryRecord& record) {
  json doc;
  doc["format"] = kFormatVersion;
  doc["id"] = record.id;
  doc["nominal_capacity"] = record.nominal_capacity;
  if (record.cycle_life) doc["cycle_life"] = *record.cycle_life;
  json cycles = json::array();
  for (const auto& c : record.cycles) {
    json jc;
    jc["T"] = series_json(c.T);
    jc["V"] = series_json(c.V);
    jc["Qd"] = series_json(c.Qd);
    jc["Qd_lin"] = series_json(c.Qd_lin);
    jc["Td_lin"] = series_json(c.Td_lin);
    jc["dQdV"] = series_json(c.dQdV);
    cycles.push_back(std::move(jc));
  }
  doc["cycles"] = std::move(cycles);
  return doc.dump();  // compact: battery files are large and machine-read
}

void write_corpus(const std::filesystem::path& dir, const std::vector<data::BatteryRecord>& records) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = kFormatVersion;
  json ids = json::array();
  for (const auto& rec : records) {
    write_text_atomic(dir / (rec.id + ".json"), battery_to_json(rec));
    ids.push_back(rec.id);
  }
  manifest["batteries"] = std::move(ids);
  write_text_atomic(dir / "manifest.json", manifest.dump(1));
}

}  // namespace cyclelife::io

namespace cyclelife::data {

std::vector<BatteryRecord> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::exists(root)) throw std::runtime_error("dataset directory does not exist: " + dir);

  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) {
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.path().extension() == ".json")
        throw std::runtime_error("dataset directory has battery files but no manifest: " + dir);
    return {};
  }

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed manifest in " + dir + ": " + e.what());
  }
  if (manifest.value("format", "") != io::kFormatVersion)
    throw std::runtime_error("manifest format is not " + std::string(io::kFormatVersion));

  std::vector<BatteryRecord> out;
  for (const auto& id_json : manifest.at("batteries")) {
    const std::string id = id_json.get<std::string>();
    const fs::path path = root / (id + ".json");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(io::read_text(path));
    } catch (const std::exception& e) {
      throw std::runtime_error("battery " + id + ": unreadable or malformed file: " + e.what());
    }

    BatteryRecord rec;
    rec.id = doc.value("id", id);
    if (rec.id != id)
      throw std::runtime_error("battery " + id + ": file declares mismatching id " + rec.id);
    if (!doc.contains("nominal_capacity") || !doc["nominal_capacity"].is_number())
      throw std::runtime_error("battery " + id + ": missing field nominal_capacity");
    rec.nominal_capacity = doc["nominal_capacity"].get<double>();
    if (rec.nominal_capacity <= 0.0)
      throw std::runtime_error("battery " + id + ": nominal_capacity must be positive");
    if (doc.contains("cycle_life")) {
      const int life = doc["cycle_life"].get<int>();
      if (life < 1) throw std::runtime_error("battery " + id + ": cycle_life must be positive");
      rec.cycle_life = life;
    }
    if (!doc.contains("cycles") || !doc["cycles"].is_array())
      throw std::runtime_error("battery " + id + ": missing field cycles");

    std::size_t grid = 0;
    for (std::size_t i = 0; i < doc["cycles"].size(); ++i) {
      const auto& jc = doc["cycles"][i];
      CycleData c;
      c.T = io::require_series(jc, "T", id, i);
      c.V = io::require_series(jc, "V", id, i);
      c.Qd = io::require_series(jc, "Qd", id, i);
      c.Qd_lin = io::require_series(jc, "Qd_lin", id, i);
      c.Td_lin = io::require_series(jc, "Td_lin", id, i);
      c.dQdV = io::require_series(jc, "dQdV", id, i);
      if (c.Qd_lin.size() != c.Td_lin.size())
        throw std::runtime_error("battery " + id + ": cycle " + std::to_string(i + 1) +
                                 " has Qd_lin/Td_lin grids of different lengths");
      if (grid == 0) grid = c.Qd_lin.size();
      if (c.Qd_lin.size() != grid)
        throw std::runtime_error("battery " + id + ": interpolation grid changes at cycle " +
                                 std::to_string(i + 1));
      rec.cycles.push_back(std::move(c));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace cyclelife::data

namespace cyclelife::io {

// ---- checkpoint ----

namespace {

json layer_to_json(const nn::LayerSpec& layer) {
  json j;
  if (const auto* conv = std::get_if<nn::Conv1DSpec>(&layer)) {
    j["type"] = "conv1d";
    j["filters"] = conv->filters;
    j["kernel"] = conv->kernel;
    j["stride"] = conv->stride;
  } else if (const auto* lstm = std::get_if<nn::LstmSpec>(&layer)) {
    j["type"] = "lstm";
    j["hidden"] = lstm->hidden;
  } else if (const auto* attn = std::get_if<nn::AttentionSpec>(&layer)) {
    j["type"] = "attention";
    j["hidden"] = attn->hidden;
  } else if (const auto* dense = std::get_if<nn::DenseSpec>(&layer)) {
    j["type"] = "dense";
    j["out"] = dense->out;
  } else if (const auto* drop = std::get_if<nn::DropoutSpec>(&layer)) {
    j["type"] = "dropout";
    j["p"] = drop->p;
  } else if (const auto* relu = std::get_if<nn::LeakyReluSpec>(&layer)) {
    j["type"] = "leaky_relu";
    j["negative_slope"] = relu->negative_slope;
  } else {
    j["type"] = "sigmoid";
  }
  return j;
}

nn::LayerSpec layer_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv1d")
    return nn::Conv1DSpec{j.at("filters").get<int>(), j.at("kernel").get<int>(),
                          j.at("stride").get<int>()};
  if (type == "lstm") return nn::LstmSpec{j.at("hidden").get<int>()};
  if (type == "attention") return nn::AttentionSpec{j.at("hidden").get<int>()};
  if (type == "dense") return nn::DenseSpec{j.at("out").get<int>()};
  if (type == "dropout") return nn::DropoutSpec{j.at("p").get<double>()};
  if (type == "leaky_relu") return nn::LeakyReluSpec{j.at("negative_slope").get<double>()};
  if (type == "sigmoid") return nn::SigmoidSpec{};
  throw std::runtime_error("checkpoint: unknown layer type " + type);
}

const char* task_name(data::Task task) {
  return task == data::Task::classify ? "classify" : "predict";
}

data::Task task_from_name(const std::string& name) {
  if (name == "classify") return data::Task::classify;
  if (name == "predict") return data::Task::predict;
  throw std::runtime_error("unknown task: " + name);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nn::Model& model,
                     const Pipeline& pipeline) {
  json doc;
  doc["format"] = kFormatVersion;
  doc["kind"] = "checkpoint";
  doc["task"] = task_name(pipeline.task);
  doc["seed"] = model.rng_seed;

  json spec;
  spec["seq_len"] = model.spec.seq_len;
  spec["n_features"] = model.spec.n_features;
  json layers = json::array();
  for (const auto& l : model.spec.layers) layers.push_back(layer_to_json(l));
  spec["layers"] = std::move(layers);
  doc["spec"] = std::move(spec);

  json pre;
  pre["features"] = pipeline.features;
  pre["norm_mean"] = pipeline.stats.mean;
  pre["norm_std"] = pipeline.stats.stddev;
  pre["target_scale"] = pipeline.target.scale;
  pre["log_target"] = pipeline.target.log10_space;
  pre["threshold"] = pipeline.threshold;
  doc["preprocess"] = std::move(pre);

  json params;
  for (const auto& [name, t] : model.params) {
    json p;
    p["shape"] = t.shape;
    p["values"] = t.values;
    params[name] = std::move(p);
  }
  doc["params"] = std::move(params);
  write_text_atomic(path, doc.dump(1));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("kind", "") != "checkpoint" || doc.value("format", "") != kFormatVersion)
    throw std::runtime_error("checkpoint " + path.string() + ": wrong kind or format version");

  Checkpoint out;
  out.pipeline.task = task_from_name(doc.at("task").get<std::string>());
  const auto& pre = doc.at("preprocess");
  out.pipeline.features = pre.at("features").get<std::vector<std::string>>();
  out.pipeline.stats.mean = pre.at("norm_mean").get<std::vector<double>>();
  out.pipeline.stats.stddev = pre.at("norm_std").get<std::vector<double>>();
  out.pipeline.target.scale = pre.at("target_scale").get<double>();
  out.pipeline.target.log10_space = pre.at("log_target").get<bool>();
  out.pipeline.threshold = pre.at("threshold").get<int>();

  nn::ModelSpec spec;
  spec.seq_len = doc.at("spec").at("seq_len").get<int>();
  spec.n_features = doc.at("spec").at("n_features").get<int>();
  for (const auto& jl : doc.at("spec").at("layers")) spec.layers.push_back(layer_from_json(jl));

  out.model = nn::build_model(std::move(spec), doc.at("seed").get<std::uint64_t>());
  for (auto& [name, t] : out.model.params) {
    if (!doc.at("params").contains(name))
      throw std::runtime_error("checkpoint: missing parameter " + name);
    const auto& p = doc.at("params").at(name);
    const auto shape = p.at("shape").get<ad::Shape>();
    if (shape != t.shape) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    t.values = p.at("values").get<std::vector<double>>();
    if (t.values.size() != ad::shape_size(shape))
      throw std::runtime_error("checkpoint: value count mismatch for " + name);
  }
  return out;
}

// ---- report ----

namespace {

json eval_to_json(const training::EvalResult& e) {
  json j;
  j["loss"] = e.loss;
  j["metric_pct"] = e.metric;
  j["predictions"] = e.predictions;
  return j;
}

training::EvalResult eval_from_json(const json& j) {
  training::EvalResult out;
  out.loss = j.at("loss").get<double>();
  out.metric = j.at("metric_pct").get<double>();
  out.predictions = j.at("predictions").get<std::vector<double>>();
  return out;
}

json config_to_json(const training::TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed;
  j["early_stop_patience"] = c.early_stop_patience;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["log_target"] = c.log_target;
  j["scale_target"] = c.scale_target;
  return j;
}

training::TrainConfig config_from_json(const json& j) {
  training::TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.early_stop_patience = j.at("early_stop_patience").get<int>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.log_target = j.at("log_target").get<bool>();
  c.scale_target = j.at("scale_target").get<bool>();
  return c;
}

}  // namespace

void save_report(const std::filesystem::path& path, const training::RunReport& report,
                 const RunEcho& echo) {
  json doc;
  doc["format"] = kFormatVersion;
  doc["kind"] = "report";
  doc["task"] = task_name(echo.task);
  doc["config"] = config_to_json(echo.config);
  doc["split_seed"] = echo.split_seed;
  doc["attention"] = echo.attention;
  doc["data_dir"] = echo.data_dir;
  doc["split"] = {{"train", echo.train_ids}, {"val", echo.val_ids}, {"test", echo.test_ids}};

  json hist;
  std::vector<double> tl, vl, tm, vm;
  for (const auto& e : report.history) {
    tl.push_back(e.train_loss);
    vl.push_back(e.val_loss);
    tm.push_back(e.train_metric);
    vm.push_back(e.val_metric);
  }
  hist["train_loss"] = tl;
  hist["val_loss"] = vl;
  hist["train_metric"] = tm;
  hist["val_metric"] = vm;
  doc["history"] = std::move(hist);

  doc["best_epoch"] = report.best_epoch;
  doc["diverged"] = report.diverged;
  doc["target"] = {{"log10_space", report.target.log10_space}, {"scale", report.target.scale}};
  doc["final"] = {{"train", eval_to_json(report.final_train)},
                  {"val", eval_to_json(report.final_val)}};
  if (report.has_test) doc["final"]["test"] = eval_to_json(report.final_test);
  write_text_atomic(path, doc.dump(1));
}

LoadedReport load_report(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const std::exception& e) {
    throw std::runtime_error("report " + path.string() + ": " + e.what());
  }
  if (doc.value("kind", "") != "report" || doc.value("format", "") != kFormatVersion)
    throw std::runtime_error("report " + path.string() + ": wrong kind or format version");

  LoadedReport out;
  out.echo.task = task_from_name(doc.at("task").get<std::string>());
  out.echo.config = config_from_json(doc.at("config"));
  out.echo.split_seed = doc.at("split_seed").get<std::uint64_t>();
  out.echo.attention = doc.at("attention").get<bool>();
  out.echo.data_dir = doc.at("data_dir").get<std::string>();
  out.echo.train_ids = doc.at("split").at("train").get<std::vector<std::string>>();
  out.echo.val_ids = doc.at("split").at("val").get<std::vector<std::string>>();
  out.echo.test_ids = doc.at("split").at("test").get<std::vector<std::string>>();

  const auto& hist = doc.at("history");
  const auto tl = hist.at("train_loss").get<std::vector<double>>();
  const auto vl = hist.at("val_loss").get<std::vector<double>>();
  const auto tm = hist.at("train_metric").get<std::vector<double>>();
  const auto vm = hist.at("val_metric").get<std::vector<double>>();
  for (std::size_t i = 0; i < tl.size(); ++i)
    out.report.history.push_back({tl[i], vl[i], tm[i], vm[i]});

  out.report.best_epoch = doc.at("best_epoch").get<int>();
  out.report.diverged = doc.at("diverged").get<bool>();
  out.report.target.log10_space = doc.at("target").at("log10_space").get<bool>();
  out.report.target.scale = doc.at("target").at("scale").get<double>();
  out.report.final_train = eval_from_json(doc.at("final").at("train"));
  out.report.final_val = eval_from_json(doc.at("final").at("val"));
  if (doc.at("final").contains("test")) {
    out.report.final_test = eval_from_json(doc.at("final").at("test"));
    out.report.has_test = true;
  }
  return out;
}

void save_history_csv(const std::filesystem::path& path, const training::RunReport& report) {
  std::string text = "epoch,train_loss,val_loss,train_metric,val_metric\n";
  for (std::size_t i = 0; i < report.history.size(); ++i) {
    const auto& e = report.history[i];
    text += csv_line({std::to_string(i + 1), fmt_double(e.train_loss), fmt_double(e.val_loss),
                      fmt_double(e.train_metric), fmt_double(e.val_metric)});
  }
  write_text_atomic(path, text);
}

// ---- CSV ----

std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ",";
    out += cells[i];
  }
  out += "\n";
  return out;
}

NumericCsv parse_numeric_csv(const std::string& text) {
  NumericCsv out;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (first) {
      out.header = cells;
      first = false;
      continue;
    }
    if (cells.size() != out.header.size())
      throw std::runtime_error("csv: row with " + std::to_string(cells.size()) +
                               " cells, header has " + std::to_string(out.header.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc{} || res.ptr != c.data() + c.size())
        throw std::runtime_error("csv: non-numeric cell '" + c + "'");
      row.push_back(v);
    }
    out.rows.push_back(std::move(row));
  }
  if (first) throw std::runtime_error("csv: missing header row");
  return out;
}

}  // namespace cyclelife::io
