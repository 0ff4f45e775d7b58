#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cyclelife/datapipe.hpp"
#include "cyclelife/model.hpp"
#include "cyclelife/trainer.hpp"

namespace cyclelife::io {

inline constexpr const char* kFormatVersion = "cyclelife-v1";

// Shortest decimal representation that parses back to the same double.
std::string fmt_double(double v);

std::string read_text(const std::filesystem::path& path);

// Writes via a temp file in the same directory plus rename, so an
// interrupted run never leaves a half-written artifact.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

// ---- corpus ----
// One JSON document per battery plus a manifest listing the ids.
std::string battery_to_json(const data::BatteryRecord& record);
void write_corpus(const std::filesystem::path& dir, const std::vector<data::BatteryRecord>& records);

// ---- model checkpoint ----
// Everything needed to rebuild the data path at inference time.
struct Pipeline {
  data::Task task = data::Task::classify;
  std::vector<std::string> features;
  data::NormStats stats;
  training::TargetTransform target;
  int threshold = data::kDefaultThreshold;
};

void save_checkpoint(const std::filesystem::path& path, const nn::Model& model,
                     const Pipeline& pipeline);

struct Checkpoint {
  nn::Model model;
  Pipeline pipeline;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- run report ----
struct RunEcho {
  data::Task task = data::Task::classify;
  training::TrainConfig config;
  std::uint64_t split_seed = 0;
  bool attention = false;
  std::string data_dir;
  std::vector<std::string> train_ids, val_ids, test_ids;
};

void save_report(const std::filesystem::path& path, const training::RunReport& report,
                 const RunEcho& echo);

struct LoadedReport {
  training::RunReport report;
  RunEcho echo;
};
LoadedReport load_report(const std::filesystem::path& path);

// Per-epoch history: `epoch, train_loss, val_loss, train_metric, val_metric`.
void save_history_csv(const std::filesystem::path& path, const training::RunReport& report);

// ---- CSV ----
struct NumericCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Parses a strictly numeric CSV with a header row; throws on anything else.
NumericCsv parse_numeric_csv(const std::string& text);

std::string csv_line(const std::vector<std::string>& cells);

}  // namespace cyclelife::io
