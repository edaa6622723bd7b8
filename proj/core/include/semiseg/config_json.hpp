#pragma once

#include <filesystem>

#include <json.hpp>

#include "semiseg/experiments.hpp"
#include "semiseg/losses.hpp"
#include "semiseg/network.hpp"
#include "semiseg/phantom.hpp"
#include "semiseg/preprocess.hpp"
#include "semiseg/trainer.hpp"

// Missing keys keep their defaults; unknown keys throw std::invalid_argument.
namespace semiseg {

void to_json(nlohmann::json& j, const PhantomParams& p);
void from_json(const nlohmann::json& j, PhantomParams& p);
void to_json(nlohmann::json& j, const PreprocessConfig& p);
void from_json(const nlohmann::json& j, PreprocessConfig& p);
void to_json(nlohmann::json& j, const LossConfig& p);
void from_json(const nlohmann::json& j, LossConfig& p);
void to_json(nlohmann::json& j, const NetworkConfig& p);
void from_json(const nlohmann::json& j, NetworkConfig& p);
void to_json(nlohmann::json& j, const TrainConfig& p);
void from_json(const nlohmann::json& j, TrainConfig& p);
void to_json(nlohmann::json& j, const DataSource& p);
void from_json(const nlohmann::json& j, DataSource& p);
void to_json(nlohmann::json& j, const ExperimentSpec& p);
void from_json(const nlohmann::json& j, ExperimentSpec& p);
void to_json(nlohmann::json& j, const EpochRecord& p);
void from_json(const nlohmann::json& j, EpochRecord& p);
void to_json(nlohmann::json& j, const TrainHistory& p);
void from_json(const nlohmann::json& j, TrainHistory& p);
void to_json(nlohmann::json& j, const RunRecord& p);
void from_json(const nlohmann::json& j, RunRecord& p);
void to_json(nlohmann::json& j, const ReportRow& p);
void from_json(const nlohmann::json& j, ReportRow& p);
void to_json(nlohmann::json& j, const ExperimentReport& p);
void from_json(const nlohmann::json& j, ExperimentReport& p);

/// Parses a file, wrapping parse failures in IoError.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace semiseg
