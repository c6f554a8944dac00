#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "kinegen/common.hpp"
#include "kinegen/nn/core.hpp"

namespace kinegen::nn {

inline constexpr int checkpoint_format = 1;

// Parameters are stored row-major so a checkpoint diff reads in the same
// order the math is written.
inline nlohmann::ordered_json params_to_json(const ParameterStore& ps) {
  nlohmann::ordered_json out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& [name, value] = ps.entry(i);
    nlohmann::ordered_json entry;
    entry["shape"] = {value.rows(), value.cols()};
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(value.size()));
    for (Eigen::Index r = 0; r < value.rows(); ++r) {
      for (Eigen::Index c = 0; c < value.cols(); ++c) {
        flat.push_back(value(r, c));
      }
    }
    entry["values"] = std::move(flat);
    out[name] = std::move(entry);
  }
  return out;
}

inline void params_from_json(const nlohmann::json& j, ParameterStore& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& name = ps.entry(i).first;
    if (!j.contains(name)) {
      throw validation_error("checkpoint missing parameter: " + name);
    }
    const auto& entry = j.at(name);
    const auto shape = entry.at("shape");
    const Eigen::Index rows = shape.at(0).get<Eigen::Index>();
    const Eigen::Index cols = shape.at(1).get<Eigen::Index>();
    Mat& value = ps.value(i);
    if (rows != value.rows() || cols != value.cols()) {
      throw shape_error("checkpoint parameter " + name + " has shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) +
                        ", expected " + std::to_string(value.rows()) + "x" +
                        std::to_string(value.cols()));
    }
    const auto& values = entry.at("values");
    if (static_cast<Eigen::Index>(values.size()) != value.size()) {
      throw shape_error("checkpoint parameter " + name +
                        " has wrong value count");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        value(r, c) = values.at(k++).get<double>();
      }
    }
  }
  if (!ps.all_finite()) {
    throw numerical_error("checkpoint contains non-finite parameters");
  }
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const ParameterStore& ps,
                            const nlohmann::ordered_json& config) {
  nlohmann::ordered_json doc;
  doc["format_version"] = checkpoint_format;
  doc["config"] = config;
  doc["seed"] = ps.seed();
  doc["parameters"] = params_to_json(ps);

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + tmp.string() + " for writing");
    out << doc.dump(1) << '\n';
    if (!out.good()) throw io_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("rename failed: " + path.string());
}

inline nlohmann::json load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (!doc.contains("format_version") ||
      doc.at("format_version").get<int>() != checkpoint_format) {
    throw validation_error("unsupported checkpoint format in " +
                           path.string());
  }
  return doc;
}

}  // namespace kinegen::nn
