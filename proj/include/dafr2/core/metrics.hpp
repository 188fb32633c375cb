#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dafr2/core/error.hpp"

namespace dafr2 {

/// One named result. `value` holds one element for scalars.
struct MetricRecord {
  std::string name;
  std::vector<double> value;
  std::map<std::string, std::string> tags;
  std::string timestamp;
  std::string run_id;

  double scalar() const {
    if (value.size() != 1) throw ParameterError("metric '" + name + "' is not a scalar");
    return value.front();
  }
  /// (run_id, name, tags) identify a record within a log.
  std::string key() const {
    std::string k = run_id + "|" + name;
    for (const auto& [t, v] : tags) k += "|" + t + "=" + v;
    return k;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json to_json(const MetricRecord& r) {
  nlohmann::json j;
  j["name"] = r.name;
  if (r.value.size() == 1)
    j["value"] = r.value.front();
  else
    j["value"] = r.value;
  j["tags"] = r.tags;
  j["timestamp"] = r.timestamp;
  j["run_id"] = r.run_id;
  return j;
}

inline MetricRecord metric_from_json(const nlohmann::json& j) {
  MetricRecord r;
  r.name = j.at("name").get<std::string>();
  const auto& v = j.at("value");
  if (v.is_array())
    r.value = v.get<std::vector<double>>();
  else
    r.value = {v.get<double>()};
  r.tags = j.value("tags", std::map<std::string, std::string>{});
  r.timestamp = j.value("timestamp", "");
  r.run_id = j.value("run_id", "");
  return r;
}

/// Append-only JSON-lines log; each append is flushed so a crash loses at most
/// the line being written.
class MetricsLog {
 public:
  explicit MetricsLog(std::filesystem::path path) : path_(std::move(path)) {}

  void append(const MetricRecord& r) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw ParameterError("cannot append to " + path_.string());
    out << to_json(r).dump() << '\n';
  }
  void append(const std::vector<MetricRecord>& rs) {
    for (const auto& r : rs) append(r);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct MetricsReadResult {
  std::vector<MetricRecord> records;
  std::size_t skipped = 0;
};

inline MetricsReadResult read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot read " + path.string());
  MetricsReadResult out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.records.push_back(metric_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception&) {
      ++out.skipped;
    }
  }
  return out;
}

}  // namespace dafr2
