#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <unordered_set>
#include <vector>

#include "kinegen/common.hpp"
#include "kinegen/types.hpp"

namespace kinegen {

// Shortest representation that round-trips the exact double. Keeps
// repeated runs byte-identical.
inline std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  if (res.ec != std::errc()) throw io_error("double formatting failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw io_error("not a number: '" + text + "'");
  }
  return value;
}

// temp file + rename so readers never observe partial output
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + tmp.string());
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    if (!out) throw io_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw io_error("rename failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

// --- Recording CSV: header t,x,y,z (positions) or t,vx,vy,vz (velocities).
// t is in seconds, uniformly spaced; the rate is recovered from it.

inline RawRecording read_recording_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open recording: " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw io_error("empty recording file: " + path.string());
  }
  const auto header = detail::split_csv_line(line);
  RawRecording rec;
  rec.recording_id = path.stem().string();
  if (header == std::vector<std::string>{"t", "x", "y", "z"}) {
    rec.channel_kind = ChannelKind::position;
  } else if (header == std::vector<std::string>{"t", "vx", "vy", "vz"}) {
    rec.channel_kind = ChannelKind::velocity;
  } else {
    throw io_error("unrecognized recording header in " + path.string() +
                   " (expected t,x,y,z or t,vx,vy,vz)");
  }
  std::vector<double> time;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 4) {
      throw io_error(path.string() + ":" + std::to_string(line_no) +
                     ": expected 4 fields");
    }
    time.push_back(parse_double(fields[0]));
    rec.x.push_back(parse_double(fields[1]));
    rec.y.push_back(parse_double(fields[2]));
    rec.z.push_back(parse_double(fields[3]));
  }
  if (time.size() < 2) {
    throw validation_error("recording needs at least 2 samples: " +
                           path.string());
  }
  const double span = time.back() - time.front();
  if (span <= 0.0) {
    throw validation_error("recording timestamps must increase: " +
                           path.string());
  }
  rec.rate = static_cast<double>(time.size() - 1) / span;
  rec.validate();
  return rec;
}

inline std::string recording_to_csv(const RawRecording& rec) {
  std::string out = rec.channel_kind == ChannelKind::position
                        ? "t,x,y,z\n"
                        : "t,vx,vy,vz\n";
  for (std::size_t i = 0; i < rec.x.size(); ++i) {
    out += format_double(static_cast<double>(i) / rec.rate);
    out += ',';
    out += format_double(rec.x[i]);
    out += ',';
    out += format_double(rec.y[i]);
    out += ',';
    out += format_double(rec.z[i]);
    out += '\n';
  }
  return out;
}

// --- TrialSet archive CSV: long format, one sample per line.
// header: trial_id,class,sample_index,v

inline std::string trialset_to_csv(const TrialSet& set) {
  std::string out = "trial_id,class,sample_index,v\n";
  for (const Trial& t : set.trials) {
    const std::string prefix = t.trial_id + "," + t.label.str() + ",";
    for (std::size_t i = 0; i < t.v.size(); ++i) {
      out += prefix;
      out += std::to_string(i);
      out += ',';
      out += format_double(t.v[i]);
      out += '\n';
    }
  }
  return out;
}

inline void write_trialset_csv(const std::filesystem::path& path,
                               const TrialSet& set) {
  write_file_atomic(path, trialset_to_csv(set));
}

inline TrialSet trialset_from_csv(const std::string& content,
                                  Provenance provenance = Provenance::real,
                                  double rate = 22.0) {
  TrialSet set;
  set.provenance = provenance;
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw io_error("empty trial archive");
  if (detail::split_csv_line(line) !=
      std::vector<std::string>{"trial_id", "class", "sample_index", "v"}) {
    throw io_error("unrecognized trial archive header");
  }
  Trial* cur = nullptr;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 4) {
      throw io_error("archive line " + std::to_string(line_no) +
                     ": expected 4 fields");
    }
    if (cur == nullptr || cur->trial_id != fields[0]) {
      if (!seen.insert(fields[0]).second) {
        throw validation_error("archive rows for trial '" + fields[0] +
                               "' are not contiguous");
      }
      set.trials.push_back(Trial{fields[0], ClassLabel::parse(fields[1]),
                                 {}, rate});
      cur = &set.trials.back();
    }
    const auto idx = static_cast<std::size_t>(parse_double(fields[2]));
    if (idx != cur->v.size()) {
      throw validation_error("archive line " + std::to_string(line_no) +
                             ": sample_index out of order");
    }
    cur->v.push_back(parse_double(fields[3]));
  }
  set.validate();
  return set;
}

inline TrialSet read_trialset_csv(const std::filesystem::path& path,
                                  Provenance provenance = Provenance::real,
                                  double rate = 22.0) {
  return trialset_from_csv(read_file(path), provenance, rate);
}

}  // namespace kinegen
