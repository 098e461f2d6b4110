#pragma once

// Timestamped named channels with CSV output.

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "mvstab/errors.hpp"

namespace mvstab {

struct TimeSeries {
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> channels;

  explicit TimeSeries(std::vector<std::string> channel_names = {})
      : names(std::move(channel_names)), channels(names.size()) {}

  std::size_t size() const noexcept { return times.size(); }

  /// Appends one frame; times must increase strictly.
  void push(double t, const std::vector<double>& values) {
    if (values.size() != names.size()) throw ArgumentError("TimeSeries::push: channel count mismatch");
    if (!times.empty() && !(t > times.back())) throw ArgumentError("TimeSeries::push: times must increase");
    times.push_back(t);
    for (std::size_t c = 0; c < values.size(); ++c) channels[c].push_back(values[c]);
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t c = 0; c < names.size(); ++c)
      if (names[c] == name) return c;
    throw ArgumentError("TimeSeries: no channel named '" + name + "'");
  }

  const std::vector<double>& channel(const std::string& name) const { return channels[index_of(name)]; }

  /// Adds a derived channel of the same length.
  void add_channel(const std::string& name, std::vector<double> values) {
    if (values.size() != times.size()) throw ArgumentError("TimeSeries::add_channel: length mismatch");
    names.push_back(name);
    channels.push_back(std::move(values));
  }

  void write_csv(std::ostream& out) const {
    out << 't';
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < times.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", times[i]);
      out << buf;
      for (const auto& ch : channels) {
        std::snprintf(buf, sizeof buf, "%.17g", ch[i]);
        out << ',' << buf;
      }
      out << '\n';
    }
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ArgumentError("TimeSeries: cannot open '" + path + "' for writing");
    write_csv(out);
  }
};

}  // namespace mvstab
