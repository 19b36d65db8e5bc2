#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace msgr::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header, or -1.
  int column(std::string_view name) const;
};

/// Plain comma-separated reader: no quoting, blank lines skipped, CRLF tolerated.
Table read(const std::filesystem::path& path);

/// Parses a double; returns false on malformed text (non-finite values parse fine).
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

/// Opens `path` for writing; throws Error(Data, "IoError") naming the path.
std::ofstream open_write(const std::filesystem::path& path);

/// Shortest text that round-trips the double exactly.
std::string format(double value);

}  // namespace msgr::csv
