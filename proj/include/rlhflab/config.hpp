#pragma once

#include <string>
#include <vector>

namespace rlhflab {

// One parsed "key = value" line. Keys may carry a row index, "pi_ref[3]".
struct ConfigEntry {
  std::string key;
  long index = -1;
  std::string value;
  int line = 0;
};

// '#' starts a comment; blank lines are skipped. Throws Error with
// "<name>:<line>: ..." on malformed lines.
std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& name);
std::vector<ConfigEntry> parse_config_file(const std::string& path);

double config_double(const ConfigEntry& entry, const std::string& name);
long config_long(const ConfigEntry& entry, const std::string& name);
std::vector<double> config_doubles(const ConfigEntry& entry, const std::string& name);

}  // namespace rlhflab
