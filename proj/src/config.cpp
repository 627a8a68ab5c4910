#include "rlhflab/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rlhflab/error.hpp"

namespace rlhflab {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(const std::string& name, int line, const std::string& msg) {
  throw Error(name + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& name) {
  std::vector<ConfigEntry> entries;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(name, lineno, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(name, lineno, "empty key");
    long index = -1;
    const auto bracket = key.find('[');
    if (bracket != std::string::npos) {
      if (key.back() != ']') fail(name, lineno, "unterminated index in key '" + key + "'");
      const std::string idx = key.substr(bracket + 1, key.size() - bracket - 2);
      char* end = nullptr;
      index = std::strtol(idx.c_str(), &end, 10);
      if (end == idx.c_str() || *end != '\0' || index < 0)
        fail(name, lineno, "bad index in key '" + key + "'");
      key.erase(bracket);
    }
    entries.push_back({key, index, value, lineno});
  }
  return entries;
}

std::vector<ConfigEntry> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_config_text(body.str(), path);
}

double config_double(const ConfigEntry& entry, const std::string& name) {
  char* end = nullptr;
  const double value = std::strtod(entry.value.c_str(), &end);
  if (end == entry.value.c_str() || *end != '\0')
    throw Error(name + ":" + std::to_string(entry.line) + ": '" + entry.key +
                "' expects a number, got '" + entry.value + "'");
  return value;
}

long config_long(const ConfigEntry& entry, const std::string& name) {
  char* end = nullptr;
  const long value = std::strtol(entry.value.c_str(), &end, 10);
  if (end == entry.value.c_str() || *end != '\0')
    throw Error(name + ":" + std::to_string(entry.line) + ": '" + entry.key +
                "' expects an integer, got '" + entry.value + "'");
  return value;
}

std::vector<double> config_doubles(const ConfigEntry& entry, const std::string& name) {
  std::vector<double> values;
  std::istringstream in(entry.value);
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
      throw Error(name + ":" + std::to_string(entry.line) + ": '" + entry.key +
                  "' expects numbers, got '" + token + "'");
    values.push_back(value);
  }
  if (values.empty())
    throw Error(name + ":" + std::to_string(entry.line) + ": '" + entry.key + "' is empty");
  return values;
}

}  // namespace rlhflab
