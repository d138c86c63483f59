#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ptl::cli {

/// Malformed config text. Lines and columns are 1-based.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// A parameter that is missing, unparsable, unknown or outside the owning
/// module's preconditions.
class ParamError : public std::invalid_argument {
 public:
  ParamError(std::string param, const std::string& what)
      : std::invalid_argument(param + ": " + what), param_(std::move(param)) {}
  const std::string& param() const noexcept { return param_; }

 private:
  std::string param_;
};

/// Runtime failure inside a command, tagged with the stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Dotted keys mapped to raw string values. Every typed read is recorded,
/// defaults included, so the resolved configuration can be echoed in full.
class FlatConfig {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  std::string text(const std::string& key, const std::string& fallback);
  double real(const std::string& key, std::optional<double> fallback = std::nullopt);
  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt);
  bool flag(const std::string& key, bool fallback);
  std::vector<double> reals(const std::string& key, std::vector<double> fallback);
  std::optional<double> maybe_real(const std::string& key);

  /// Keys present in the text that no command read.
  std::vector<std::string> unread() const;
  const nlohmann::ordered_json& resolved() const noexcept { return resolved_; }

 private:
  const std::string* raw(const std::string& key);

  std::map<std::string, std::string> values_;
  std::set<std::string> read_;
  nlohmann::ordered_json resolved_ = nlohmann::ordered_json::object();
};

/// One `key = value` per line; `#` starts a comment; blank lines are ignored.
/// Keys use letters, digits, '_' and '.'.
FlatConfig parse_config(std::string_view text);

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"stability", "margin",   "lemmas",
                                              "dictlearn", "transfer", "bound"};
  return names;
}

struct ExperimentConfig {
  std::string command;
  FlatConfig params;
  std::uint64_t seed = 0;
  std::string output_path;
  std::optional<std::size_t> trials;
};

/// Reads `command`, `seed`, `output` and `trials` from the file when the
/// corresponding argument is empty.
ExperimentConfig make_config(FlatConfig params, std::optional<std::string> command,
                             std::optional<std::uint64_t> seed,
                             std::optional<std::string> output,
                             std::optional<std::size_t> trials);

struct RunResult {
  nlohmann::ordered_json config;  // resolved parameters and provenance
  std::vector<nlohmann::ordered_json> records;  // trial lines in trial order
  std::vector<std::string> summary_columns;
  std::vector<std::vector<nlohmann::ordered_json>> summary_rows;

  /// Config line, records, then one line per summary row. Contains no
  /// timestamp, so equal inputs give equal bodies.
  std::string body() const;
  std::string summary_csv() const;
  std::string summary_table() const;
};

/// Resolves the parameters and runs the command. Throws ParamError before any
/// work is done when a parameter is invalid and StageError on failures after
/// that.
RunResult execute(ExperimentConfig config);

/// Runs and writes `<out>` (a header line with the timestamp followed by the
/// body) and `<out>.summary.csv`, printing the table to `out`. Returns the
/// process exit status: 0 success, 1 runtime failure, 2 parse failure,
/// 3 invalid parameter.
int run(ExperimentConfig config, std::ostream& out, std::ostream& err);

/// Full command line entry point.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ptl::cli
