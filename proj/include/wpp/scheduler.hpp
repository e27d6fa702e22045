#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/profile.hpp"

namespace wpp {

// A batch submission as the scheduler sees it. Only the flags below are
// interpreted; everything else on the line is ignored.
//   --partition  --power-profile  --nodes/-N  --ntasks-per-node  --time/-t
//   --application  --workload-class  --hint (up to one per hint family)
struct JobSpec {
  std::string command = "sbatch";
  std::string partition;
  std::optional<ProfileId> profile;  // absent = default settings
  int nodes = 1;
  int ntasks_per_node = 1;
  std::string application;
  std::optional<WorkloadClass> workload;
  WorkloadHints hints;
  std::int64_t baseline_seconds = 3600;
  std::string script;

  bool operator==(const JobSpec&) const = default;
};

namespace detail {

// Shell-style word splitting with single/double quotes and backslash escapes.
inline std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::string cur;
  bool in_word = false;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else if (c == '\\' && quote == '"' && i + 1 < line.size()) {
        cur.push_back(line[++i]);
      } else {
        cur.push_back(c);
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      in_word = true;
    } else if (c == '\\' && i + 1 < line.size()) {
      cur.push_back(line[++i]);
      in_word = true;
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (in_word) words.push_back(std::move(cur));
      cur.clear();
      in_word = false;
    } else {
      cur.push_back(c);
      in_word = true;
    }
  }
  if (quote) throw Error(Errc::MalformedDirective, "unterminated quote");
  if (in_word) words.push_back(std::move(cur));
  return words;
}

inline int parse_positive(std::string_view flag, const std::string& value) {
  if (value.empty() || value.size() > 9 || value.find_first_not_of("0123456789") != std::string::npos)
    throw Error(Errc::MalformedDirective, std::string(flag) + " expects a positive integer, got '" + value + "'");
  const int n = std::stoi(value);
  if (n < 1) throw Error(Errc::MalformedDirective, std::string(flag) + " must be >= 1");
  return n;
}

inline std::int64_t parse_number(const std::string& text, const std::string& whole) {
  if (text.empty() || text.size() > 9 || text.find_first_not_of("0123456789") != std::string::npos)
    throw Error(Errc::MalformedDirective, "bad --time value '" + whole + "'");
  return std::stoll(text);
}

// SLURM time forms: M, M:S, H:M:S, D-H, D-H:M, D-H:M:S.
inline std::int64_t parse_time_limit(const std::string& value) {
  std::string rest = value;
  std::int64_t days = 0;
  const auto dash = rest.find('-');
  if (dash != std::string::npos) {
    days = parse_number(rest.substr(0, dash), value);
    rest = rest.substr(dash + 1);
  }
  std::vector<std::string> parts;
  std::stringstream ss(rest);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (!rest.empty() && rest.back() == ':') parts.emplace_back();
  if (parts.empty() || parts.size() > 3) throw Error(Errc::MalformedDirective, "bad --time value '" + value + "'");
  std::vector<std::int64_t> n;
  for (const auto& p : parts) n.push_back(parse_number(p, value));
  std::int64_t seconds = 0;
  if (dash != std::string::npos) {
    seconds = n[0] * 3600 + (n.size() > 1 ? n[1] * 60 : 0) + (n.size() > 2 ? n[2] : 0);
  } else if (n.size() == 1) {
    seconds = n[0] * 60;
  } else if (n.size() == 2) {
    seconds = n[0] * 60 + n[1];
  } else {
    seconds = n[0] * 3600 + n[1] * 60 + n[2];
  }
  seconds += days * 86400;
  if (seconds <= 0) throw Error(Errc::MalformedDirective, "--time must be positive");
  return seconds;
}

inline std::string format_time_limit(std::int64_t seconds) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", static_cast<long long>(seconds / 3600),
                static_cast<long long>((seconds / 60) % 60), static_cast<long long>(seconds % 60));
  return buf;
}

inline std::string quote_if_needed(const std::string& s) {
  if (!s.empty() && s.find_first_of(" \t\"'\\") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline std::optional<ProfileId> parse_profile_name(const std::string& value) {
  if (canonical_name(value) == "DEFAULT") return std::nullopt;
  auto id = parse_profile_id(value);
  if (!id) throw Error(Errc::UnknownProfileName, value);
  return id;
}

inline JobSpec parse_directive(std::string_view launch_line) {
  const auto words = detail::split_words(launch_line);
  JobSpec spec;
  std::size_t i = 0;
  if (!words.empty() && !words[0].empty() && words[0][0] != '-') {
    spec.command = words[0];
    i = 1;
  }

  auto value_of = [&](const std::string& flag, std::optional<std::string> inline_value) -> std::string {
    if (inline_value) return *inline_value;
    if (i + 1 >= words.size() || (!words[i + 1].empty() && words[i + 1][0] == '-'))
      throw Error(Errc::MalformedDirective, flag + " needs a value");
    return words[++i];
  };

  for (; i < words.size(); ++i) {
    const std::string& w = words[i];
    if (w.empty() || w[0] != '-') {
      if (spec.script.empty()) spec.script = w;
      continue;
    }
    if (w == "-" || w == "--") throw Error(Errc::MalformedDirective, "stray '" + w + "'");
    std::string flag = w;
    std::optional<std::string> inline_value;
    const auto eq = w.find('=');
    if (eq != std::string::npos) {
      flag = w.substr(0, eq);
      inline_value = w.substr(eq + 1);
      if (flag == "--" || flag == "-") throw Error(Errc::MalformedDirective, "flag without a name: " + w);
    }

    if (flag == "--partition" || flag == "-p") {
      spec.partition = value_of(flag, inline_value);
      if (spec.partition.empty()) throw Error(Errc::MalformedDirective, "empty --partition");
    } else if (flag == "--power-profile") {
      const auto v = value_of(flag, inline_value);
      if (v.empty()) throw Error(Errc::MalformedDirective, "empty --power-profile");
      spec.profile = parse_profile_name(v);
    } else if (flag == "--nodes" || flag == "-N") {
      spec.nodes = detail::parse_positive(flag, value_of(flag, inline_value));
    } else if (flag == "--ntasks-per-node") {
      spec.ntasks_per_node = detail::parse_positive(flag, value_of(flag, inline_value));
    } else if (flag == "--time" || flag == "-t") {
      spec.baseline_seconds = detail::parse_time_limit(value_of(flag, inline_value));
    } else if (flag == "--application") {
      spec.application = value_of(flag, inline_value);
    } else if (flag == "--workload-class") {
      const auto v = value_of(flag, inline_value);
      spec.workload = parse_workload_class(v);
      if (!spec.workload) throw Error(Errc::MalformedDirective, "unknown workload class '" + v + "'");
    } else if (flag == "--hint") {
      const auto v = value_of(flag, inline_value);
      if (!add_hint(spec.hints, v)) throw Error(Errc::MalformedDirective, "bad or repeated hint '" + v + "'");
    } else if (flag.rfind("--", 0) != 0 && flag.size() != 2) {
      throw Error(Errc::MalformedDirective, "unparseable flag '" + w + "'");
    } else if (flag.size() == 2 && !inline_value && std::string_view("hvQHIkKOsWV").find(flag[1]) == std::string_view::npos &&
               i + 1 < words.size() && !words[i + 1].empty() && words[i + 1][0] != '-') {
      ++i;  // other short options carry an argument
    }
    // Remaining long flags are ignored.
  }
  return spec;
}

// Inverse of parse_directive over the supported flag set.
inline std::string render_directive(const JobSpec& spec) {
  using detail::quote_if_needed;
  std::ostringstream os;
  os << quote_if_needed(spec.command);
  if (!spec.partition.empty()) os << " --partition=" << quote_if_needed(spec.partition);
  if (spec.profile) os << " --power-profile=" << to_string(*spec.profile);
  os << " --nodes=" << spec.nodes << " --ntasks-per-node=" << spec.ntasks_per_node;
  os << " --time=" << detail::format_time_limit(spec.baseline_seconds);
  if (!spec.application.empty()) os << " --application=" << quote_if_needed(spec.application);
  if (spec.workload) os << " --workload-class=" << to_string(*spec.workload);
  if (spec.hints.boundedness) os << " --hint=" << to_string(*spec.hints.boundedness);
  if (spec.hints.interconnect) os << " --hint=" << to_string(*spec.hints.interconnect);
  if (!spec.script.empty()) os << " " << quote_if_needed(spec.script);
  return os.str();
}

}  // namespace wpp
