#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wpp/error.hpp"

namespace wpp {

enum class ValueKind { Watts, Megahertz, RatioPercent, PowerStateLevel, Boolean, EnumToken };

constexpr std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::Watts:           return "watts";
    case ValueKind::Megahertz:       return "megahertz";
    case ValueKind::RatioPercent:    return "ratio-percent";
    case ValueKind::PowerStateLevel: return "power-state-level";
    case ValueKind::Boolean:         return "boolean";
    case ValueKind::EnumToken:       return "enum-token";
  }
  return "unknown";
}

inline std::optional<ValueKind> parse_value_kind(std::string_view text) {
  for (auto k : {ValueKind::Watts, ValueKind::Megahertz, ValueKind::RatioPercent,
                 ValueKind::PowerStateLevel, ValueKind::Boolean, ValueKind::EnumToken}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

constexpr bool is_numeric(ValueKind kind) {
  return kind != ValueKind::Boolean && kind != ValueKind::EnumToken;
}

using KnobValue = std::variant<double, bool, std::string>;

inline std::string format_value(const KnobValue& value) {
  if (const auto* d = std::get_if<double>(&value)) {
    std::ostringstream os;
    os << *d;
    return os.str();
  }
  if (const auto* b = std::get_if<bool>(&value)) return *b ? "on" : "off";
  return std::get<std::string>(value);
}

namespace knob_id {
inline constexpr std::string_view kTgp = "TGP";
inline constexpr std::string_view kEdp = "EDP";
inline constexpr std::string_view kMclk = "MCLK";
inline constexpr std::string_view kXbarGpc = "XBAR_GPC";
inline constexpr std::string_view kFmax = "FMAX";
inline constexpr std::string_view kNvlinkL1 = "NVLINK_L1";
inline constexpr std::string_view kRbm = "RBM";
}  // namespace knob_id

struct Knob {
  std::string id;
  ValueKind kind = ValueKind::RatioPercent;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::string> tokens;  // EnumToken only
  KnobValue default_value = 0.0;
  std::string unit_note;
};

// Checks a value against a knob definition; throws ValueKindMismatch or
// ValueOutOfBounds.
inline void check_value(const Knob& knob, const KnobValue& value) {
  switch (knob.kind) {
    case ValueKind::Boolean:
      if (!std::holds_alternative<bool>(value))
        throw Error(Errc::ValueKindMismatch, knob.id + " expects a boolean");
      return;
    case ValueKind::EnumToken: {
      const auto* token = std::get_if<std::string>(&value);
      if (!token) throw Error(Errc::ValueKindMismatch, knob.id + " expects a token");
      if (std::find(knob.tokens.begin(), knob.tokens.end(), *token) == knob.tokens.end())
        throw Error(Errc::ValueOutOfBounds, knob.id + " has no token '" + *token + "'");
      return;
    }
    default: {
      const auto* number = std::get_if<double>(&value);
      if (!number) throw Error(Errc::ValueKindMismatch, knob.id + " expects a number");
      if (!std::isfinite(*number) || *number < knob.min || *number > knob.max) {
        std::ostringstream os;
        os << knob.id << " = " << *number << " outside [" << knob.min << ", " << knob.max << "]";
        throw Error(Errc::ValueOutOfBounds, os.str());
      }
      if (knob.kind == ValueKind::PowerStateLevel && std::floor(*number) != *number)
        throw Error(Errc::ValueKindMismatch, knob.id + " expects an integral power-state level");
      return;
    }
  }
}

// Open dictionary of knob definitions for one architecture.
class KnobDictionary {
 public:
  void add(Knob knob) {
    if (knobs_.count(knob.id)) throw Error(Errc::DuplicateKnob, knob.id);
    check_value(knob, knob.default_value);
    std::string id = knob.id;
    knobs_.emplace(std::move(id), std::move(knob));
  }

  const Knob* find(std::string_view id) const {
    auto it = knobs_.find(std::string(id));
    return it == knobs_.end() ? nullptr : &it->second;
  }

  const Knob& at(std::string_view id) const {
    const Knob* knob = find(id);
    if (!knob) throw Error(Errc::UnknownKnob, std::string(id));
    return *knob;
  }

  void validate(std::string_view id, const KnobValue& value) const { check_value(at(id), value); }

  const std::map<std::string, Knob>& all() const { return knobs_; }
  std::size_t size() const { return knobs_.size(); }

 private:
  std::map<std::string, Knob> knobs_;
};

enum class GpuArch { B200, H100 };

constexpr std::string_view to_string(GpuArch arch) {
  return arch == GpuArch::B200 ? "B200" : "H100";
}

inline std::optional<GpuArch> parse_arch(std::string_view text) {
  if (text == "B200") return GpuArch::B200;
  if (text == "H100") return GpuArch::H100;
  return std::nullopt;
}

struct ArchSpec {
  GpuArch arch;
  double tdp_watts;
  double default_fmax_mhz;
  double default_mclk_mhz;
};

inline ArchSpec arch_spec(GpuArch arch) {
  switch (arch) {
    case GpuArch::B200: return {GpuArch::B200, 1000.0, 1965.0, 3996.0};
    case GpuArch::H100: return {GpuArch::H100, 700.0, 1980.0, 2619.0};
  }
  return {GpuArch::B200, 1000.0, 1965.0, 3996.0};
}

// The seven tunables every profile recipe is built from. Bounds are
// per-architecture; TGP tops out at the part's TDP.
inline KnobDictionary standard_knobs(GpuArch arch) {
  const ArchSpec spec = arch_spec(arch);
  KnobDictionary dict;
  dict.add({std::string(knob_id::kTgp), ValueKind::Watts, 200.0, spec.tdp_watts, {},
            spec.tdp_watts, "total GPU power limit"});
  dict.add({std::string(knob_id::kEdp), ValueKind::EnumToken, 0, 0,
            {"disabled", "balanced", "energy"}, std::string("disabled"),
            "energy-delay tradeoff policy"});
  dict.add({std::string(knob_id::kMclk), ValueKind::Megahertz, 1000.0, spec.default_mclk_mhz, {},
            spec.default_mclk_mhz, "memory clock"});
  dict.add({std::string(knob_id::kXbarGpc), ValueKind::RatioPercent, 50.0, 100.0, {}, 100.0,
            "crossbar to GPC clock ratio"});
  dict.add({std::string(knob_id::kFmax), ValueKind::Megahertz, 300.0, 2100.0, {},
            spec.default_fmax_mhz, "graphics clock ceiling"});
  dict.add({std::string(knob_id::kNvlinkL1), ValueKind::PowerStateLevel, 0.0, 2.0, {}, 0.0,
            "NVLink L1 entry level: 0 off, 1 on, 2 aggressive"});
  dict.add({std::string(knob_id::kRbm), ValueKind::RatioPercent, 0.0, 100.0, {}, 100.0,
            "compute resource allocation share"});
  return dict;
}

}  // namespace wpp
