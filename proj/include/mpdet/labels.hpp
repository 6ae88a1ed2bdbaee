#pragma once

#include <optional>
#include <string>

namespace mpdet {

// Signal reception condition. The enumeration order is the fixed class order
// used everywhere (confusion matrices, tie-breaking, serialized scores).
enum class SignalClass { kLosOnly = 0, kNlosOnly = 1, kLosNlos = 2 };

inline constexpr int kNumClasses = 3;

inline const char* to_string(SignalClass c) {
  switch (c) {
    case SignalClass::kLosOnly:
      return "LOS";
    case SignalClass::kNlosOnly:
      return "NLOS";
    case SignalClass::kLosNlos:
      return "LOSNLOS";
  }
  return "?";
}

inline std::optional<SignalClass> signal_class_from_string(const std::string& s) {
  if (s == "LOS") return SignalClass::kLosOnly;
  if (s == "NLOS") return SignalClass::kNlosOnly;
  if (s == "LOSNLOS") return SignalClass::kLosNlos;
  return std::nullopt;
}

}  // namespace mpdet
