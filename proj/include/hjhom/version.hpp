#pragma once

namespace hjhom {

inline const char* version() { return "0.1.0"; }

}  // namespace hjhom
