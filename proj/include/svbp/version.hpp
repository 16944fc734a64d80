#pragma once

namespace svbp {

constexpr const char* kVersion = "0.1.0";

}  // namespace svbp
