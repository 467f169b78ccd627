#pragma once

#define LASSO_GATE_VERSION "0.1.0"

namespace lasso_gate {
inline constexpr const char* version = LASSO_GATE_VERSION;
}
