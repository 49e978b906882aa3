#pragma once

namespace fggsl {

// Exit codes: 0 success, 1 parse/validation/contract error, 2 numeric failure,
// 3 I/O error. Diagnostics go to standard error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumeric = 2;
inline constexpr int kExitIo = 3;

int run_cli(int argc, char** argv);

}  // namespace fggsl
