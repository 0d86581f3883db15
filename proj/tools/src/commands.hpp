#pragma once

namespace mcdrive::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int dispatch(int argc, char** argv);

}  // namespace mcdrive::cli
