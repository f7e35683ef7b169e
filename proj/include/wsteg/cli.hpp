#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wsteg::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kData = 3;
inline constexpr int kCapacity = 4;

int dispatch(int argc, char** argv);
// Same, with explicit streams; used by tests.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wsteg::cli
